"""Fidelity metrics, bootstrap CIs, sweeps, and parity harnesses.

Ensembles are lists of TrajectoryRecord sharing one grid.  Metrics follow
the convention: trajectory errors (L-inf, L2) compare ensemble means over
time and compartment; peak / final-attack errors are reported both on the
ensemble mean and as per-run means against the reference ensemble's mean
curve.  Confidence intervals are 95% percentile bootstrap over runs.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFitError, GridMismatchError
from .graph import CsrGraph, gen_barabasi_albert, gen_erdos_renyi, gen_fixed_degree
from .markov import MarkovConfig, run_markov
from .models import ModelSpec, seir_standard
from .renewal import (
    RenewalConfig,
    _begin_batch,
    _build_plan,
    init_renewal_state,
    renewal_step,
    run_renewal,
)
from .rng import derive_seed
from .trajectory import TrajectoryRecord

__all__ = [
    "FidelityReport",
    "SweepRow",
    "SweepResult",
    "ParityReport",
    "run_ensemble",
    "ensemble_mean",
    "quantile_band",
    "fidelity",
    "epsilon_sweep",
    "slope_regression",
    "parity_check",
    "multi_topology_sweep",
]


# ----------------------------------------------------------------------
# ensemble running
# ----------------------------------------------------------------------

_WORKER_CTX: dict = {}


def _init_worker(ctx: dict) -> None:
    _WORKER_CTX.update(ctx)


def _run_one(trial: int) -> TrajectoryRecord:
    c = _WORKER_CTX
    return _run_single(
        c["engine"], c["g"], c["m"], c["cfg"], derive_seed(c["seed"], trial),
        c["t_final"], c["grid_points"], c["seed_count"], c["seed_compartment"],
    )


def _run_single(engine, g, m, cfg, trial_seed, t_final, grid_points, seed_count, seed_compartment):
    if engine == "renewal":
        return run_renewal(
            g, m, cfg or RenewalConfig(), trial_seed, t_final, grid_points,
            seed_count=seed_count, seed_compartment=seed_compartment,
        )
    if engine == "markov":
        return run_markov(
            g, m, cfg or MarkovConfig(), trial_seed, t_final, grid_points,
            seed_count=10 if seed_count is None else seed_count,
            seed_compartment=seed_compartment,
        )
    if engine == "exact":
        from .exact import gillespie_markov, gillespie_renewal_seir

        if m.age_dependent():
            return gillespie_renewal_seir(
                g, m, trial_seed, t_final, seed_count=seed_count,
                grid_points=grid_points, seed_compartment=seed_compartment,
            )
        return gillespie_markov(
            g, m, trial_seed, t_final,
            seed_count=10 if seed_count is None else seed_count,
            grid_points=grid_points, seed_compartment=seed_compartment,
        )
    raise ValueError(f"unknown engine {engine!r}")


def run_ensemble(
    engine: str,
    g: CsrGraph,
    m: ModelSpec,
    cfg,
    seed: int,
    t_final: float,
    runs: int,
    grid_points: int = 501,
    workers: int = 1,
    seed_count: int | None = None,
    seed_compartment: int | None = None,
) -> list[TrajectoryRecord]:
    """Independent trials with per-trial seeds derive_seed(seed, trial).

    Results are ordered by trial index, so they do not depend on the
    worker count.
    """
    trials = list(range(runs))
    if workers <= 1 or runs <= 1:
        return [
            _run_single(engine, g, m, cfg, derive_seed(seed, t), t_final,
                        grid_points, seed_count, seed_compartment)
            for t in trials
        ]
    ctx = dict(
        engine=engine, g=g, m=m, cfg=cfg, seed=seed, t_final=t_final,
        grid_points=grid_points, seed_count=seed_count,
        seed_compartment=seed_compartment,
    )
    workers = min(workers, os.cpu_count() or 1, runs)
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(ctx,)) as pool:
        return list(pool.map(_run_one, trials))


def _stack(records: list[TrajectoryRecord]) -> np.ndarray:
    return np.stack([r.fractions for r in records])  # (runs, C, G)


def ensemble_mean(records: list[TrajectoryRecord]) -> np.ndarray:
    return _stack(records).mean(axis=0)


def quantile_band(
    records: list[TrajectoryRecord], label: str, q_lo: float = 0.25, q_hi: float = 0.75
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise cross-run quantile band of one compartment's fraction."""
    ci = records[0].compartments.index(label)
    curves = _stack(records)[:, ci, :]
    return np.quantile(curves, q_lo, axis=0), np.quantile(curves, q_hi, axis=0)


# ----------------------------------------------------------------------
# bootstrap helpers
# ----------------------------------------------------------------------


def _resample_weights(rng: np.random.Generator, n: int, resamples: int) -> np.ndarray:
    """Row-stochastic multinomial weight matrix: each row is one bootstrap
    resample expressed as per-run weights summing to 1."""
    counts = rng.multinomial(n, np.full(n, 1.0 / n), size=resamples)
    return counts / float(n)


def _percentile_ci(samples: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    lo = (1.0 - level) / 2.0
    return float(np.quantile(samples, lo)), float(np.quantile(samples, 1.0 - lo))


# ----------------------------------------------------------------------
# fidelity metrics
# ----------------------------------------------------------------------


@dataclass
class FidelityReport:
    l_inf: float
    l2: float
    err_peak_i: float
    err_final_r: float | None
    per_run_peak_err: float
    per_run_final_err: float | None
    ci: dict = field(default_factory=dict)


def _check_same_grid(a: list[TrajectoryRecord], b: list[TrajectoryRecord]) -> None:
    if not a or not b:
        raise GridMismatchError("empty ensemble")
    if a[0].compartments != b[0].compartments:
        raise GridMismatchError("compartment sets differ")
    if not np.array_equal(a[0].grid, b[0].grid):
        raise GridMismatchError("sample grids differ")


def fidelity(
    a: list[TrajectoryRecord],
    b: list[TrajectoryRecord],
    resamples: int = 1000,
    seed: int = 0,
) -> FidelityReport:
    """Trajectory and summary errors of ensemble a against ensemble b,
    with 95% percentile bootstrap CIs over runs (both sides resampled)."""
    _check_same_grid(a, b)
    comps = a[0].compartments
    A, B = _stack(a), _stack(b)
    i_idx = comps.index("I") if "I" in comps else None
    r_idx = comps.index("R") if "R" in comps else None

    def metrics(mean_a, mean_b):
        diff = mean_a - mean_b
        out = {
            "l_inf": float(np.abs(diff).max()),
            "l2": float(np.sqrt(np.mean(diff**2))),
        }
        if i_idx is not None:
            out["err_peak_i"] = float(abs(mean_a[i_idx].max() - mean_b[i_idx].max()))
        if r_idx is not None:
            out["err_final_r"] = float(abs(mean_a[r_idx, -1] - mean_b[r_idx, -1]))
        return out

    mean_a, mean_b = A.mean(axis=0), B.mean(axis=0)
    point = metrics(mean_a, mean_b)

    per_run_peak = per_run_final = None
    if i_idx is not None:
        ref_peak = mean_b[i_idx].max()
        per_run_peak = np.abs(A[:, i_idx, :].max(axis=1) - ref_peak)
    if r_idx is not None:
        ref_final = mean_b[r_idx, -1]
        per_run_final = np.abs(A[:, r_idx, -1] - ref_final)

    rng = np.random.default_rng(seed)
    wa = _resample_weights(rng, A.shape[0], resamples)
    wb = _resample_weights(rng, B.shape[0], resamples)
    flat_a = A.reshape(A.shape[0], -1)
    flat_b = B.reshape(B.shape[0], -1)
    means_a = (wa @ flat_a).reshape(resamples, *A.shape[1:])
    means_b = (wb @ flat_b).reshape(resamples, *B.shape[1:])
    ci: dict[str, tuple[float, float]] = {}
    samples: dict[str, list[float]] = {k: [] for k in point}
    for r in range(resamples):
        for k, v in metrics(means_a[r], means_b[r]).items():
            samples[k].append(v)
    for k, v in samples.items():
        ci[k] = _percentile_ci(np.asarray(v))
    if per_run_peak is not None:
        ci["per_run_peak_err"] = _percentile_ci(wa @ per_run_peak)
    if per_run_final is not None:
        ci["per_run_final_err"] = _percentile_ci(wa @ per_run_final)

    return FidelityReport(
        l_inf=point["l_inf"],
        l2=point["l2"],
        err_peak_i=point.get("err_peak_i", 0.0),
        err_final_r=point.get("err_final_r"),
        per_run_peak_err=float(per_run_peak.mean()) if per_run_peak is not None else 0.0,
        per_run_final_err=float(per_run_final.mean()) if per_run_final is not None else None,
        ci=ci,
    )


# ----------------------------------------------------------------------
# epsilon sweep
# ----------------------------------------------------------------------


@dataclass
class SweepRow:
    epsilon: float
    peak_i: float
    peak_i_ci: tuple[float, float]
    final_r: float | None
    final_r_ci: tuple[float, float] | None
    mean_steps: float
    mean_wall: float
    selfcons_l_inf: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    ensembles: dict[float, list[TrajectoryRecord]]
    reference_eps: float


def epsilon_sweep(
    g: CsrGraph,
    m: ModelSpec,
    base_cfg: RenewalConfig,
    eps_list: list[float],
    runs: int,
    seed: int,
    t_final: float,
    grid_points: int = 501,
    workers: int = 1,
    seed_count: int | None = None,
    resamples: int = 1000,
) -> SweepResult:
    """Tau-leaping convergence sweep over the tolerance epsilon.

    Each epsilon reuses the same trial-seed family, and self-consistency
    L-inf is reported against the finest-epsilon ensemble.
    """
    if not eps_list:
        return SweepResult(rows=[], ensembles={}, reference_eps=math.nan)
    eps_sorted = sorted(set(eps_list))
    ref_eps = eps_sorted[0]
    ensembles: dict[float, list[TrajectoryRecord]] = {}
    for eps in eps_sorted:
        cfg = RenewalConfig(**{**base_cfg.__dict__, "epsilon": eps})
        ensembles[eps] = run_ensemble(
            "renewal", g, m, cfg, seed, t_final, runs, grid_points,
            workers=workers, seed_count=seed_count,
        )
    ref_mean = ensemble_mean(ensembles[ref_eps])
    comps = m.compartments
    i_idx = comps.index("I")
    r_idx = comps.index("R") if "R" in comps else None
    rng = np.random.default_rng(seed)
    rows = []
    for eps in eps_sorted:
        recs = ensembles[eps]
        A = _stack(recs)
        mean_curve = A.mean(axis=0)
        peak = float(mean_curve[i_idx].max())
        w = _resample_weights(rng, A.shape[0], resamples)
        flat = A.reshape(A.shape[0], -1)
        boot_means = (w @ flat).reshape(resamples, *A.shape[1:])
        peak_ci = _percentile_ci(boot_means[:, i_idx, :].max(axis=1))
        final_r = final_ci = None
        if r_idx is not None:
            final_r = float(mean_curve[r_idx, -1])
            final_ci = _percentile_ci(boot_means[:, r_idx, -1])
        rows.append(
            SweepRow(
                epsilon=eps,
                peak_i=peak,
                peak_i_ci=peak_ci,
                final_r=final_r,
                final_r_ci=final_ci,
                mean_steps=float(np.mean([r.summary["step_count"] for r in recs])),
                mean_wall=float(np.mean([r.summary["wall_clock"] for r in recs])),
                selfcons_l_inf=float(np.abs(mean_curve - ref_mean).max()),
            )
        )
    return SweepResult(rows=rows, ensembles=ensembles, reference_eps=ref_eps)


def slope_regression(
    eps_list,
    per_run_errors: list[np.ndarray],
    resamples: int = 5000,
    seed: int = 0,
) -> tuple[float, tuple[float, float]]:
    """log-log slope of error vs epsilon with a bootstrap percentile CI.

    per_run_errors[k] holds the per-run errors at eps_list[k]; resamples
    draw runs with replacement within each epsilon independently.
    """
    eps = np.asarray(eps_list, dtype=np.float64)
    if eps.size < 3:
        raise DegenerateFitError("need at least 3 epsilon points")
    x = np.log10(eps)
    if np.allclose(x.var(), 0.0):
        raise DegenerateFitError("epsilon values do not vary")
    means = np.array([np.mean(e) for e in per_run_errors])
    if np.any(means <= 0.0):
        raise DegenerateFitError("non-positive mean error")
    y = np.log10(means)
    xc = x - x.mean()
    alpha = float((xc * (y - y.mean())).sum() / (xc * xc).sum())
    rng = np.random.default_rng(seed)
    boot_y = np.empty((resamples, eps.size))
    for k, errs in enumerate(per_run_errors):
        errs = np.asarray(errs, dtype=np.float64)
        w = _resample_weights(rng, errs.size, resamples)
        boot_y[:, k] = np.log10(np.maximum(w @ errs, 1e-300))
    slopes = (boot_y - boot_y.mean(axis=1, keepdims=True)) @ xc / (xc * xc).sum()
    return alpha, _percentile_ci(slopes)


# ----------------------------------------------------------------------
# parity harness
# ----------------------------------------------------------------------


@dataclass
class ParityMismatch:
    seed: int
    variant: int
    step: int
    node: int | None
    which: str


@dataclass
class ParityReport:
    ok: bool
    steps: int
    seeds: list[int]
    mismatches: list[ParityMismatch] = field(default_factory=list)


class _SteppedRun:
    """Step-at-a-time driver reproducing run_batch boundary semantics."""

    def __init__(self, g, m, cfg, seed, seed_count=None, seed_compartment=None):
        self.g, self.m, self.cfg, self.seed = g, m, cfg, seed
        self.state = init_renewal_state(g, m, cfg, seed, seed_count, seed_compartment)
        self.plan = _build_plan(g, m, cfg, self.state.mixed_precision)
        self.active = None
        self.k_in_batch = 0

    def step(self) -> None:
        if self.k_in_batch == 0:
            self.active = _begin_batch(self.state, self.g, self.cfg, self.plan)
        renewal_step(
            self.state, self.g, self.m, self.cfg, self.seed,
            plan=self.plan, active=self.active,
        )
        self.k_in_batch = (self.k_in_batch + 1) % self.cfg.steps_per_batch


def parity_check(
    g: CsrGraph,
    m: ModelSpec,
    cfgs: list[RenewalConfig],
    steps: int,
    seeds: list[int],
    variant_seeds: list[int] | None = None,
    seed_count: int | None = None,
) -> ParityReport:
    """Lockstep bit-level comparison of (states, ages) and counts across
    config variants; the first divergence per variant is recorded."""
    report = ParityReport(ok=True, steps=steps, seeds=list(seeds))
    for s in seeds:
        runs = [
            _SteppedRun(
                g, m, cfg,
                variant_seeds[k] if variant_seeds else s,
                seed_count=seed_count,
            )
            for k, cfg in enumerate(cfgs)
        ]
        diverged = [False] * len(cfgs)
        for step in range(steps):
            for r in runs:
                r.step()
            base = runs[0].state
            for k in range(1, len(cfgs)):
                if diverged[k]:
                    continue
                other = runs[k].state
                mism = None
                if not np.array_equal(base.states, other.states):
                    node = int(np.flatnonzero(base.states != other.states)[0])
                    mism = ParityMismatch(s, k, step, node, "states")
                elif not np.array_equal(
                    base.ages.astype(np.float32), other.ages.astype(np.float32)
                ):
                    node = int(
                        np.flatnonzero(
                            base.ages.astype(np.float32) != other.ages.astype(np.float32)
                        )[0]
                    )
                    mism = ParityMismatch(s, k, step, node, "ages")
                elif not np.array_equal(base.counts, other.counts):
                    mism = ParityMismatch(s, k, step, None, "counts")
                if mism is not None:
                    report.mismatches.append(mism)
                    diverged[k] = True
                    report.ok = False
    return report


# ----------------------------------------------------------------------
# multi-topology sweep
# ----------------------------------------------------------------------


def _topology_graph(name: str, n: int, seed: int, d: int = 8, m_ba: int = 4) -> CsrGraph:
    if name == "er":
        return gen_erdos_renyi(n, float(d), seed)
    if name == "ba":
        return gen_barabasi_albert(n, m_ba, seed)
    if name == "fixed":
        return gen_fixed_degree(n, d, seed)
    raise ValueError(f"unknown topology {name!r}")


def multi_topology_sweep(
    topologies,
    sizes,
    eps_list,
    runs: int,
    seed: int,
    model: ModelSpec | None = None,
    t_final: float = 50.0,
    grid_points: int = 501,
    workers: int = 1,
    exact_max_nodes: int = 1000,
    base_cfg: RenewalConfig | None = None,
) -> dict:
    """Mean I(t)/N curves per (topology, size, epsilon) cell, with an
    exact-oracle overlay (mean and 25-75% band) where the size fits the
    exact-simulation budget."""
    if not eps_list:
        return {}
    model = model or seir_standard(0.25, 5.0, 4.0, 7.5, 5.0)
    base_cfg = base_cfg or RenewalConfig()
    i_idx = model.compartments.index("I")
    out: dict = {}
    for topo in topologies:
        for n in sizes:
            # stable per-cell salt (hash() is process-salted for strings)
            cell_salt = int.from_bytes(f"{topo}:{n}".encode(), "little") % (2**31)
            g = _topology_graph(topo, n, derive_seed(seed, cell_salt))
            cell = {"grid": None, "eps_curves": {}, "exact": None}
            for eps in sorted(set(eps_list)):
                cfg = RenewalConfig(**{**base_cfg.__dict__, "epsilon": eps})
                recs = run_ensemble(
                    "renewal", g, model, cfg, seed, t_final, runs, grid_points,
                    workers=workers,
                )
                cell["grid"] = recs[0].grid
                cell["eps_curves"][eps] = ensemble_mean(recs)[i_idx]
            if n <= exact_max_nodes:
                recs = run_ensemble(
                    "exact", g, model, None, seed, t_final, runs, grid_points,
                    workers=workers,
                )
                lo, hi = quantile_band(recs, "I")
                cell["exact"] = {
                    "mean": ensemble_mean(recs)[i_idx],
                    "q25": lo,
                    "q75": hi,
                }
            out[(topo, n)] = cell
    return out
