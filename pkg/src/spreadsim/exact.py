"""Exact event-driven stochastic oracles.

Two references, both statistically exact within their domain:

- ``gillespie_markov``: Doob-Gillespie direct method for models whose
  holding times are all exponential (SIS, SIR, or an all-exponential
  SEIR).  Total rate, exponential waiting time, categorical event
  selection proportional to per-node rates, one event applied at a time,
  incremental rate maintenance along outgoing CSR.

- ``gillespie_renewal_seir``: next-reaction hybrid for chain models with
  age-dependent nodal transitions under constant transmission.  Entering
  a nodal compartment schedules an absolute fire time drawn from the
  holding-time distribution; infections of susceptibles form a competing
  exponential channel whose piecewise-constant total rate is re-sampled
  memorylessly after every event.

Both exist for validation at desk scale (N <= 1e4 by policy), not for
performance.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .graph import CsrGraph, build_outgoing
from .models import ModelSpec
from .rng import RngKey, sample_lognormal, uniform_array
from .trajectory import DEFAULT_GRID_POINTS, TrajectoryRecord, make_record

__all__ = ["gillespie_markov", "gillespie_renewal_seir"]

_REBUILD_EVERY = 10_000
MAX_EXACT_NODES = 10_000  # the oracles exist for validation, not performance


def _check_size(g: CsrGraph) -> None:
    if g.num_nodes > MAX_EXACT_NODES:
        raise ValueError(
            f"exact oracles are capped at N <= {MAX_EXACT_NODES} by policy "
            f"(got N = {g.num_nodes})"
        )


def _draw(seed: int, counter: int) -> float:
    return float(uniform_array(seed, counter, np.array([0], dtype=np.uint64))[0])


def _exp_wait(seed: int, counter: int, rate: float) -> float:
    u = _draw(seed, counter)
    return -math.log1p(-u) / rate


def _sample_holding(seed: int, counter: int, holding) -> float:
    if holding.kind == "lognormal":
        return sample_lognormal(RngKey(seed, counter, 2), holding.params.mu, holding.params.sigma)
    if holding.rate <= 0.0:
        return math.inf
    return _exp_wait(seed, counter, holding.rate)


def _pick_categorical(cum: np.ndarray, u: float) -> int:
    """Index i with cum[i-1] <= u * cum[-1] < cum[i] (skips zero rates)."""
    x = u * cum[-1]
    return min(int(np.searchsorted(cum, x, side="right")), cum.size - 1)


@dataclass
class _Recorder:
    times: list = field(default_factory=list)
    counts: list = field(default_factory=list)

    def log(self, t: float, c: np.ndarray) -> None:
        self.times.append(t)
        self.counts.append(c.copy())


def gillespie_markov(
    g: CsrGraph,
    m: ModelSpec,
    seed: int,
    t_final: float,
    seed_count: int = 10,
    grid_points: int = 101,
    seed_compartment: int | None = None,
    check_every: int | None = None,
) -> TrajectoryRecord:
    """Doob-Gillespie direct method for all-exponential models."""
    for _, holding in m.nodal.values():
        if holding.kind != "exponential":
            raise ValueError("gillespie_markov requires exponential holding times")
    if m.transmission.kind != "constant":
        raise ValueError("gillespie_markov requires constant transmission")
    _check_size(g)
    from .markov import influence_gather
    from .renewal import _pick_seed_nodes

    t0 = time.perf_counter()
    out = build_outgoing(g).outgoing
    succ = m.successor_array()
    comp = m.infectious if seed_compartment is None else seed_compartment
    n = g.num_nodes
    states = np.full(n, m.edge_from, dtype=np.int32)
    states[_pick_seed_nodes(n, seed, seed_count)] = comp
    influence = influence_gather(g, states, m)

    nodal_rate_of = np.zeros(m.num_compartments, dtype=np.float64)
    for c, (_, holding) in m.nodal.items():
        nodal_rate_of[c] = holding.rate

    def own_rate(v: int) -> float:
        s = states[v]
        if s == m.edge_from:
            return m.beta * influence[v]
        return float(nodal_rate_of[s])

    rates = np.where(
        states == m.edge_from, m.beta * influence, nodal_rate_of[states]
    ).astype(np.float64)
    total = float(rates.sum())
    counts = np.bincount(states, minlength=m.num_compartments).astype(np.int64)
    rec = _Recorder()
    rec.log(0.0, counts)

    clock = 0.0
    counter = 0
    events = 0
    while total > 1e-14:
        wait = _exp_wait(seed, counter, total)
        counter += 1
        if clock + wait > t_final:
            break
        clock += wait
        u = _draw(seed, counter)
        counter += 1
        node = _pick_categorical(np.cumsum(rates), u)
        old = int(states[node])
        new = int(succ[old])
        states[node] = new
        counts[old] -= 1
        counts[new] += 1
        total -= rates[node]
        rates[node] = own_rate(node)
        total += rates[node]
        entering = new == m.infectious
        leaving = old == m.infectious
        if entering or leaving:
            lo, hi = out.row_offsets[node], out.row_offsets[node + 1]
            targets = out.col_indices[lo:hi]
            w = out.weights[lo:hi].astype(np.float64)
            sign = 1.0 if entering else -1.0
            influence[targets] += sign * w
            smask = states[targets] == m.edge_from
            if np.any(smask):
                dr = sign * m.beta * w[smask]
                rates[targets[smask]] += dr
                total += float(dr.sum())
        events += 1
        rec.log(clock, counts)
        if events % _REBUILD_EVERY == 0:
            rates = np.where(
                states == m.edge_from, m.beta * influence, nodal_rate_of[states]
            ).astype(np.float64)
            total = float(rates.sum())
        if check_every and events % check_every == 0:
            ref = np.where(
                states == m.edge_from, m.beta * influence, nodal_rate_of[states]
            ).sum()
            assert abs(total - ref) <= 1e-9 * max(1.0, abs(ref))
    wall = time.perf_counter() - t0
    return make_record(
        np.asarray(rec.times),
        np.asarray(rec.counts),
        m.compartments,
        n,
        t_final,
        grid_points,
        extra_summary={"step_count": events, "wall_clock": wall, "engine": "exact"},
    )


def gillespie_renewal_seir(
    g: CsrGraph,
    m: ModelSpec,
    seed: int,
    t_final: float,
    seed_count: int | None = None,
    grid_points: int = DEFAULT_GRID_POINTS,
    seed_compartment: int | None = None,
    check_every: int | None = None,
) -> TrajectoryRecord:
    """Next-reaction hybrid for chain models with scheduled nodal events.

    Requires constant transmission (the documented oracle boundary);
    holding times may be log-normal or exponential.
    """
    if m.transmission.kind != "constant":
        raise ValueError("the exact oracle requires constant transmission")
    _check_size(g)
    from .renewal import _pick_seed_nodes, default_seed_count

    t0 = time.perf_counter()
    out = build_outgoing(g).outgoing
    n = g.num_nodes
    if seed_count is None:
        seed_count = default_seed_count(n)
    comp = m.edge_to if seed_compartment is None else seed_compartment
    states = np.full(n, m.edge_from, dtype=np.int32)
    seeds = _pick_seed_nodes(n, seed, seed_count)
    states[seeds] = comp
    counts = np.bincount(states, minlength=m.num_compartments).astype(np.int64)

    pressure = np.zeros(n, dtype=np.float64)  # beta-weighted, S nodes only
    lam_s = 0.0
    counter = 0
    events = 0
    heap: list[tuple[float, int, int, int]] = []
    seq = 0

    def schedule(node: int, from_comp: int, t: float) -> None:
        nonlocal counter, seq
        if from_comp not in m.nodal:
            return
        to, holding = m.nodal[from_comp]
        dt = _sample_holding(seed, counter, holding)
        counter += 1
        if math.isfinite(dt):
            heapq.heappush(heap, (t + dt, seq, node, to))
            seq += 1

    def spread_update(node: int, entering: bool) -> None:
        nonlocal lam_s
        lo, hi = out.row_offsets[node], out.row_offsets[node + 1]
        targets = out.col_indices[lo:hi]
        w = out.weights[lo:hi].astype(np.float64)
        smask = states[targets] == m.edge_from
        if np.any(smask):
            dp = m.beta * w[smask]
            if not entering:
                dp = -dp
            pressure[targets[smask]] += dp
            lam_s += float(dp.sum())

    def apply_transition(node: int, new: int, t: float) -> None:
        nonlocal lam_s
        old = int(states[node])
        states[node] = new
        counts[old] -= 1
        counts[new] += 1
        if old == m.edge_from:
            lam_s -= pressure[node]
            pressure[node] = 0.0
        if new == m.infectious:
            spread_update(node, entering=True)
        if old == m.infectious:
            spread_update(node, entering=False)
        schedule(node, new, t)

    for v in seeds:
        if comp == m.infectious:
            spread_update(int(v), entering=True)
        schedule(int(v), comp, 0.0)

    rec = _Recorder()
    rec.log(0.0, counts)
    clock = 0.0
    while True:
        t_nodal = heap[0][0] if heap else math.inf
        if lam_s > 1e-14:
            wait = _exp_wait(seed, counter, lam_s)
            counter += 1
            t_inf = clock + wait
        else:
            t_inf = math.inf
        t_next = min(t_nodal, t_inf)
        if not math.isfinite(t_next) or t_next > t_final:
            break
        if t_nodal <= t_inf:
            _, _, node, to = heapq.heappop(heap)
            clock = t_nodal
            apply_transition(node, to, clock)
        else:
            clock = t_inf
            u = _draw(seed, counter)
            counter += 1
            cum = np.cumsum(pressure)
            node = _pick_categorical(cum, u)
            apply_transition(node, m.edge_to, clock)
        events += 1
        rec.log(clock, counts)
        if events % _REBUILD_EVERY == 0:
            lam_s = float(pressure.sum())
        if check_every and events % check_every == 0:
            ref = float(pressure.sum())
            assert abs(lam_s - ref) <= 1e-9 * max(1.0, abs(ref))
    wall = time.perf_counter() - t0
    return make_record(
        np.asarray(rec.times),
        np.asarray(rec.counts),
        m.compartments,
        n,
        t_final,
        grid_points,
        extra_summary={"step_count": events, "wall_clock": wall, "engine": "exact"},
    )
