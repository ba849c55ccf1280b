"""Dense synchronous Bernoulli tau-leaping for age-dependent models.

Every step advances all nodes by one shared interval tau_prev: gather
pressure from the infectivity buffer over incoming CSR edges, evaluate
per-node rates (pressure for S, holding-time hazard for aging
compartments, zero for absorbing ones), Bernoulli-sample transitions with
one counter-based deviate per (step, node), apply transitions
simultaneously, reset ages on transition, write the next step's
infectivity buffer, and finally shrink tau_prev so the largest next-step
transition probability stays near epsilon.

Three traversal strategies drive the gather.  All of them reduce each
node's neighbor contributions in ascending CSR order with a float32
accumulator, so for a fixed (graph, model, config, seed) they produce
bit-identical trajectories; they differ only in how work is partitioned
(whole slices, 32-lane tiles, or fixed chunks of edges with the owning
node recovered by binary search on the row offsets).

Storage may be narrowed to int8 states / fp16 ages / bf16 infectivity
and weights (promote on load, cast on store); the pressure and rate
arrays stay float32 and all arithmetic runs at float32 or wider.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import ml_dtypes
import numpy as np

from .errors import ReconfigureAfterStartError
from .graph import CsrGraph, Strategy, degree_stats, select_strategy
from .hazards import LogNormalParams, shedding
from .models import ModelSpec
from .rng import derive_seed, uniform_array
from .trajectory import DEFAULT_GRID_POINTS, TrajectoryRecord, make_record

__all__ = [
    "RenewalConfig",
    "RenewalState",
    "ActiveSet",
    "init_renewal_state",
    "set_mixed_precision",
    "refresh_active",
    "pressure_gather",
    "renewal_step",
    "run_batch",
    "run_renewal",
    "default_seed_count",
]

BFLOAT16 = np.dtype(ml_dtypes.bfloat16)

_SEED_PICK_SALT = 0x5EEDC0DE

try:  # optional compiled fold; bit-identical to the numpy path by test
    import numba

    @numba.njit("void(float32[::1], float32[::1], int64[::1], int64[::1], int64[::1])",
                cache=True)
    def _fold_seq_compiled(out, contrib, nodes, starts, degs):  # pragma: no cover
        for k in range(nodes.size):
            acc = np.float32(0.0)
            base = starts[k]
            for e in range(degs[k]):
                acc += contrib[base + e]
            out[nodes[k]] += acc

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover
    _HAVE_NUMBA = False


@dataclass
class RenewalConfig:
    epsilon: float = 0.03
    tau_max: float = 0.1
    delta: float = 1e-9  # rate floor in the adaptive step denominator
    steps_per_batch: int = 50
    strategy: Strategy = Strategy.AUTO
    compaction: bool = False
    mixed_precision: bool = False
    lanes_per_node: int = 32
    edges_per_block: int = 1024
    hazard_chunk: int = 128
    chunk_skip: bool = True
    # keep tau_prev across batch boundaries (initialized to tau_max once at
    # t=0); carry_tau=False instead re-caps it at every batch start, costing
    # one over-conservative step per batch
    carry_tau: bool = True

    def __post_init__(self) -> None:
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must be in (0, 1)")
        if self.tau_max <= 0.0:
            raise ValueError("tau_max must be > 0")
        if self.steps_per_batch < 1:
            raise ValueError("steps_per_batch must be >= 1")


@dataclass
class ActiveSet:
    """Zero-padded sorted ids of nodes not yet absorbed."""

    active_nodes: np.ndarray  # int32, capacity N + pad
    num_active: int

    @property
    def ids(self) -> np.ndarray:
        return self.active_nodes[: self.num_active]


@dataclass
class RenewalState:
    states: np.ndarray  # int8 under mixed precision, else int32
    ages: np.ndarray  # float16 under mixed precision, else float32
    infectivity: np.ndarray  # bfloat16 under mixed precision, else float32
    pressure: np.ndarray  # float32, always
    rates: np.ndarray  # float32, always
    clock: float
    step_counter: int
    tau_prev: float
    counts: np.ndarray  # int64 per compartment
    mixed_precision: bool
    started: bool = False


@dataclass
class _FoldSet:
    """Nodes ordered by in-degree (descending) for the position fold."""

    nodes: np.ndarray  # int64
    starts: np.ndarray  # row_offsets[nodes]
    n_at_pos: np.ndarray  # count of nodes with degree > p, p < d_max
    d_max: int
    degs: np.ndarray | None = None


@dataclass
class _EnginePlan:
    """Per-(graph, model, config) precomputation shared across steps."""

    strategy: Strategy
    weights_f32: np.ndarray
    all_ids: np.ndarray
    fold_all: _FoldSet
    merge_whole: _FoldSet | None
    merge_straddle: _FoldSet | None
    succ: np.ndarray
    terminal: np.ndarray  # bool per compartment
    lognormal: list[tuple[int, LogNormalParams]]
    exponential: list[tuple[int, float]]
    fold_active: _FoldSet | None = None


def default_seed_count(num_nodes: int) -> int:
    """Default initial seeding: max(10, 1% of the population)."""
    return max(10, int(round(0.01 * num_nodes)))


def _pick_seed_nodes(num_nodes: int, seed: int, count: int) -> np.ndarray:
    """Deterministic choice of count distinct nodes (sorted ids)."""
    if not (0 <= count <= num_nodes):
        raise ValueError(f"seed count {count} outside [0, N]")
    if count == 0:
        return np.empty(0, dtype=np.int64)
    u = uniform_array(derive_seed(seed, _SEED_PICK_SALT), 0, np.arange(num_nodes, dtype=np.uint64))
    return np.sort(np.argpartition(u, count - 1)[:count])


# ----------------------------------------------------------------------
# gather machinery
# ----------------------------------------------------------------------


def _make_fold_set(g: CsrGraph, node_ids: np.ndarray | None = None) -> _FoldSet:
    degs_all = g.in_degrees()
    if node_ids is None:
        ids = np.arange(g.num_nodes, dtype=np.int64)
    else:
        ids = np.asarray(node_ids, dtype=np.int64)
    degs = degs_all[ids]
    order = np.argsort(-degs, kind="stable")
    nodes = ids[order]
    sdeg = degs[order]
    d_max = int(sdeg[0]) if sdeg.size else 0
    n_at_pos = np.searchsorted(-sdeg, -np.arange(d_max, dtype=np.int64), side="left")
    return _FoldSet(
        nodes=nodes,
        starts=g.row_offsets[nodes],
        n_at_pos=n_at_pos,
        d_max=d_max,
        degs=np.ascontiguousarray(sdeg),
    )


def _fold_into(out: np.ndarray, contrib: np.ndarray, fs: _FoldSet) -> None:
    """Accumulate each node's slice left-to-right into a float32 scalar."""
    if _HAVE_NUMBA and fs.degs is not None:
        _fold_seq_compiled(
            out, contrib,
            np.ascontiguousarray(fs.nodes),
            np.ascontiguousarray(fs.starts),
            fs.degs,
        )
        return
    _fold_positions(out, contrib, fs)


def _fold_positions(out: np.ndarray, contrib: np.ndarray, fs: _FoldSet) -> None:
    """Pure-numpy fold: one slice position at a time across all nodes,
    in the same per-node order as the compiled path."""
    for p in range(fs.d_max):
        k = int(fs.n_at_pos[p])
        if k == 0:
            break
        out[fs.nodes[:k]] += contrib[fs.starts[:k] + p]


def _fold_lane_into(out: np.ndarray, contrib: np.ndarray, fs: _FoldSet, lanes: int) -> None:
    """Tile each slice into fixed-width lane groups; reduce the register
    tile in ascending lane order so the per-node reduction order stays
    CSR order.  Lanes past a node's degree load zero (masked load)."""
    p = 0
    while p < fs.d_max:
        width = min(lanes, fs.d_max - p)
        k0 = int(fs.n_at_pos[p])
        if k0 == 0:
            break
        nodes_t = fs.nodes[:k0]
        tile = np.empty((width, k0), dtype=np.float32)
        for i in range(width):
            lane = p + i
            kl = int(fs.n_at_pos[lane])
            tile[i, :kl] = contrib[fs.starts[:kl] + lane]
            tile[i, kl:] = 0.0
        acc = out[nodes_t]
        for i in range(width):
            acc = acc + tile[i]
        out[nodes_t] = acc
        p += width


def _merge_partition(g: CsrGraph, edges_per_block: int) -> tuple[np.ndarray, np.ndarray]:
    """Split nodes into slices wholly inside one edge chunk vs. slices
    that straddle a chunk boundary.  The owning node of each chunk's
    first edge is recovered by binary search on row_offsets."""
    ro = g.row_offsets
    if g.num_edges == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    chunk_starts = np.arange(0, g.num_edges, edges_per_block, dtype=np.int64)
    first_owner = np.searchsorted(ro, chunk_starts, side="right") - 1
    straddle_mask = np.zeros(g.num_nodes, dtype=bool)
    crossing = first_owner[ro[first_owner] < chunk_starts]
    straddle_mask[crossing] = True
    degs = np.diff(ro)
    whole = np.flatnonzero((degs > 0) & ~straddle_mask)
    straddle = np.flatnonzero(straddle_mask)
    return whole, straddle


def pressure_gather(
    g: CsrGraph,
    infectivity: np.ndarray,
    strategy: Strategy,
    cfg: RenewalConfig,
    active: ActiveSet | None = None,
    *,
    plan: _EnginePlan | None = None,
) -> np.ndarray:
    """Per-node pressure p_i = sum_j infectivity[j] * w_ji over incoming
    edges, reduced in CSR order with a float32 accumulator.

    All three strategies return bit-identical arrays for the nodes they
    cover.  With an active set, PerNode and LaneChunked gather only the
    listed nodes (others forced 0); EdgeMerge stays edge-complete and the
    active set filters the tail stage instead.
    """
    if strategy == Strategy.AUTO:
        strategy = (
            select_strategy(degree_stats(g), Strategy.AUTO)
            if g.num_edges > 0
            else Strategy.PER_NODE
        )
    inf32 = infectivity.astype(np.float32) if infectivity.dtype != np.float32 else infectivity
    w32 = plan.weights_f32 if plan is not None else g.weights
    contrib = inf32[g.col_indices] * w32
    out = np.zeros(g.num_nodes, dtype=np.float32)
    if strategy == Strategy.EDGE_MERGE:
        if plan is not None and plan.merge_whole is not None:
            whole_fs, straddle_fs = plan.merge_whole, plan.merge_straddle
        else:
            whole, straddle = _merge_partition(g, cfg.edges_per_block)
            whole_fs, straddle_fs = _make_fold_set(g, whole), _make_fold_set(g, straddle)
        # each whole slice is one chunk-local partial; straddling slices
        # fold over their full extent, which equals combining their
        # per-chunk partials in ascending chunk order
        _fold_into(out, contrib, whole_fs)
        _fold_into(out, contrib, straddle_fs)
        return out
    if active is None:
        fs = plan.fold_all if plan is not None else _make_fold_set(g)
    elif plan is not None and plan.fold_active is not None:
        fs = plan.fold_active
    else:
        fs = _make_fold_set(g, active.ids.astype(np.int64))
    if strategy == Strategy.PER_NODE:
        _fold_into(out, contrib, fs)
    else:
        _fold_lane_into(out, contrib, fs, cfg.lanes_per_node)
    return out


# ----------------------------------------------------------------------
# engine state
# ----------------------------------------------------------------------


def _build_plan(g: CsrGraph, m: ModelSpec, cfg: RenewalConfig, mixed: bool) -> _EnginePlan:
    strategy = cfg.strategy
    if strategy == Strategy.AUTO:
        strategy = (
            select_strategy(degree_stats(g), Strategy.AUTO)
            if g.num_edges > 0
            else Strategy.PER_NODE
        )
    weights = g.weights
    if mixed:
        weights = weights.astype(BFLOAT16).astype(np.float32)
    merge_whole = merge_straddle = None
    if strategy == Strategy.EDGE_MERGE:
        whole, straddle = _merge_partition(g, cfg.edges_per_block)
        merge_whole = _make_fold_set(g, whole)
        merge_straddle = _make_fold_set(g, straddle)
    lognormal = []
    exponential = []
    for comp, (_, holding) in sorted(m.nodal.items()):
        if holding.kind == "lognormal":
            lognormal.append((comp, holding.params))
        else:
            exponential.append((comp, holding.rate))
    return _EnginePlan(
        strategy=strategy,
        weights_f32=weights,
        all_ids=np.arange(g.num_nodes, dtype=np.uint64),
        fold_all=_make_fold_set(g),
        merge_whole=merge_whole,
        merge_straddle=merge_straddle,
        succ=m.successor_array(),
        terminal=m.terminal_mask(),
        lognormal=lognormal,
        exponential=exponential,
    )


def _state_dtype(mixed: bool) -> np.dtype:
    return np.dtype(np.int8) if mixed else np.dtype(np.int32)


def _age_dtype(mixed: bool) -> np.dtype:
    return np.dtype(np.float16) if mixed else np.dtype(np.float32)


def _infectivity_dtype(mixed: bool) -> np.dtype:
    return BFLOAT16 if mixed else np.dtype(np.float32)


def init_renewal_state(
    g: CsrGraph,
    m: ModelSpec,
    cfg: RenewalConfig,
    seed: int,
    seed_count: int | None = None,
    seed_compartment: int | None = None,
) -> RenewalState:
    """Fresh state with seed_count nodes placed in seed_compartment
    (default: the first infected successor) at age 0, infectivity buffer
    consistent with the seeded (states, ages)."""
    n = g.num_nodes
    if seed_count is None:
        seed_count = default_seed_count(n)
    if not (0 <= seed_count <= n):
        raise ValueError(f"seed_count {seed_count} outside [0, N]")
    comp = m.edge_to if seed_compartment is None else seed_compartment
    mixed = cfg.mixed_precision
    states = np.full(n, m.edge_from, dtype=_state_dtype(mixed))
    if seed_count:
        states[_pick_seed_nodes(n, seed, seed_count)] = comp
    ages = np.zeros(n, dtype=_age_dtype(mixed))
    inf32 = np.zeros(n, dtype=np.float32)
    imask = states == m.infectious
    if np.any(imask):
        inf32[imask] = np.float32(m.beta) * np.asarray(
            shedding(m.transmission, ages[imask].astype(np.float64)), dtype=np.float32
        )
    counts = np.bincount(states.astype(np.int64), minlength=m.num_compartments).astype(np.int64)
    return RenewalState(
        states=states,
        ages=ages,
        infectivity=inf32.astype(_infectivity_dtype(mixed)),
        pressure=np.zeros(n, dtype=np.float32),
        rates=np.zeros(n, dtype=np.float32),
        clock=0.0,
        step_counter=0,
        tau_prev=cfg.tau_max,
        counts=counts,
        mixed_precision=mixed,
    )


def set_mixed_precision(state: RenewalState, on: bool) -> RenewalState:
    """Switch the storage formats of a not-yet-started state."""
    if state.started:
        raise ReconfigureAfterStartError("cannot change precision after the first step")
    if on == state.mixed_precision:
        return state
    state.states = state.states.astype(_state_dtype(on))
    state.ages = state.ages.astype(_age_dtype(on))
    state.infectivity = state.infectivity.astype(np.float32).astype(_infectivity_dtype(on))
    state.mixed_precision = on
    return state


def refresh_active(states: np.ndarray, terminal: np.ndarray, pad: int = 128) -> ActiveSet:
    """Sorted ids of non-absorbed nodes, zero-padded to capacity N + pad."""
    alive = ~terminal[states.astype(np.int64)]
    ids = np.flatnonzero(alive)
    buf = np.zeros(states.shape[0] + pad, dtype=np.int32)
    buf[: ids.size] = ids
    return ActiveSet(active_nodes=buf, num_active=int(ids.size))


# ----------------------------------------------------------------------
# stepping
# ----------------------------------------------------------------------


def _comp_chunk_lanes(states_proc: np.ndarray, comp: int, chunk: int) -> np.ndarray:
    """Lanes belonging to fixed 128-node chunks that contain at least one
    node of the given compartment."""
    present = states_proc == comp
    n = present.size
    n_chunks = -(-n // chunk)
    padded = np.zeros(n_chunks * chunk, dtype=bool)
    padded[:n] = present
    flags = padded.reshape(n_chunks, chunk).any(axis=1)
    return np.repeat(flags, chunk)[:n]


def _hazard_rates(
    rates: np.ndarray,
    st: np.ndarray,
    age32: np.ndarray,
    plan: _EnginePlan,
    cfg: RenewalConfig,
) -> None:
    """Fill hazard-driven rates for the aging compartments.

    With the chunk-level skip on, evaluation is confined to the member
    lanes of 128-node chunks that contain the compartment; with it off,
    the hazard is evaluated across every processed lane and the result
    mask-selected.  Both paths write identical rates; only work differs.
    """
    from .hazards import _hazard_f64

    for comp, params in plan.lognormal:
        if cfg.chunk_skip:
            lanes = _comp_chunk_lanes(st, comp, cfg.hazard_chunk)
            idx = np.flatnonzero(lanes & (st == comp))
            if idx.size == 0:
                continue
            rates[idx] = _hazard_f64(
                age32[idx].astype(np.float64), params.mu, params.sigma
            ).astype(np.float32)
        else:
            hvals = _hazard_f64(age32.astype(np.float64), params.mu, params.sigma)
            sel = st == comp
            rates[sel] = hvals[sel].astype(np.float32)


def renewal_step(
    state: RenewalState,
    g: CsrGraph,
    m: ModelSpec,
    cfg: RenewalConfig,
    seed: int,
    *,
    plan: _EnginePlan | None = None,
    active: ActiveSet | None = None,
) -> tuple[RenewalState, float]:
    """One fused tau-leap over the whole (or compacted) population."""
    if plan is None:
        plan = _build_plan(g, m, cfg, state.mixed_precision)
    state.started = True
    tau = state.tau_prev
    state.clock += tau

    inf32 = (
        state.infectivity
        if state.infectivity.dtype == np.float32
        else state.infectivity.astype(np.float32)
    )
    pressure = pressure_gather(g, inf32, plan.strategy, cfg, active=active, plan=plan)
    state.pressure = pressure

    if active is not None:
        proc = active.ids.astype(np.int64)
        st = state.states[proc]
        age32 = state.ages[proc].astype(np.float32)
        prs = pressure[proc]
        ids = proc.astype(np.uint64)
    else:
        proc = None
        st = state.states
        age32 = (
            state.ages
            if state.ages.dtype == np.float32
            else state.ages.astype(np.float32)
        )
        prs = pressure
        ids = plan.all_ids
    n_proc = st.size

    rates = np.zeros(n_proc, dtype=np.float32)
    smask = st == m.edge_from
    rates[smask] = prs[smask]
    for comp, r in plan.exponential:
        rates[st == comp] = np.float32(r)
    _hazard_rates(rates, st, age32, plan, cfg)

    q = -np.expm1(-(rates.astype(np.float64)) * tau)
    u = uniform_array(seed, state.step_counter, ids)
    fire = u < q
    fired_local = np.flatnonzero(fire)
    old_fired = st[fired_local].astype(np.int64)
    new_fired = plan.succ[old_fired]

    nonterm = ~plan.terminal[st.astype(np.int64)]
    new_age32 = np.where(nonterm, age32 + np.float32(tau), age32).astype(np.float32)
    new_age32[fired_local] = 0.0

    if proc is None:
        state.states[fired_local] = new_fired.astype(state.states.dtype)
        post_states = state.states
    else:
        state.states[proc[fired_local]] = new_fired.astype(state.states.dtype)
        post_states = st.copy()
        post_states[fired_local] = new_fired.astype(st.dtype)
    if fired_local.size:
        state.counts += np.bincount(new_fired, minlength=m.num_compartments)
        state.counts -= np.bincount(old_fired, minlength=m.num_compartments)
    assert int(state.counts.sum()) == g.num_nodes

    inf_new32 = np.zeros(n_proc, dtype=np.float32)
    imask = post_states == m.infectious
    if np.any(imask):
        if m.transmission.kind == "constant":
            inf_new32[imask] = np.float32(m.beta)
        else:
            svals = np.asarray(
                shedding(m.transmission, new_age32[imask].astype(np.float64))
            )
            inf_new32[imask] = (m.beta * svals).astype(np.float32)

    # cast-on-store: narrowing happens only at these final stores
    if proc is None:
        state.ages = new_age32.astype(state.ages.dtype)
        state.infectivity = inf_new32.astype(state.infectivity.dtype)
        state.rates = rates
    else:
        state.ages[proc] = new_age32.astype(state.ages.dtype)
        state.infectivity[proc] = inf_new32.astype(state.infectivity.dtype)
        state.rates[proc] = rates

    max_rate = float(state.rates.max()) if state.rates.size else 0.0
    state.tau_prev = min(cfg.tau_max, cfg.epsilon / (max_rate + cfg.delta))
    state.step_counter += 1
    return state, tau


def _begin_batch(
    state: RenewalState, g: CsrGraph, cfg: RenewalConfig, plan: _EnginePlan
) -> ActiveSet | None:
    """Batch-boundary work: reset the carried step size (unless carry_tau)
    and, under compaction, zero the rates and refresh the active list."""
    if not cfg.carry_tau:
        state.tau_prev = cfg.tau_max
    if not cfg.compaction:
        plan.fold_active = None
        return None
    state.rates[:] = 0.0
    active = refresh_active(state.states, plan.terminal, pad=cfg.hazard_chunk)
    if plan.strategy != Strategy.EDGE_MERGE:
        plan.fold_active = _make_fold_set(g, active.ids.astype(np.int64))
    return active


def run_batch(
    state: RenewalState,
    g: CsrGraph,
    m: ModelSpec,
    cfg: RenewalConfig,
    seed: int,
    *,
    plan: _EnginePlan | None = None,
    recorder: list | None = None,
) -> tuple[RenewalState, float]:
    """Execute one batch of steps_per_batch fused steps.

    The carried step size persists across batches by default; with
    carry_tau off it is re-capped to tau_max at the batch boundary, so
    the first step of each batch takes a conservative full-cap step.
    With compaction on, rates are zeroed and the active list refreshed
    once per batch; nodes absorbed mid-batch stay on the list doing
    rate-zero work until the next refresh.
    """
    if plan is None:
        plan = _build_plan(g, m, cfg, state.mixed_precision)
    active = _begin_batch(state, g, cfg, plan)
    total = 0.0
    for _ in range(cfg.steps_per_batch):
        _, elapsed = renewal_step(state, g, m, cfg, seed, plan=plan, active=active)
        total += elapsed
        if recorder is not None:
            recorder.append((state.clock, state.counts.copy()))
    plan.fold_active = None
    return state, total


def run_renewal(
    g: CsrGraph,
    m: ModelSpec,
    cfg: RenewalConfig,
    seed: int,
    t_final: float,
    grid_points: int = DEFAULT_GRID_POINTS,
    seed_count: int | None = None,
    seed_compartment: int | None = None,
) -> TrajectoryRecord:
    """Simulate to t_final (whole batches; the last may overshoot) and
    sample the trajectory onto a uniform grid."""
    t0 = time.perf_counter()
    state = init_renewal_state(g, m, cfg, seed, seed_count, seed_compartment)
    plan = _build_plan(g, m, cfg, state.mixed_precision)
    recorder: list[tuple[float, np.ndarray]] = [(0.0, state.counts.copy())]
    while state.clock < t_final:
        run_batch(state, g, m, cfg, seed, plan=plan, recorder=recorder)
    wall = time.perf_counter() - t0
    times = np.array([t for t, _ in recorder])
    counts = np.array([c for _, c in recorder])
    steps = int(np.searchsorted(times, t_final, side="left"))
    steps = min(steps, state.step_counter)
    return make_record(
        times,
        counts,
        m.compartments,
        g.num_nodes,
        t_final,
        grid_points,
        extra_summary={"step_count": steps, "wall_clock": wall, "engine": "renewal"},
    )
