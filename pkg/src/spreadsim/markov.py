"""Tau-leaping for memoryless (all-exponential) models.

Rates are piecewise constant between events, so the influence array (the
weighted count of infectious in-neighbors) can be maintained either by a
full gather over incoming CSR (Control Mode) or by sparse updates along
the outgoing CSR of the few nodes that transitioned (Inertial Mode).
Influence is accumulated in 64-bit so the periodic Control rebuild is a
safety net rather than a correctness requirement.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .graph import CsrGraph, build_outgoing
from .models import ModelSpec
from .rng import uniform_array
from .trajectory import TrajectoryRecord, make_record

__all__ = [
    "MarkovConfig",
    "MarkovState",
    "init_markov_state",
    "influence_gather",
    "inertial_update",
    "markov_step",
    "run_markov",
]


@dataclass
class MarkovConfig:
    theta: float = 0.01  # rate-budget knob: tau <= theta * N / total_rate
    p_max: float = 0.1  # per-step probability cap: tau <= p_max / max_rate
    tau_max: float = 0.1
    rebuild_every: int = 200  # events between forced Control rebuilds
    inertial_threshold: float = 8.0  # Inertial when |T| * d_avg < (N + E) / threshold

    def __post_init__(self) -> None:
        if not (0.0 < self.p_max < 1.0):
            raise ValueError("p_max must be in (0, 1)")
        if self.theta <= 0.0 or self.tau_max <= 0.0:
            raise ValueError("theta and tau_max must be > 0")


@dataclass
class MarkovState:
    states: np.ndarray  # int32
    influence: np.ndarray  # float64 weighted infectious in-degree
    rates: np.ndarray  # float64
    clock: float
    step_counter: int
    events_since_rebuild: int
    counts: np.ndarray


def _check_markovian(m: ModelSpec) -> None:
    for _, holding in m.nodal.values():
        if holding.kind != "exponential":
            raise ValueError("the Markovian engine requires exponential holding times")
    if m.transmission.kind != "constant":
        raise ValueError("the Markovian engine requires constant transmission")


def influence_gather(g: CsrGraph, states: np.ndarray, m: ModelSpec) -> np.ndarray:
    """Weighted count of infectious in-neighbors, accumulated in 64-bit
    in fixed CSR order."""
    if g.num_edges == 0:
        return np.zeros(g.num_nodes, dtype=np.float64)
    flags = (states == m.infectious).astype(np.float64)
    contrib = np.empty(g.num_edges + 1, dtype=np.float64)
    contrib[:-1] = flags[g.col_indices] * g.weights.astype(np.float64)
    # sentinel keeps row_offsets valid reduceat indices when trailing
    # nodes are isolated; it only ever adds an exact 0.0
    contrib[-1] = 0.0
    out = np.add.reduceat(contrib, g.row_offsets[:-1])
    out[g.in_degrees() == 0] = 0.0
    return out


def _compute_rates(m: ModelSpec, states: np.ndarray, influence: np.ndarray) -> np.ndarray:
    rates = np.zeros(states.shape[0], dtype=np.float64)
    smask = states == m.edge_from
    rates[smask] = m.beta * influence[smask]
    for comp, (_, holding) in m.nodal.items():
        rates[states == comp] = holding.rate
    return rates


def init_markov_state(
    g: CsrGraph,
    m: ModelSpec,
    seed_nodes: np.ndarray,
) -> MarkovState:
    _check_markovian(m)
    states = np.full(g.num_nodes, m.edge_from, dtype=np.int32)
    states[seed_nodes] = m.infectious
    influence = influence_gather(g, states, m)
    return MarkovState(
        states=states,
        influence=influence,
        rates=_compute_rates(m, states, influence),
        clock=0.0,
        step_counter=0,
        events_since_rebuild=0,
        counts=np.bincount(states, minlength=m.num_compartments).astype(np.int64),
    )


def _inverse_successor(m: ModelSpec) -> dict[int, int]:
    inv = {m.edge_to: m.edge_from}
    for c, (to, _) in m.nodal.items():
        if to in inv:
            raise ValueError("transition map not invertible")
        inv[to] = c
    return inv


def inertial_update(
    state: MarkovState, transitioned: np.ndarray, g: CsrGraph, m: ModelSpec
) -> MarkovState:
    """Sparse influence update along outgoing CSR for the nodes that just
    transitioned (their new states are already in state.states)."""
    if transitioned.size == 0:
        return state
    out = build_outgoing(g).outgoing
    inv = _inverse_successor(m)
    new_states = state.states[transitioned]
    entering = transitioned[new_states == m.infectious]
    was = np.array([inv[s] for s in new_states], dtype=np.int64)
    leaving = transitioned[was == m.infectious]
    for nodes, sign in ((entering, 1.0), (leaving, -1.0)):
        for v in nodes:
            lo, hi = out.row_offsets[v], out.row_offsets[v + 1]
            targets = out.col_indices[lo:hi]
            state.influence[targets] += sign * out.weights[lo:hi].astype(np.float64)
    return state


def markov_step(
    state: MarkovState,
    g: CsrGraph,
    m: ModelSpec,
    cfg: MarkovConfig,
    seed: int,
) -> tuple[MarkovState, float]:
    """One adaptive tau-leap: three-way step selection, simultaneous
    Bernoulli transitions, then the Inertial/Control influence update."""
    total = float(state.rates.sum())
    max_rate = float(state.rates.max()) if state.rates.size else 0.0
    if total <= 0.0 or max_rate <= 0.0:
        tau = cfg.tau_max
    else:
        tau = min(cfg.theta * g.num_nodes / total, cfg.p_max / max_rate, cfg.tau_max)
    state.clock += tau

    q = -np.expm1(-state.rates * tau)
    u = uniform_array(seed, state.step_counter, np.arange(g.num_nodes, dtype=np.uint64))
    fired = np.flatnonzero(u < q)
    if fired.size:
        succ = m.successor_array()
        old = state.states[fired]
        state.states[fired] = succ[old]
        state.counts += np.bincount(state.states[fired], minlength=m.num_compartments)
        state.counts -= np.bincount(old, minlength=m.num_compartments)
    assert int(state.counts.sum()) == g.num_nodes

    state.events_since_rebuild += int(fired.size)
    d_avg = g.num_edges / g.num_nodes if g.num_nodes else 0.0
    sparse_ok = fired.size * d_avg < (g.num_nodes + g.num_edges) / cfg.inertial_threshold
    if state.events_since_rebuild >= cfg.rebuild_every or not sparse_ok:
        state.influence = influence_gather(g, state.states, m)
        state.events_since_rebuild = 0
    else:
        inertial_update(state, fired, g, m)
    state.rates = _compute_rates(m, state.states, state.influence)
    state.step_counter += 1
    return state, tau


def run_markov(
    g: CsrGraph,
    m: ModelSpec,
    cfg: MarkovConfig,
    seed: int,
    t_final: float,
    grid_points: int = 101,
    seed_count: int = 10,
    seed_compartment: int | None = None,
) -> TrajectoryRecord:
    """Simulate to t_final and sample onto a uniform grid.

    Seed nodes (default: 10 infectious) are chosen deterministically from
    the seed, matching the exact reference's seeding rule.
    """
    from .renewal import _pick_seed_nodes  # shared deterministic seeding

    t0 = time.perf_counter()
    _check_markovian(m)
    build_outgoing(g)
    comp = m.infectious if seed_compartment is None else seed_compartment
    picked = _pick_seed_nodes(g.num_nodes, seed, seed_count)
    state = init_markov_state(g, m, picked)
    if comp != m.infectious:
        state.states[picked] = comp
        state.influence = influence_gather(g, state.states, m)
        state.rates = _compute_rates(m, state.states, state.influence)
        state.counts = np.bincount(state.states, minlength=m.num_compartments).astype(np.int64)
    times = [0.0]
    counts = [state.counts.copy()]
    while state.clock < t_final:
        _, _ = markov_step(state, g, m, cfg, seed)
        times.append(state.clock)
        counts.append(state.counts.copy())
    wall = time.perf_counter() - t0
    steps = int(np.searchsorted(np.asarray(times), t_final, side="left"))
    return make_record(
        np.asarray(times),
        np.asarray(counts),
        m.compartments,
        g.num_nodes,
        t_final,
        grid_points,
        extra_summary={"step_count": steps, "wall_clock": wall, "engine": "markov"},
    )
