"""Compartment model definitions binding states, transitions, and hazards.

A ModelSpec names the compartment chain, the edge-mediated transition out
of S (driven by neighbor pressure), the per-compartment nodal holding
times (exponential or log-normal), and the transmission mode.  SIS, SIR,
and SEIR all share this one vocabulary so the tau-leaping engines and the
exact references can exchange models freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hazards import (
    LogNormalParams,
    Shedding,
    lognormal_from_mean_median,
    lognormal_hazard,
    shedding,
)

__all__ = [
    "Holding",
    "ModelSpec",
    "sis_model",
    "sir_model",
    "seir_standard",
    "nodal_rate",
    "infectivity_value",
]


@dataclass(frozen=True)
class Holding:
    """Holding-time distribution of a nodal transition."""

    kind: str  # "exponential" | "lognormal"
    rate: float = 0.0
    params: LogNormalParams | None = None

    @classmethod
    def exponential(cls, rate: float) -> "Holding":
        if rate < 0:
            raise ValueError("rate must be >= 0")
        return cls(kind="exponential", rate=rate)

    @classmethod
    def lognormal(cls, params: LogNormalParams) -> "Holding":
        return cls(kind="lognormal", params=params)


@dataclass(frozen=True)
class ModelSpec:
    """Compartment model: states, transition map, and transmission."""

    name: str
    compartments: tuple[str, ...]
    beta: float
    edge_from: int  # susceptible compartment (pressure-driven)
    edge_to: int  # first infected successor
    nodal: dict[int, tuple[int, Holding]] = field(default_factory=dict)
    transmission: Shedding = field(default_factory=Shedding.constant)
    infectious: int = 0  # compartment exerting pressure

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        n = len(self.compartments)
        for c, (to, _) in self.nodal.items():
            if not (0 <= c < n and 0 <= to < n):
                raise ValueError("nodal transition references unknown compartment")
        if self.edge_from in self.nodal:
            raise ValueError("S may not also carry a nodal transition")

    @property
    def num_compartments(self) -> int:
        return len(self.compartments)

    def index(self, label: str) -> int:
        return self.compartments.index(label)

    def successor_array(self) -> np.ndarray:
        """succ[c] = compartment reached when c's transition fires."""
        succ = np.arange(self.num_compartments, dtype=np.int8)
        succ[self.edge_from] = self.edge_to
        for c, (to, _) in self.nodal.items():
            succ[c] = to
        return succ

    def terminal_mask(self) -> np.ndarray:
        """Compartments with no outgoing transition (absorbing)."""
        mask = np.ones(self.num_compartments, dtype=bool)
        mask[self.edge_from] = False
        for c in self.nodal:
            mask[c] = False
        return mask

    def age_dependent(self) -> bool:
        return any(h.kind == "lognormal" for _, h in self.nodal.values())


def sis_model(beta: float, delta: float, transmission: Shedding | None = None) -> ModelSpec:
    """SIS: S -> I edge-driven, I -> S exponential recovery at rate delta."""
    return ModelSpec(
        name="sis",
        compartments=("S", "I"),
        beta=beta,
        edge_from=0,
        edge_to=1,
        nodal={1: (0, Holding.exponential(delta))},
        transmission=transmission or Shedding.constant(),
        infectious=1,
    )


def sir_model(beta: float, gamma: float, transmission: Shedding | None = None) -> ModelSpec:
    """SIR: S -> I edge-driven, I -> R exponential recovery at rate gamma."""
    return ModelSpec(
        name="sir",
        compartments=("S", "I", "R"),
        beta=beta,
        edge_from=0,
        edge_to=1,
        nodal={1: (2, Holding.exponential(gamma))},
        transmission=transmission or Shedding.constant(),
        infectious=1,
    )


def seir_standard(
    beta: float,
    mean_ei: float,
    median_ei: float,
    mean_ir: float,
    median_ir: float,
    transmission: Shedding | None = None,
) -> ModelSpec:
    """SEIR chain with log-normal E->I and I->R holding times.

    The holding-time parameters are given as (mean, median) pairs and
    inverted in closed form; InvalidMomentsError propagates when a mean
    does not exceed its median.
    """
    ei = lognormal_from_mean_median(mean_ei, median_ei)
    ir = lognormal_from_mean_median(mean_ir, median_ir)
    return ModelSpec(
        name="seir",
        compartments=("S", "E", "I", "R"),
        beta=beta,
        edge_from=0,
        edge_to=1,
        nodal={1: (2, Holding.lognormal(ei)), 2: (3, Holding.lognormal(ir))},
        transmission=transmission or Shedding.constant(),
        infectious=2,
    )


def nodal_rate(m: ModelSpec, state: int, age: float, pressure: float) -> float:
    """Instantaneous transition rate of one node.

    Susceptibles fire at their accumulated pressure, absorbing states at
    exactly 0, and nodal compartments at their holding-time hazard.
    """
    if age < 0 or pressure < 0:
        raise ValueError("age and pressure must be >= 0")
    if state == m.edge_from:
        return pressure
    if state not in m.nodal:
        return 0.0
    _, holding = m.nodal[state]
    if holding.kind == "exponential":
        return holding.rate
    return float(lognormal_hazard(age, holding.params))


def infectivity_value(m: ModelSpec, state: int, age: float) -> float:
    """Per-node infectivity beta * s(age) * 1{state infectious}."""
    if age < 0:
        raise ValueError("age must be >= 0")
    if state != m.infectious:
        return 0.0
    return m.beta * float(shedding(m.transmission, age))


def infectivity_array(m: ModelSpec, states: np.ndarray, ages: np.ndarray) -> np.ndarray:
    """Vectorized infectivity buffer (float64) for the whole population."""
    out = np.zeros(states.shape[0], dtype=np.float64)
    mask = states == m.infectious
    if np.any(mask):
        out[mask] = m.beta * np.asarray(shedding(m.transmission, ages[mask]), dtype=np.float64)
    return out
