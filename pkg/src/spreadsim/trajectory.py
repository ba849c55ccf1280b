"""Time-stamped trajectory records sampled onto a fixed analysis grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TrajectoryRecord", "make_record", "DEFAULT_GRID_POINTS"]

DEFAULT_GRID_POINTS = 501


@dataclass
class TrajectoryRecord:
    """Compartment fractions on a uniform time grid plus run summaries.

    fractions has shape (num_compartments, grid_points); every column
    sums to 1.
    """

    grid: np.ndarray
    fractions: np.ndarray
    compartments: tuple[str, ...]
    summary: dict = field(default_factory=dict)

    def fraction_of(self, label: str) -> np.ndarray:
        return self.fractions[self.compartments.index(label)]


def make_record(
    times,
    counts,
    compartments: tuple[str, ...],
    num_nodes: int,
    t_final: float,
    grid_points: int = DEFAULT_GRID_POINTS,
    extra_summary: dict | None = None,
) -> TrajectoryRecord:
    """Last-value interpolation of step/event samples onto a uniform grid.

    times must start at 0 and be non-decreasing; counts[k] is the
    compartment count vector in effect from times[k] (inclusive) until
    the next sample.
    """
    times = np.asarray(times, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    grid = np.linspace(0.0, t_final, grid_points)
    idx = np.searchsorted(times, grid, side="right") - 1
    idx = np.clip(idx, 0, len(times) - 1)
    fractions = counts[idx].T / float(num_nodes)
    summary = dict(extra_summary or {})
    if "I" in compartments:
        i_curve = fractions[compartments.index("I")]
        summary.setdefault("peak_I", float(i_curve.max()))
        summary.setdefault("peak_I_time", float(grid[int(i_curve.argmax())]))
    if "R" in compartments:
        summary.setdefault("final_R", float(fractions[compartments.index("R"), -1]))
    return TrajectoryRecord(
        grid=grid, fractions=fractions, compartments=compartments, summary=summary
    )
