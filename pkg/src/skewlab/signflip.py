"""Bernoulli sign processes over an excursion decomposition.

The constant-skewness process attaches one independent sign per excursion,
+1 with probability alpha; the piecewise version draws one sign per
(excursion, partition-cell) pair and switches value at partition boundaries
that fall strictly inside an excursion.  Off the excursions the sign path is
exactly zero.

Seed discipline: for a given seed, excursion n with an m-cell schedule
consumes uniforms [n*m, (n+1)*m) of the substream, so the signs of the first
k excursions do not depend on how many excursions follow them.  Refining a
grid, which can only reveal additional excursions, therefore never reshuffles
the signs of the ones already present.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .excursion import ExcursionSet
from .grid_paths import SamplePath, SeedSpec

__all__ = [
    "AlphaSchedule",
    "SignAssignment",
    "assign_signs",
    "build_sign_path",
    "apply_sign",
]


@dataclass(frozen=True)
class AlphaSchedule:
    """Skewness parameter, constant or piecewise constant in time.

    boundaries = (0 = t_0 < t_1 < ... < t_m) and values = (a_0, ..., a_m)
    mean alpha(t) = a_i on [t_i, t_{i+1}) and a_m from t_m on.  A single cell
    is the constant case.
    """

    boundaries: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.boundaries) != len(self.values) or not self.boundaries:
            raise ValueError("need one alpha value per boundary")
        if self.boundaries[0] != 0.0:
            raise ValueError("first boundary must be 0")
        if any(b >= c for b, c in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be strictly increasing")
        if any(not 0.0 <= a <= 1.0 for a in self.values):
            raise ValueError("alpha values must lie in [0, 1]")

    @classmethod
    def constant(cls, alpha: float) -> "AlphaSchedule":
        return cls((0.0,), (float(alpha),))

    @classmethod
    def piecewise(cls, boundaries, values) -> "AlphaSchedule":
        return cls(tuple(float(b) for b in boundaries), tuple(float(a) for a in values))

    @property
    def kind(self) -> str:
        return "constant" if len(self.values) == 1 else "piecewise"

    @property
    def n_cells(self) -> int:
        return len(self.values)

    def cell_indices(self, times: np.ndarray) -> np.ndarray:
        """Cell index of each time (cell i is [t_i, t_{i+1}))."""
        return np.clip(
            np.searchsorted(self.boundaries, times, side="right") - 1, 0, self.n_cells - 1
        )

    def alpha_at(self, times: np.ndarray) -> np.ndarray:
        return np.asarray(self.values)[self.cell_indices(np.asarray(times))]


@dataclass(frozen=True)
class SignAssignment:
    """Signs in {-1, +1}, one row per excursion, one column per cell."""

    signs: np.ndarray  # shape (n_excursions, n_cells), int8

    @property
    def n_excursions(self) -> int:
        return self.signs.shape[0]

    @property
    def n_cells(self) -> int:
        return self.signs.shape[1]


def assign_signs(
    excursions: ExcursionSet, schedule: AlphaSchedule, seed: SeedSpec
) -> SignAssignment:
    """Draw the per-excursion (and per-cell) Bernoulli signs.

    Sign (n, i) is +1 iff the corresponding uniform is < alpha_i, so alpha = 1
    gives all +1 and alpha = 0 all -1; draws are independent across both
    indices and independent of the path given its excursion structure.
    """
    n_exc = excursions.n_excursions
    u = seed.rng().uniform(size=(n_exc, schedule.n_cells))
    alpha = np.asarray(schedule.values)
    signs = np.where(u < alpha[None, :], 1, -1).astype(np.int8)
    return SignAssignment(signs)


def build_sign_path(
    excursions: ExcursionSet,
    assignment: SignAssignment,
    schedule: AlphaSchedule,
) -> SamplePath:
    """Assemble the {-1, 0, +1}-valued sign path from an assignment.

    Constant on each excursion (constant case) or on each excursion-cell
    piece (piecewise case); exactly 0 on the zero mask.
    """
    if assignment.n_excursions != excursions.n_excursions:
        raise ValueError(
            f"assignment has {assignment.n_excursions} excursions, "
            f"decomposition has {excursions.n_excursions}"
        )
    if assignment.n_cells != schedule.n_cells:
        raise ValueError("assignment and schedule disagree on cell count")
    grid = excursions.path.grid
    covered = excursions.ordinal >= 0
    z = np.zeros(grid.n_points)
    if covered.any():
        cells = schedule.cell_indices(grid.times)
        z[covered] = assignment.signs[excursions.ordinal[covered], cells[covered]]
    return SamplePath(grid, z)


def apply_sign(sign: SamplePath, path: SamplePath, mode: str = "signed") -> SamplePath:
    """Pointwise product Z*X (signed) or Z*|X| (absolute)."""
    if not sign.grid.same_as(path.grid):
        raise ValueError("sign path and target path live on different grids")
    if mode == "signed":
        values = sign.values * path.values
    elif mode == "absolute":
        values = sign.values * np.abs(path.values)
    else:
        raise ValueError(f"mode must be 'signed' or 'absolute', got {mode!r}")
    return SamplePath(path.grid, values)
