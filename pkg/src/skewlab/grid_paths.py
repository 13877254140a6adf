"""Uniform time grids, seeded Brownian path sampling, and bridge refinement.

Every random quantity in the package is drawn from a substream addressed by a
:class:`SeedSpec`.  The substream derivation is a fixed, documented mix: the
triple ``(master_seed, stream_label, path_index)`` is fed through numpy's
``SeedSequence`` entropy pool (with the label reduced to a 64-bit blake2b
digest so the mix does not depend on Python's salted ``hash``) and drives a
PCG64 generator.  The mix is stable across runs, processes and platforms;
distinct triples yield streams indistinguishable from independent ones.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "SeedSpec",
    "TimeGrid",
    "SamplePath",
    "make_grid",
    "sample_brownian",
    "sample_independent_pair",
    "refine_bridge",
    "PAIR_LABELS",
]

#: sub-labels used by :func:`sample_independent_pair` for its two components
PAIR_LABELS = ("pair0", "pair1")


def _label_digest(label: str) -> int:
    """Stable 64-bit digest of a stream label."""
    return int.from_bytes(
        hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little"
    )


@dataclass(frozen=True)
class SeedSpec:
    """Address of one independent random substream.

    ``child(tag)`` descends into a namespaced sub-label and ``with_path(i)``
    selects a parallel stream, so Monte Carlo fan-out over ``path_index``
    needs no shared state.  ``rng()`` materialises the generator:

        SeedSequence(entropy=(master_seed, blake2b64(stream_label), path_index))
        -> PCG64
    """

    master_seed: int
    stream_label: str = ""
    path_index: int = 0

    def child(self, tag: str) -> "SeedSpec":
        label = f"{self.stream_label}/{tag}" if self.stream_label else tag
        return replace(self, stream_label=label)

    def with_path(self, index: int) -> "SeedSpec":
        return replace(self, path_index=int(index))

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=(self.master_seed, _label_digest(self.stream_label), self.path_index)
        )
        return np.random.Generator(np.random.PCG64(ss))

    def token(self) -> str:
        """Compact text form used in reports."""
        return f"{self.master_seed}:{self.stream_label}:{self.path_index}"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_N = horizon with N = n_steps."""

    horizon: float
    n_steps: int
    times: np.ndarray

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_points(self) -> int:
        return self.n_steps + 1

    def index_at(self, t: float) -> int:
        """Largest grid index i with times[i] <= t (clipped to the grid)."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(i, 0), self.n_steps)

    def same_as(self, other: "TimeGrid") -> bool:
        return (
            self is other
            or (self.n_steps == other.n_steps and self.horizon == other.horizon)
        )


@dataclass(frozen=True)
class SamplePath:
    """A discretized process: values aligned one-to-one with grid.times."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise ValueError(
                f"values must have length {self.grid.n_points}, got {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must all be finite")
        object.__setattr__(self, "values", v)

    def with_values(self, values: np.ndarray) -> "SamplePath":
        """New path on the same grid."""
        return SamplePath(self.grid, values)

    def __len__(self) -> int:
        return self.grid.n_points


def make_grid(horizon: float, n_steps: int) -> TimeGrid:
    """Build the uniform grid over [0, horizon] with n_steps steps.

    Raises ValueError for non-positive horizon or fewer than one step.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    times = np.linspace(0.0, float(horizon), n_steps + 1)
    return TimeGrid(float(horizon), int(n_steps), times)


def sample_brownian(grid: TimeGrid, seed: SeedSpec, x0: float = 0.0) -> SamplePath:
    """Sample one Brownian path: x0 plus cumulative N(0, dt) increments.

    The same (grid, seed, x0) always reproduces the identical path bit for
    bit; the increments come entirely from ``seed``'s substream.
    """
    incr = seed.rng().standard_normal(grid.n_steps) * math.sqrt(grid.dt)
    values = np.empty(grid.n_points)
    values[0] = x0
    np.cumsum(incr, out=values[1:])
    values[1:] += x0
    return SamplePath(grid, values)


def sample_independent_pair(grid: TimeGrid, seed: SeedSpec) -> tuple[SamplePath, SamplePath]:
    """Two Brownian paths from disjoint substreams of one seed.

    Component k is exactly ``sample_brownian(grid, seed.child(PAIR_LABELS[k]))``,
    so the pair is independent by construction and each half is reproducible
    on its own.
    """
    return (
        sample_brownian(grid, seed.child(PAIR_LABELS[0])),
        sample_brownian(grid, seed.child(PAIR_LABELS[1])),
    )


def refine_bridge(path: SamplePath, factor: int, seed: SeedSpec) -> SamplePath:
    """Brownian-bridge midpoint refinement of a Brownian path.

    Each halving keeps the existing points bit-exactly and draws the new
    midpoints from the conditional law N((x_i + x_{i+1})/2, dt_new / 2) where
    dt_new is the refined spacing.  ``factor`` must be a power of two; the
    bridge draws for the halving that starts from an n-step path come from
    ``seed.child(f"bridge{n}")``, so iterated refinement (4 = 2 then 2) and
    one-shot refinement by 4 produce the same path.
    """
    if factor < 1 or factor & (factor - 1) != 0:
        raise ValueError(f"factor must be a power of 2, got {factor}")
    out = path
    while factor > 1:
        out = _halve(out, seed)
        factor //= 2
    return out


def _halve(path: SamplePath, seed: SeedSpec) -> SamplePath:
    n = path.grid.n_steps
    rng = seed.child(f"bridge{n}").rng()
    fine = make_grid(path.grid.horizon, 2 * n)
    half_dt = fine.dt
    x = path.values
    mids = 0.5 * (x[:-1] + x[1:]) + math.sqrt(half_dt / 2.0) * rng.standard_normal(n)
    values = np.empty(fine.n_points)
    values[0::2] = x
    values[1::2] = mids
    return SamplePath(fine, values)
