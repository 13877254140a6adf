"""Excursion decomposition of a discretized path.

A path is split into the discrete zero set and the ordered intervals on which
it keeps a constant nonzero sign.  Boundary conventions, fixed once here and
relied on everywhere downstream:

* An index belongs to the zero mask iff its value is exactly zero (after the
  optional snap tolerance).  Discretized Brownian paths almost never hit zero
  exactly, so strict sign changes also terminate excursions: when
  ``x[i] * x[i+1] < 0`` the boundary lies between i and i+1, index i is the
  last index of the ending excursion and i+1 the first of the next one, and
  neither index is masked.
* The stored interval ``(g_index, d_index, sign)`` covers the open interior
  plus whichever endpoints are not exact zeros, i.e. the covered indices are
  exactly those j in [g, d] with x[j] != 0.  Every index is either masked or
  covered by exactly one interval.
* ``zero_events`` marks the discrete stand-ins for visits to zero: the masked
  indices plus, for each sign change, the entry index i+1 of the new
  excursion.  The last-zero curve gamma and the final zero gbar are computed
  from this event set; when there are no events, gamma is identically 0 and
  gbar = 0 (the 0-or-last-zero convention).  The O(sqrt(dt)) values at
  crossing boundaries make these choices immaterial in the mesh limit, which
  the test suite checks explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .grid_paths import SamplePath

__all__ = [
    "ZeroMask",
    "Excursion",
    "ExcursionSet",
    "LastZeroCurve",
    "decompose_excursions",
    "last_zero_curve",
]


@dataclass(frozen=True)
class ZeroMask:
    """Boolean flags aligned with a grid; True marks a discrete zero."""

    flags: np.ndarray

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.flags)

    @property
    def is_empty(self) -> bool:
        return not bool(self.flags.any())

    def dilate(self, radius: int) -> np.ndarray:
        """Flags with True smeared over +/- radius grid indices."""
        if radius <= 0:
            return self.flags.copy()
        out = self.flags.copy()
        for off in range(1, radius + 1):
            out[off:] |= self.flags[:-off]
            out[:-off] |= self.flags[off:]
        return out

    def __len__(self) -> int:
        return len(self.flags)


class Excursion(NamedTuple):
    g_index: int
    d_index: int
    sign: int


@dataclass(frozen=True)
class ExcursionSet:
    """Ordered excursion intervals of one path plus its discrete zero data.

    ``ordinal[j]`` is the excursion number covering index j, or -1 on the
    zero mask; it is the vectorized carrier consumed by the sign-flip module.
    """

    path: SamplePath
    intervals: tuple[Excursion, ...]
    zero_mask: ZeroMask
    zero_events: ZeroMask
    ordinal: np.ndarray

    @property
    def n_excursions(self) -> int:
        return len(self.intervals)


@dataclass(frozen=True)
class LastZeroCurve:
    """gamma[i] = largest zero-event index <= i, or 0 when there is none."""

    gamma: np.ndarray


def decompose_excursions(path: SamplePath, snap_tol: float = 0.0) -> ExcursionSet:
    """Split a path into excursion intervals and its discrete zero set.

    Values of magnitude <= snap_tol are treated as exact zeros (default 0:
    only true zeros).  An everywhere-zero path yields no intervals and a full
    mask.
    """
    x = path.values
    if snap_tol > 0.0:
        x = np.where(np.abs(x) <= snap_tol, 0.0, x)
    s = np.sign(x).astype(np.int8)
    nz = s != 0

    starts = nz.copy()
    starts[1:] &= ~nz[:-1] | (s[1:] != s[:-1])
    ends = nz.copy()
    ends[:-1] &= ~nz[1:] | (s[1:] != s[:-1])

    ordinal = np.where(nz, np.cumsum(starts) - 1, -1).astype(np.int64)
    start_idx = np.flatnonzero(starts)
    end_idx = np.flatnonzero(ends)
    n = len(x) - 1

    # an endpoint extends to the adjacent exact zero when there is one
    g = np.where((start_idx > 0) & ~nz[np.maximum(start_idx - 1, 0)], start_idx - 1, start_idx)
    d = np.where((end_idx < n) & ~nz[np.minimum(end_idx + 1, n)], end_idx + 1, end_idx)

    intervals = tuple(
        Excursion(int(gi), int(di), int(si))
        for gi, di, si in zip(g, d, s[start_idx])
    )

    events = ~nz
    if len(start_idx) > 1:
        later = start_idx[1:]
        crossing = later[nz[later - 1]]  # sign change without an exact zero
        events[crossing] = True

    return ExcursionSet(
        path=path,
        intervals=intervals,
        zero_mask=ZeroMask(~nz),
        zero_events=ZeroMask(events),
        ordinal=ordinal,
    )


def last_zero_curve(excursions: ExcursionSet) -> tuple[LastZeroCurve, int]:
    """Running last zero event and the final zero gbar of a decomposition.

    gamma is nondecreasing, idempotent (gamma[gamma[i]] = gamma[i]) and uses
    index 0 when no event has occurred yet; gbar is the last event index or 0
    for an event-free path.
    """
    flags = excursions.zero_events.flags
    idx = np.arange(len(flags))
    gamma = np.maximum.accumulate(np.where(flags, idx, 0))
    gbar = int(gamma[-1])
    return LastZeroCurve(gamma), gbar
