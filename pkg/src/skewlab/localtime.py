"""Discrete stochastic calculus: Ito sums, covariation, local time, residuals.

All cumulative sums run left to right in grid order (numpy cumsum), so every
result is reproducible bit for bit; parallelism in this package only ever
fans out across independent paths, never inside one sum.

Sign convention: sgn(0) = 0 throughout (the symmetric local time convention),
which is what numpy.sign provides.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .excursion import decompose_excursions, last_zero_curve
from .grid_paths import SamplePath, SeedSpec

__all__ = [
    "LocalTimeCurve",
    "ResidualReport",
    "ito_sum",
    "quadratic_covariation",
    "local_time",
    "identity_residual",
]

#: occupation bandwidth default: eps = dt**OCCUPATION_EXPONENT, balancing the
#: eps -> 0 bias against the eps**2/dt -> inf consistency requirement
OCCUPATION_EXPONENT = 0.4


@dataclass(frozen=True)
class LocalTimeCurve:
    """A local-time-at-zero estimate; occupation curves are nondecreasing
    exactly, tanaka curves only up to discretization noise."""

    curve: SamplePath
    estimator: str
    bandwidth: Optional[float] = None


@dataclass(frozen=True)
class ResidualReport:
    """Pathwise residual of one identity: sup norm over [0, T] and terminal."""

    identity_name: str
    sup_norm: float
    terminal: float
    n_steps: int
    seed: Optional[SeedSpec] = None


def _check_aligned(a: SamplePath, b: SamplePath) -> None:
    if not a.grid.same_as(b.grid):
        raise ValueError("paths live on different grids")


def ito_sum(integrand: SamplePath, integrator: SamplePath) -> SamplePath:
    """Left-endpoint Ito sum: out[j] = sum_{i<j} f[i] * (g[i+1] - g[i])."""
    _check_aligned(integrand, integrator)
    out = np.empty(len(integrand.values))
    out[0] = 0.0
    np.cumsum(integrand.values[:-1] * np.diff(integrator.values), out=out[1:])
    return SamplePath(integrand.grid, out)


def quadratic_covariation(x: SamplePath, y: SamplePath) -> SamplePath:
    """Cumulative sum of increment products <x, y>."""
    _check_aligned(x, y)
    out = np.empty(len(x.values))
    out[0] = 0.0
    np.cumsum(np.diff(x.values) * np.diff(y.values), out=out[1:])
    return SamplePath(x.grid, out)


def local_time(
    path: SamplePath, method: str = "tanaka", bandwidth: Optional[float] = None
) -> LocalTimeCurve:
    """Estimate the symmetric local time of the path at level 0.

    tanaka:      L_t = |X_t| - |X_0| - sum sgn(X_i) (X_{i+1} - X_i), the
                 discrete Tanaka rearrangement with sgn(0) = 0.
    occupation:  L_t = (2 eps)^-1 * dt * #{i < t : |X_i| <= eps}, a kernel
                 count with eps = bandwidth or dt**0.4 by default.
    """
    x = path.values
    if method == "tanaka":
        sgn = SamplePath(path.grid, np.sign(x))
        curve = np.abs(x) - abs(x[0]) - ito_sum(sgn, path).values
        return LocalTimeCurve(SamplePath(path.grid, curve), "tanaka", None)
    if method == "occupation":
        eps = float(bandwidth) if bandwidth is not None else path.grid.dt**OCCUPATION_EXPONENT
        if eps <= 0:
            raise ValueError("occupation bandwidth must be positive")
        hits = (np.abs(x[:-1]) <= eps).astype(float)
        curve = np.empty(len(x))
        curve[0] = 0.0
        np.cumsum(hits * (path.grid.dt / (2.0 * eps)), out=curve[1:])
        return LocalTimeCurve(SamplePath(path.grid, curve), "occupation", eps)
    raise ValueError(f"unknown local time method {method!r}")


def _report(name: str, residual: np.ndarray, n_steps: int, seed) -> ResidualReport:
    return ResidualReport(
        identity_name=name,
        sup_norm=float(np.max(np.abs(residual))),
        terminal=float(abs(residual[-1])),
        n_steps=n_steps,
        seed=seed,
    )


def identity_residual(kind: str, seed: Optional[SeedSpec] = None, **inputs) -> ResidualReport:
    """Pathwise residual of one of the named identities.

    tanaka
        requires ``path``; residual of
        |X_t| - |X_0| - sum sgn(X) dX - L_t  with L estimated by the
        occupation kernel (optional ``bandwidth``), so the discrete Tanaka
        rearrangement is checked against an independent estimator of the
        same local time.
    balayage_predictable
        requires ``y`` and ``k`` (a path of k_t values, or a callable
        evaluated on the grid times); residual of
        k_{gamma_t} Y_t - k_0 Y_0 - sum k_{gamma_i} dY  with gamma the
        last-zero curve of Y.  An optional ``reference`` path supplies the
        zero structure instead of Y itself; a nonnegative Y (for example a
        reflected path) shows no sign changes on a discrete grid, so its
        zero set must be read off the signed parent process.
    transform_c3
        requires ``total`` (M), ``martingale_part`` (m), ``fv_part`` (v) and
        callables ``f`` and ``F`` with F(x) = int_0^x f; residual of
        f(v_t) M_t - f(v_0) M_0 - sum f(v_i) dm - F(v_t), which presumes the
        caller's normalization F(v_0) = 0.
    """
    if kind == "tanaka":
        path = _require(inputs, "path", kind)
        x = path.values
        sgn = SamplePath(path.grid, np.sign(x))
        occ = local_time(path, "occupation", inputs.get("bandwidth")).curve.values
        residual = np.abs(x) - abs(x[0]) - ito_sum(sgn, path).values - occ
        return _report("tanaka", residual, path.grid.n_steps, seed)

    if kind == "balayage_predictable":
        y = _require(inputs, "y", kind)
        k = _require(inputs, "k", kind)
        if callable(k):
            k = SamplePath(y.grid, np.asarray(k(y.grid.times), dtype=float))
        _check_aligned(k, y)
        reference = inputs.get("reference") or y
        _check_aligned(reference, y)
        gamma, _ = last_zero_curve(decompose_excursions(reference))
        k_frozen = SamplePath(y.grid, k.values[gamma.gamma])
        residual = (
            k_frozen.values * y.values
            - k_frozen.values[0] * y.values[0]
            - ito_sum(k_frozen, y).values
        )
        return _report("balayage_predictable", residual, y.grid.n_steps, seed)

    if kind == "transform_c3":
        total = _require(inputs, "total", kind)
        m = _require(inputs, "martingale_part", kind)
        v = _require(inputs, "fv_part", kind)
        f: Callable = _require(inputs, "f", kind)
        big_f: Callable = _require(inputs, "F", kind)
        _check_aligned(total, m)
        _check_aligned(total, v)
        fv = SamplePath(total.grid, np.asarray(f(v.values), dtype=float))
        residual = (
            fv.values * total.values
            - fv.values[0] * total.values[0]
            - ito_sum(fv, m).values
            - np.asarray(big_f(v.values), dtype=float)
        )
        return _report("transform_c3", residual, total.grid.n_steps, seed)

    raise ValueError(f"unknown identity kind {kind!r}")


def _require(inputs: dict, key: str, kind: str):
    if key not in inputs or inputs[key] is None:
        raise ValueError(f"identity kind {kind!r} requires input {key!r}")
    return inputs[key]
