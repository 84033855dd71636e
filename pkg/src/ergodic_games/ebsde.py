"""Ergodic and discounted backward-equation solvers on a 1-d state grid.

The ergodic problem looks for a pair ``(v, lam)`` with

    0.5 sigma(x)^2 v'' + drift(x) v' + f(x, v' sigma(x)) = lam

on a truncated interval, where ``drift`` is the uncontrolled model drift and
``f`` is a driver that is Lipschitz in its gradient argument.  ``v`` is only
determined up to an additive constant and is pinned to ``v(x_ref) = 0``.

The discounted variant replaces the constant ``lam`` by ``alpha * v``.  Both
are solved by a false-transient relative value iteration: central differences
in space, an explicit pseudo-time step capped by the diffusion CFL bound, and
a subtraction of the residual at the reference node each sweep so only the
shape of ``v`` has to relax.  For the discounted equation the subtracted
constant is reinstated exactly afterwards (adding a constant ``c`` to ``v``
changes the equation residual by ``-alpha * c`` and nothing else, because the
driver only sees derivatives of ``v``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "CflViolationError",
    "MaxSweepsExceededError",
    "Grid1D",
    "DriverSpec",
    "ErgodicSolution",
    "DiscountedSolution",
    "solve_ergodic",
    "solve_discounted",
    "hjb_residual",
]

logger = logging.getLogger(__name__)

_CHECK_SLACK = 1e-9


class CflViolationError(ValueError):
    """Requested pseudo-time step exceeds the explicit stability bound."""


class MaxSweepsExceededError(RuntimeError):
    """Relative value iteration ran out of sweeps.

    Carries diagnostics: the last iterate ``v``, the constant ``lam``, the
    interior residual ``sup_residual`` and the sweep count.
    """

    def __init__(self, sup_residual: float, sweeps: int, lam: float, v: np.ndarray):
        super().__init__(
            f"no convergence after {sweeps} sweeps: interior residual "
            f"{sup_residual:.3e} above tolerance"
        )
        self.sup_residual = sup_residual
        self.sweeps = sweeps
        self.lam = lam
        self.v = v


@dataclass(frozen=True)
class Grid1D:
    """Uniform truncation grid for the 1-d state.

    ``interior_margin`` nodes at each end are excluded from all sup-norms
    (boundary closures pollute them).  The reference node defaults to the
    node nearest the origin and must lie in the retained interior.
    """

    x_min: float
    x_max: float
    m: int
    interior_margin: int = 5
    x_ref_index: Optional[int] = None

    def __post_init__(self):
        if not self.x_min < 0.0 < self.x_max:
            raise ValueError("grid must bracket the origin: x_min < 0 < x_max")
        if self.m < 7:
            raise ValueError("need at least 7 grid nodes")
        if not 1 <= self.interior_margin or self.m - 2 * self.interior_margin < 3:
            raise ValueError("interior_margin leaves no interior nodes")
        if self.x_ref_index is None:
            nodes = np.linspace(self.x_min, self.x_max, self.m)
            object.__setattr__(self, "x_ref_index", int(np.argmin(np.abs(nodes))))
        if not self.interior_margin <= self.x_ref_index < self.m - self.interior_margin:
            raise ValueError("reference node must lie in the retained interior")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.m - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.m)

    @property
    def interior(self) -> slice:
        return slice(self.interior_margin, self.m - self.interior_margin)

    def nearest_index(self, x) -> np.ndarray:
        raw = np.rint((np.asarray(x, dtype=float) - self.x_min) / self.dx).astype(int)
        return np.clip(raw, 0, self.m - 1)


@dataclass(frozen=True)
class DriverSpec:
    """Driver ``f(x, z)`` with declared gradient-Lipschitz and size constants.

    ``f`` must act elementwise on numpy arrays.  At construction the two
    declared constants are probed on random samples:
    ``|f(x, z) - f(x, z')| <= lipschitz_z |z - z'|`` and
    ``|f(x, 0)| <= bound_at_zero``.
    """

    f: Callable
    lipschitz_z: float
    bound_at_zero: float
    check_samples: int = 1_000
    check_seed: int = 13

    def __post_init__(self):
        rng = np.random.default_rng([int(self.check_seed) & 0xFFFFFFFFFFFFFFFF, 0xD21])
        n = int(self.check_samples)
        xs = rng.normal(scale=3.0, size=n)
        za = rng.normal(scale=3.0, size=n)
        zb = rng.normal(scale=3.0, size=n)
        fa = np.broadcast_to(np.asarray(self.f(xs, za), dtype=float), (n,))
        fb = np.broadcast_to(np.asarray(self.f(xs, zb), dtype=float), (n,))
        lip = self.lipschitz_z * np.abs(za - zb)
        if np.any(np.abs(fa - fb) > lip + _CHECK_SLACK * (1.0 + lip) + 1e-12):
            k = int(np.argmax(np.abs(fa - fb) - lip))
            raise ValueError(
                f"driver check failed: gradient Lipschitz constant {self.lipschitz_z:.6g} "
                f"violated at sampled x={xs[k]:.6g}, z={za[k]:.6g}, z'={zb[k]:.6g}"
            )
        f0 = np.broadcast_to(np.asarray(self.f(xs, np.zeros(n)), dtype=float), (n,))
        if np.any(np.abs(f0) > self.bound_at_zero * (1.0 + _CHECK_SLACK) + 1e-12):
            k = int(np.argmax(np.abs(f0)))
            raise ValueError(
                f"driver check failed: |f(x, 0)|={abs(f0[k]):.6g} exceeds "
                f"bound_at_zero={self.bound_at_zero:.6g} at sampled x={xs[k]:.6g}"
            )


@dataclass(frozen=True)
class ErgodicSolution:
    """Grid solution of the ergodic equation.

    ``v`` is normalized to zero at the reference node, ``xi`` approximates
    ``v'(x) sigma(x)`` (central differences inside, one-sided at the ends),
    ``lam`` is the long-run constant and ``residual_sup`` the recomputed
    interior equation residual.  ``growth_constant`` is the smallest ``C``
    with ``|v(x)| <= C (1 + x^2)`` on the grid.
    """

    grid: Grid1D
    v: np.ndarray
    xi: np.ndarray
    lam: float
    residual_sup: float
    iterations: int
    growth_constant: float

    def to_csv(self, path) -> None:
        _write_columns_csv(path, ("x", "v", "xi"), (self.grid.nodes(), self.v, self.xi))

    def report_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "residual_sup": self.residual_sup,
            "iterations": self.iterations,
            "growth_constant": self.growth_constant,
            "grid": {
                "x_min": self.grid.x_min,
                "x_max": self.grid.x_max,
                "m": self.grid.m,
                "interior_margin": self.grid.interior_margin,
                "x_ref_index": self.grid.x_ref_index,
            },
        }


@dataclass(frozen=True)
class DiscountedSolution:
    """Grid solution of the discounted equation (no normalization)."""

    grid: Grid1D
    v: np.ndarray
    xi: np.ndarray
    alpha: float
    residual_sup: float
    iterations: int
    sup_v: float

    def value_at(self, x: float) -> float:
        return float(np.interp(x, self.grid.nodes(), self.v))

    def to_csv(self, path) -> None:
        _write_columns_csv(path, ("x", "v", "xi"), (self.grid.nodes(), self.v, self.xi))

    def report_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "residual_sup": self.residual_sup,
            "iterations": self.iterations,
            "sup_v": self.sup_v,
            "alpha_times_sup_v": self.alpha * self.sup_v,
        }


def _write_columns_csv(path, names, columns) -> None:
    cols = [np.asarray(c, dtype=float) for c in columns]
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def cfl_bound(model, grid: Grid1D) -> float:
    """Spec stability bound ``dx^2 / (max sigma^2 + max |drift| dx)``."""
    x = grid.nodes()
    sig2 = model.sigma_1d(x) ** 2
    drift = np.abs(model.drift_1d(x))
    return grid.dx**2 / (float(np.max(sig2)) + float(np.max(drift)) * grid.dx)


def _default_dtau(model, driver: DriverSpec, grid: Grid1D, alpha: float) -> float:
    # Effective advection includes the driver's gradient slope through sigma.
    x = grid.nodes()
    sig = np.abs(model.sigma_1d(x))
    drift = np.abs(model.drift_1d(x))
    denom = (
        float(np.max(sig**2))
        + (float(np.max(drift)) + float(np.max(sig)) * driver.lipschitz_z) * grid.dx
        + alpha * grid.dx**2
    )
    return 0.9 * grid.dx**2 / denom


def _rvi(model, driver: DriverSpec, grid: Grid1D, alpha: float, tol: float,
         max_sweeps: int, dtau: Optional[float], v_init: Optional[np.ndarray]):
    """Shared relative value iteration.

    Returns ``(v, lam, sweeps)`` with ``v`` pinned to zero at the reference
    node and ``lam`` the subtracted residual constant there.
    """
    x = grid.nodes()
    m = grid.m
    dx = grid.dx
    iref = grid.x_ref_index
    interior = grid.interior
    sig = model.sigma_1d(x).astype(float).copy()
    half_sig2 = 0.5 * sig**2
    drift = model.drift_1d(x).astype(float).copy()
    f = driver.f

    bound = cfl_bound(model, grid)
    if dtau is None:
        dtau = _default_dtau(model, driver, grid, alpha)
    elif dtau > bound:
        raise CflViolationError(
            f"dtau={dtau:.3e} exceeds the stability bound {bound:.3e} "
            f"(dx^2 / (max sigma^2 + max |drift| dx))"
        )

    if v_init is None:
        v = np.zeros(m)
    else:
        v = np.asarray(v_init, dtype=float).copy()
        if v.shape != (m,):
            raise ValueError(f"v_init must have shape ({m},)")
        v -= v[iref]

    inv2dx = 1.0 / (2.0 * dx)
    invdx2 = 1.0 / dx**2
    d1 = np.zeros(m)
    d2 = np.empty(m)
    r = np.empty(m)
    tmp = np.empty(m)
    stop = tol * 0.999
    sup = np.inf
    lam = 0.0
    for sweep in range(1, max_sweeps + 1):
        np.subtract(v[2:], v[:-2], out=d1[1:-1])
        d1[1:-1] *= inv2dx
        # Neumann closure: mirrored ghost nodes zero the first derivative
        # and double the one-sided second difference at each end.
        np.add(v[2:], v[:-2], out=d2[1:-1])
        np.subtract(d2[1:-1], v[1:-1], out=d2[1:-1])
        np.subtract(d2[1:-1], v[1:-1], out=d2[1:-1])
        d2[1:-1] *= invdx2
        d2[0] = 2.0 * (v[1] - v[0]) * invdx2
        d2[-1] = 2.0 * (v[-2] - v[-1]) * invdx2
        np.multiply(sig, d1, out=tmp)  # tmp = xi
        r_f = np.asarray(f(x, tmp), dtype=float)
        np.multiply(half_sig2, d2, out=r)
        np.multiply(drift, d1, out=tmp)
        r += tmp
        r += r_f
        if alpha != 0.0:
            np.multiply(v, alpha, out=tmp)
            r -= tmp
        lam = float(r[iref])
        r -= lam
        sup = float(np.max(np.abs(r[interior])))
        if sup < stop:
            return v, lam, sweep
        r *= dtau
        v += r
    raise MaxSweepsExceededError(sup, max_sweeps, lam, v)


def _xi_from_v(model, grid: Grid1D, v: np.ndarray) -> np.ndarray:
    x = grid.nodes()
    sig = model.sigma_1d(x)
    dx = grid.dx
    xi = np.empty_like(v)
    xi[1:-1] = (v[2:] - v[:-2]) / (2.0 * dx)
    xi[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
    xi[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dx)
    return sig * xi


def hjb_residual(model, driver, grid: Grid1D, v: np.ndarray,
                 xi: np.ndarray, lam: float = 0.0, alpha: float = 0.0) -> float:
    """Interior sup-norm of ``0.5 sigma^2 v'' + drift v' + f(x, xi) - lam - alpha v``.

    ``driver`` may be a :class:`DriverSpec` or a bare callable ``f(x, z)``.
    Recomputes the equation residual from the stored fields, so for a
    converged solution it reproduces ``residual_sup`` up to roundoff.
    """
    f = driver.f if isinstance(driver, DriverSpec) else driver
    x = grid.nodes()
    dx = grid.dx
    sig2 = model.sigma_1d(x) ** 2
    drift = model.drift_1d(x)
    d1 = np.zeros_like(v)
    d1[1:-1] = (v[2:] - v[:-2]) / (2.0 * dx)
    d2 = np.empty_like(v)
    d2[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dx**2
    d2[0] = 2.0 * (v[1] - v[0]) / dx**2
    d2[-1] = 2.0 * (v[-2] - v[-1]) / dx**2
    field = 0.5 * sig2 * d2 + drift * d1 + np.asarray(f(x, xi), dtype=float) - lam
    if alpha != 0.0:
        field = field - alpha * v
    return float(np.max(np.abs(field[grid.interior])))


def solve_ergodic(
    model,
    driver: DriverSpec,
    grid: Grid1D,
    tol: float = 1e-6,
    max_sweeps: int = 500_000,
    dtau: Optional[float] = None,
    v_init: Optional[np.ndarray] = None,
) -> ErgodicSolution:
    """Solve the ergodic equation for ``(v, lam)`` on the grid.

    Runs relative value iteration until the interior residual sup-norm drops
    below ``tol``.  ``dtau`` defaults to 0.9 times the explicit stability
    bound (driver advection included); passing a larger value than the bound
    raises :class:`CflViolationError`.  ``v_init`` warm-starts the sweep.

    Raises :class:`MaxSweepsExceededError` (with diagnostics attached) if the
    sweep budget runs out.
    """
    if model.dim != 1:
        raise ValueError("grid solver requires a one-dimensional model")
    v, lam, sweeps = _rvi(model, driver, grid, 0.0, tol, max_sweeps, dtau, v_init)
    v = v - v[grid.x_ref_index]
    xi = _xi_from_v(model, grid, v)
    res = hjb_residual(model, driver, grid, v, xi, lam)
    x = grid.nodes()
    growth = float(np.max(np.abs(v) / (1.0 + x**2)))
    logger.debug("ergodic solve: lam=%.9g residual=%.3e sweeps=%d", lam, res, sweeps)
    return ErgodicSolution(
        grid=grid, v=v, xi=xi, lam=lam, residual_sup=res,
        iterations=sweeps, growth_constant=growth,
    )


def solve_discounted(
    model,
    driver: DriverSpec,
    grid: Grid1D,
    alpha: float,
    tol: float = 1e-6,
    max_sweeps: int = 500_000,
    dtau: Optional[float] = None,
    v_init: Optional[np.ndarray] = None,
) -> DiscountedSolution:
    """Solve the discounted equation ``L v + f(x, v' sigma) = alpha v``.

    Internally runs the same relative value iteration as the ergodic solver
    on the operator with the extra ``-alpha v`` term and then restores the
    subtracted constant exactly: if ``(w, c)`` solve the pinned problem with
    residual constant ``c``, then ``w + c / alpha`` solves the discounted
    equation.  This sidesteps the ``O(1/alpha)`` relaxation time a plain
    false transient would need for the constant mode.
    """
    if model.dim != 1:
        raise ValueError("grid solver requires a one-dimensional model")
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    w, lam, sweeps = _rvi(model, driver, grid, alpha, tol, max_sweeps, dtau, v_init)
    v = (w - w[grid.x_ref_index]) + lam / alpha
    xi = _xi_from_v(model, grid, v)
    res = hjb_residual(model, driver, grid, v, xi, 0.0, alpha=alpha)
    logger.debug("discounted solve: alpha=%.3g v(ref)=%.9g residual=%.3e sweeps=%d",
                 alpha, lam / alpha, res, sweeps)
    return DiscountedSolution(
        grid=grid, v=v, xi=xi, alpha=alpha, residual_sup=res,
        iterations=sweeps, sup_v=float(np.max(np.abs(v))),
    )
