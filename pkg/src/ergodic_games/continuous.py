"""Ergodic solves for drivers that are only continuous with linear growth.

A driver ``f(x, z)`` with ``|f(x, z)| <= kappa (1 + |z|)`` is split along the
gradient axis into a bounded slope and a bounded offset,

    phi(x, z) = f(x, z) * z / z^2   where |z| >= 1, else 0
    psi(x, z) = f(x, z)             where |z| < 1,  else 0

so that ``phi * z + psi == f`` with ``|phi| <= 2 kappa`` and
``|psi| <= 2 kappa``.  Freezing ``(phi, psi)`` at the current gradient field
turns the equation into one with an affine-in-gradient driver, which the
ergodic solver handles; iterating the freeze converges for mildly coupled
drivers and is reproducible from any supplied initial field.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .ebsde import DriverSpec, ErgodicSolution, Grid1D, hjb_residual, solve_ergodic

__all__ = [
    "GrowthViolationError",
    "LinearizationDidNotConvergeError",
    "ResidualCeilingError",
    "Decomposition",
    "decompose",
    "solve_continuous_ebsde",
]

logger = logging.getLogger(__name__)

_CHECK_SLACK = 1e-9


class GrowthViolationError(ValueError):
    """Sampled driver value exceeded the declared linear growth bound."""


class LinearizationDidNotConvergeError(RuntimeError):
    """Outer freeze-and-solve loop ran out of iterations.

    Carries ``deltas_history``: per-iteration ``(lambda delta, xi delta)``.
    """

    def __init__(self, max_iter: int, deltas_history):
        super().__init__(
            f"linearization loop did not stabilize within {max_iter} iterations"
        )
        self.max_iter = max_iter
        self.deltas_history = deltas_history


class ResidualCeilingError(RuntimeError):
    """Converged iterate fails the residual ceiling against the original driver."""


def _phi_values(f: Callable, x, z) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    gate = np.abs(z) >= 1.0
    denom = np.where(gate, z * z, 1.0)
    fv = np.asarray(f(x, z), dtype=float)
    return np.where(gate, fv * z / denom, 0.0)


@dataclass(frozen=True)
class Decomposition:
    """Slope/offset split of a linear-growth driver along the gradient axis.

    ``phi`` and ``psi`` act elementwise.  ``psi`` is evaluated as
    ``f - phi * z``: on the gate ``|z| < 1`` this is exactly ``f``, on the
    complement it agrees with the gated formula (which is zero there) to one
    rounding unit, and it makes ``phi(x, z) * z + psi(x, z)`` reproduce
    ``f(x, z)`` bitwise.
    """

    f: Callable
    kappa: float

    def phi(self, x, z):
        return _phi_values(self.f, x, z)

    def psi(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        fv = np.asarray(self.f(x, z), dtype=float)
        return fv - _phi_values(self.f, x, z) * z

    def reconstruct(self, x, z):
        return self.phi(x, z) * np.asarray(z, dtype=float) + self.psi(x, z)

    @property
    def slope_bound(self) -> float:
        return 2.0 * self.kappa

    @property
    def offset_bound(self) -> float:
        return 2.0 * self.kappa


def decompose(
    f: Callable,
    kappa: float,
    check_samples: int = 10_000,
    check_seed: int = 17,
) -> Decomposition:
    """Split ``f`` against its declared growth constant ``kappa``.

    Samples ``(x, z)`` pairs and raises :class:`GrowthViolationError` when
    ``|f(x, z)| > kappa (1 + |z|)`` anywhere in the sample.
    """
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    rng = np.random.default_rng([int(check_seed) & 0xFFFFFFFFFFFFFFFF, 0xDEC0])
    xs = rng.normal(scale=3.0, size=int(check_samples))
    zs = rng.normal(scale=3.0, size=int(check_samples))
    fv = np.broadcast_to(np.asarray(f(xs, zs), dtype=float), xs.shape)
    growth = kappa * (1.0 + np.abs(zs))
    if np.any(np.abs(fv) > growth * (1.0 + _CHECK_SLACK) + 1e-12):
        k = int(np.argmax(np.abs(fv) - growth))
        raise GrowthViolationError(
            f"sampled |f(x, z)|={abs(fv[k]):.6g} exceeds kappa*(1+|z|)="
            f"{growth[k]:.6g} at x={xs[k]:.6g}, z={zs[k]:.6g}"
        )
    return Decomposition(f=f, kappa=float(kappa))


def solve_continuous_ebsde(
    model,
    f: Callable,
    kappa: float,
    grid: Grid1D,
    tol: float = 1e-6,
    max_iter: int = 80,
    xi_init: Optional[np.ndarray] = None,
    inner_max_sweeps: int = 500_000,
    residual_ceiling: Optional[float] = None,
) -> ErgodicSolution:
    """Ergodic solve for a continuous linear-growth driver.

    Starting from ``xi_init`` (zero by default; alternative fields probe
    reproducibility of the limit), each iteration freezes the decomposition
    at the current gradient field, solves the resulting affine-driver
    equation to ``tol / 10`` (warm started), and stops once the constant and
    the interior gradient field move less than ``tol``.  The returned
    ``residual_sup`` is recomputed against the *original* driver and must
    stay below ``residual_ceiling`` (default ``10 * tol``).
    """
    if model.dim != 1:
        raise ValueError("grid solver requires a one-dimensional model")
    dec = decompose(f, kappa)
    nodes = grid.nodes()
    xi = np.zeros(grid.m) if xi_init is None else np.asarray(xi_init, dtype=float).copy()
    if xi.shape != (grid.m,):
        raise ValueError(f"xi_init must have shape ({grid.m},)")
    if residual_ceiling is None:
        residual_ceiling = 10.0 * tol
    inner_tol = 0.1 * tol
    lam_prev: Optional[float] = None
    v_warm: Optional[np.ndarray] = None
    history = []
    sol: Optional[ErgodicSolution] = None
    for it in range(1, max_iter + 1):
        slope = dec.phi(nodes, xi)
        offset = dec.psi(nodes, xi)

        def frozen(x, z, _s=slope, _o=offset, _g=grid):
            k = _g.nearest_index(x)
            return _s[k] * z + _o[k]

        driver = DriverSpec(
            frozen,
            lipschitz_z=dec.slope_bound,
            bound_at_zero=dec.offset_bound,
            check_samples=200,
        )
        sol = solve_ergodic(
            model, driver, grid, tol=inner_tol,
            max_sweeps=inner_max_sweeps, v_init=v_warm,
        )
        v_warm = sol.v
        d_lam = None if lam_prev is None else abs(sol.lam - lam_prev)
        d_xi = float(np.max(np.abs((sol.xi - xi)[grid.interior])))
        history.append({"iteration": it, "lambda": d_lam, "xi": d_xi})
        lam_prev = sol.lam
        xi = sol.xi
        if d_lam is not None and d_lam < tol and d_xi < tol:
            res = hjb_residual(model, f, grid, sol.v, sol.xi, sol.lam)
            if res > residual_ceiling:
                raise ResidualCeilingError(
                    f"residual {res:.3e} against the original driver exceeds "
                    f"the ceiling {residual_ceiling:.3e}"
                )
            logger.debug("continuous solve: lam=%.9g residual=%.3e outer=%d",
                         sol.lam, res, it)
            return ErgodicSolution(
                grid=grid, v=sol.v, xi=sol.xi, lam=sol.lam,
                residual_sup=res, iterations=it,
                growth_constant=sol.growth_constant,
            )
    raise LinearizationDidNotConvergeError(max_iter, history)
