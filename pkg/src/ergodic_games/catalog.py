"""Named building blocks: reference model, drivers, and bundled games.

Everything here is desk scale and broadcast-safe over numpy arrays, so the
same callables serve the grid solvers, the samplers and the vectorized
Monte Carlo loops.
"""

from __future__ import annotations

import math
from typing import Callable, Tuple

import numpy as np

from .ebsde import DriverSpec
from .games import ControlGrid, GameSpec
from .sde import SdeModel

__all__ = [
    "bump",
    "BUMP_SUP",
    "BUMP_LIP",
    "ou_model",
    "make_model",
    "make_driver",
    "make_growth_driver",
    "make_game",
    "quadratic_decoupled",
    "coupled_cross_cost",
    "three_player_symmetric",
    "GAME_BUILDERS",
]

SQRT2 = math.sqrt(2.0)


def bump(x):
    """Bounded, Lipschitz state cost ``x^2 / (1 + x^2)``."""
    xsq = np.square(x)
    return xsq / (1.0 + xsq)


BUMP_SUP = 1.0
# max |d/dx bump| is attained at x = 1/sqrt(3)
BUMP_LIP = 3.0 * math.sqrt(3.0) / 8.0


def ou_model(x0: float = 0.0, noise: float = SQRT2) -> SdeModel:
    """Reference 1-d model: unit mean reversion, constant noise.

    With the default noise ``sqrt(2)`` the invariant law is standard normal;
    a constant drift shift ``b`` moves its mean to ``sqrt(2) * b``.
    """
    combo = noise + 1.0 / noise
    return SdeModel(
        dim=1,
        lin_drift=-1.0,
        dissipation=1.0,
        bounded_drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        bounded_drift_sup=0.0,
        bounded_drift_lip=0.0,
        sigma=lambda x: noise,
        sigma_lo=0.5 * combo,
        sigma_hi=2.0 * combo,
        x0=x0,
    )


# -- config-facing factories -----------------------------------------------------


def _residual_drift(name: str, params: dict) -> Tuple[Callable, float, float]:
    if name == "zero":
        return (lambda x: np.zeros_like(np.asarray(x, dtype=float)), 0.0, 0.0)
    if name == "tanh":
        scale = float(params.get("scale", 0.5))
        return (lambda x: scale * np.tanh(x), abs(scale), abs(scale))
    raise KeyError(f"unknown bounded_drift name {name!r}")


def make_model(cfg: dict) -> SdeModel:
    """Model from a config mapping (see the bundled YAML files)."""
    dim = int(cfg.get("dim", 1))
    if dim != 1:
        raise ValueError("config-built models are one-dimensional")
    res_cfg = dict(cfg.get("bounded_drift", {"name": "zero"}))
    fn, f_sup, f_lip = _residual_drift(res_cfg.pop("name", "zero"), res_cfg)
    sig_cfg = dict(cfg.get("sigma", {"name": "constant", "value": SQRT2}))
    sig_name = sig_cfg.pop("name", "constant")
    if sig_name != "constant":
        raise KeyError(f"unknown sigma name {sig_name!r}")
    s = float(sig_cfg.get("value", SQRT2))
    combo = abs(s) + 1.0 / abs(s)
    return SdeModel(
        dim=1,
        lin_drift=float(cfg.get("lin_drift", -1.0)),
        dissipation=float(cfg.get("dissipation", 1.0)),
        bounded_drift=fn,
        bounded_drift_sup=f_sup,
        bounded_drift_lip=f_lip,
        sigma=lambda x, _s=s: _s,
        sigma_lo=float(cfg.get("sigma_lo", 0.5 * combo)),
        sigma_hi=float(cfg.get("sigma_hi", 2.0 * combo)),
        x0=float(cfg.get("x0", 0.0)),
    )


def make_driver(cfg: dict) -> DriverSpec:
    """Driver from a named catalogue entry.

    Names: ``constant`` (value), ``bump``, ``linear_z_plus_bump`` (slope),
    ``tanh_z_plus_bump`` (scale), ``dominating`` (lipschitz, offset).
    """
    cfg = dict(cfg)
    name = cfg.pop("name")
    if name == "constant":
        c = float(cfg.get("value", 1.0))
        return DriverSpec(lambda x, z: c + 0.0 * z, lipschitz_z=0.0, bound_at_zero=abs(c))
    if name == "bump":
        return DriverSpec(lambda x, z: bump(x) + 0.0 * z, lipschitz_z=0.0, bound_at_zero=BUMP_SUP)
    if name == "linear_z_plus_bump":
        b = float(cfg.get("slope", 0.5))
        return DriverSpec(
            lambda x, z: b * z + bump(x), lipschitz_z=abs(b), bound_at_zero=BUMP_SUP
        )
    if name == "tanh_z_plus_bump":
        a = float(cfg.get("scale", 0.5))
        return DriverSpec(
            lambda x, z: a * np.tanh(z) + bump(x), lipschitz_z=abs(a), bound_at_zero=BUMP_SUP
        )
    if name == "dominating":
        lip = float(cfg["lipschitz"])
        off = float(cfg["offset"])
        return DriverSpec(
            lambda x, z: lip * np.abs(z) + off + 0.0 * x,
            lipschitz_z=lip,
            bound_at_zero=off,
        )
    raise KeyError(f"unknown driver name {name!r}")


def make_growth_driver(cfg: dict) -> Tuple[Callable, float]:
    """Continuous driver and its linear growth constant, for the relaxed solver.

    Names: ``tanh_z_plus_bump`` (scale), ``sqrt_z_plus_bump`` (slope; square
    root in the gradient, so continuous but not Lipschitz at zero).
    """
    cfg = dict(cfg)
    name = cfg.pop("name")
    if name == "tanh_z_plus_bump":
        a = float(cfg.get("scale", 0.5))
        return (lambda x, z: a * np.tanh(z) + bump(x)), abs(a) + BUMP_SUP
    if name == "sqrt_z_plus_bump":
        c = float(cfg.get("slope", 0.5))
        # c*sqrt(|z|) <= (c/2)(1 + |z|)
        return (lambda x, z: c * np.sqrt(np.abs(z)) + bump(x)), 0.5 * abs(c) + BUMP_SUP
    raise KeyError(f"unknown growth driver name {name!r}")


# -- bundled games -----------------------------------------------------------------


def quadratic_decoupled(n_controls: int = 41, control_bound: float = 1.0) -> GameSpec:
    """Two players, shared drift ``u + v``, own quadratic control costs.

    Each Hamiltonian is minimized at the clamp of ``-z_i / 2`` onto the
    control grid, independently of the other player.
    """
    grid = ControlGrid.uniform(-control_bound, control_bound, n_controls)
    return GameSpec(
        grids=(grid, grid),
        drift_map=lambda u, v: u + v,
        drift_bound=2.0 * control_bound,
        costs=(
            lambda x, u, v: u**2 + bump(x),
            lambda x, u, v: v**2 + bump(x),
        ),
        cost_sup=control_bound**2 + BUMP_SUP,
        cost_x_lip=BUMP_LIP,
        name="quadratic_decoupled",
    )


def coupled_cross_cost(
    n_controls: int = 41, control_bound: float = 1.0, coupling: float = 0.25
) -> GameSpec:
    """Two players whose costs share a bilinear cross term.

    The positive coupling keeps both best-response maps decreasing, so the
    discrete best-response composition is monotone and a pure Nash point
    exists at every ``(x, z)``.
    """
    if coupling < 0.0:
        raise ValueError("coupling must be nonnegative")
    grid = ControlGrid.uniform(-control_bound, control_bound, n_controls)
    b2 = control_bound**2
    return GameSpec(
        grids=(grid, grid),
        drift_map=lambda u, v: u + v,
        drift_bound=2.0 * control_bound,
        costs=(
            lambda x, u, v: u**2 + coupling * u * v + bump(x),
            lambda x, u, v: v**2 + coupling * u * v + bump(x),
        ),
        cost_sup=b2 + coupling * b2 + BUMP_SUP,
        cost_x_lip=BUMP_LIP,
        name="coupled_cross_cost",
    )


def three_player_symmetric(n_controls: int = 21, control_bound: float = 1.0) -> GameSpec:
    """Three symmetric players with decoupled quadratic control costs."""
    grid = ControlGrid.uniform(-control_bound, control_bound, n_controls)
    return GameSpec(
        grids=(grid, grid, grid),
        drift_map=lambda u, v, w: u + v + w,
        drift_bound=3.0 * control_bound,
        costs=(
            lambda x, u, v, w: u**2 + bump(x),
            lambda x, u, v, w: v**2 + bump(x),
            lambda x, u, v, w: w**2 + bump(x),
        ),
        cost_sup=control_bound**2 + BUMP_SUP,
        cost_x_lip=BUMP_LIP,
        name="three_player_symmetric",
    )


GAME_BUILDERS = {
    "quadratic_decoupled": quadratic_decoupled,
    "coupled_cross_cost": coupled_cross_cost,
    "three_player_symmetric": three_player_symmetric,
}


def make_game(cfg: dict) -> GameSpec:
    """Game from a config mapping: either a named bundle or explicit parts."""
    cfg = dict(cfg)
    name = cfg.pop("name", None)
    if name is not None:
        if name not in GAME_BUILDERS:
            raise KeyError(f"unknown game name {name!r}")
        return GAME_BUILDERS[name](**cfg)
    raise KeyError("game config needs a 'name' from the bundled catalogue")
