"""Coupled solver: Picard iteration over frozen best-response drivers.

Each outer iteration freezes the joint feedback control obtained from the
current gradient fields, which turns the coupled system into one independent
linear-in-gradient backward equation per player:

    f_i(x, z) = z * drift_map(u*(x)) + cost_i(x, u*(x))

These are solved on the grid, the gradient fields are (optionally damped and)
updated, and the loop stops once every player's long-run constant and
interior gradient field are stationary to tolerance.  All frozen drivers
share the z-Lipschitz constant ``drift_bound`` of the game, which is what
makes the iteration well posed uniformly in the iteration count.

The asymmetric variant solves player 1's ergodic equation against player 2's
discounted equation; a sweep over discount rates tracks the vanishing-
discount limit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .ebsde import (
    DiscountedSolution,
    DriverSpec,
    ErgodicSolution,
    Grid1D,
    MaxSweepsExceededError,
    solve_discounted,
    solve_ergodic,
)
from .games import (
    BestResponseCycleError,
    FeedbackPolicy,
    GameSpec,
    NoPureNashError,
    isaac_fixed_point,
)
from .sde import SdeModel

__all__ = [
    "PicardState",
    "NashSolution",
    "SweepRow",
    "SweepResult",
    "picard_solve",
    "comparison_bound",
    "asymmetric_solve",
    "vanishing_discount_sweep",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PicardState:
    """One outer-iteration snapshot: gradient fields and frozen policy."""

    iteration: int
    xi: np.ndarray  # (n_nodes, n_players)
    policy_indices: np.ndarray  # (n_nodes, n_players) int
    lambdas: Tuple[Optional[float], ...]


@dataclass(frozen=True)
class NashSolution:
    """Converged (or best-effort) feedback Nash point of the grid game.

    ``solutions[i]`` is the per-player grid solution (ergodic, or discounted
    for the discounting player of the asymmetric variant), ``lambdas[i]`` the
    long-run cost of each ergodic player, and ``policy`` the joint feedback
    control generated by the final gradient fields.  ``comparison`` is the
    one-sweep upper bound from the dominating driver.
    """

    spec_name: str
    solutions: Tuple[Union[ErgodicSolution, DiscountedSolution], ...]
    lambdas: Tuple[Optional[float], ...]
    policy: FeedbackPolicy
    policy_values: Tuple[np.ndarray, ...]  # per player, control value per node
    comparison: float
    converged: bool
    iterations: int
    deltas_history: Tuple[dict, ...]
    alpha: Optional[float] = None

    @property
    def n_players(self) -> int:
        return len(self.solutions)

    @property
    def grid(self) -> Grid1D:
        return self.solutions[0].grid

    def to_csv(self, path) -> None:
        """Columns ``x`` then ``v_i, xi_i, u_i, u_i_index`` per player."""
        grid = self.grid
        nodes = grid.nodes()
        names = ["x"]
        for i in range(1, self.n_players + 1):
            names += [f"v_{i}", f"xi_{i}", f"u_{i}", f"u_{i}_index"]
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            for k in range(grid.m):
                row = [repr(float(nodes[k]))]
                for i, sol in enumerate(self.solutions):
                    row += [
                        repr(float(sol.v[k])),
                        repr(float(sol.xi[k])),
                        repr(float(self.policy_values[i][k])),
                        str(int(self.policy.indices[k, i])),
                    ]
                fh.write(",".join(row) + "\n")

    def report_dict(self) -> dict:
        per_player = []
        for i, sol in enumerate(self.solutions):
            d = sol.report_dict()
            d["player"] = i
            d["kind"] = "discounted" if isinstance(sol, DiscountedSolution) else "ergodic"
            per_player.append(d)
        return {
            "game": self.spec_name,
            "lambdas": [None if v is None else float(v) for v in self.lambdas],
            "comparison_bound": self.comparison,
            "converged": self.converged,
            "iterations": self.iterations,
            "alpha": self.alpha,
            "deltas_history": list(self.deltas_history),
            "players": per_player,
        }


def _policy_values(spec: GameSpec, idx: np.ndarray) -> Tuple[np.ndarray, ...]:
    return tuple(
        np.asarray(spec.grids[i].points, dtype=float)[idx[:, i]]
        for i in range(spec.n_players)
    )


def _policy_from_xi(spec: GameSpec, nodes: np.ndarray, xi: np.ndarray,
                    enumeration_cap: int) -> np.ndarray:
    idx = np.empty((len(nodes), spec.n_players), dtype=int)
    for k, x in enumerate(nodes):
        u = isaac_fixed_point(spec, float(x), tuple(xi[k]), enumeration_cap=enumeration_cap)
        idx[k] = u
    return idx


def _frozen_tables(spec: GameSpec, nodes: np.ndarray, idx: np.ndarray):
    """Per-node drift values and per-player cost values under a fixed policy."""
    drift_tab = spec.drift_table()
    joint = tuple(idx[:, i] for i in range(spec.n_players))
    r_nodes = drift_tab[joint]
    c_nodes = []
    for i in range(spec.n_players):
        tab = np.stack([spec.cost_table(i, float(x)) for x in nodes])
        c_nodes.append(tab[(np.arange(len(nodes)),) + joint])
    return r_nodes, c_nodes


def _frozen_driver(grid: Grid1D, r_nodes: np.ndarray, c_nodes: np.ndarray,
                   lipschitz: float, bound: float) -> DriverSpec:
    def f(x, z, _r=r_nodes, _c=c_nodes, _g=grid):
        k = _g.nearest_index(x)
        return _r[k] * z + _c[k]

    return DriverSpec(f, lipschitz_z=lipschitz, bound_at_zero=bound, check_samples=200)


def comparison_bound(model: SdeModel, spec: GameSpec, grid: Grid1D,
                     tol: float = 1e-6) -> float:
    """Upper bound on every player's long-run cost.

    Solves the ergodic equation with the dominating driver
    ``drift_bound * |z| + cost_sup``; since that driver does not depend on
    the state, the flat profile solves it exactly and the returned constant
    is ``cost_sup`` itself.
    """
    driver = DriverSpec(
        lambda x, z, _b=spec.drift_bound, _c=spec.cost_sup: _b * np.abs(z) + _c + 0.0 * x,
        lipschitz_z=spec.drift_bound,
        bound_at_zero=spec.cost_sup,
    )
    return solve_ergodic(model, driver, grid, tol=tol).lam


def _interior_sup(grid: Grid1D, a: np.ndarray) -> float:
    return float(np.max(np.abs(a[grid.interior])))


def picard_solve(
    model: SdeModel,
    spec: GameSpec,
    grid: Grid1D,
    tol: float = 1e-4,
    max_iter: int = 50,
    damping: float = 1.0,
    inner_tol: float = 1e-6,
    inner_max_sweeps: int = 500_000,
    enumeration_cap: int = 1_000_000,
    v_init: Optional[Sequence[np.ndarray]] = None,
    xi_init: Optional[np.ndarray] = None,
) -> NashSolution:
    """Fixed point of the coupled ergodic system by frozen-policy sweeps.

    Gradient fields start at zero (``xi_init`` overrides; restarting from a
    converged field performs exactly one verification sweep).  Each iteration
    tabulates the pointwise Nash control from the current fields, solves
    every player's frozen equation (warm-started from the previous profile),
    applies ``damping`` to the gradient update, and records the per-player
    deltas ``|lam_new - lam_old|`` and interior ``sup |xi_new - xi_old|``.
    Convergence requires all deltas below ``tol``.  Exhausting ``max_iter``
    is a soft failure: the result is returned with ``converged = False``.
    """
    if model.dim != 1:
        raise ValueError("picard_solve requires a one-dimensional model")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    n = spec.n_players
    nodes = grid.nodes()
    xi = np.zeros((grid.m, n)) if xi_init is None else np.asarray(xi_init, dtype=float).copy()
    if xi.shape != (grid.m, n):
        raise ValueError(f"xi_init must have shape ({grid.m}, {n})")
    lambdas: list = [None] * n
    v_warm: list = list(v_init) if v_init is not None else [None] * n
    sols: list = [None] * n
    history: list = []
    converged = False
    it = 0
    idx = None
    for it in range(1, max_iter + 1):
        idx = _policy_from_xi(spec, nodes, xi, enumeration_cap)
        r_nodes, c_nodes = _frozen_tables(spec, nodes, idx)
        xi_new = np.empty_like(xi)
        lam_new: list = [None] * n
        for i in range(n):
            driver = _frozen_driver(grid, r_nodes, c_nodes[i], spec.drift_bound, spec.cost_sup)
            sol = solve_ergodic(
                model, driver, grid,
                tol=inner_tol, max_sweeps=inner_max_sweeps, v_init=v_warm[i],
            )
            sols[i] = sol
            v_warm[i] = sol.v
            lam_new[i] = sol.lam
            xi_new[:, i] = sol.xi
        if damping < 1.0:
            xi_new = (1.0 - damping) * xi + damping * xi_new
        deltas = {
            "iteration": it,
            "lambda": [
                None if lambdas[i] is None else abs(lam_new[i] - lambdas[i]) for i in range(n)
            ],
            "xi": [_interior_sup(grid, xi_new[:, i] - xi[:, i]) for i in range(n)],
        }
        history.append(deltas)
        xi = xi_new
        lambdas = lam_new
        lam_ok = all(d is not None and d < tol for d in deltas["lambda"])
        xi_ok = all(d < tol for d in deltas["xi"])
        if lam_ok and xi_ok:
            converged = True
            break
    if not converged:
        logger.warning("picard_solve: no fixed point after %d iterations", it)
    final_idx = _policy_from_xi(spec, nodes, xi, enumeration_cap)
    policy = FeedbackPolicy(nodes=nodes, indices=final_idx, z_values=xi.copy())
    comp = comparison_bound(model, spec, grid, tol=inner_tol)
    return NashSolution(
        spec_name=spec.name,
        solutions=tuple(sols),
        lambdas=tuple(lambdas),
        policy=policy,
        policy_values=_policy_values(spec, final_idx),
        comparison=comp,
        converged=converged,
        iterations=it,
        deltas_history=tuple(history),
    )


def asymmetric_solve(
    model: SdeModel,
    spec: GameSpec,
    grid: Grid1D,
    alpha: float,
    tol: float = 1e-4,
    max_iter: int = 50,
    damping: float = 1.0,
    inner_tol: float = 1e-6,
    inner_max_sweeps: int = 500_000,
    enumeration_cap: int = 1_000_000,
    v_init: Optional[Sequence[np.ndarray]] = None,
    xi_init: Optional[np.ndarray] = None,
) -> NashSolution:
    """Two-player fixed point with an ergodic player 1 and a discounted player 2.

    Player 2's equation uses the discount rate ``alpha``; their convergence
    deltas are the interior sups of the profile and gradient changes.
    ``lambdas[1]`` is ``None``; the discounted value is in ``solutions[1]``.
    """
    if model.dim != 1:
        raise ValueError("asymmetric_solve requires a one-dimensional model")
    if spec.n_players != 2:
        raise ValueError("asymmetric_solve requires exactly two players")
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    nodes = grid.nodes()
    xi = np.zeros((grid.m, 2)) if xi_init is None else np.asarray(xi_init, dtype=float).copy()
    if xi.shape != (grid.m, 2):
        raise ValueError(f"xi_init must have shape ({grid.m}, 2)")
    lam1: Optional[float] = None
    v2_prev: Optional[np.ndarray] = None
    v_warm: list = list(v_init) if v_init is not None else [None, None]
    sols: list = [None, None]
    history: list = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        idx = _policy_from_xi(spec, nodes, xi, enumeration_cap)
        r_nodes, c_nodes = _frozen_tables(spec, nodes, idx)
        d0 = _frozen_driver(grid, r_nodes, c_nodes[0], spec.drift_bound, spec.cost_sup)
        sol0 = solve_ergodic(model, d0, grid, tol=inner_tol,
                             max_sweeps=inner_max_sweeps, v_init=v_warm[0])
        d1 = _frozen_driver(grid, r_nodes, c_nodes[1], spec.drift_bound, spec.cost_sup)
        sol1 = solve_discounted(model, d1, grid, alpha, tol=inner_tol,
                                max_sweeps=inner_max_sweeps, v_init=v_warm[1])
        sols = [sol0, sol1]
        v_warm = [sol0.v, sol1.v]
        xi_new = np.column_stack([sol0.xi, sol1.xi])
        if damping < 1.0:
            xi_new = (1.0 - damping) * xi + damping * xi_new
        deltas = {
            "iteration": it,
            "lambda": [None if lam1 is None else abs(sol0.lam - lam1), None],
            "value": [
                None,
                None if v2_prev is None else _interior_sup(grid, sol1.v - v2_prev),
            ],
            "xi": [_interior_sup(grid, xi_new[:, i] - xi[:, i]) for i in range(2)],
        }
        history.append(deltas)
        xi = xi_new
        lam1 = sol0.lam
        v2_prev = sol1.v
        ok = (
            deltas["lambda"][0] is not None
            and deltas["lambda"][0] < tol
            and deltas["value"][1] is not None
            and deltas["value"][1] < tol
            and all(d < tol for d in deltas["xi"])
        )
        if ok:
            converged = True
            break
    if not converged:
        logger.warning("asymmetric_solve: no fixed point after %d iterations", it)
    final_idx = _policy_from_xi(spec, nodes, xi, enumeration_cap)
    policy = FeedbackPolicy(nodes=nodes, indices=final_idx, z_values=xi.copy())
    comp = comparison_bound(model, spec, grid, tol=inner_tol)
    return NashSolution(
        spec_name=spec.name,
        solutions=tuple(sols),
        lambdas=(lam1, None),
        policy=policy,
        policy_values=_policy_values(spec, final_idx),
        comparison=comp,
        converged=converged,
        iterations=it,
        deltas_history=tuple(history),
        alpha=alpha,
    )


@dataclass(frozen=True)
class SweepRow:
    """One discount rate of a vanishing-discount sweep."""

    alpha: float
    lambda1: Optional[float]
    alpha_v2_at_ref: Optional[float]
    centered_profile_distance: Optional[float]
    status: str


@dataclass(frozen=True)
class SweepResult:
    rows: Tuple[SweepRow, ...]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("alpha,lambda1,alpha_v2_at_ref,centered_profile_distance,status\n")
            for r in self.rows:
                cells = [
                    repr(float(r.alpha)),
                    "" if r.lambda1 is None else repr(float(r.lambda1)),
                    "" if r.alpha_v2_at_ref is None else repr(float(r.alpha_v2_at_ref)),
                    ""
                    if r.centered_profile_distance is None
                    else repr(float(r.centered_profile_distance)),
                    r.status,
                ]
                fh.write(",".join(cells) + "\n")

    def as_dicts(self) -> list:
        return [
            {
                "alpha": r.alpha,
                "lambda1": r.lambda1,
                "alpha_v2_at_ref": r.alpha_v2_at_ref,
                "centered_profile_distance": r.centered_profile_distance,
                "status": r.status,
            }
            for r in self.rows
        ]


def vanishing_discount_sweep(
    model: SdeModel,
    spec: GameSpec,
    grid: Grid1D,
    alphas: Sequence[float],
    tol: float = 1e-4,
    max_iter: int = 50,
    inner_tol: float = 1e-6,
    **kwargs,
) -> SweepResult:
    """Asymmetric solves along a list of discount rates.

    Each row records player 1's constant, ``alpha * v2`` at the reference
    node, and the interior sup-distance between consecutive centered player-2
    profiles ``v2 - v2(x_ref)``.  Solver failures mark the row's ``status``
    and leave the remaining columns empty rather than aborting the sweep.
    """
    rows = []
    prev_centered: Optional[np.ndarray] = None
    warm = None
    for a in alphas:
        try:
            nash = asymmetric_solve(
                model, spec, grid, float(a),
                tol=tol, max_iter=max_iter, inner_tol=inner_tol,
                v_init=warm, **kwargs,
            )
        except (MaxSweepsExceededError, NoPureNashError, BestResponseCycleError) as err:
            rows.append(SweepRow(float(a), None, None, None, f"error: {err}"))
            prev_centered = None
            warm = None
            continue
        sol2 = nash.solutions[1]
        iref = grid.x_ref_index
        centered = sol2.v - sol2.v[iref]
        dist = None
        if prev_centered is not None:
            dist = _interior_sup(grid, centered - prev_centered)
        status = "ok" if nash.converged else "not_converged"
        rows.append(
            SweepRow(
                alpha=float(a),
                lambda1=nash.lambdas[0],
                alpha_v2_at_ref=float(a) * float(sol2.v[iref]),
                centered_profile_distance=dist,
                status=status,
            )
        )
        prev_centered = centered
        warm = [nash.solutions[0].v, sol2.v]
    return SweepResult(rows=tuple(rows))
