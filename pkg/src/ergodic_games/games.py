"""Static game layer: control grids, Hamiltonians, pointwise Nash points.

Each player picks a control from a finite grid.  The joint control enters
the dynamics through a shared drift map and each player pays a running cost.
For a state ``x`` and per-player gradient values ``z``, player ``i``'s
Hamiltonian is

    H_i(x, z_i, u) = z_i . drift_map(u) + cost_i(x, u)

and a joint control is a pointwise Nash point when no player can lower their
own Hamiltonian by a unilateral grid move.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "NoPureNashError",
    "BestResponseCycleError",
    "ControlGrid",
    "GameSpec",
    "JointControl",
    "FeedbackPolicy",
    "IsaacsReport",
    "hamiltonian",
    "isaac_fixed_point",
    "verify_isaacs",
]

# A joint control is one grid index per player.
JointControl = Tuple[int, ...]

_CHECK_SLACK = 1e-9


class NoPureNashError(RuntimeError):
    """No joint grid control is stable under unilateral deviations."""

    def __init__(self, x, z):
        super().__init__(f"no pure Nash point on the control grids at x={x!r}, z={z!r}")
        self.x = x
        self.z = z


class BestResponseCycleError(RuntimeError):
    """Cyclic best-response sweeps revisited a state without stabilizing."""


@dataclass(frozen=True)
class ControlGrid:
    """Finite list of admissible control points for one player."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            raise ValueError("control grid must be nonempty")
        if not np.all(np.isfinite(pts)):
            raise ValueError("control grid points must be finite")
        flat = pts.reshape(len(pts), -1)
        if len(np.unique(flat, axis=0)) != len(flat):
            raise ValueError("control grid points must be distinct")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @staticmethod
    def uniform(lo: float, hi: float, n: int) -> "ControlGrid":
        return ControlGrid(np.linspace(lo, hi, n))


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Immutable description of an n-player game on finite control grids.

    ``drift_map`` and each ``costs[i]`` receive the per-player control values
    as separate positional arguments (``costs[i]`` gets the state first) and
    must broadcast over numpy arrays.  ``drift_bound`` bounds
    ``|drift_map|`` over the grids, ``cost_sup`` bounds ``|cost_i|`` and
    ``cost_x_lip`` is a Lipschitz constant of the costs in the state; all
    three are verified on samples at construction.
    """

    grids: Tuple[ControlGrid, ...]
    drift_map: Callable
    drift_bound: float
    costs: Tuple[Callable, ...]
    cost_sup: float
    cost_x_lip: float
    name: str = ""
    check_samples: int = 64
    check_seed: int = 11

    def __post_init__(self):
        object.__setattr__(self, "grids", tuple(self.grids))
        object.__setattr__(self, "costs", tuple(self.costs))
        if len(self.grids) < 1:
            raise ValueError("at least one player required")
        if len(self.costs) != len(self.grids):
            raise ValueError("need exactly one cost per player")
        object.__setattr__(self, "_cost_cache", {})
        object.__setattr__(self, "_drift_cache", None)
        self._run_checks()

    @property
    def n_players(self) -> int:
        return len(self.grids)

    def product_size(self) -> int:
        n = 1
        for g in self.grids:
            n *= len(g)
        return n

    # -- tables over the joint control grid ----------------------------------------

    def _meshes(self):
        if all(g.points.ndim == 1 for g in self.grids):
            return np.meshgrid(*[g.points for g in self.grids], indexing="ij")
        return None

    def _shape(self) -> Tuple[int, ...]:
        return tuple(len(g) for g in self.grids)

    def drift_table(self) -> np.ndarray:
        """``drift_map`` evaluated on the full joint grid (cached)."""
        cached = getattr(self, "_drift_cache")
        if cached is not None:
            return cached
        shape = self._shape()
        mesh = self._meshes()
        tab = None
        if mesh is not None:
            try:
                raw = np.asarray(self.drift_map(*mesh), dtype=float)
                if raw.shape == shape or raw.ndim == 0:
                    tab = np.broadcast_to(raw, shape).astype(float)
                elif raw.shape[:-1] == shape:
                    tab = raw
            except (TypeError, ValueError):
                tab = None
        if tab is None:
            tab = np.empty(shape)
            for idx in np.ndindex(*shape):
                vals = [g.points[j] for g, j in zip(self.grids, idx)]
                tab[idx] = float(np.asarray(self.drift_map(*vals)))
        object.__setattr__(self, "_drift_cache", tab)
        return tab

    def cost_table(self, player: int, x) -> np.ndarray:
        """``costs[player]`` at state ``x`` on the full joint grid (cached)."""
        key = (player, _state_key(x))
        cache = getattr(self, "_cost_cache")
        if key in cache:
            return cache[key]
        shape = self._shape()
        mesh = self._meshes()
        tab = None
        if mesh is not None:
            try:
                raw = np.asarray(self.costs[player](x, *mesh), dtype=float)
                tab = np.broadcast_to(raw, shape).astype(float)
            except (TypeError, ValueError):
                tab = None
        if tab is None:
            tab = np.empty(shape)
            for idx in np.ndindex(*shape):
                vals = [g.points[j] for g, j in zip(self.grids, idx)]
                tab[idx] = float(self.costs[player](x, *vals))
        cache[key] = tab
        return tab

    def control_values(self, u: JointControl) -> list:
        return [g.points[j] for g, j in zip(self.grids, u)]

    # -- sampled construction checks ------------------------------------------------

    def _run_checks(self) -> None:
        rng = np.random.default_rng(self.check_seed)
        tab = self.drift_table()
        mag = np.abs(tab) if tab.ndim == len(self.grids) else np.linalg.norm(tab, axis=-1)
        if np.any(mag > self.drift_bound * (1.0 + _CHECK_SLACK) + 1e-12):
            raise ValueError(
                f"drift_map check failed: |drift_map|={float(mag.max()):.6g} exceeds "
                f"drift_bound={self.drift_bound:.6g} on the control grids"
            )
        xs = rng.normal(scale=3.0, size=self.check_samples)
        ys = rng.normal(scale=3.0, size=self.check_samples)
        for i in range(self.n_players):
            for x, y in zip(xs, ys):
                cx = self.cost_table(i, float(x))
                cy = self.cost_table(i, float(y))
                if np.any(np.abs(cx) > self.cost_sup * (1.0 + _CHECK_SLACK) + 1e-12):
                    raise ValueError(
                        f"cost check failed: |cost_{i}| exceeds cost_sup={self.cost_sup:.6g} "
                        f"at sampled x={float(x):.6g}"
                    )
                lip = self.cost_x_lip * abs(float(x) - float(y))
                if np.any(np.abs(cx - cy) > lip + _CHECK_SLACK * (1.0 + lip) + 1e-12):
                    raise ValueError(
                        f"cost check failed: cost_{i} violates cost_x_lip={self.cost_x_lip:.6g} "
                        f"between sampled states x={float(x):.6g}, y={float(y):.6g}"
                    )
        # construction-time cost tables were probe points; drop them
        getattr(self, "_cost_cache").clear()


def _state_key(x):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    return tuple(float(v) for v in arr.ravel())


def hamiltonian(spec: GameSpec, player: int, x, z_i, u: JointControl) -> float:
    """Player's Hamiltonian ``z_i . drift_map(u) + cost_i(x, u)`` at one point."""
    _validate_joint(spec, u)
    vals = spec.control_values(u)
    r = np.asarray(spec.drift_map(*vals), dtype=float)
    c = float(np.asarray(spec.costs[player](x, *vals)))
    z = np.asarray(z_i, dtype=float)
    if r.ndim == 0 and z.ndim == 0:
        return float(z) * float(r) + c
    return float(np.dot(z.ravel(), r.ravel())) + c


def _validate_joint(spec: GameSpec, u: Sequence[int]) -> None:
    if len(u) != spec.n_players:
        raise ValueError(f"joint control needs {spec.n_players} indices, got {len(u)}")
    for j, (g, idx) in enumerate(zip(spec.grids, u)):
        if not 0 <= int(idx) < len(g):
            raise ValueError(f"control index {idx} out of range for player {j}")


def _hamiltonian_tables(spec: GameSpec, x, z) -> list:
    """One Hamiltonian array per player over the full joint grid."""
    drift = spec.drift_table()
    shape = spec._shape()
    out = []
    for i in range(spec.n_players):
        z_i = np.asarray(z[i], dtype=float)
        if drift.ndim == len(shape):
            h = float(z_i) * drift if z_i.ndim == 0 else float(z_i.ravel()[0]) * drift
        else:
            h = np.tensordot(drift, z_i.ravel(), axes=([-1], [0]))
        out.append(h + spec.cost_table(i, x))
    return out


def _value_key(spec: GameSpec, u: JointControl) -> tuple:
    key = []
    for g, j in zip(spec.grids, u):
        pt = np.atleast_1d(np.asarray(g.points[j], dtype=float))
        key.extend(float(v) for v in pt)
    return tuple(key)


def isaac_fixed_point(
    spec: GameSpec,
    x,
    z,
    enumeration_cap: int = 1_000_000,
    max_rounds: int = 10_000,
) -> JointControl:
    """Joint control at which every Hamiltonian is unilaterally minimal.

    Exhaustive enumeration is used while the product grid has at most
    ``enumeration_cap`` points; ties are broken toward the lexicographically
    smallest tuple of control *values*, so reordering a grid cannot change
    the selected control.  Larger products fall back to cyclic best-response
    sweeps, which either stabilize (the result is then a pointwise Nash
    point by construction) or raise :class:`BestResponseCycleError`.

    Raises :class:`NoPureNashError` when enumeration finds no stable joint
    control.
    """
    if len(z) != spec.n_players:
        raise ValueError(f"need one gradient value per player, got {len(z)}")
    if spec.product_size() <= enumeration_cap:
        tables = _hamiltonian_tables(spec, x, z)
        mask = np.ones(spec._shape(), dtype=bool)
        for i, h in enumerate(tables):
            mask &= h <= h.min(axis=i, keepdims=True)
        hits = np.argwhere(mask)
        if len(hits) == 0:
            raise NoPureNashError(x, z)
        best = min((tuple(int(j) for j in row) for row in hits),
                   key=lambda u: _value_key(spec, u))
        return best
    return _best_response_search(spec, x, z, max_rounds)


def _best_response(spec: GameSpec, x, z_i, player: int, current: JointControl) -> int:
    """Index minimizing the player's Hamiltonian with the others frozen."""
    grid = spec.grids[player]
    vals = spec.control_values(current)
    h = np.empty(len(grid))
    try:
        probe = list(vals)
        probe[player] = grid.points
        r = np.asarray(spec.drift_map(*probe), dtype=float)
        c = np.asarray(spec.costs[player](x, *probe), dtype=float)
        z_arr = np.asarray(z_i, dtype=float)
        if r.shape == (len(grid),):
            h = float(z_arr) * r + np.broadcast_to(c, (len(grid),))
        else:
            raise ValueError("shape mismatch")
    except (TypeError, ValueError):
        for j in range(len(grid)):
            u = list(current)
            u[player] = j
            h[j] = hamiltonian(spec, player, x, z_i, tuple(u))
    ties = np.flatnonzero(h <= h.min())
    pts = grid.points
    return int(min(ties, key=lambda j: tuple(np.atleast_1d(pts[j]).tolist())))


def _best_response_search(spec: GameSpec, x, z, max_rounds: int) -> JointControl:
    current = tuple(0 for _ in spec.grids)
    seen = {current}
    for _ in range(max_rounds):
        nxt = list(current)
        for i in range(spec.n_players):
            nxt[i] = _best_response(spec, x, z[i], i, tuple(nxt))
        nxt = tuple(nxt)
        if nxt == current:
            return current
        if nxt in seen:
            raise BestResponseCycleError(
                f"best-response sweeps cycled without stabilizing at x={x!r}, z={z!r}"
            )
        seen.add(nxt)
        current = nxt
    raise BestResponseCycleError(
        f"best-response sweeps did not stabilize within {max_rounds} rounds at x={x!r}"
    )


@dataclass(frozen=True)
class IsaacsReport:
    """Sampled diagnostic for existence and stability of pointwise Nash points."""

    fraction_with_pure_nash: float
    max_continuity_jump: float
    n_samples: int
    delta: float
    n_failures: int
    example_failures: tuple


def verify_isaacs(
    spec: GameSpec,
    sampler: Optional[Callable] = None,
    n_samples: int = 1_000,
    delta: float = 1e-3,
    seed: int = 0,
    enumeration_cap: int = 1_000_000,
) -> IsaacsReport:
    """Sample ``(x, z)`` pairs and probe the pointwise Nash search.

    ``sampler`` is called with a generator and must return ``(x, z)`` with
    one gradient value per player; the default draws both from centered
    normals with scale 2.  For each sample the search is retried at a
    ``delta``-perturbed ``z`` and the largest change of the per-player
    Hamiltonian values is recorded (``delta == 0`` reproduces the same
    point, so the jump is zero).
    """
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 0x15AAC])
    if sampler is None:
        def sampler(r):
            return float(r.normal(scale=2.0)), tuple(
                float(r.normal(scale=2.0)) for _ in range(spec.n_players)
            )

    hits = 0
    max_jump = 0.0
    failures = []
    for _ in range(n_samples):
        x, z = sampler(rng)
        z = tuple(z)
        direction = []
        for z_i in z:
            d = rng.standard_normal(np.shape(np.atleast_1d(z_i)))
            norm = float(np.linalg.norm(d))
            direction.append(d / norm if norm > 0 else d)
        try:
            u = isaac_fixed_point(spec, x, z, enumeration_cap=enumeration_cap)
        except (NoPureNashError, BestResponseCycleError):
            if len(failures) < 5:
                failures.append((x, z))
            continue
        hits += 1
        z_near = tuple(
            (np.asarray(z_i, dtype=float) + delta * d).item()
            if np.ndim(z_i) == 0
            else np.asarray(z_i, dtype=float) + delta * d
            for z_i, d in zip(z, direction)
        )
        try:
            u_near = isaac_fixed_point(spec, x, z_near, enumeration_cap=enumeration_cap)
        except (NoPureNashError, BestResponseCycleError):
            if len(failures) < 5:
                failures.append((x, z_near))
            continue
        jump = max(
            abs(
                hamiltonian(spec, i, x, z_near[i], u_near)
                - hamiltonian(spec, i, x, z[i], u)
            )
            for i in range(spec.n_players)
        )
        max_jump = max(max_jump, jump)
    return IsaacsReport(
        fraction_with_pure_nash=hits / n_samples if n_samples else 1.0,
        max_continuity_jump=max_jump,
        n_samples=n_samples,
        delta=delta,
        n_failures=n_samples - hits,
        example_failures=tuple(failures),
    )


@dataclass(frozen=True)
class FeedbackPolicy:
    """Joint feedback control tabulated on a uniform state grid.

    ``indices[k, i]`` is player ``i``'s control grid index at state node
    ``k``; ``z_values[k, i]`` records the gradient value that produced it.
    Off-node states are resolved to the nearest node, clamped to the grid.
    """

    nodes: np.ndarray
    indices: np.ndarray  # (n_nodes, n_players) int
    z_values: np.ndarray  # (n_nodes, n_players) float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        idx = np.asarray(self.indices, dtype=int)
        zv = np.asarray(self.z_values, dtype=float)
        if idx.shape != (len(nodes), zv.shape[1]) or zv.shape[0] != len(nodes):
            raise ValueError("indices and z_values must be (n_nodes, n_players)")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "z_values", zv)

    @property
    def n_players(self) -> int:
        return self.indices.shape[1]

    def node_index(self, x) -> np.ndarray:
        """Nearest state-node lookup, clamped to the grid."""
        dx = self.nodes[1] - self.nodes[0] if len(self.nodes) > 1 else 1.0
        raw = np.rint((np.asarray(x, dtype=float) - self.nodes[0]) / dx).astype(int)
        return np.clip(raw, 0, len(self.nodes) - 1)

    def at_state(self, x) -> JointControl:
        return tuple(int(v) for v in self.indices[int(self.node_index(x))])

    def control_columns(self, spec: GameSpec) -> list:
        """Per-player arrays of control values along the state nodes."""
        cols = []
        for i, g in enumerate(spec.grids):
            cols.append(np.asarray(g.points, dtype=float)[self.indices[:, i]])
        return cols

    def with_player_indices(self, player: int, new_indices: np.ndarray) -> "FeedbackPolicy":
        idx = self.indices.copy()
        idx[:, player] = np.asarray(new_indices, dtype=int)
        return FeedbackPolicy(nodes=self.nodes, indices=idx, z_values=self.z_values)
