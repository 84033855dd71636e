"""Command line front end.

Every subcommand reads one YAML config, writes its artifacts into ``--out``
and finishes with a ``manifest.json`` that embeds the resolved config, the
seed, a config hash and library versions.  Reports and CSV files depend only
on the config and seed (floats are written with ``repr``, JSON keys are
sorted), so reruns are byte identical; wall time lives in the manifest only.

Exit codes: 0 success, 1 config or usage problem, 2 solver non-convergence
or diverged simulation, 3 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path as FsPath
from typing import Optional, Tuple

import numpy as np
import yaml

from .catalog import make_driver, make_game, make_growth_driver, make_model
from .continuous import (
    LinearizationDidNotConvergeError,
    ResidualCeilingError,
    solve_continuous_ebsde,
)
from .ebsde import (
    CflViolationError,
    DiscountedSolution,
    ErgodicSolution,
    Grid1D,
    MaxSweepsExceededError,
    solve_ergodic,
)
from .games import BestResponseCycleError, FeedbackPolicy, NoPureNashError, verify_isaacs
from .picard import NashSolution, asymmetric_solve, picard_solve, vanishing_discount_sweep
from .sde import SimulationDivergedError, moment_bound_check, sample_paths
from .verify import nash_deviation_test

__all__ = ["ConfigError", "main", "load_config", "load_nash", "rerun_from_manifest"]

logger = logging.getLogger(__name__)

_SOLVER_ERRORS = (
    CflViolationError,
    MaxSweepsExceededError,
    NoPureNashError,
    BestResponseCycleError,
    SimulationDivergedError,
    LinearizationDidNotConvergeError,
    ResidualCeilingError,
)


class ConfigError(Exception):
    """Config file missing, unreadable, or lacking a required field."""


def load_config(path) -> dict:
    p = FsPath(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = yaml.safe_load(p.read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"config file {p} is not valid YAML: {err}") from err
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {p} must contain a mapping at the top level")
    return cfg


def _section(cfg: dict, name: str) -> dict:
    if name not in cfg:
        raise ConfigError(f"missing config section '{name}'")
    val = cfg[name]
    if val is None:
        return {}
    if not isinstance(val, dict):
        raise ConfigError(f"config section '{name}' must be a mapping")
    return val


def _scalar(cfg: dict, name: str):
    if name not in cfg:
        raise ConfigError(f"missing config field '{name}'")
    return cfg[name]


def _make_grid(gcfg: dict) -> Grid1D:
    for k in ("x_min", "x_max", "m"):
        if k not in gcfg:
            raise ConfigError(f"missing config field 'grid.{k}'")
    kwargs = {}
    if "interior_margin" in gcfg:
        kwargs["interior_margin"] = int(gcfg["interior_margin"])
    if "x_ref_index" in gcfg:
        kwargs["x_ref_index"] = int(gcfg["x_ref_index"])
    return Grid1D(float(gcfg["x_min"]), float(gcfg["x_max"]), int(gcfg["m"]), **kwargs)


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _write_manifest(out: FsPath, command: str, cfg: dict, seed: int,
                    outputs: list, t0: float) -> None:
    from . import __version__

    _write_json(
        out / "manifest.json",
        {
            "command": command,
            "config": cfg,
            "config_sha256": _config_hash(cfg),
            "seed": seed,
            "outputs": outputs,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "ergodic_games": __version__,
            },
            "wall_time_s": time.perf_counter() - t0,
        },
    )


# -- subcommand handlers -------------------------------------------------------------
# Each returns (exit_code, list of artifact file names written into out/).


def _cmd_solve_ebsde(cfg: dict, out: FsPath, seed: int) -> Tuple[int, list]:
    model = make_model(_section(cfg, "model"))
    grid = _make_grid(_section(cfg, "grid"))
    driver = make_driver(_section(cfg, "driver"))
    s = _section(cfg, "solver") if "solver" in cfg else {}
    sol = solve_ergodic(
        model, driver, grid,
        tol=float(s.get("tol", 1e-6)),
        max_sweeps=int(s.get("max_sweeps", 500_000)),
        dtau=float(s["dtau"]) if "dtau" in s else None,
    )
    sol.to_csv(out / "solution.csv")
    _write_json(out / "report.json", sol.report_dict())
    logger.info("solve-ebsde: lambda=%.9g residual=%.3e", sol.lam, sol.residual_sup)
    return 0, ["solution.csv", "report.json"]


def _cmd_continuous_ebsde(cfg: dict, out: FsPath, seed: int) -> Tuple[int, list]:
    model = make_model(_section(cfg, "model"))
    grid = _make_grid(_section(cfg, "grid"))
    dcfg = dict(_section(cfg, "driver"))
    kappa_override = dcfg.pop("kappa", None)
    f, kappa = make_growth_driver(dcfg)
    if kappa_override is not None:
        kappa = float(kappa_override)
    s = _section(cfg, "solver") if "solver" in cfg else {}
    sol = solve_continuous_ebsde(
        model, f, kappa, grid,
        tol=float(s.get("tol", 1e-6)),
        max_iter=int(s.get("max_iter", 80)),
        inner_max_sweeps=int(s.get("max_sweeps", 500_000)),
        residual_ceiling=float(s["residual_ceiling"]) if "residual_ceiling" in s else None,
    )
    sol.to_csv(out / "solution.csv")
    report = sol.report_dict()
    report["kappa"] = kappa
    _write_json(out / "report.json", report)
    logger.info("continuous-ebsde: lambda=%.9g residual=%.3e", sol.lam, sol.residual_sup)
    return 0, ["solution.csv", "report.json"]


def _solver_kwargs(cfg: dict) -> dict:
    s = _section(cfg, "solver") if "solver" in cfg else {}
    kwargs = dict(
        tol=float(s.get("tol", 1e-4)),
        max_iter=int(s.get("max_iter", 50)),
        damping=float(s.get("damping", 1.0)),
        inner_tol=float(s.get("inner_tol", 1e-6)),
        inner_max_sweeps=int(s.get("max_sweeps", 500_000)),
        enumeration_cap=int(s.get("enumeration_cap", 1_000_000)),
    )
    return kwargs


def _solve_nash(cfg: dict) -> NashSolution:
    model = make_model(_section(cfg, "model"))
    grid = _make_grid(_section(cfg, "grid"))
    spec = make_game(_section(cfg, "game"))
    kwargs = _solver_kwargs(cfg)
    if "alpha" in cfg and cfg["alpha"] is not None:
        return asymmetric_solve(model, spec, grid, float(cfg["alpha"]), **kwargs)
    return picard_solve(model, spec, grid, **kwargs)


def _cmd_solve_game(cfg: dict, out: FsPath, seed: int) -> Tuple[int, list]:
    nash = _solve_nash(dict(cfg, alpha=None))
    nash.to_csv(out / "nash.csv")
    _write_json(out / "report.json", nash.report_dict())
    logger.info("solve-game: lambdas=%s converged=%s", nash.lambdas, nash.converged)
    return (0 if nash.converged else 2), ["nash.csv", "report.json"]


def _cmd_asymmetric(cfg: dict, out: FsPath, seed: int) -> Tuple[int, list]:
    if "alpha" not in cfg or cfg["alpha"] is None:
        raise ConfigError("missing config field 'alpha'")
    nash = _solve_nash(cfg)
    nash.to_csv(out / "nash.csv")
    _write_json(out / "report.json", nash.report_dict())
    logger.info("asymmetric: lambda1=%s alpha=%s converged=%s",
                nash.lambdas[0], nash.alpha, nash.converged)
    return (0 if nash.converged else 2), ["nash.csv", "report.json"]


def _cmd_discount_sweep(cfg: dict, out: FsPath, seed: int) -> Tuple[int, list]:
    model = make_model(_section(cfg, "model"))
    grid = _make_grid(_section(cfg, "grid"))
    spec = make_game(_section(cfg, "game"))
    alphas = _scalar(cfg, "alphas")
    if not isinstance(alphas, (list, tuple)) or not alphas:
        raise ConfigError("config field 'alphas' must be a nonempty list")
    kwargs = _solver_kwargs(cfg)
    kwargs.pop("damping", None)
    sweep = vanishing_discount_sweep(model, spec, grid, [float(a) for a in alphas], **kwargs)
    sweep.to_csv(out / "sweep.csv")
    _write_json(out / "report.json", {"game": spec.name, "rows": sweep.as_dicts()})
    bad = [r for r in sweep.rows if r.status != "ok"]
    if bad:
        logger.warning("discount-sweep: %d of %d rows did not converge", len(bad), len(sweep.rows))
    return (0 if not bad else 2), ["sweep.csv", "report.json"]


def _cmd_verify_nash(cfg: dict, out: FsPath, seed: int) -> Tuple[int, list]:
    model = make_model(_section(cfg, "model"))
    spec = make_game(_section(cfg, "game"))
    nash_dir = cfg.get("nash_dir")
    if nash_dir:
        nash = load_nash(nash_dir)
    else:
        nash = _solve_nash(cfg)
    mc = _section(cfg, "mc") if "mc" in cfg else {}
    report = nash_deviation_test(
        model, spec, nash,
        n_deviations=int(mc.get("n_deviations", 60)),
        horizon=float(mc.get("horizon", 200.0)),
        step=float(mc.get("step", 0.01)),
        n_paths=int(mc.get("n_paths", 200)),
        seed=seed,
        grid_error_budget=float(mc.get("grid_error_budget", 0.05)),
        burn_in=float(mc["burn_in"]) if "burn_in" in mc else None,
        eps_tail=float(mc.get("eps_tail", 1e-3)),
    )
    report.to_csv(out / "deviations.csv")
    _write_json(out / "report.json", {"game": spec.name, **report.as_dict()})
    n_fail = len(report.failures())
    logger.info("verify-nash: %d rows, %d failures", len(report.rows), n_fail)
    return (0 if report.all_passed else 3), ["deviations.csv", "report.json"]


def _cmd_simulate(cfg: dict, out: FsPath, seed: int) -> Tuple[int, list]:
    model = make_model(_section(cfg, "model"))
    sim = _section(cfg, "sim") if "sim" in cfg else {}
    horizon = float(sim.get("horizon", 10.0))
    step = float(sim.get("step", 0.01))
    n_paths = int(sim.get("n_paths", 1))
    states = sample_paths(model, None, horizon, step, seed, n_paths)
    times = np.arange(states.shape[1]) * step
    header = ",".join(["path", "t"] + [f"x_{j + 1}" for j in range(model.dim)])
    with open(out / "paths.csv", "w") as fh:
        fh.write(header + "\n")
        for p in range(n_paths):
            for k in range(states.shape[1]):
                cells = [str(p), repr(float(times[k]))]
                cells += [repr(float(v)) for v in states[p, k]]
                fh.write(",".join(cells) + "\n")
    final = states[:, -1, :]
    sq = np.sum(states**2, axis=2).mean(axis=0)
    _write_json(
        out / "report.json",
        {
            "horizon": horizon,
            "step": step,
            "n_paths": n_paths,
            "final_mean": [float(v) for v in final.mean(axis=0)],
            "final_std": [float(v) for v in final.std(axis=0, ddof=1)] if n_paths > 1
            else [0.0] * model.dim,
            "sup_mean_square": float(np.max(sq)),
        },
    )
    return 0, ["paths.csv", "report.json"]


def _cmd_check_assumptions(cfg: dict, out: FsPath, seed: int) -> Tuple[int, list]:
    mc = _section(cfg, "mc") if "mc" in cfg else {}
    checks: dict = {}
    model = None
    try:
        model = make_model(_section(cfg, "model"))
        checks["model"] = {"passed": True, "detail": None}
    except ValueError as err:
        checks["model"] = {"passed": False, "detail": str(err)}
    if model is not None:
        rep = moment_bound_check(
            model,
            horizon=float(mc.get("horizon", 10.0)),
            step=float(mc.get("step", 0.01)),
            n_paths=int(mc.get("n_paths", 256)),
            seed=seed,
            growth_slack=float(mc.get("growth_slack", 0.10)),
        )
        checks["moment"] = {
            "passed": rep.bounded_in_horizon,
            "sup_second_moment": rep.sup_second_moment,
            "sup_second_moment_doubled": rep.sup_second_moment_doubled,
            "bound_constant": rep.bound_constant,
            "horizon": rep.horizon,
            "n_paths": rep.n_paths,
        }
    else:
        checks["moment"] = {"passed": False, "detail": "skipped: model construction failed"}
    if "game" in cfg:
        try:
            spec = make_game(_section(cfg, "game"))
            rep = verify_isaacs(
                spec,
                n_samples=int(mc.get("isaacs_samples", 300)),
                delta=float(mc.get("isaacs_delta", 1e-3)),
                seed=seed,
            )
            checks["game"] = {
                "passed": rep.fraction_with_pure_nash == 1.0,
                "fraction_with_pure_nash": rep.fraction_with_pure_nash,
                "max_continuity_jump": rep.max_continuity_jump,
                "n_samples": rep.n_samples,
                "delta": rep.delta,
            }
        except ValueError as err:
            checks["game"] = {"passed": False, "detail": str(err)}
    if "driver" in cfg:
        try:
            make_driver(_section(cfg, "driver"))
            checks["driver"] = {"passed": True, "detail": None}
        except ValueError as err:
            checks["driver"] = {"passed": False, "detail": str(err)}
    all_passed = all(c["passed"] for c in checks.values())
    checks["all_passed"] = all_passed
    _write_json(out / "report.json", checks)
    return (0 if all_passed else 3), ["report.json"]


_HANDLERS = {
    "solve-ebsde": _cmd_solve_ebsde,
    "continuous-ebsde": _cmd_continuous_ebsde,
    "solve-game": _cmd_solve_game,
    "asymmetric": _cmd_asymmetric,
    "discount-sweep": _cmd_discount_sweep,
    "verify-nash": _cmd_verify_nash,
    "simulate": _cmd_simulate,
    "check-assumptions": _cmd_check_assumptions,
}


def load_nash(nash_dir) -> NashSolution:
    """Rebuild a solved equilibrium from a ``solve-game``/``asymmetric`` output directory.

    Reads ``nash.csv`` and ``report.json``.  The per-node gradient fields of
    the reloaded policy are the per-player solution fields from the CSV.
    """
    d = FsPath(nash_dir)
    csv_path = d / "nash.csv"
    report_path = d / "report.json"
    if not csv_path.is_file() or not report_path.is_file():
        raise ConfigError(f"nash directory {d} must contain nash.csv and report.json")
    report = json.loads(report_path.read_text())
    with open(csv_path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    n_players = (len(header) - 1) // 4
    players = report["players"]
    if len(players) != n_players:
        raise ConfigError("nash.csv and report.json disagree on the player count")
    grid_dict = next(p["grid"] for p in players if "grid" in p)
    grid = Grid1D(
        x_min=float(grid_dict["x_min"]),
        x_max=float(grid_dict["x_max"]),
        m=int(grid_dict["m"]),
        interior_margin=int(grid_dict["interior_margin"]),
        x_ref_index=int(grid_dict["x_ref_index"]),
    )
    sols = []
    values = []
    idx_cols = []
    xi_cols = []
    for i, pd in enumerate(players):
        v = data[:, 1 + 4 * i]
        xi = data[:, 2 + 4 * i]
        values.append(data[:, 3 + 4 * i])
        idx_cols.append(data[:, 4 + 4 * i].astype(int))
        xi_cols.append(xi)
        if pd["kind"] == "discounted":
            sols.append(
                DiscountedSolution(
                    grid=grid, v=v, xi=xi, alpha=float(pd["alpha"]),
                    residual_sup=float(pd["residual_sup"]),
                    iterations=int(pd["iterations"]), sup_v=float(pd["sup_v"]),
                )
            )
        else:
            sols.append(
                ErgodicSolution(
                    grid=grid, v=v, xi=xi, lam=float(pd["lambda"]),
                    residual_sup=float(pd["residual_sup"]),
                    iterations=int(pd["iterations"]),
                    growth_constant=float(pd["growth_constant"]),
                )
            )
    policy = FeedbackPolicy(
        nodes=grid.nodes(),
        indices=np.column_stack(idx_cols),
        z_values=np.column_stack(xi_cols),
    )
    return NashSolution(
        spec_name=report["game"],
        solutions=tuple(sols),
        lambdas=tuple(None if v is None else float(v) for v in report["lambdas"]),
        policy=policy,
        policy_values=tuple(values),
        comparison=float(report["comparison_bound"]),
        converged=bool(report["converged"]),
        iterations=int(report["iterations"]),
        deltas_history=tuple(report["deltas_history"]),
        alpha=None if report.get("alpha") is None else float(report["alpha"]),
    )


def _run_command(command: str, cfg: dict, out_dir, seed: int) -> int:
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rc, outputs = _HANDLERS[command](cfg, out, seed)
    _write_manifest(out, command, cfg, seed, outputs, t0)
    return rc


def rerun_from_manifest(manifest_path, out_dir) -> int:
    """Re-execute the command recorded in a manifest into a fresh directory.

    Uses the embedded config and seed, so reports and CSVs come out byte
    identical to the original run.
    """
    man = json.loads(FsPath(manifest_path).read_text())
    return _run_command(man["command"], man["config"], out_dir, int(man["seed"]))


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    from . import __version__

    parser = _Parser(
        prog="ergodic-games",
        description="Grid solvers and Monte Carlo checks for long-run stochastic differential games.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "solve-ebsde": "solve one ergodic equation for a catalogued driver",
        "continuous-ebsde": "solve one ergodic equation for a continuous linear-growth driver",
        "solve-game": "Picard-solve the coupled equilibrium system",
        "asymmetric": "equilibrium with an ergodic player 1 and a discounted player 2",
        "discount-sweep": "asymmetric solves along a list of discount rates",
        "verify-nash": "Monte Carlo deviation test of a solved equilibrium",
        "simulate": "sample uncontrolled model paths",
        "check-assumptions": "sampled checks of model, game and driver assumptions",
    }
    for name, help_text in helps.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="YAML config file")
        sp.add_argument("--out", required=True, help="output directory (created if absent)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config's seed")
        sp.add_argument("--quiet", action="store_true", help="log warnings only")
        if name == "verify-nash":
            sp.add_argument("--nash", default=None,
                            help="directory with nash.csv/report.json from a previous solve")
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if getattr(args, "nash", None):
            cfg["nash_dir"] = args.nash
        return _run_command(args.command, cfg, args.out, seed)
    except _SOLVER_ERRORS as err:
        logger.error("solver failure: %s", err)
        return 2
    except ConfigError as err:
        logger.error("config error: %s", err)
        return 1
    except (KeyError, ValueError, OSError) as err:
        logger.error("config error: %s", err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
