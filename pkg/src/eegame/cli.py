"""Command-line front end.

    eegame solve --config game.toml [--seed N] [--out DIR]
    eegame experiment --config exp.toml [--seed N] [--trials N] [--out DIR] [--full-scale]

Numerical settings live in a flat TOML file; see README for the keys.
Exit status: 0 success (non-convergence included), 2 configuration error,
3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .best_response import BrSettings
from .channel import generate_channel_set, load_channel_set
from .experiments import (
    EXPERIMENTS,
    AlgoOutcome,
    BatchFailure,
    ExperimentResult,
    ExperimentSpec,
    TrialRecord,
    emit_csv,
    run_experiment,
)
from .game import GameConfig
from .matrix_kernel import NumericalError
from .solvers import SolverSettings, solve_basic, solve_bisection

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("eegame")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

KNOWN_KEYS = {
    "experiment": str,
    "k_users": int,
    "nt": int,
    "nr": int,
    "sigma2_mw": float,
    "pc_mw": float,
    "budgets_mw": list,
    "eps1": float,
    "eps2": float,
    "max_iters": int,
    "h_max": float,
    "trials": int,
    "master_seed": int,
    "sweep": list,
    "out_dir": str,
    "channels_file": str,
}
REQUIRED_KEYS = ("k_users", "nt", "nr", "budgets_mw")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CliConfig:
    game: GameConfig
    solver: SolverSettings
    experiment: str | None
    trials: int
    master_seed: int
    sweep: tuple
    out_dir: Path
    channels_file: Path | None = None


def _typed(key, value):
    want = KNOWN_KEYS[key]
    if want is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if want is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if want is list and isinstance(value, list):
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{key}: every entry must be a number")
        return value
    if want is str and isinstance(value, str):
        return value
    raise ConfigError(f"{key}: expected {want.__name__}, got {type(value).__name__} ({value!r})")


def parse_config(raw: dict) -> CliConfig:
    """Validate a flat key/value mapping into typed settings."""
    unknown = sorted(set(raw) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    missing = [k for k in REQUIRED_KEYS if k not in raw]
    if missing:
        raise ConfigError(f"missing required config key(s): {', '.join(missing)}")
    v = {k: _typed(k, val) for k, val in raw.items()}
    k_users = v["k_users"]
    budgets = v["budgets_mw"]
    if len(budgets) == 1 and k_users > 1:
        budgets = budgets * k_users
    try:
        game = GameConfig(
            k_users=k_users,
            nt=v["nt"],
            nr=v["nr"],
            budgets=tuple(budgets),
            noise_power=v.get("sigma2_mw", 1.0),
            circuit_power=v.get("pc_mw", 1.0),
        )
    except ValueError as exc:
        raise ConfigError(f"budgets_mw/k_users/nt/nr/sigma2_mw/pc_mw: {exc}") from None
    try:
        br = BrSettings(h_max=v.get("h_max"), eps1=v.get("eps1", 1e-3))
    except ValueError as exc:
        raise ConfigError(f"eps1/h_max: {exc}") from None
    try:
        solver = SolverSettings(max_outer_iters=v.get("max_iters", 100), outer_tol=v.get("eps2", 1e-3), br=br)
    except ValueError as exc:
        raise ConfigError(f"eps2/max_iters: {exc}") from None
    experiment = v.get("experiment")
    if experiment is not None and experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown name {experiment!r}; valid options are {', '.join(EXPERIMENTS)}")
    trials = v.get("trials", 200)
    if trials < 1:
        raise ConfigError("trials: must be >= 1")
    seed = v.get("master_seed", 0)
    if not 0 <= seed < 2**64:
        raise ConfigError("master_seed: must fit in an unsigned 64-bit integer")
    return CliConfig(
        game=game,
        solver=solver,
        experiment=experiment,
        trials=trials,
        master_seed=seed,
        sweep=tuple(v.get("sweep", ())),
        out_dir=Path(v.get("out_dir", "out")),
        channels_file=Path(v["channels_file"]) if "channels_file" in v else None,
    )


def load_config(path) -> CliConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from None
    cfg = parse_config(raw)
    if cfg.channels_file is not None and not cfg.channels_file.is_absolute():
        # fixture paths are relative to the config file
        cfg = replace(cfg, channels_file=Path(path).parent / cfg.channels_file)
    return cfg


def _channels(cfg: CliConfig, seed: int):
    game = cfg.game
    if cfg.channels_file is None:
        return generate_channel_set(game.k_users, game.nr, game.nt, seed, game.noise_power)
    try:
        chans = load_channel_set(cfg.channels_file)
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"channels_file: cannot parse {cfg.channels_file}: {exc}") from None
    try:
        game.check_channels(chans)
    except ValueError as exc:
        raise ConfigError(f"channels_file: {exc}") from None
    return chans


def _fmt_vec(x) -> str:
    return "[" + ", ".join(f"{v:.6g}" for v in np.ravel(x)) + "]"


def cmd_solve(cfg: CliConfig, seed: int, out_dir: Path) -> int:
    game = cfg.game
    chans = _channels(cfg, seed)
    settings = replace(cfg.solver, verify_seed=seed)
    outcomes = {}
    for algo, solve in (("basic", solve_basic), ("bisection", solve_bisection)):
        rep = solve(game, chans, settings)
        eq = rep.equilibrium
        print(
            f"{algo:9s} converged={str(rep.converged).lower()} iterations={rep.iterations_used} "
            f"welfare={rep.welfare:.6g} epsilon_hat={eq.epsilon_hat:.3g}"
        )
        for k in range(game.k_users):
            print(f"  user {k + 1}: utility={rep.utilities[k]:.6g} allocation={_fmt_vec(rep.final_profile[k])}")
        outcomes[algo] = AlgoOutcome(
            utilities=tuple(float(u) for u in rep.utilities),
            welfare=rep.welfare,
            converged=rep.converged,
            epsilon_hat=eq.epsilon_hat,
            iterations=rep.iterations_used,
            profile=tuple(tuple(float(x) for x in row) for row in rep.final_profile),
        )
    spec = ExperimentSpec(
        name="region",
        base=game,
        trials=1,
        master_seed=seed,
        solver=cfg.solver,
        algorithms=("basic", "bisection"),
        region_samples=0,
    )
    result = ExperimentResult(spec=spec, records=[TrialRecord(0, seed, None, outcomes)], summary=[])
    paths = emit_csv(result, out_dir, prefix="solve_")
    print(f"wrote {paths['trials']}")
    return EXIT_OK


def cmd_experiment(cfg: CliConfig, workers: int) -> int:
    if cfg.experiment is None:
        raise ConfigError(f"experiment: key is required for this command; valid options are {', '.join(EXPERIMENTS)}")
    try:
        spec = ExperimentSpec(
            name=cfg.experiment,
            base=cfg.game,
            trials=cfg.trials,
            master_seed=cfg.master_seed,
            sweep_values=cfg.sweep,
            solver=cfg.solver,
            workers=workers,
        )
    except ValueError as exc:
        raise ConfigError(f"experiment/sweep: {exc}") from None
    result = run_experiment(spec)
    for row in result.summary:
        us = " ".join(f"u{k + 1}={u:.6g}" for k, u in enumerate(row.mean_utilities))
        print(
            f"sweep={'-' if row.sweep_value is None else row.sweep_value} algo={row.algo} "
            f"welfare={row.mean_welfare:.6g}+-{row.stderr_welfare:.2g} {us} n={row.n_trials}"
        )
    paths = emit_csv(result, cfg.out_dir)
    for p in paths.values():
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eegame", description="Energy-efficiency MIMO MAC game solver")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "solve one channel draw"), ("experiment", "run a Monte-Carlo experiment")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int, help="overrides master_seed")
        p.add_argument("--out", type=Path, help="overrides out_dir")
        if name == "experiment":
            p.add_argument("--trials", type=int, help="overrides trials")
            p.add_argument("--full-scale", action="store_true", help="1000 trials per sweep value")
            p.add_argument("--workers", type=int, default=1, help="worker processes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed: must fit in an unsigned 64-bit integer")
            cfg = replace(cfg, master_seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
        if args.command == "solve":
            return cmd_solve(cfg, cfg.master_seed, cfg.out_dir)
        if args.full_scale:
            cfg = replace(cfg, trials=1000)
        if args.trials is not None:
            if args.trials < 1:
                raise ConfigError("--trials: must be >= 1")
            cfg = replace(cfg, trials=args.trials)
        return cmd_experiment(cfg, max(1, args.workers))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BatchFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
