"""Seeded Monte-Carlo experiments comparing exact NE, bisection NE and UPA.

Every trial draws a fresh channel set from a seed derived from the master
seed and the trial index, so a record can be recomputed in isolation and
the batch output does not depend on how trials are scheduled.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import RegionSample, pareto_filter, sample_utility_region, solve_upa_game
from .channel import generate_channel_set
from .game import GameConfig
from .solvers import SolverSettings, solve_basic, solve_bisection

log = logging.getLogger(__name__)

__all__ = [
    "EXPERIMENTS",
    "ALGORITHMS",
    "BatchFailure",
    "ExperimentSpec",
    "AlgoOutcome",
    "TrialRecord",
    "SummaryRow",
    "ExperimentResult",
    "trial_seed",
    "config_for",
    "run_trial",
    "run_experiment",
    "summarize",
    "emit_csv",
    "read_trials_csv",
]

EXPERIMENTS = ("region", "antenna_sweep", "budget_sweep", "mismatch")
ALGORITHMS = {"basic": solve_basic, "bisection": solve_bisection, "upa": solve_upa_game}
FAILURE_FRACTION = 0.10

TRIALS_HEADER = ["trial", "seed", "algo", "user", "utility", "welfare", "converged", "epsilon_hat", "sweep_value"]
SUMMARY_HEADER = ["sweep_value", "algo", "mean_welfare", "stderr_welfare", "mean_u1", "mean_u2", "n_trials"]


class BatchFailure(RuntimeError):
    """Too many trials of an experiment failed."""


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    base: GameConfig
    trials: int = 200
    master_seed: int = 0
    sweep_values: tuple = ()
    solver: SolverSettings = field(default_factory=SolverSettings)
    algorithms: tuple[str, ...] = ("basic", "bisection", "upa")
    region_samples: int = 2000
    workers: int = 1

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.name!r}; choose one of {', '.join(EXPERIMENTS)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.name in ("antenna_sweep", "budget_sweep") and not self.sweep_values:
            raise ValueError(f"{self.name} needs sweep values")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms {sorted(unknown)}")
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))

    @property
    def points(self) -> tuple:
        if self.name in ("antenna_sweep", "budget_sweep"):
            return self.sweep_values
        return self.sweep_values or (None,)


@dataclass(frozen=True)
class AlgoOutcome:
    utilities: tuple[float, ...]
    welfare: float
    converged: bool
    epsilon_hat: float | None
    iterations: int
    profile: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    seed: int
    sweep_value: float | int | None
    outcomes: dict
    failed: bool = False
    error: str = ""
    wall_time: float = 0.0


@dataclass(frozen=True)
class SummaryRow:
    sweep_value: float | int | None
    algo: str
    mean_welfare: float
    stderr_welfare: float
    mean_utilities: tuple[float, ...]
    n_trials: int


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list[TrialRecord]
    summary: list[SummaryRow]
    region: list[RegionSample] | None = None

    def rows(self, sweep_value=None, algo: str | None = None) -> list[SummaryRow]:
        return [
            r
            for r in self.summary
            if (sweep_value is None or r.sweep_value == sweep_value) and (algo is None or r.algo == algo)
        ]

    def outcomes(self, algo: str, sweep_value=None) -> list[AlgoOutcome]:
        return [
            rec.outcomes[algo]
            for rec in self.records
            if not rec.failed and (sweep_value is None or rec.sweep_value == sweep_value)
        ]


def trial_seed(master_seed: int, index: int) -> int:
    """64-bit seed of trial ``index``, split off ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def config_for(spec: ExperimentSpec, value) -> GameConfig:
    base = spec.base
    if spec.name == "antenna_sweep":
        n = int(value)
        return replace(base, nt=n, nr=n)
    if spec.name == "budget_sweep":
        return replace(base, budgets=(float(value),) * base.k_users)
    return base


def run_trial(spec: ExperimentSpec, value, index: int) -> TrialRecord:
    cfg = config_for(spec, value)
    seed = trial_seed(spec.master_seed, index)
    start = time.perf_counter()
    outcomes = {}
    try:
        chans = generate_channel_set(cfg.k_users, cfg.nr, cfg.nt, seed, cfg.noise_power)
        settings = replace(spec.solver, verify_seed=seed)
        for algo in spec.algorithms:
            rep = ALGORITHMS[algo](cfg, chans, settings)
            outcomes[algo] = AlgoOutcome(
                utilities=tuple(float(u) for u in rep.utilities),
                welfare=rep.welfare,
                converged=rep.converged,
                epsilon_hat=None if rep.equilibrium is None else rep.equilibrium.epsilon_hat,
                iterations=rep.iterations_used,
                profile=tuple(tuple(float(x) for x in row) for row in rep.final_profile),
            )
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("trial %d (sweep %s) failed: %s", index, value, exc)
        return TrialRecord(index, seed, value, outcomes, True, f"{type(exc).__name__}: {exc}", time.perf_counter() - start)
    return TrialRecord(index, seed, value, outcomes, wall_time=time.perf_counter() - start)


def _run_task(args):
    return run_trial(*args)


def summarize(spec: ExperimentSpec, records: list[TrialRecord]) -> list[SummaryRow]:
    """Mean and standard error of welfare per sweep value and algorithm."""
    rows = []
    for value in spec.points:
        recs = sorted((r for r in records if r.sweep_value == value and not r.failed), key=lambda r: r.trial_index)
        for algo in spec.algorithms:
            w = np.array([r.outcomes[algo].welfare for r in recs])
            u = np.array([r.outcomes[algo].utilities for r in recs]).reshape(len(recs), -1)
            n = len(recs)
            rows.append(
                SummaryRow(
                    sweep_value=value,
                    algo=algo,
                    mean_welfare=float(w.mean()) if n else math.nan,
                    stderr_welfare=float(w.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
                    mean_utilities=tuple(float(x) for x in u.mean(axis=0)) if n else (),
                    n_trials=n,
                )
            )
    return rows


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    tasks = [(spec, value, i) for value in spec.points for i in range(spec.trials)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * spec.workers))))
    else:
        records = [_run_task(t) for t in tasks]
    order = {v: j for j, v in enumerate(spec.points)}
    records.sort(key=lambda r: (order[r.sweep_value], r.trial_index))
    failed = sum(r.failed for r in records)
    if failed > FAILURE_FRACTION * len(records):
        raise BatchFailure(f"{failed} of {len(records)} trials failed in experiment {spec.name!r}")
    region = None
    if spec.name == "region" and spec.region_samples > 0:
        cfg = config_for(spec, spec.points[0])
        seed = trial_seed(spec.master_seed, 0)
        chans = generate_channel_set(cfg.k_users, cfg.nr, cfg.nt, seed, cfg.noise_power)
        region = sample_utility_region(cfg, chans, spec.region_samples, np.random.default_rng(seed))
    return ExperimentResult(spec=spec, records=records, summary=summarize(spec, records), region=region)


# -- CSV output --------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else repr(float(x))
    return str(x)


def _metadata(spec: ExperimentSpec) -> list[str]:
    b, s = spec.base, spec.solver
    return [
        f"# experiment={spec.name}",
        f"# K={b.k_users}",
        f"# nt={b.nt}",
        f"# nr={b.nr}",
        f"# sigma2={_fmt(b.noise_power)}",
        f"# pc={_fmt(b.circuit_power)}",
        "# budgets=" + ";".join(_fmt(x) for x in b.budgets),
        f"# eps1={_fmt(s.br.eps1)}",
        f"# eps2={_fmt(s.outer_tol)}",
        f"# max_iters={s.max_outer_iters}",
        f"# h_max={'auto' if s.br.h_max is None else _fmt(s.br.h_max)}",
        f"# trials={spec.trials}",
        f"# master_seed={spec.master_seed}",
        "# sweep=" + ";".join(_fmt(v) for v in spec.sweep_values),
    ]


def _write(path: Path, meta: list[str], header: list[str], rows) -> None:
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            for line in meta:
                fh.write(line + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def trial_rows(records: list[TrialRecord], algorithms=None):
    for rec in records:
        for algo, out in rec.outcomes.items():
            if algorithms is not None and algo not in algorithms:
                continue
            for user, u in enumerate(out.utilities):
                yield [
                    rec.trial_index,
                    rec.seed,
                    algo,
                    user + 1,
                    _fmt(u),
                    _fmt(out.welfare),
                    _fmt(out.converged),
                    _fmt(out.epsilon_hat),
                    _fmt(rec.sweep_value),
                ]


def summary_rows(summary: list[SummaryRow]):
    for row in summary:
        mu = list(row.mean_utilities) + [math.nan, math.nan]
        yield [
            _fmt(row.sweep_value),
            row.algo,
            _fmt(row.mean_welfare),
            _fmt(row.stderr_welfare),
            _fmt(mu[0]),
            _fmt(mu[1]),
            row.n_trials,
        ]


def emit_csv(result: ExperimentResult, out_dir, prefix: str = "") -> dict[str, Path]:
    """Write ``trials.csv`` and ``summary.csv`` (plus ``region.csv`` when present)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    meta = _metadata(result.spec)
    paths = {"trials": out / f"{prefix}trials.csv", "summary": out / f"{prefix}summary.csv"}
    _write(paths["trials"], meta, TRIALS_HEADER, trial_rows(result.records))
    _write(paths["summary"], meta, SUMMARY_HEADER, summary_rows(result.summary))
    if result.region is not None:
        K = result.spec.base.k_users
        front = {id(s) for s in pareto_filter(result.region)}
        rows = (
            [i] + [_fmt(float(u)) for u in s.utilities] + [_fmt(id(s) in front)] for i, s in enumerate(result.region)
        )
        paths["region"] = out / f"{prefix}region.csv"
        _write(paths["region"], meta, ["sample"] + [f"u{k + 1}" for k in range(K)] + ["pareto"], rows)
    return paths


def read_trials_csv(path) -> list[dict]:
    """Parse a trials file back into dicts (metadata lines skipped)."""
    with Path(path).open(encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
