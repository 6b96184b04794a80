"""Cross-evaluated experiment runs and their CSV/JSON outputs.

Each repeat ``r`` owns the substream ``("repeat", r)`` of the master seed.
The problem instance comes from its ``"instance"`` child and the initial
population from ``("init", C)``, so every kernel and grid cell of a repeat
starts from the same instance and the same population.  Chain dynamics use
``("dynamics", kernel, cell)``.

One CSV per kernel holds every grid cell and repeat.  Its rows are written at
iterations ``stride, 2*stride, ...``; counts in the ``proposals``,
``within_tolerance`` and ``accepted`` columns are cumulative within a run.
Wall-clock time only appears in the JSON summary so that CSV files are a pure
function of the configuration.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
import os
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..bitstate import BitVector, RngStream, hamming
from ..kernels import KernelSpec, Population
from ..problems.binnn import BinNetSpec, BinNNProblem, binnn_error, ensemble_vote, load_mnist_binary
from ..problems.nas import NasProblem, NasTable, nas_synth_table
from ..problems.qmr import QmrProblem, load_instance, qmr_log_joint_table, MAX_ENUMERATION_L
from ..sampler import init_population, run
from .config import ExperimentConfig, parse_config, serialize_config

__all__ = [
    "CSV_COLUMNS",
    "ExperimentResult",
    "MetricsRow",
    "OUT_ENV",
    "PosteriorReport",
    "build_problem",
    "config_from_csv",
    "ensemble_report",
    "error_metrics",
    "posterior_report",
    "run_experiment",
]

OUT_ENV = "DISCRETE_ABC_OUT"

CSV_COLUMNS = (
    "repeat", "kernel", "population", "p_flip", "epsilon", "iteration",
    "avg_error", "min_error", "proposals", "within_tolerance", "accepted",
)


@dataclass
class MetricsRow:
    repeat: int
    kernel: str
    population: int
    p_flip: float
    epsilon: str
    iteration: int
    avg_error: float
    min_error: float
    proposals: int
    within_tolerance: int
    accepted: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0

    def as_csv(self) -> list[str]:
        return [
            str(self.repeat), self.kernel, str(self.population), repr(self.p_flip), self.epsilon,
            str(self.iteration), repr(self.avg_error), repr(self.min_error),
            str(self.proposals), str(self.within_tolerance), str(self.accepted),
        ]


@dataclass
class RunRecord:
    """Outcome of one (kernel, grid cell, repeat) run."""

    kernel: str
    cell: int
    repeat: int
    population: int
    p_flip: float
    epsilon: str
    rows: list
    final_avg_error: float
    final_min_error: float
    best_error: float
    first_best_iteration: Optional[int]
    proposals: int
    within_tolerance: int
    accepted: int
    wall_clock: float
    last_populations: list = field(repr=False, default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list
    summary: dict
    files: list

    def rows(self, kernel: Optional[str] = None) -> list:
        return [row for r in self.runs if kernel in (None, r.kernel) for row in r.rows]

    def select(self, kernel: str, cell: int = 0) -> list:
        return sorted((r for r in self.runs if r.kernel == kernel and r.cell == cell), key=lambda r: r.repeat)


# --- metrics ----------------------------------------------------------------


def error_metrics(pop: Sequence[BitVector], reference) -> tuple[float, float]:
    """(population average, population minimum) of the per-chain error.

    ``reference`` is the true state (Hamming error), a problem exposing
    ``error(x)``, or any callable mapping a state to its error.
    """
    if isinstance(reference, BitVector):
        errs = [hamming(x, reference) for x in pop]
    else:
        fn = getattr(reference, "error", reference)
        errs = [fn(x) for x in pop]
    if not errs:
        raise ValueError("empty population")
    return float(np.mean(errs)), float(np.min(errs))


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def ensemble_report(final_populations: Sequence[Sequence[Population]], problem: BinNNProblem) -> dict:
    """Majority-vote and best-single-model test errors.

    ``final_populations[r]`` holds the last K populations of repeat ``r``.
    Every chain of every one of them joins one pooled ensemble (K x C x
    repeats models).  Per repeat, the single model is the member with the
    lowest training error (first on ties); its test error and the repeat's
    own ensemble error are summarised as mean and standard error over
    repeats.  The test set is used when the problem has one, otherwise the
    training set.
    """
    if not isinstance(problem, BinNNProblem):
        raise TypeError("ensemble_report needs a binary-net problem")
    data = problem.test if problem.test is not None else problem.train
    pooled, ens, single = [], [], []
    for pops in final_populations:
        models = [x for pop in pops for x in pop]
        if not models:
            raise ValueError("empty ensemble")
        pooled.extend(models)
        ens.append(ensemble_vote(problem.spec, models, data))
        train_err = [problem.error(x) for x in models]
        single.append(binnn_error(problem.spec, models[int(np.argmin(train_err))], data))
    if not pooled:
        raise ValueError("empty ensemble")
    e_mean, e_se = _mean_se(ens)
    s_mean, s_se = _mean_se(single)
    return {
        "ensemble_error": ensemble_vote(problem.spec, pooled, data),
        "models": len(pooled),
        "repeat_ensemble_error": {"mean": e_mean, "se": e_se},
        "single_error": {"mean": s_mean, "se": s_se},
        "per_repeat_ensemble": ens,
        "per_repeat_single": single,
    }


@dataclass
class PosteriorReport:
    chain_values: tuple
    reference_min: Optional[float]
    map_state: Optional[BitVector]

    def to_dict(self) -> dict:
        return {
            "chain_values": list(self.chain_values),
            "reference_min": self.reference_min,
            "map_state": None if self.map_state is None else str(self.map_state),
        }


def posterior_report(problem: QmrProblem, pop: Sequence[BitVector], max_L: int = MAX_ENUMERATION_L) -> PosteriorReport:
    """Unnormalised negative log posterior per chain, plus the exact minimum when enumerable."""
    values = tuple(problem.neg_log_posterior(x) for x in pop)
    if problem.model.L > max_L:
        return PosteriorReport(values, None, None)
    table = qmr_log_joint_table(problem.model, problem.observed, max_L)
    code = int(np.argmax(table))
    return PosteriorReport(values, float(-table[code]), BitVector(problem.model.L, code))


# --- problem construction ---------------------------------------------------


@functools.lru_cache(maxsize=4)
def _nas_table(pcfg) -> NasTable:
    if pcfg.table:
        return NasTable.load(pcfg.table)
    return nas_synth_table(
        RngStream(pcfg.table_seed, ("nas-table",)),
        floor=pcfg.floor, spread=pcfg.spread, length_scale=pcfg.length_scale,
        path_weight=pcfg.path_weight, noise=pcfg.noise, test_noise=pcfg.test_noise,
    )


@functools.lru_cache(maxsize=2)
def _mnist(pcfg) -> tuple:
    args = dict(digits=pcfg.digits, size=pcfg.image_size, threshold=pcfg.threshold)
    train = load_mnist_binary(pcfg.train_images, pcfg.train_labels, **args)
    test = load_mnist_binary(pcfg.test_images, pcfg.test_labels, **args) if pcfg.test_images else None
    return train, test


@functools.lru_cache(maxsize=2)
def _qmr_instance(path: str):
    return load_instance(path)


def build_problem(cfg: ExperimentConfig, repeat: int):
    """Problem instance of a repeat, deterministic in (config, repeat)."""
    p = cfg.problem
    rng = RngStream(cfg.seed).substream("repeat", repeat).substream("instance")
    if p.kind == "qmr":
        if p.instance:
            return QmrProblem(*_qmr_instance(p.instance))
        return QmrProblem.sample(p.L, p.M, rng, beta_a=p.beta_a, beta_b=p.beta_b, n_obs=p.n_obs, prior_p=p.prior_p)
    if p.kind == "binnn":
        if p.dataset == "synthetic":
            # one dataset per experiment so ensembles can pool repeats
            data = RngStream(cfg.seed).substream("data")
            return BinNNProblem.synthetic(p.input_dim, p.hidden, p.n_train, data, n_test=p.n_test)
        train, test = _mnist(p)
        return BinNNProblem(BinNetSpec(p.input_dim, p.hidden), train, test)
    if p.kind == "nas":
        return NasProblem(_nas_table(p))
    raise ValueError(f"unknown problem kind {p.kind!r}")  # pragma: no cover


# --- running ----------------------------------------------------------------


def _run_one(cfg: ExperimentConfig, kernel: str, cell: int, repeat: int) -> RunRecord:
    size, p_flip, sched = cfg.sampler.cells()[cell]
    spec = KernelSpec(kernel, p_flip=p_flip, pi=cfg.sampler.pi, theta=cfg.sampler.theta)
    problem = build_problem(cfg, repeat)
    rep = RngStream(cfg.seed).substream("repeat", repeat)
    pop = init_population(problem.sample_prior, size, rep.substream("init", size))
    dyn = rep.substream("dynamics", kernel, cell)
    eps_label = "none" if sched is None else str(sched)

    rows, last = [], deque(maxlen=cfg.ensemble_last)
    prop = within = acc = 0
    avg_err, min_err = error_metrics(pop, problem)
    best, first_best = min_err, 0
    t0 = time.perf_counter()
    for st in run(problem, spec, sched, cfg.iterations, dyn, population=pop, mode=cfg.sampler.mode):
        prop += st.proposals
        within += st.within_tolerance
        acc += st.accepted
        avg_err, min_err = float(np.mean(st.errors)), float(np.min(st.errors))
        if min_err < best:
            best, first_best = min_err, st.iteration
        last.append(st.population)
        if st.iteration % cfg.stride == 0:
            rows.append(MetricsRow(repeat, kernel, size, p_flip, eps_label, st.iteration,
                                   avg_err, min_err, prop, within, acc))
        pop = st.population
    wall = time.perf_counter() - t0

    extras = {}
    if "posterior" in cfg.metrics:
        extras["posterior"] = posterior_report(problem, pop).to_dict()
    if "test_error" in cfg.metrics and hasattr(problem, "test_error"):
        errs = [problem.error(x) for x in pop]
        extras["test_error_of_best"] = problem.test_error(pop[int(np.argmin(errs))])
    return RunRecord(
        kernel, cell, repeat, size, p_flip, eps_label, rows, avg_err, min_err, best,
        first_best, prop, within, acc, wall,
        last_populations=[[str(x) for x in p] for p in last] if "ensemble" in cfg.metrics else [],
        extras=extras,
    )


def _run_star(args) -> RunRecord:
    return _run_one(*args)


def resolve_out_dir(cfg: ExperimentConfig, out_dir=None) -> Optional[Path]:
    chosen = out_dir or cfg.out_dir or os.environ.get(OUT_ENV)
    return Path(chosen) if chosen else None


def run_experiment(cfg: ExperimentConfig, out_dir=None, *, workers: Optional[int] = None) -> ExperimentResult:
    """Run every (kernel, grid cell, repeat) and write outputs when a directory is known.

    The output directory is ``out_dir``, else ``cfg.out_dir``, else the
    ``DISCRETE_ABC_OUT`` environment variable; with none of them nothing is
    written.
    """
    cfg.check()
    n_cells = len(cfg.sampler.cells())
    tasks = [(cfg, k, c, r) for k in cfg.sampler.kernels for c in range(n_cells) for r in range(cfg.repeats)]
    workers = workers or cfg.workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_star, tasks))
    else:
        runs = [_run_one(*t) for t in tasks]

    summary = _summarize(cfg, runs)
    files = []
    target = resolve_out_dir(cfg, out_dir)
    if target is not None:
        files = write_outputs(cfg, runs, summary, target)
    return ExperimentResult(cfg, runs, summary, files)


def _summarize(cfg: ExperimentConfig, runs: list) -> dict:
    out = {
        "experiment": cfg.name,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash,
        "repeats": cfg.repeats,
        "iterations": cfg.iterations,
        "error_bars": "standard error over repeats",
        "kernels": {},
    }
    cells = cfg.sampler.cells()
    for kernel in cfg.sampler.kernels:
        per_cell = []
        for c, (size, p_flip, sched) in enumerate(cells):
            rs = [r for r in runs if r.kernel == kernel and r.cell == c]
            entry = {"population": size, "p_flip": p_flip, "epsilon": "none" if sched is None else str(sched)}
            for name, vals in (
                ("final_avg_error", [r.final_avg_error for r in rs]),
                ("final_min_error", [r.final_min_error for r in rs]),
                ("best_error", [r.best_error for r in rs]),
                ("acceptance_rate", [r.acceptance_rate for r in rs]),
                ("within_tolerance_rate", [r.within_tolerance / r.proposals if r.proposals else 0.0 for r in rs]),
            ):
                mean, se = _mean_se(vals)
                entry[name] = {"mean": mean, "se": se}
            entry["first_best_iteration"] = [r.first_best_iteration for r in rs]
            entry["wall_clock_seconds"] = [round(r.wall_clock, 4) for r in rs]
            if "ensemble" in cfg.metrics and rs:
                pops = [[[BitVector.from_string(t) for t in p] for p in r.last_populations] for r in rs]
                entry["ensemble"] = ensemble_report(pops, build_problem(cfg, 0))
            if any("posterior" in r.extras for r in rs):
                entry["posterior"] = [r.extras["posterior"] for r in rs]
            if any("test_error_of_best" in r.extras for r in rs):
                entry["test_error_of_best"] = dict(zip(("mean", "se"), _mean_se([r.extras["test_error_of_best"] for r in rs])))
            per_cell.append(entry)
        out["kernels"][kernel] = per_cell
    return out


def csv_path(out_dir, cfg: ExperimentConfig, kernel: str) -> Path:
    return Path(out_dir) / f"{cfg.name}__{kernel}.csv"


def write_outputs(cfg: ExperimentConfig, runs: list, summary: dict, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    text_cfg = serialize_config(cfg.identity())
    for kernel in cfg.sampler.kernels:
        buf = io.StringIO()
        buf.write(f"# experiment={cfg.name} kernel={kernel} seed={cfg.seed} config_hash={cfg.config_hash}\n")
        buf.write("# columns: counts are cumulative per run; error bars in the summary are over repeats\n")
        for line in text_cfg.splitlines():
            buf.write(f"# config: {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in sorted((r for r in runs if r.kernel == kernel), key=lambda r: (r.cell, r.repeat)):
            for row in r.rows:
                w.writerow(row.as_csv())
        path = csv_path(out_dir, cfg, kernel)
        path.write_text(buf.getvalue())
        files.append(path)
    js = out_dir / f"{cfg.name}.json"
    js.write_text(json.dumps(summary, indent=1, sort_keys=True))
    files.append(js)
    return files


def config_from_csv(path) -> ExperimentConfig:
    """Recover the configuration embedded in a CSV header."""
    lines = []
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            if line.startswith("# config: "):
                lines.append(line[len("# config: "):])
    if not lines:
        raise ValueError(f"{path}: no embedded configuration")
    return parse_config("".join(lines))


def read_csv_rows(path) -> list[dict]:
    with open(path) as f:
        body = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(body))
