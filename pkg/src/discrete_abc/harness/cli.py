"""Command-line entry point: ``discrete-abc {run,posterior,table-gen,validate}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..bitstate import RngStream
from ..problems.nas import nas_synth_table
from .config import ConfigError, ExperimentConfig, load_config
from .experiment import build_problem, posterior_report, resolve_out_dir, run_experiment


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="discrete-abc", description="Population MCMC and ABC samplers over bit vectors.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def overrides(sp):
        sp.add_argument("config", help="experiment configuration file")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--out-dir", help="output directory (default: config, then $DISCRETE_ABC_OUT)")
        sp.add_argument("--repeats", type=int, help="override the number of repeats")
        sp.add_argument("--stride", type=int, help="override the CSV row stride")
        sp.add_argument("--workers", type=int, help="parallel worker processes")

    overrides(sub.add_parser("run", help="run an experiment and write CSV/JSON"))
    overrides(sub.add_parser("posterior", help="negative log posterior of final chains (qmr)"))
    overrides(sub.add_parser("validate", help="check a configuration without running it"))
    tg = sub.add_parser("table-gen", help="write a synthetic architecture table")
    tg.add_argument("seed", type=int)
    tg.add_argument("out")
    return p


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    changes = {}
    for name in ("seed", "repeats", "stride", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if getattr(args, "out_dir", None):
        changes["out_dir"] = args.out_dir
    return cfg.replace(**changes) if changes else cfg


def _validate(cfg: ExperimentConfig) -> int:
    cells = cfg.sampler.cells()
    print(f"config ok: {cfg.name} (hash {cfg.config_hash})")
    print(f"  problem {cfg.problem.kind}, mode {cfg.sampler.mode}, kernels {', '.join(cfg.sampler.kernels)}")
    print(f"  {len(cells)} grid cell(s) x {cfg.repeats} repeat(s) = {len(cells) * cfg.repeats} runs per kernel")
    print(f"  {cfg.iterations} iterations, rows every {cfg.stride}")
    return 0


def _run(cfg: ExperimentConfig) -> int:
    out = resolve_out_dir(cfg) or Path("discrete_abc_out")
    result = run_experiment(cfg, out)
    for path in result.files:
        print(path)
    return 0


def _posterior(cfg: ExperimentConfig) -> int:
    if cfg.problem.kind != "qmr":
        raise ConfigError("problem.kind", "posterior reports need the qmr problem")
    cfg = dataclasses.replace(cfg, metrics=tuple(sorted(set(cfg.metrics) | {"posterior"}))).check()
    result = run_experiment(cfg, out_dir=None)
    report = {
        f"{r.kernel}/cell{r.cell}/repeat{r.repeat}": r.extras["posterior"] for r in result.runs
    }
    text = json.dumps(report, indent=1, sort_keys=True)
    out = resolve_out_dir(cfg)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{cfg.name}.posterior.json"
        path.write_text(text)
        print(path)
    else:
        print(text)
    return 0


def _table_gen(seed: int, out: str) -> int:
    table = nas_synth_table(RngStream(seed, ("nas-table",)))
    table.save(out)
    key, val = table.metadata["global_min_key"], table.metadata["global_min_val"]
    print(f"wrote {len(table)} architectures to {out}; global minimum {key} = {val!r}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "table-gen":
            return _table_gen(args.seed, args.out)
        cfg = _load(args)
        if args.command == "validate":
            return _validate(cfg)
        if args.command == "run":
            return _run(cfg)
        return _posterior(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure of the experiment itself
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
