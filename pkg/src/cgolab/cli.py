"""Command line runner: ``cgolab {verify,cgo,recover,average}``.

Exit codes: 0 every assertion passed, 1 an assertion failed, 2 the config
was rejected (schema, regime gate, unreadable file). Numeric tables are
written with 17 significant digits so that reruns compare byte for byte;
run_manifest.json is the only file carrying wall-clock data.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field

from . import __version__
from .carleman import _jsonable
from .config import ESTIMATE_NAMES, ConfigError, ExperimentConfig, load_config
from .suite import average_task, cgo_task, recover_task, run_verify_tasks

log = logging.getLogger("cgolab")

__all__ = ["RunManifest", "main", "run_verify", "run_cgo", "run_recover", "run_average", "build_parser"]

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


@dataclass
class RunManifest:
    command: str
    config_hash: str
    version: str
    seed: int
    out_dir: str
    tasks: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    wall_clock: dict = field(default_factory=dict)

    def write_text(self, name: str, text: str):
        path = os.path.join(self.out_dir, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        if name not in self.files:
            self.files.append(name)
        return path

    def write_json(self, name: str, obj):
        return self.write_text(name, json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n")

    def write_csv(self, name: str, rows: list, columns: list | None = None):
        columns = columns or (list(rows[0]) if rows else [])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
        return self.write_text(name, buf.getvalue())

    def write_series(self, name: str, pairs):
        text = "".join(f"{_fmt(float(a))} {_fmt(float(b))}\n" for a, b in pairs)
        return self.write_text(name, text)

    def status(self, task: str, passed: bool, seconds: float):
        self.tasks[task] = "pass" if passed else "fail"
        self.wall_clock[task] = round(seconds, 3)

    @property
    def passed(self) -> bool:
        return all(v == "pass" for v in self.tasks.values())

    def finish(self):
        self.wall_clock["total"] = round(sum(v for k, v in self.wall_clock.items() if k != "total"), 3)
        d = {
            "command": self.command,
            "config_hash": self.config_hash,
            "version": self.version,
            "seed": self.seed,
            "tasks": self.tasks,
            "passed": self.passed,
            "wall_clock_seconds": self.wall_clock,
            "files": sorted(self.files + ["run_manifest.json"]),
        }
        self.write_text("run_manifest.json", json.dumps(d, sort_keys=True, indent=1) + "\n")
        return d


def _manifest(command, cfg: ExperimentConfig, out_dir: str) -> RunManifest:
    os.makedirs(out_dir, exist_ok=True)
    m = RunManifest(command, cfg.digest(), __version__, cfg.seed, out_dir)
    m.write_text("config.json", json.dumps(cfg.data, sort_keys=True, indent=1) + "\n")
    return m


def _summary_rows(reports: dict) -> list:
    rows = []
    for task, reps in reports.items():
        for i, r in enumerate(reps):
            rows.append({"task": task, "index": i, "estimate": r.name,
                         "params": json.dumps(_jsonable(r.params), sort_keys=True),
                         "samples": r.sample_count, "max_ratio": r.max_ratio, "budget": r.budget,
                         "passed": r.passed, "provenance": r.provenance})
    return rows


def run_verify(cfg: ExperimentConfig, out_dir: str, estimates=None, workers: int = 1) -> RunManifest:
    names = list(estimates) if estimates else cfg.suite
    m = _manifest("verify", cfg, out_dir)
    reports = {}
    for name in names:
        t = time.perf_counter()
        reps = run_verify_tasks(cfg, [name], workers)[name]
        reports[name] = reps
        m.status(name, all(r.passed for r in reps), time.perf_counter() - t)
        log.info("%s: %s", name, m.tasks[name])
    m.write_json("reports.json", [r.to_dict() for name in names for r in reports[name]])
    m.write_csv("summary.csv", _summary_rows(reports),
                ["task", "index", "estimate", "params", "samples", "max_ratio", "budget", "passed",
                 "provenance"])
    m.finish()
    return m


def run_cgo(cfg: ExperimentConfig, out_dir: str, workers: int = 1) -> RunManifest:
    m = _manifest("cgo", cfg, out_dir)
    t = time.perf_counter()
    rows, reps = cgo_task(cfg, workers)
    m.write_csv("cgo.csv", rows)
    m.write_json("reports.json", [r.to_dict() for r in reps])
    m.write_series("series/norm_ratio.dat", [(r["tau"], r["norm_ratio"]) for r in rows])
    m.status("cgo", all(r.passed for r in reps), time.perf_counter() - t)
    m.finish()
    return m


RECOVER_COLUMNS = ["q_hat_true_re", "q_hat_true_im", "q_hat_est_re", "q_hat_est_im", "error",
                   "wnorm_X", "qnorm_X", "iterations", "min_symbol", "converged", "closure"]


def run_recover(cfg: ExperimentConfig, out_dir: str, workers: int = 1) -> RunManifest:
    m = _manifest("recover", cfg, out_dir)
    t = time.perf_counter()
    recs, reps, series = recover_task(cfg, workers)
    n = cfg.grid().n
    m.write_csv("recover.csv", [r.row() for r in recs], [f"k{j}" for j in range(n)] + ["tau"] + RECOVER_COLUMNS)
    for key, pairs in series.items():
        m.write_series(f"series/error_k{key}.dat", pairs)
    m.write_json("reports.json", [r.to_dict() for r in reps])
    m.status("recover", all(r.passed for r in reps), time.perf_counter() - t)
    m.finish()
    return m


def run_average(cfg: ExperimentConfig, out_dir: str, workers: int = 1) -> RunManifest:
    m = _manifest("average", cfg, out_dir)
    t = time.perf_counter()
    results, reps = average_task(cfg, workers)
    rows, compare = [], []
    for model, recs in results.items():
        v0 = recs[0].value
        for r in recs:
            row = {"model": model, "lambda": r.lam, "averaged_value": r.value, "modulus": r.modulus}
            row.update({k: v for k, v in r.rhs_terms.items()})
            rows.append(row)
            compare.append({"model": model, "lambda": r.lam,
                            "relative_to_first": r.value / v0 if v0 > 0 else 0.0})
        m.write_series(f"series/average_{model}.dat", [(r.lam, r.value) for r in recs])
    m.write_csv("average.csv", rows)
    m.write_csv("average_compare.csv", compare)
    m.write_json("reports.json", [r.to_dict() for r in reps])
    m.write_json("records.json", {k: [r.to_dict() for r in v] for k, v in results.items()})
    m.status("average", all(r.passed for r in reps), time.perf_counter() - t)
    m.finish()
    return m


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cgolab", description="CGO and Carleman-estimate experiments")
    ap.add_argument("--version", action="version", version=f"cgolab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("verify", "run the inequality verification suite"),
                       ("cgo", "solve for CGO remainders over a tau sweep"),
                       ("recover", "recover Fourier modes of q from CGO solutions"),
                       ("average", "averaged X^{-1/2} norm experiment")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", metavar="PATH", help="JSON config (merged over the defaults)")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--seed", type=int, metavar="U64", help="override the config seed")
        p.add_argument("--workers", type=int, metavar="N", help="parallel workers")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "verify":
            p.add_argument("--estimate", action="append", metavar="NAME", choices=ESTIMATE_NAMES,
                           help="run only this estimate (repeatable)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    over = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
            return EXIT_CONFIG
        over["seed"] = args.seed
    if args.workers is not None:
        if args.workers < 1:
            print("config error: --workers must be positive", file=sys.stderr)
            return EXIT_CONFIG
        over["workers"] = args.workers
    if args.out is not None:
        over["output"] = args.out
    estimates = getattr(args, "estimate", None)
    try:
        cfg = load_config(args.config, over)
        cfg.check(args.command, estimates)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    runner = {"verify": run_verify, "cgo": run_cgo, "recover": run_recover, "average": run_average}
    kw = {"estimates": estimates} if args.command == "verify" else {}
    m = runner[args.command](cfg, cfg.output, workers=cfg.workers, **kw)
    for task, status in m.tasks.items():
        print(f"{task}: {status}")
    print(f"outputs in {cfg.output}")
    return EXIT_PASS if m.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
