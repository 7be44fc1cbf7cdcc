"""Command-line entry point: ``fedacs run|partition|diagnose <config>``.

Every output is computed in memory first and then written file by file
through a temporary name and ``os.replace``, so a failed run leaves no
partial files behind and a config that fails validation never touches
the output directory.

Exit codes: 0 success, 1 validation error, 2 runtime or divergence error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .algorithms import AlgoConfig
from .config import ExperimentConfig, parse_config
from .data import class_counts, partition
from .diagnostics import loglog_fit, run_stationarity
from .errors import ConfigError, ContractViolation, FedACSError
from .experiment import CSV_COLUMNS, build_problem, load_dataset, run_experiment
from .schedules import Schedule

log = logging.getLogger("fedacs")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
TRACE_COLUMNS = ("round", "objective", "grad_norm_sq", "running_min")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_outputs(output_dir, files: Dict[str, str]) -> List[Path]:
    """Write ``{name: text}`` atomically; on error remove what was already written."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out)
            try:
                with os.fdopen(fd, "w", newline="") as fh:
                    fh.write(text)
                os.replace(tmp, out / name)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
            written.append(out / name)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return written


# ---------------------------------------------------------------- run

def run_outputs(config: ExperimentConfig) -> Dict[str, str]:
    files: Dict[str, str] = {}
    summary = {"algorithms": {}, "seeds": list(config.seeds)}
    for alg in config.algorithms:
        series = run_experiment(config, alg)
        for seed, records in series.records.items():
            files[f"metrics_{alg}_seed{seed}.csv"] = _csv_text(
                CSV_COLUMNS, [r.csv_row() for r in records]
            )
        for seed, entries in series.attention_log.items():
            files[f"attention_{alg}_seed{seed}.jsonl"] = "".join(
                json.dumps(e, sort_keys=True) + "\n" for e in entries
            )
        summary["algorithms"][alg] = series.summary()
    ranking = sorted(
        config.algorithms,
        key=lambda a: (-summary["algorithms"][a]["final_accuracy_mean"], config.algorithms.index(a)),
    )
    summary["ranking"] = ranking
    files["summary.json"] = _json_text(summary)
    files["config_resolved.json"] = _json_text(config.to_dict())
    return files


# ---------------------------------------------------------- partition

def partition_outputs(config: ExperimentConfig) -> Dict[str, str]:
    if config.dataset["kind"] == "quadratic":
        raise ConfigError("partition: dataset.kind = 'quadratic' has no labeled data to partition")
    files = {}
    shared = None
    if config.dataset["kind"] in ("idx", "csv"):
        shared = load_dataset(config, config.seeds[0])
    for seed in config.seeds:
        data = shared if shared is not None else load_dataset(config, seed)
        shards = partition(data, config.partition_config(seed))
        C = data.num_classes
        rows = []
        for s in shards:
            counts = class_counts(s, C)
            rows.append([s.client_id, len(s.train), len(s.test), *map(int, counts)])
        header = ["client_id", "train_size", "test_size", *[f"class_{c}" for c in range(C)]]
        files[f"manifest_seed{seed}.csv"] = _csv_text(header, rows)
    return files


# ----------------------------------------------------------- diagnose

def _diagnose_algo(config: ExperimentConfig, K: int, seed: int) -> AlgoConfig:
    d = config.diagnose
    if d.schedule == "constant_theorem":
        alpha = beta = Schedule("constant_theorem")
    elif d.schedule == "diminishing":
        alpha = beta = Schedule("diminishing", a=d.a, b=d.b)
    else:
        alpha, beta = Schedule("fixed", d.alpha), Schedule("fixed", d.beta)
    return AlgoConfig(
        algorithm="fedacs", lam=config.algo.lam, p=config.algo.p, rounds=K,
        local_steps=config.algo.local_steps, batch_size=config.algo.batch_size,
        participation=config.algo.participation, alpha=alpha, beta=beta, seed=seed,
    )


def _trace_rows(trace):
    return [
        [k, repr(o), repr(g), repr(m)]
        for k, o, g, m in zip(trace.rounds, trace.objective, trace.grad_norm_sq, trace.running_min)
    ]


def _decile_check(values) -> dict:
    g = np.asarray(values[1:], dtype=np.float64)
    n = max(1, g.size // 10)
    first, last = float(g[:n].min()), float(g[-n:].min())
    return {
        "first_decile_min": first,
        "last_decile_min": last,
        "ratio": first / last if last > 0 else float("inf"),
        "passed": bool(last < first / 10.0),
    }


def _safe_fit(ks, values):
    try:
        fit = loglog_fit(ks, values)
    except ContractViolation:
        if np.all(np.asarray(values) > 0):
            raise
        # all-zero trace (already stationary): no decay measurable
        return {"slope": 0.0, "intercept": None, "residual": 0.0}
    return {"slope": fit.slope, "intercept": fit.intercept, "residual": fit.residual}


def diagnose_outputs(config: ExperimentConfig) -> Dict[str, str]:
    d = config.diagnose
    files = {}
    report = {"schedule": d.schedule, "checkpoints": list(d.checkpoints), "seeds": {}}
    for seed in config.seeds:
        problem = build_problem(config, seed)
        entry = {}
        if d.schedule == "constant_theorem":
            # each K is its own run: the step sizes depend on K
            values = []
            for K in d.checkpoints:
                trace, _, _ = run_stationarity(problem.spec, problem.shards,
                                               _diagnose_algo(config, K, seed), problem.w0)
                files[f"trace_seed{seed}_K{K}.csv"] = _csv_text(TRACE_COLUMNS, _trace_rows(trace))
                values.append(trace.running_min[-1])
            entry["runs"] = "separate"
        else:
            trace, _, _ = run_stationarity(problem.spec, problem.shards,
                                           _diagnose_algo(config, d.run_length, seed), problem.w0)
            files[f"trace_seed{seed}.csv"] = _csv_text(TRACE_COLUMNS, _trace_rows(trace))
            values = [trace.value_at(K) for K in d.checkpoints]
            entry["runs"] = "single"
            if d.run_length >= 10:
                entry["liminf_check"] = _decile_check(trace.grad_norm_sq)
        entry["values"] = [float(v) for v in values]
        entry.update(_safe_fit(d.checkpoints, values))
        report["seeds"][str(seed)] = entry
    files["diagnose_report.json"] = _json_text(report)
    return files


# ---------------------------------------------------------------- main

COMMANDS = {"run": run_outputs, "partition": partition_outputs, "diagnose": diagnose_outputs}


def _parse_seeds(text: str) -> List[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds: expected a comma list of integers, got {text!r}") from None
    if not seeds:
        raise ConfigError("--seeds: empty list")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedacs", description="Personalized federated learning simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "train every configured algorithm and write per-round metrics"),
        ("partition", "partition only and write a per-client manifest"),
        ("diagnose", "stationarity trace and rate fit"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to a TOML experiment config")
        p.add_argument("--output-dir", help="overrides output_dir from the config")
        p.add_argument("--seeds", help="comma-separated seeds; overrides the config")
        p.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        seeds = _parse_seeds(args.seeds) if args.seeds is not None else None
        config = parse_config(args.config).with_overrides(seeds=seeds, output_dir=args.output_dir)
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_INVALID
    try:
        files = COMMANDS[args.command](config)
        written = write_outputs(config.output_dir, files)
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_INVALID
    except (FedACSError, OSError, ValueError, FloatingPointError) as exc:
        log.error("%s failed: %s", args.command, exc)
        return EXIT_RUNTIME
    log.info("wrote %d files to %s", len(written), config.output_dir)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
