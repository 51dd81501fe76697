"""Command-line experiments: ``inject``, ``run``, ``eval`` and ``sweep``.

Every command writes a ``manifest.json`` next to its outputs recording the
inputs (with SHA-256), the configuration and the seed.

Seed splitting for ``sweep``: when ``--seeds`` is a count ``N``, child ``k``
at percentage ``p`` uses ``SeedSequence([seed, round(1000 * p), k])``'s first
32-bit word.  An explicit comma-separated ``--seeds`` list is used as-is.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .corrupt import POLICIES, OutlierSpec, inject
from .evaluation import (
    classify_by_chi2,
    evaluate,
    precision_recall_f1,
    reference_trajectory,
)
from .io_g2o import G2OFormatError, read_g2o, read_labels, save_g2o, write_labels
from .ipc import IpcConfig, format_decision_log, parse_decision_log, run_ipc
from .solver import SolverConfig

logger = logging.getLogger("ipc_pgo")

METRIC_FIELDS = ["dataset", "seed", "percentage", "precision", "recall", "f1", "ate", "rpe", "actxc"]


class CliError(Exception):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir: Path, command: str, inputs: dict, config: dict, seed, started: str):
    manifest = {
        "tool": "ipc_pgo",
        "version": __version__,
        "command": command,
        "inputs": {k: {"path": str(v), "sha256": _sha256(v)} for k, v in inputs.items() if v},
        "config": config,
        "seed": seed,
        "output_dir": str(out_dir),
        "started": started,
        "finished": _now(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _ipc_config(args) -> IpcConfig:
    return IpcConfig(alpha=args.alpha, solver=SolverConfig(s=args.scale, max_iterations=args.max_iter))


def _dataset_name(path) -> str:
    name = Path(path).name
    for suffix in (".corrupted.g2o", ".g2o"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(path).stem


# -- commands ------------------------------------------------------------------


def cmd_inject(args) -> dict:
    started = _now()
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph, _ = read_g2o(args.input)
    name = args.name or _dataset_name(args.input)
    spec = OutlierSpec(
        percentage=args.percentage,
        policy=args.policy,
        seed=args.seed,
        local_window=args.local_window,
        translation_range=args.translation_range,
        shuffle=not args.no_shuffle,
        min_chi2=args.min_chi2,
    )
    corrupted, labels = inject(graph, spec, name=name)
    g2o_path = out / f"{name}.corrupted.g2o"
    labels_path = out / f"{name}.labels"
    save_g2o(corrupted, g2o_path)
    labels_path.write_text(write_labels(labels))
    write_manifest(out, "inject", {"input": args.input}, asdict(spec), args.seed, started)
    return {"g2o": g2o_path, "labels": labels_path}


def cmd_run(args) -> dict:
    started = _now()
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph, _ = read_g2o(args.input)
    config = _ipc_config(args)
    engine = run_ipc(graph, config)
    traj_path = out / "trajectory.g2o"
    log_path = out / "decisions.csv"
    save_g2o(engine.graph, traj_path)
    log_path.write_text(format_decision_log(engine.records, timing=not args.no_timing))
    accepted = sum(r.accepted for r in engine.records)
    logger.info("accepted %d of %d loop closures", accepted, len(engine.records))
    write_manifest(out, "run", {"input": args.input}, _config_dict(config), args.seed, started)
    return {"trajectory": traj_path, "decisions": log_path}


def _config_dict(config: IpcConfig) -> dict:
    return {"alpha": config.alpha, "dof": config.dof, "threshold": config.threshold, "solver": asdict(config.solver)}


def cmd_eval(args) -> dict:
    started = _now()
    run_dir = Path(args.run_dir)
    out = Path(args.output_dir or run_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels_text = Path(args.labels).read_text()
    est, _ = read_g2o(run_dir / "trajectory.g2o")
    rows = parse_decision_log((run_dir / "decisions.csv").read_text())
    ref_graph, _ = read_g2o(args.reference)
    if args.reference_as_is:
        ref = ref_graph
    else:
        ref, rep = reference_trajectory(ref_graph)
        logger.info("reference batch solve: %d iterations, objective %.6g", rep.iterations, rep.final_objective)
    if ref.n_vertices != est.n_vertices:
        raise CliError(f"reference has {ref.n_vertices} poses, run has {est.n_vertices}")

    n_loops = len(rows)
    manifest = read_labels(labels_text, n_loops)
    accepted = [r["edge"] for r in rows if r["accepted"]]
    times = [r["seconds"] for r in rows if "seconds" in r]
    report = evaluate(accepted, manifest, n_loops, est, ref, times, percentage=args.percentage)
    if args.mode == "chi2":
        if not args.input:
            raise CliError("--mode chi2 needs --input (the corrupted graph)")
        graph, _ = read_g2o(args.input)
        graph.poses[:] = est.poses
        counts = classify_by_chi2(graph, manifest, args.alpha)
        p, r, f1 = precision_recall_f1(counts)
        report.precision, report.recall, report.f1 = p, r, f1
        report.tp, report.fp, report.tn, report.fn = counts.tp, counts.fp, counts.tn, counts.fn

    (out / "metrics.txt").write_text(report.to_text())
    (out / "metrics.json").write_text(report.to_json() + "\n")
    inputs = {"run_trajectory": run_dir / "trajectory.g2o", "decisions": run_dir / "decisions.csv",
              "labels": args.labels, "reference": args.reference, "input": args.input}
    write_manifest(out, "eval", inputs, {"mode": args.mode, "alpha_th": args.alpha}, manifest.seed, started)
    return {"report": report}


# -- sweep ---------------------------------------------------------------------


def parse_grid(text: str) -> list[float]:
    """``"10:100:10"`` (inclusive range) or ``"10,50,100"``."""
    if ":" in text:
        lo, hi, step = (float(v) for v in text.split(":"))
        n = int(round((hi - lo) / step)) + 1
        return [round(lo + k * step, 9) for k in range(n)]
    return [float(v) for v in text.split(",") if v]


def child_seed(seed: int, percentage: float, k: int) -> int:
    return int(np.random.SeedSequence([seed, int(round(1000 * percentage)), k]).generate_state(1)[0])


def child_seeds(args, percentage: float) -> list[int]:
    spec = str(args.seeds)
    if "," in spec:
        return [int(v) for v in spec.split(",") if v]
    return [child_seed(args.seed, percentage, k) for k in range(int(spec))]


def _fmt_pct(p: float) -> str:
    return f"{p:g}"


def _sweep_child(job: dict) -> dict:
    ns = argparse.Namespace(**job)
    child = Path(ns.output_dir)
    ns_inject = argparse.Namespace(**{**job, "output_dir": str(child / "inject")})
    files = cmd_inject(ns_inject)
    ns_run = argparse.Namespace(**{**job, "input": str(files["g2o"]), "output_dir": str(child / "run")})
    cmd_run(ns_run)
    ns_eval = argparse.Namespace(**{
        **job,
        "run_dir": str(child / "run"),
        "output_dir": str(child / "run"),
        "labels": str(files["labels"]),
        "reference": job["input"],
        "input": str(files["g2o"]),
    })
    report = cmd_eval(ns_eval)["report"]
    return asdict(report)


def cmd_sweep(args) -> dict:
    started = _now()
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for pct in parse_grid(args.grid):
        for s in child_seeds(args, pct):
            job = {k: v for k, v in vars(args).items() if k != "func"}
            job.update(percentage=pct, seed=s, output_dir=str(out / f"p{_fmt_pct(pct)}" / f"s{s}"))
            jobs.append(job)

    results, failures = [], []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_sweep_child, job) for job in jobs]
            for job, fut in zip(jobs, futures):
                try:
                    results.append(fut.result())
                except Exception as exc:  # child failures are recorded, not fatal
                    failures.append((job["output_dir"], repr(exc)))
    else:
        for job in jobs:
            try:
                results.append(_sweep_child(job))
            except Exception as exc:
                failures.append((job["output_dir"], repr(exc)))

    results.sort(key=lambda r: (r["percentage"], r["seed"]))
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(results)
    table = aggregate(results)
    with open(out / "aggregate.csv", "w", newline="") as fh:
        keys = ["percentage", "n", "precision", "recall", "f1", "ate", "rpe", "actxc"]
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(table)
    if failures:
        (out / "failures.txt").write_text("".join(f"{d}\t{e}\n" for d, e in failures))
    write_manifest(out, "sweep", {"input": args.input},
                   {"grid": args.grid, "seeds": str(args.seeds), "alpha": args.alpha,
                    "scale": args.scale, "max_iter": args.max_iter, "policy": args.policy},
                   args.seed, started)
    if failures:
        raise CliError(f"{len(failures)} of {len(jobs)} child runs failed; see failures.txt")
    return {"aggregate": table, "runs": results}


def aggregate(results: list[dict]) -> list[dict]:
    """Mean metrics per percentage, in increasing percentage order."""
    by_pct: dict[float, list[dict]] = {}
    for r in results:
        by_pct.setdefault(r["percentage"], []).append(r)
    table = []
    for pct in sorted(by_pct):
        rows = by_pct[pct]
        entry = {"percentage": pct, "n": len(rows)}
        for key in ("precision", "recall", "f1", "ate", "rpe", "actxc"):
            entry[key] = float(np.mean([r[key] for r in rows]))
        table.append(entry)
    return table


# -- entry point ------------------------------------------------------------------


def _add_ipc_flags(p):
    p.add_argument("--alpha", type=float, default=0.95, help="chi-squared gate confidence")
    p.add_argument("--scale", type=float, default=3.0, help="odometry information scale s")
    p.add_argument("--max-iter", type=int, default=25, help="Dog-Leg iteration cap per loop closure")
    p.add_argument("--no-timing", action="store_true", help="omit the wall-time column so logs are byte-reproducible")


def _add_inject_flags(p):
    p.add_argument("--percentage", type=float, default=0.0)
    p.add_argument("--policy", choices=POLICIES, default="random")
    p.add_argument("--local-window", type=int, default=20)
    p.add_argument("--translation-range", type=float, default=None)
    p.add_argument("--no-shuffle", action="store_true", help="append outliers after all true loops")
    p.add_argument("--min-chi2", type=float, default=None, help="redraw outliers whose chi2 falls below this")
    p.add_argument("--name", default=None, help="dataset name (default: input file stem)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipc-pgo", description="Loop-closure outlier rejection experiments on planar g2o pose graphs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inject", help="add synthetic outlier loop closures to a g2o file")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_inject_flags(p)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("run", help="stream a g2o file through the incremental consensus engine")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_ipc_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score a run against labels and a reference trajectory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--reference", required=True, help="outlier-free g2o (batch-optimized unless --reference-as-is)")
    p.add_argument("--reference-as-is", action="store_true")
    p.add_argument("--input", default=None, help="corrupted g2o, needed for --mode chi2")
    p.add_argument("--mode", choices=("cns", "chi2"), default="cns")
    p.add_argument("--alpha", type=float, default=0.95, help="alpha_th for --mode chi2")
    p.add_argument("--percentage", type=float, default=float("nan"))
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="inject -> run -> eval over a percentage grid and seed list")
    p.add_argument("--input", required=True, help="outlier-free g2o")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--grid", default="10:100:10")
    p.add_argument("--seeds", default="10", help="count N (derived from --seed) or explicit list a,b,c")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--mode", choices=("cns", "chi2"), default="cns")
    p.add_argument("--reference-as-is", action="store_true")
    _add_ipc_flags(p)
    _add_inject_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (OSError, G2OFormatError, CliError, ValueError) as exc:
        print(f"ipc-pgo {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
