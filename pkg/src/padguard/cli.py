"""``padguard`` command line: run, plan, train-dist, eval, report."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, distance, landing, metrics, scenario, simulate
from .world import synthetic_dataset

logger = logging.getLogger("padguard")

# Untuned baseline for the comparison table: the usual library defaults.
LIBRARY_DEFAULTS = distance.GbdtHyperParams(
    max_depth=6, learning_rate=0.3, n_estimators=100,
    colsample_bytree=1.0, colsample_bylevel=1.0, subsample=1.0,
)

SEARCH_SPACE = {
    "max_depth": [2, 3, 4, 5, 6],
    "learning_rate": [0.01, 0.05, 0.1, 0.3],
    "n_estimators": [100, 300, 500],
    "subsample": [0.6, 0.8, 1.0],
    "colsample_bytree": [0.5, 0.8, 1.0],
    "colsample_bylevel": [0.6, 0.8, 1.0],
}


class CliError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, files, **extra) -> Path:
    man = {
        "command": command,
        "version": __version__,
        "files": {f.name: _sha256(f) for f in files},
        **extra,
    }
    path = out / "manifest.json"
    path.write_text(_dump(man))
    return path


# -- run ------------------------------------------------------------------------


def write_trajectory_csv(trace: simulate.SimulationTrace, path: Path) -> None:
    """UAV and pedestrian positions at every control tick, for external plotting."""
    truth = {r["t"]: r["peds"] for r in trace.of_type("truth")}
    ids = sorted(next(iter(truth.values()), {}))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mode", "uav_x", "uav_y", "uav_z"] + [f"{p}_{c}" for p in ids for c in ("x", "y")])
        for r in trace.of_type("tick"):
            peds = truth.get(r["t"], {})
            w.writerow([r["t"], r["mode"], *r["uav"]] + [v for p in ids for v in peds.get(p, ["", ""])])


def cmd_run(scenario_ref, out_dir, seed: int | None = None, csv_out: bool = False) -> dict:
    scn = scenario.resolve(scenario_ref)
    seed = scn.seed if seed is None else seed
    if seed is None:
        raise CliError(f"scenario {scn.id} has no seed; pass --seed")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace = simulate.run_scenario(scn, seed=seed)
    report = metrics.build_report(trace)
    files = [out / "trace.jsonl", out / "report.json"]
    trace.write(files[0])
    files[1].write_text(metrics.dumps_report(report))
    if csv_out:
        files.append(out / "trajectory.csv")
        write_trajectory_csv(trace, files[-1])
    write_manifest(out, "run", files, scenario=scn.id, seed=seed)
    return report


# -- plan -----------------------------------------------------------------------


def cmd_plan(problem_doc: dict, oracle: bool = False, grid_step: float = 0.01) -> dict:
    prob = landing.problem_from_dict(problem_doc)
    sol = landing.solve(prob)
    out = {"problem": landing.problem_to_dict(prob), "solution": landing.solution_to_dict(sol, prob)}
    if not sol.feasible:
        logger.warning("no feasible landing point; max-clearance fallback used")
    if oracle:
        ref = landing.oracle_solve(prob, grid_step=grid_step)
        gap = (sol.objective - ref.objective) / max(abs(ref.objective), 1e-12)
        out["oracle"] = {
            **landing.solution_to_dict(ref, prob),
            "grid_step": grid_step,
            "relative_gap": gap,
        }
    return out


# -- train-dist -----------------------------------------------------------------


def comparison_table(rows) -> str:
    """Markdown table: one row per (label, hyperparams, metrics)."""
    head = ("Model", "max_depth", "lr", "n_est", "colsample_bytree", "colsample_bylevel", "subsample",
            "MAE", "MedAE", "MaxErr", "ExpVar")
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for label, hp, m in rows:
        cells = [label, hp.max_depth, hp.learning_rate, hp.n_estimators, hp.colsample_bytree,
                 hp.colsample_bylevel, hp.subsample, f"{m.mae:.3f}", f"{m.medae:.3f}",
                 f"{m.maxerr:.3f}", f"{m.expvar:.3f}"]
        lines.append("| " + " | ".join(str(c) for c in cells) + " |")
    return "\n".join(lines) + "\n"


def cmd_train_dist(
    out_dir,
    samples: int = 5000,
    seed: int = 0,
    holdout: float = 0.2,
    search: bool = False,
    n_trials: int = 10,
    k_folds: int = 5,
    pixel_sigma: float = 1.0,
) -> dict:
    if not 0.0 < holdout < 1.0:
        raise CliError("holdout must be in (0, 1)")
    n_test = int(round(samples * holdout))
    n_train = samples - n_test
    if n_test < 1 or n_train < max(k_folds, 2):
        raise distance.DatasetError(f"{samples} samples cannot fill a holdout and {k_folds} folds")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    X, y = synthetic_dataset(samples, seed=seed, pixel_sigma=pixel_sigma)
    perm = np.random.default_rng(seed).permutation(samples)
    tr, te = np.sort(perm[n_test:]), np.sort(perm[:n_test])

    trials = []
    if search:
        hp, trials = distance.random_search_cv(X[tr], y[tr], SEARCH_SPACE, k_folds, n_trials, seed)
    else:
        hp = distance.TUNED_DEFAULTS
    model = distance.fit(X[tr], y[tr], hp, seed=seed)
    tuned = distance.evaluate(model, X[te], y[te])
    baseline = distance.evaluate(distance.fit(X[tr], y[tr], LIBRARY_DEFAULTS, seed=seed), X[te], y[te])

    files = [out / "model.txt", out / "dataset.csv", out / "metrics.json", out / "comparison.md"]
    distance.save_model(model, files[0])
    distance.write_dataset_csv(files[1], X, y)
    result = {
        "samples": samples,
        "train": int(n_train),
        "holdout": int(n_test),
        "seed": seed,
        "search": search,
        "hyperparams": distance.hyperparams_dict(hp),
        "metrics": asdict(tuned),
        "baseline_hyperparams": distance.hyperparams_dict(LIBRARY_DEFAULTS),
        "baseline_metrics": asdict(baseline),
        "trials": [{"hyperparams": distance.hyperparams_dict(h), "cv_mae": s} for h, s in trials],
    }
    files[2].write_text(_dump(result))
    files[3].write_text(comparison_table([("Default", LIBRARY_DEFAULTS, baseline), ("Tuned", hp, tuned)]))
    write_manifest(out, "train-dist", files, seed=seed)
    return result


# -- eval / report --------------------------------------------------------------


def cmd_eval(trace_path, window: float = metrics.MATCH_WINDOW) -> dict:
    trace = simulate.SimulationTrace.read(trace_path)
    ev = metrics.localization_from_trace(trace, window)
    if ev is None:
        raise metrics.EvalError("no matched frames in trace")
    return asdict(ev)


def cmd_report(trace_path) -> dict:
    return metrics.build_report(simulate.SimulationTrace.read(trace_path))


# -- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (required for run if the scenario has none)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="padguard", description=__doc__)
    p.add_argument("--version", action="version", version=f"padguard {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run a scenario and write trace, report and manifest")
    r.add_argument("scenario", help="scenario file or bundled name")
    r.add_argument("-o", "--out", required=True, help="output directory")
    r.add_argument("--csv", action="store_true", help="also write trajectory.csv")

    pl = sub.add_parser("plan", parents=[common], help="solve one landing problem (JSON)")
    pl.add_argument("problem", help="problem JSON file, or - for stdin")
    pl.add_argument("--oracle", action="store_true", help="cross-check against the grid oracle")
    pl.add_argument("--grid-step", type=float, default=0.01)

    t = sub.add_parser("train-dist", parents=[common], help="train the distance model on synthetic data")
    t.add_argument("-o", "--out", required=True)
    t.add_argument("--samples", type=int, default=5000)
    t.add_argument("--holdout", type=float, default=0.2)
    t.add_argument("--search", action="store_true", help="random search with k-fold CV")
    t.add_argument("--n-trials", type=int, default=10)
    t.add_argument("--k-folds", type=int, default=5)
    t.add_argument("--pixel-sigma", type=float, default=1.0)

    e = sub.add_parser("eval", parents=[common], help="localization APE/cossim from a trace")
    e.add_argument("trace")
    e.add_argument("--window", type=float, default=metrics.MATCH_WINDOW)

    rp = sub.add_parser("report", parents=[common], help="recompute the run report from a trace")
    rp.add_argument("trace")
    rp.add_argument("-o", "--out", help="write here instead of stdout")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            report = cmd_run(args.scenario, args.out, seed=args.seed, csv_out=args.csv)
            sys.stdout.write(metrics.dumps_report(report))
        elif args.command == "plan":
            text = sys.stdin.read() if args.problem == "-" else Path(args.problem).read_text()
            sys.stdout.write(_dump(cmd_plan(json.loads(text), oracle=args.oracle, grid_step=args.grid_step)))
        elif args.command == "train-dist":
            res = cmd_train_dist(
                args.out, samples=args.samples, seed=0 if args.seed is None else args.seed,
                holdout=args.holdout, search=args.search, n_trials=args.n_trials,
                k_folds=args.k_folds, pixel_sigma=args.pixel_sigma,
            )
            sys.stdout.write((Path(args.out) / "comparison.md").read_text())
            logger.info("holdout metrics %s", res["metrics"])
        elif args.command == "eval":
            sys.stdout.write(_dump(cmd_eval(args.trace, args.window)))
        elif args.command == "report":
            text = metrics.dumps_report(cmd_report(args.trace))
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
    except (CliError, scenario.ScenarioError, landing.InvalidProblem, distance.DatasetError,
            metrics.EvalError, json.JSONDecodeError, OSError, KeyError, ValueError) as exc:
        print(f"padguard {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
