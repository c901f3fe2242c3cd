"""Command-line experiment runner.

Subcommands
-----------
run          one scheme on ``--trials`` scenarios
sweep        schemes x axis values x trials
convergence  per-iteration best fitness of the fitness-split and index-split searches
fri          rate loss of a perfect-information design under perturbed channels

Every row is a pure function of (config, axis, value, scheme, seed, trial):
trial t draws its scenario from ``RngStream(seed, (0, t))`` and its
optimizer randomness from ``RngStream(seed, (1, t))``. Rows are written in a
fixed order as soon as they are ready, so output files do not depend on
``--threads``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .ao import AoParams
from .benchmarks import Scheme, fri_experiment, run_scheme
from .channel import sample_scenario
from .config import SWEEP_AXES, ConfigError, SweepSpec, config_from_dict, load_config
from .ho import HoParams, optimize
from .stochastic import RngStream

__all__ = ["main", "build_id", "run_sweep", "convergence_run", "ROW_FIELDS"]

SCENARIO_STREAM, ALGO_STREAM, FRI_STREAM = 0, 1, 2
FRI_AXES = ("mu", "nu")
ROW_FIELDS = ["build_id", "seed", "trial", "axis", "value", "scheme", "status", "min_rate",
              "per_user_rates", "apv", "note", "error"]


def build_id() -> str:
    """Short hash of the package sources."""
    digest = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:12]


def _fmt(values) -> str:
    return ";".join(repr(float(v)) for v in np.ravel(values))


def _row_job(job: dict) -> dict:
    """Compute one output row; failures become a status, not an exception."""
    cfg, axis, value = job["cfg"], job["axis"], job["value"]
    seed, trial, scheme = job["seed"], job["trial"], Scheme(job["scheme"])
    row = dict(build_id=job["build_id"], seed=seed, trial=trial, axis=axis or "",
               value="" if value is None else repr(value), scheme=scheme.value, status="ok",
               min_rate="", per_user_rates="", apv="", note="", error="")
    try:
        if axis in SWEEP_AXES and SWEEP_AXES[axis][0] is not None:
            cfg = cfg.replace(**{SWEEP_AXES[axis][0]: SWEEP_AXES[axis][1](value)})
        sc = sample_scenario(cfg, RngStream(seed, (SCENARIO_STREAM, trial)))
        ho, ao = HoParams.from_config(cfg), AoParams.from_config(cfg)
        res = run_scheme(scheme, sc, ho, ao, RngStream(seed, (ALGO_STREAM, trial)))
        rate, per_user = res.min_rate, res.per_user_rates
        if axis in FRI_AXES:
            mu, nu = (value, 0.0) if axis == "mu" else (0.0, value)
            stats = fri_experiment(sc, res.apv, res.precoder, res.decoding, mu, nu,
                                   job["fri_trials"], RngStream(seed, (FRI_STREAM, trial)))
            rate, per_user = stats.mean, stats.rates
        row.update(min_rate=repr(float(rate)), per_user_rates=_fmt(per_user),
                   apv=_fmt(res.apv.as_vector()), note=res.note)
    except Exception as exc:  # noqa: BLE001 -- recorded per row, run continues
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return row


class _Writer:
    """Single writer for the CSV and the optional JSON-lines file."""

    def __init__(self, out, jsonl=None):
        self.fh = open(out, "w", newline="") if out else sys.stdout
        self.csv = csv.DictWriter(self.fh, fieldnames=ROW_FIELDS, lineterminator="\n")
        self.csv.writeheader()
        self.jfh = open(jsonl, "w") if jsonl else None

    def write(self, row: dict):
        self.csv.writerow(row)
        self.fh.flush()
        if self.jfh is not None:
            self.jfh.write(json.dumps(row, sort_keys=True) + "\n")
            self.jfh.flush()

    def close(self):
        if self.fh is not sys.stdout:
            self.fh.close()
        if self.jfh is not None:
            self.jfh.close()


def _execute(jobs, writer: _Writer, threads: int) -> list:
    rows = []
    if threads <= 1:
        results = map(_row_job, jobs)
        for row in results:
            writer.write(row)
            rows.append(row)
        return rows
    with ProcessPoolExecutor(max_workers=threads) as pool:
        # map yields in submission order, so the file order is fixed
        for row in pool.map(_row_job, jobs):
            writer.write(row)
            rows.append(row)
    return rows


def run_sweep(cfg, spec: SweepSpec, seed: int, out=None, jsonl=None, threads: int = 1,
              fri_trials: int = 50, first_trial: int = 0) -> list:
    """Run every (value, scheme, trial) row of ``spec`` and write them in that order."""
    bid = build_id()
    jobs = [dict(cfg=cfg, axis=spec.axis, value=value, scheme=Scheme.parse(s).value,
                 seed=seed, trial=t, build_id=bid, fri_trials=fri_trials)
            for value in spec.values for s in spec.schemes
            for t in range(first_trial, first_trial + spec.trials)]
    writer = _Writer(out, jsonl)
    try:
        return _execute(jobs, writer, threads)
    finally:
        writer.close()


def _convergence_job(job) -> tuple:
    cfg, seed, split = job
    sc = sample_scenario(cfg, RngStream(seed, (SCENARIO_STREAM, 0)))
    ho = HoParams.from_config(cfg, split=split)
    res = optimize(sc, ho, AoParams.from_config(cfg), RngStream(seed, (ALGO_STREAM, 0)))
    return res.history


def convergence_run(cfg, seed: int, out=None, threads: int = 1) -> tuple:
    """Best fitness per iteration for the fitness split and the index split.

    Writes ``iteration,improved,original`` with one row per iteration.
    Both runs share the scenario and the optimizer seed.
    """
    jobs = [(cfg, seed, "fitness"), (cfg, seed, "index")]
    if threads <= 1:
        improved, original = map(_convergence_job, jobs)
    else:
        with ProcessPoolExecutor(max_workers=min(threads, 2)) as pool:
            improved, original = pool.map(_convergence_job, jobs)
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "improved", "original"])
        for i, (a, b) in enumerate(zip(improved.best_fitness_per_iter,
                                       original.best_fitness_per_iter), start=1):
            writer.writerow([i, repr(float(a)), repr(float(b))])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return improved, original


def _parse_values(text: str | None, axis: str | None) -> tuple:
    if text is None:
        return (None,)
    conv = SWEEP_AXES[axis][1] if axis in SWEEP_AXES else float
    try:
        return tuple(conv(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"values: cannot parse {text!r} for axis {axis!r}") from exc


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with configuration overrides")
    common.add_argument("--profile", choices=["desk", "paper"], default="paper")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="CSV output path (default: stdout)")
    common.add_argument("--jsonl", help="optional JSON-lines copy of the rows")
    common.add_argument("--threads", type=int, default=1)

    p = argparse.ArgumentParser(prog="manoma", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="one scheme")
    run.add_argument("--scheme", default="MA-NOMA")
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--first-trial", type=int, default=0)
    run.add_argument("--axis", choices=sorted(SWEEP_AXES))
    run.add_argument("--values", help="a single axis value")

    sweep = sub.add_parser("sweep", parents=[common], help="sweep one axis")
    sweep.add_argument("--axis", choices=sorted(SWEEP_AXES), required=True)
    sweep.add_argument("--values", required=True, help="comma-separated axis values")
    sweep.add_argument("--scheme", action="append",
                       help="scheme to include (repeatable; default: all six)")
    sweep.add_argument("--trials", type=int, default=20)
    sweep.add_argument("--fri-trials", type=int, default=50)

    conv = sub.add_parser("convergence", parents=[common], help="search convergence curves")
    del conv

    fri = sub.add_parser("fri", parents=[common], help="robustness to imperfect FRI")
    fri.add_argument("--axis", choices=FRI_AXES, default="mu")
    fri.add_argument("--values", default="0,0.1,0.2")
    fri.add_argument("--scheme", default="MA-NOMA")
    fri.add_argument("--trials", type=int, default=1, help="designed scenarios")
    fri.add_argument("--fri-trials", type=int, default=50, help="perturbations per design")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = (load_config(args.config, args.profile) if args.config
               else config_from_dict(None, args.profile))
        if args.command == "convergence":
            convergence_run(cfg, args.seed, args.out, args.threads)
            return 0
        if args.command == "run":
            if args.axis is None:
                axis, values = "users", (cfg.n_users,)
            else:
                axis, values = args.axis, _parse_values(args.values, args.axis)
            if len(values) != 1:
                raise ConfigError("values: run takes a single value")
            spec = SweepSpec(axis=axis, values=values, trials=args.trials,
                             schemes=(args.scheme,))
            rows = run_sweep(cfg, spec, args.seed, args.out, args.jsonl, args.threads,
                             first_trial=args.first_trial)
        elif args.command == "sweep":
            schemes = tuple(args.scheme or [s.value for s in Scheme])
            spec = SweepSpec(axis=args.axis, values=_parse_values(args.values, args.axis),
                             trials=args.trials, schemes=schemes)
            rows = run_sweep(cfg, spec, args.seed, args.out, args.jsonl, args.threads,
                             fri_trials=args.fri_trials)
        else:
            spec = SweepSpec(axis=args.axis, values=_parse_values(args.values, args.axis),
                             trials=args.trials, schemes=(args.scheme,))
            rows = run_sweep(cfg, spec, args.seed, args.out, args.jsonl, args.threads,
                             fri_trials=args.fri_trials)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return 1 if any(r["status"] != "ok" for r in rows) else 0


if __name__ == "__main__":
    raise SystemExit(main())
