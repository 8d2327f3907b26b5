"""Command-line interface.

Subcommands mirror the pipeline stages: simulate, fit, rank-scan, factor,
dual, reparam, contextuality, volumes, report and run. Exit codes: 0 on
success, 2 for configuration/input errors, 3 for a failed computation stage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import GptTomoError, StageFailureError
from .fileio import load_model, load_polytope, save_model, save_polytope, save_scan
from .gptmodel import GptModel, factorize, normalize_table
from .nonclassicality import build_problem, reconstruct_model, robustness, robustness_vs_tau
from .pipeline import (
    PipelineConfig,
    _series_dict,
    _write_csv,
    consistent_state_space,
    detect_nonmarkovianity,
    fit_decay,
    relative_volumes,
    reparametrized_states,
    run_full_pipeline,
)
from .synthdata import BumpParams, ChannelParams, fibonacci_directions, sample_frequency_table, derive_seed
from .tables import load_run_directory, load_table, save_table, table_filename
from .tomofit import FitOptions, fit_rank_k, rank_scan, select_rank, stack_tables

EXIT_CONFIG = 2
EXIT_STAGE = 3


def _parse_ranks(text: str) -> tuple[int, ...]:
    if ":" in text:
        lo, hi = text.split(":")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(k) for k in text.split(","))


def _parse_taus(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(","))


def _load_tables_arg(path: str, rep: int, tau: float | None):
    p = Path(path)
    if p.is_file():
        return [load_table(p)]
    runs = load_run_directory(p)
    if rep not in runs:
        raise FileNotFoundError(f"repetition {rep} not found in {path}")
    tables = runs[rep]
    if tau is not None:
        tables = [t for t in tables if abs(t.tau - tau) <= 1e-9]
        if not tables:
            raise FileNotFoundError(f"no table with tau={tau} for repetition {rep}")
    return tables


def _cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    channel = ChannelParams(t1=args.t1, t2=args.t2, readout_fidelity=args.fidelity)
    bump = None
    if args.bump_amplitude > 0.0:
        bump = BumpParams(args.bump_start, args.bump_end, args.bump_amplitude)
    preps = fibonacci_directions(args.m)
    meas = preps if args.n == args.m else fibonacci_directions(args.n)
    taus = _parse_taus(args.taus)
    for rep in range(args.tables):
        for ti, tau in enumerate(taus):
            table = sample_frequency_table(
                preps, meas, tau, args.shots, channel,
                derive_seed(args.seed, 1, rep, ti), bump=bump,
            )
            save_table(table, out / table_filename(rep, ti))
    print(f"wrote {args.tables * len(taus)} tables to {out}")
    return 0


def _cmd_fit(args) -> int:
    tables = _load_tables_arg(args.input, args.rep, args.tau)
    stacked = stack_tables(tables)
    options = FitOptions(restarts=args.restarts, tol=args.tol, seed=args.seed)
    fit = fit_rank_k(stacked.entries, stacked.variance, args.rank, options)
    doc = {
        "kind": "fit",
        "rank": fit.rank,
        "chi2": fit.chi2,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "tau_labels": [float(t) for t in stacked.row_taus],
        "d_matrix": [[float(x) for x in row] for row in fit.d_matrix],
    }
    Path(args.out).write_text(json.dumps(doc))
    print(f"rank {fit.rank} fit: chi2={fit.chi2:.6g}, iterations={fit.iterations}, "
          f"converged={fit.converged}")
    return 0


def _cmd_rank_scan(args) -> int:
    runs = load_run_directory(Path(args.input))
    tables = []
    for rep in sorted(runs):
        match = [t for t in runs[rep] if abs(t.tau - args.tau) <= 1e-9]
        tables.extend(match)
    if len(tables) < 2:
        raise FileNotFoundError(f"need at least 2 tables at tau={args.tau}")
    ranks = _parse_ranks(args.ranks)
    scan = rank_scan(tables, ranks, FitOptions(restarts=args.restarts, tol=args.tol,
                                               seed=args.seed))
    summary = args.summary or str(Path(args.out).with_suffix(".json"))
    save_scan(scan, args.out, summary)
    selected = select_rank(scan)
    print(f"selected rank: {selected}")
    return 0


def _cmd_factor(args) -> int:
    doc = json.loads(Path(args.input).read_text())
    if "d_matrix" in doc:
        # Fitted tables carry shot noise in the normalization; project first.
        d = normalize_table(np.asarray(doc["d_matrix"], dtype=float))
        labels = doc.get("tau_labels")
    elif "rows" in doc:
        d = np.asarray(doc["rows"], dtype=float)
        labels = [float(doc["tau_us"])] * d.shape[0]
    else:
        raise ValueError(f"{args.input}: neither a fit file nor a frequency table")
    model = factorize(d, args.rank)
    model = GptModel(
        states=model.states, effects=model.effects, rank=args.rank,
        tau_labels=None if labels is None else np.asarray(labels, dtype=float),
    )
    save_model(model, args.out, provenance={"input": str(args.input)})
    print(f"factorized rank-{args.rank} model with {model.states.shape[0]} states")
    return 0


def _cmd_dual(args) -> int:
    model = load_model(args.model)
    if args.side == "states":
        poly = consistent_state_space(model)
    else:
        from .polytope import consistent_dual

        poly = consistent_dual(model.states)
    save_polytope(poly, args.out)
    print(f"consistent {args.side} space: {poly.vertices.shape[0]} vertices")
    return 0


def _cmd_reparam(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    consistent = load_polytope(args.consistent)
    for rep, model_path in enumerate(args.models):
        model = load_model(model_path)
        realized, _ = reparametrized_states(model, consistent)
        for ti, tau in enumerate(sorted(realized)):
            _write_csv(out / f"states-r{rep:03d}-t{ti:02d}.csv", "x,y,z",
                       [list(map(float, row)) for row in realized[tau]])
    print(f"wrote transformed state sets to {out}")
    return 0


def _cmd_contextuality(args) -> int:
    models = [load_model(p) for p in args.model]
    models = [
        m if m.tau_labels is not None else GptModel(
            states=m.states, effects=m.effects, rank=m.rank,
            tau_labels=np.zeros(m.states.shape[0]),
        )
        for m in models
    ]
    series = robustness_vs_tau(models)
    witness_paths = {}
    if args.witness_dir:
        wdir = Path(args.witness_dir)
        wdir.mkdir(parents=True, exist_ok=True)
        for ti, tau in enumerate(series.taus):
            problem = build_problem(models[0], tau)
            result = robustness(problem)
            onto = reconstruct_model(problem, result)
            wpath = wdir / f"witness-t{ti:02d}.json"
            wpath.write_text(json.dumps({
                "tau_us": float(tau),
                "r": result.r,
                "sigma": [[float(x) for x in row] for row in result.witness],
                "epistemic_states": [[float(x) for x in row] for row in onto.epistemic_states],
                "response_functions": [[float(x) for x in row] for row in onto.response_functions],
            }))
            witness_paths[str(float(tau))] = str(wpath)
    doc = _series_dict(series.taus, series.means, series.stds, series.values)
    doc["witness_paths"] = witness_paths
    Path(args.out).write_text(json.dumps(doc))
    print("robustness per tau:",
          ", ".join(f"{t:g}us={r:.4f}" for t, r in zip(series.taus, series.means)))
    return 0


def _cmd_volumes(args) -> int:
    models = [load_model(p) for p in args.models]
    if args.consistent:
        polys = [load_polytope(p) for p in args.consistent]
        if len(polys) == 1:
            polys = polys * len(models)
    else:
        polys = [consistent_state_space(m) for m in models]
    frames = [reparametrized_states(m, c) for m, c in zip(models, polys)]
    series = relative_volumes([f[0] for f in frames], [f[1] for f in frames])
    doc = _series_dict(series.taus, series.relative_volumes, series.spreads, series.values)
    if series.spreads is not None:
        doc["nonmarkovian_intervals"] = [
            [float(a), float(b)]
            for a, b in detect_nonmarkovianity(series, args.threshold_sigmas)
        ]
    try:
        decay = fit_decay(series)
        doc["decay"] = {
            "amplitude": decay.amplitude,
            "timescale_us": decay.timescale,
            "amplitude_err": decay.amplitude_err,
            "timescale_err": decay.timescale_err,
        }
    except GptTomoError as exc:
        doc["decay"] = {"skipped": str(exc)}
    Path(args.out).write_text(json.dumps(doc))
    print("relative volumes:",
          ", ".join(f"{t:g}us={v:.4f}" for t, v in zip(series.taus, series.relative_volumes)))
    return 0


def _cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    sections = {}
    for name, fname in [
        ("rank_selection", "scan.json"),
        ("robustness", "robustness.json"),
        ("volumes", "volumes.json"),
    ]:
        path = run_dir / fname
        if path.exists():
            sections[name] = json.loads(path.read_text())
        else:
            sections[name] = {"skipped": f"{fname} not found"}
    existing = run_dir / "report.json"
    if existing.exists():
        sections = {**json.loads(existing.read_text()), **{}} or sections
    Path(args.out).write_text(json.dumps(sections, sort_keys=True))
    print(f"wrote report to {args.out}")
    return 0


def _cmd_run(args) -> int:
    config = PipelineConfig.from_file(args.config)
    if args.seed is not None:
        config = PipelineConfig.from_dict({**config.to_dict(), "seed": args.seed})
    report = run_full_pipeline(config, args.out)
    selected = report.rank_selection.get("selected")
    print(f"pipeline complete: rank={selected}, report at {Path(args.out) / 'report.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpttomo")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate frequency tables")
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--shots", type=int, default=2000)
    p.add_argument("--taus", default="0,5,10,15,20,30,40,50")
    p.add_argument("--t1", type=float, default=21.9)
    p.add_argument("--t2", type=float, default=12.7)
    p.add_argument("--fidelity", type=float, default=0.85)
    p.add_argument("--tables", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bump-start", type=float, default=20.0)
    p.add_argument("--bump-end", type=float, default=30.0)
    p.add_argument("--bump-amplitude", type=float, default=0.0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="rank-k fit of a table or stacked run")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("rank-scan", help="train/test errors over a rank range")
    p.add_argument("--ranks", default="2:9")
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--summary", default=None)
    p.set_defaults(func=_cmd_rank_scan)

    p = sub.add_parser("factor", help="factor a fitted table into states/effects")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_factor)

    p = sub.add_parser("dual", help="consistent state or effect space of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--side", choices=("states", "effects"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dual)

    p = sub.add_parser("reparam", help="map state spaces into the sphere frame")
    p.add_argument("--consistent", required=True)
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reparam)

    p = sub.add_parser("contextuality", help="robustness of nonclassicality per tau")
    p.add_argument("--model", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--witness-dir", default=None)
    p.set_defaults(func=_cmd_contextuality)

    p = sub.add_parser("volumes", help="relative state-space volumes per tau")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--consistent", nargs="*", default=None)
    p.add_argument("--threshold-sigmas", type=float, default=3.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_volumes)

    p = sub.add_parser("report", help="assemble a report from run artifacts")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (FileNotFoundError, ValueError, KeyError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GptTomoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
