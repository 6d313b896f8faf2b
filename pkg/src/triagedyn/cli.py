"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 analysis failure
(for example no threshold satisfying the steady-state conditions).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__
from .curvefit import FitError, Form, ThresholdCriteria
from .disttest import FitFailure, write_ccdf
from .fileio import atomic_text, sha256, write_json
from .ingest import (
    EventKind,
    ParseError,
    extract_events,
    filter_corpus,
    parse_iso_gmt,
    processing_times,
    read_events,
    read_history,
    write_events,
)
from .metrics import DEFAULT_WINDOW_DAYS, Windowing, read_rates, write_rates
from .pipeline import (
    FitSettings,
    all_processing_times,
    detect_threshold,
    distribution_analysis,
    event_summary,
    rate_points,
    spatial_analysis,
    temporal_analysis,
)
from .queues import write_position_scatter, write_state_positions
from .simkit import SimConfig, parse_config, simulate, write_simulation

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ANALYSIS = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class AnalysisFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- shared helpers -----------------------------------------------------------------


def _load_events(path: str):
    """Events from an event file or, failing that, a raw change history."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"{path}: no such file")
    with open(p, encoding="utf-8", newline="") as fh:
        head = fh.readline()
    if head.strip().lower().startswith("bug_id,developer,kind"):
        with open(p, encoding="utf-8", newline="") as fh:
            return read_events(fh), Counter()
    records = read_history(p)
    if not records:
        raise DataError(f"{path}: no records")
    diag = Counter()
    return extract_events(records, diag), diag


def _sidecar(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _windowing(args, sidecar: dict) -> Windowing:
    origin = parse_iso_gmt(args.origin) if args.origin else sidecar.get("origin")
    until = parse_iso_gmt(args.until) if args.until else sidecar.get("horizon_end")
    days = args.window_days if args.window_days is not None else sidecar.get("window_days", DEFAULT_WINDOW_DAYS)
    return Windowing(days, origin, until)


def _threshold_arg(args, sidecar: dict, detected: float | None = None, missing=UsageError) -> float:
    if args.threshold is not None:
        return args.threshold
    if "threshold" in sidecar:
        return float(sidecar["threshold"])
    if detected is not None:
        return detected
    raise missing("a threshold is needed: pass --threshold, a --sidecar, or detectable rate curves")


def _criteria(args) -> ThresholdCriteria:
    return ThresholdCriteria(args.c1, args.c2, args.eps, args.tol, args.grid_max, args.step)


def _write_csv(path: Path, writer, *payload) -> Path:
    with atomic_text(path) as fh:
        writer(*payload, fh)
    return path


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


def _fmt(v, unit: str) -> str:
    return "n/a" if v is None else f"{v:.4g} {unit}"


# -- subcommands -------------------------------------------------------------------------


def cmd_ingest(args) -> tuple[list[Path], dict]:
    records = read_history(args.input)
    if not records:
        raise DataError(f"{args.input}: no records")
    diag = Counter()
    events = extract_events(records, diag)
    processing_times(events, diag)  # adds interval diagnostics
    summary = None
    if args.filter:
        events, fsum = filter_corpus(events, args.min_fixed, args.top_fraction, not args.keep_partial)
        summary = fsum.as_dict()
    out = Path(args.output)
    _write_csv(out, write_events, events)
    report = {"records": len(records), "diagnostics": dict(sorted(diag.items())), "summary": event_summary(events)}
    if summary is not None:
        report["filter"] = summary
    diag_path = Path(args.diagnostics) if args.diagnostics else out.with_suffix(".diagnostics.json")
    write_json(diag_path, report)
    dropped = diag.get("dropped_fix", 0) + diag.get("dropped_toss", 0)
    _say(args, f"{len(records)} records -> {len(events)} events ({dropped} dropped events); wrote {out}")
    return [out, diag_path], {"filter": args.filter, "min_fixed": args.min_fixed, "top_fraction": args.top_fraction}


def _analyze(args, events, sidecar, outdir: Path) -> tuple[list[Path], float | None]:
    if args.rates:
        with open(args.rates, encoding="utf-8", newline="") as fh:
            points = read_rates(fh)
        if not points:
            raise DataError(f"{args.rates}: no rate points")
    else:
        points = rate_points(events, _windowing(args, sidecar))
    written = [_write_csv(outdir / "rates.csv", write_rates, points)]
    settings = FitSettings(Form(args.fix_form), Form(args.toss_form), _criteria(args))
    if len(points) < 8:
        raise AnalysisFailure(f"only {len(points)} distinct workloads; curve fitting needs at least 8")
    analysis = detect_threshold(points, settings)
    write_json(outdir / "models.json", analysis.models_dict())
    write_json(outdir / "threshold.json", analysis.report)
    written += [outdir / "models.json", outdir / "threshold.json"]
    return written, analysis.threshold


def cmd_analyze(args) -> tuple[list[Path], dict]:
    outdir = Path(args.output)
    events = None if args.rates else _load_events(args.input)[0]
    written, threshold = _analyze(args, events, _sidecar(args.sidecar), outdir)
    if threshold is None:
        raise AnalysisFailure("no inflection point satisfies the steady-state conditions; see threshold.json")
    _say(args, f"threshold N* = {threshold:.4f} bugs per window")
    return written, {}


def _queues(args, events, sidecar, outdir: Path, threshold: float) -> tuple[list[Path], dict]:
    summary, metrics, groups = spatial_analysis(events, _windowing(args, sidecar), threshold, args.significance)
    paths = [
        _write_csv(outdir / "queue_positions_by_state.csv", write_state_positions, groups),
        _write_csv(outdir / "queue_positions_by_workload.csv", write_position_scatter, metrics),
    ]
    write_json(outdir / "queues.json", summary)
    paths.append(outdir / "queues.json")
    return paths, summary


def cmd_queues(args) -> tuple[list[Path], dict]:
    events = _load_events(args.input)[0]
    sidecar = _sidecar(args.sidecar)
    threshold = _threshold_arg(args, sidecar)
    paths, summary = _queues(args, events, sidecar, Path(args.output), threshold)
    for state, row in summary["states"].items():
        _say(args, f"{state}: Q_f = {_fmt(row['Q_f_position'], 'position')}, Q_t = {_fmt(row['Q_t_position'], 'position')}, {row['samples']} developer-windows")
    return paths, {"threshold": threshold}


def _read_samples(path: str) -> np.ndarray:
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                values.append(float(text.split(",")[0]))
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise DataError(f"{path}: line {lineno}: not a number") from None
    if not values:
        raise DataError(f"{path}: no samples")
    return np.asarray(values)


def _xmin(args):
    if args.xmin in (None, "min"):
        return None
    if args.xmin == "ks":
        return "ks"
    return float(args.xmin)


def _dists(args, samples_by_kind: dict[str, np.ndarray], outdir: Path) -> tuple[list[Path], dict]:
    report = {}
    for kind, taus in samples_by_kind.items():
        report[kind] = distribution_analysis(taus, _xmin(args), args.significance, args.jobs)
    write_json(outdir / "distributions.json", report)
    return [outdir / "distributions.json"], report


def cmd_dists(args) -> tuple[list[Path], dict]:
    outdir = Path(args.output)
    if args.samples:
        samples = {"samples": _read_samples(args.samples)}
    else:
        times = processing_times(_load_events(args.input)[0])
        samples = {k.value.lower(): np.asarray([t.tau for t in times if t.kind is k]) for k in (EventKind.FIX, EventKind.TOSS)}
    paths, report = _dists(args, samples, outdir)
    for kind, rep in report.items():
        beta = rep["fits"]["stexp"]["params"]["beta"]
        _say(args, f"{kind}: best family {rep['winner']} (stretched-exponential beta = {beta:.4f}, xmin = {rep['xmin_hours']:.4g} hours)")
    return paths, {"xmin": args.xmin}


def cmd_simulate(args) -> tuple[list[Path], dict]:
    cfg = SimConfig()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read(), cfg)
    overrides = {k: v for k, v in (("seed", args.seed), ("agent_count", args.agents), ("horizon_days", args.horizon_days)) if v is not None}
    if overrides:
        cfg = parse_config("\n".join(f"{k} = {v}" for k, v in overrides.items()), cfg)
    outdir = Path(args.output)
    result = simulate(cfg)
    history, sidecar = outdir / "history.csv", outdir / "simulation.json"
    with atomic_text(history) as hf, atomic_text(sidecar) as sf:
        write_simulation(result, hf, sf)
    config_path = outdir / "config.txt"
    with atomic_text(config_path) as fh:
        fh.write(cfg.to_text())
    _say(args, f"simulated {cfg.agent_count} agents x {cfg.n_windows} windows: {result.annotations['bugs']} bugs, {len(result.records)} records")
    return [history, sidecar, config_path], {"seed": cfg.seed}


def cmd_report(args) -> tuple[list[Path], dict]:
    outdir = Path(args.output)
    events, diag = _load_events(args.input)
    sidecar = _sidecar(args.sidecar)
    written = [_write_csv(outdir / "events.csv", write_events, events)]
    write_json(outdir / "ingest.json", {"diagnostics": dict(sorted(diag.items())), "summary": event_summary(events)})
    written.append(outdir / "ingest.json")

    args.rates = None
    detected = None
    try:
        paths, detected = _analyze(args, events, sidecar, outdir)
        written += paths
    except (FitError, AnalysisFailure) as exc:
        write_json(outdir / "threshold.json", {"chosen": None, "error": str(exc)})
        written.append(outdir / "threshold.json")
    threshold = _threshold_arg(args, sidecar, detected, AnalysisFailure)

    paths, spatial = _queues(args, events, sidecar, outdir, threshold)
    written += paths
    temporal, curves, by_state = temporal_analysis(events, _windowing(args, sidecar), threshold, args.significance)
    write_json(outdir / "temporal.json", temporal)
    written.append(outdir / "temporal.json")
    for (kind, population, state), curve in sorted(curves.items()):
        written.append(_write_csv(outdir / f"ccdf_{kind}_{population}_{state}.csv", write_ccdf, curve))
    if not args.skip_dists:
        samples = {k.value.lower(): np.asarray(all_processing_times(by_state, k)) for k in (EventKind.FIX, EventKind.TOSS)}
        samples = {k: v for k, v in samples.items() if v.size >= 50}
        written += _dists(args, samples, outdir)[0]

    _say(args, f"threshold used for grouping: {threshold:.4f} bugs per window (detected: {_fmt(detected, 'bugs')})")
    for state, row in spatial["states"].items():
        _say(args, f"{state}: Q_f = {_fmt(row['Q_f_position'], 'position')}, Q_t = {_fmt(row['Q_t_position'], 'position')}")
    return written, {"threshold_used": threshold, "threshold_detected": detected}


# -- manifest and entry point ----------------------------------------------------------


def _parameters(args) -> dict:
    keep = ("window_days", "origin", "until", "eps", "tol", "c1", "c2", "grid_max", "step", "significance",
            "min_fixed", "top_fraction", "fix_form", "toss_form", "xmin", "threshold", "seed")
    return {k: getattr(args, k) for k in keep if getattr(args, k, None) is not None}


def write_manifest(args, outputs: list[Path], extra: dict) -> Path:
    outdir = Path(args.output) if Path(args.output).suffix == "" else Path(args.output).parent
    inputs = [p for p in (getattr(args, "input", None), getattr(args, "sidecar", None), getattr(args, "config", None),
                          getattr(args, "rates", None), getattr(args, "samples", None)) if p]
    manifest = {
        "tool": "triagedyn",
        "version": __version__,
        "command": args.command,
        "inputs": [{"name": os.path.basename(p), "sha256": sha256(p)} for p in inputs],
        "parameters": {**_parameters(args), **extra},
        "outputs": [{"name": os.path.relpath(p, outdir), "sha256": sha256(p)} for p in sorted(set(outputs))],
    }
    path = outdir / "manifest.json"
    write_json(path, manifest)
    return path


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--significance", type=float, default=0.01, help="test level (default 0.01)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for independent fits")
    p.add_argument("--quiet", action="store_true")


def _add_windowing(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window-days", type=float, default=None, help=f"window length in days (default {DEFAULT_WINDOW_DAYS:g})")
    p.add_argument("--origin", help="first window start, ISO GMT (default: earliest event)")
    p.add_argument("--until", help="ignore receipts at or after this ISO GMT instant")
    p.add_argument("--sidecar", help="simulation sidecar JSON supplying origin, horizon and threshold")


def _add_threshold(p: argparse.ArgumentParser) -> None:
    d = ThresholdCriteria()
    p.add_argument("--eps", type=float, default=d.eps, help="sign-probe offset past a candidate")
    p.add_argument("--tol", type=float, default=d.tol, help="bound on |second derivative - c|")
    p.add_argument("--c1", type=float, default=d.c1)
    p.add_argument("--c2", type=float, default=d.c2)
    p.add_argument("--grid-max", type=float, default=d.grid_max)
    p.add_argument("--step", type=float, default=d.step)
    p.add_argument("--fix-form", choices=[f.value for f in Form], default=Form.DIFF.value)
    p.add_argument("--toss-form", choices=[f.value for f in Form], default=Form.POWDECAY.value)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="triagedyn", description="Developer workload dynamics from bug-tracker histories.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse a change history into an event file")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="event CSV to write")
    p.add_argument("--diagnostics", help="diagnostics JSON (default: next to the output)")
    p.add_argument("--filter", action="store_true", help="keep only skilled fixers")
    p.add_argument("--min-fixed", type=int, default=50)
    p.add_argument("--top-fraction", type=float, default=0.2)
    p.add_argument("--keep-partial", action="store_true", help="keep bugs without a full receive-to-fix trace")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="rate curves, fitted models and workload threshold")
    p.add_argument("input", nargs="?", help="event file or change history")
    p.add_argument("--rates", help="use an existing rates CSV (N,M,P_f,P_t) instead of events")
    p.add_argument("-o", "--output", required=True, help="output directory")
    _add_windowing(p)
    _add_threshold(p)
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("queues", help="first fixing/tossing positions by working state")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--threshold", type=float, help="workload threshold N*")
    _add_windowing(p)
    _add_common(p)
    p.set_defaults(func=cmd_queues)

    p = sub.add_parser("dists", help="identify the processing-time distribution")
    p.add_argument("input", nargs="?", help="event file or change history")
    p.add_argument("--samples", help="plain list of durations in hours, one per line")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--xmin", default="min", help="'min' (smallest sample), 'ks' (power-law KS scan) or a number of hours")
    _add_windowing(p)
    _add_common(p)
    p.set_defaults(func=cmd_dists)

    p = sub.add_parser("simulate", help="generate a synthetic change history")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--agents", type=int)
    p.add_argument("--horizon-days", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="run every analysis and write a manifest")
    p.add_argument("input", help="event file or change history")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--threshold", type=float, help="grouping threshold (default: sidecar, then detected)")
    p.add_argument("--xmin", default="min")
    p.add_argument("--skip-dists", action="store_true")
    _add_windowing(p)
    _add_threshold(p)
    _add_common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("analyze",) and not (args.input or args.rates):
        parser.error("analyze needs an input file or --rates")
    if args.command == "dists" and not (args.input or args.samples):
        parser.error("dists needs an input file or --samples")
    try:
        outputs, extra = args.func(args)
        if args.command != "ingest":
            write_manifest(args, outputs, extra)
    except UsageError as exc:
        print(f"triagedyn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ParseError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"triagedyn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AnalysisFailure, FitError, FitFailure) as exc:
        print(f"triagedyn: analysis failed: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
