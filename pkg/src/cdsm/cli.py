"""Command-line front end: ``cdsm <stage> [flags]``.

Stages read their inputs from ``--out`` (or the flags naming source files)
and write their outputs there:

    ingest     events CSV          -> sequences.jsonl
    mine       sequences + labels  -> patterns.json
    featurize  patterns + sequences-> features_M<i>.csv
    train      features + labels   -> model_M<i>.json
    evaluate   sequences + labels  -> evaluation_M<i>.json
    report     patterns.json       -> report.json, report.txt
    synth      synthetic config    -> events.csv, labels.csv, manifest.json
    pipeline   all of the above for trials M1..MK, plus summary.txt / summary.json
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Sequence

from . import features as feat
from .ingest import (IngestError, Scheme, SchemeConfig, categorize, dropped_kinds, parse_progsnap2,
                     read_sequences, write_sequences)
from .model import StumpModel
from .pipeline import (CdsmConfig, Gradebook, TrialResult, feature_table, mining_from_json,
                       mining_to_json, mine_all, read_grades, run_trial, train_full)
from .report import build_report, render_text, top_fraction
from .seqmine import MiningParams
from .synth import DEMO_PLANTS, Plant, SynthConfig, generate

logger = logging.getLogger("cdsm")

STAGES = ("ingest", "mine", "featurize", "train", "evaluate", "report", "synth", "pipeline")

DEFAULTS = {
    "out": "out",
    "scheme": "general",
    "min_support": 0.4,
    "max_gap": 1,
    "max_length": 6,
    "alpha": 0.05,
    "correction": "none",
    "rounds": 50,
    "seed": 0,
    "top_fraction": 0.15,
    "threads": 1,
    "n_high": 53,
    "n_low": 53,
    "assignments": "A1,A2,A3,A4,A5",
    "length_mean": 500.0,
}

_TYPES = {
    "min_support": float, "max_gap": int, "max_length": int, "alpha": float, "rounds": int,
    "seed": int, "trial": int, "top_fraction": float, "threads": int, "n_high": int,
    "n_low": int, "length_mean": float,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    # defaults stay None so config-file values can fill the gaps
    common.add_argument("--events", help="ProgSnap2 main event table (CSV)")
    common.add_argument("--labels", help="grade file: SubjectID plus one column per assignment")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--scheme", choices=[s.value for s in Scheme])
    common.add_argument("--min-support", dest="min_support", type=float)
    common.add_argument("--max-gap", dest="max_gap", type=int)
    common.add_argument("--max-length", dest="max_length", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--correction", choices=["none", "bonferroni"])
    common.add_argument("--rounds", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--trial", type=int)
    common.add_argument("--top-fraction", dest="top_fraction", type=float)
    common.add_argument("--threads", type=int)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--columns", help="JSON file overriding event-table column names")
    common.add_argument("--plants", help="synth: JSON list of planted patterns")
    common.add_argument("--n-high", dest="n_high", type=int)
    common.add_argument("--n-low", dest="n_low", type=int)
    common.add_argument("--assignments", help="synth: comma-separated assignment ids")
    common.add_argument("--length-mean", dest="length_mean", type=float)

    parser = _Parser(prog="cdsm", description="Differential sequence mining for student performance prediction")
    sub = parser.add_subparsers(dest="stage", metavar="stage")
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    return parser


def read_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines (``:`` also accepted); ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in ("=", ":"):
                if sep in line:
                    key, value = line.split(sep, 1)
                    break
            else:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Flags over config-file keys over built-in defaults."""
    file_values = read_config_file(args.config) if args.config else {}
    known = set(vars(args)) - {"stage", "config"}
    unknown = set(file_values) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = dict(DEFAULTS)
    for key, value in file_values.items():
        if key in _TYPES:
            try:
                value = _TYPES[key](value)
            except ValueError:
                raise UsageError(f"config key {key} has a bad value {value!r}") from None
        merged[key] = value
    for key, value in vars(args).items():
        if value is not None and key not in ("stage", "config"):
            merged[key] = value
    return merged


def _check(opts: dict) -> CdsmConfig:
    if not 0 < opts["min_support"] <= 1:
        raise UsageError(f"--min-support must be in (0, 1], got {opts['min_support']}")
    if opts["max_gap"] < 0:
        raise UsageError(f"--max-gap must be >= 0, got {opts['max_gap']}")
    if opts["max_length"] < 1:
        raise UsageError(f"--max-length must be >= 1, got {opts['max_length']}")
    if not 0 < opts["alpha"] < 1:
        raise UsageError(f"--alpha must be in (0, 1), got {opts['alpha']}")
    if opts["rounds"] < 1:
        raise UsageError(f"--rounds must be >= 1, got {opts['rounds']}")
    if not 0 < opts["top_fraction"] <= 1:
        raise UsageError(f"--top-fraction must be in (0, 1], got {opts['top_fraction']}")
    if opts["threads"] < 1:
        raise UsageError(f"--threads must be >= 1, got {opts['threads']}")
    if opts["scheme"] not in [s.value for s in Scheme]:
        raise UsageError(f"--scheme must be general or contextual, got {opts['scheme']}")
    if opts["correction"] not in ("none", "bonferroni"):
        raise UsageError(f"--correction must be none or bonferroni, got {opts['correction']}")
    params = MiningParams(opts["min_support"], opts["max_gap"], opts["max_length"])
    return CdsmConfig(params=params, alpha=opts["alpha"], correction=opts["correction"],
                      rounds=opts["rounds"], seed=opts["seed"], threads=opts["threads"])


# -- file helpers -------------------------------------------------------------

def _path(opts: dict, name: str) -> str:
    return os.path.join(opts["out"], name)


def _require(opts: dict, key: str) -> str:
    if not opts.get(key):
        raise UsageError(f"--{key} is required for this stage")
    return opts[key]


def _write_json(path: str, obj, indent: int | None = 1) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=indent, sort_keys=True)
        fh.write("\n")


def _read_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def _load_sequences(opts: dict):
    with open(_path(opts, "sequences.jsonl")) as fh:
        return read_sequences(fh)


def _load_grades(opts: dict) -> Gradebook:
    with open(_require(opts, "labels")) as fh:
        return read_grades(fh)


def _trial(opts: dict, gradebook: Gradebook) -> int:
    k = len(gradebook.assignments)
    trial = opts.get("trial") or k
    if not 1 <= trial <= k:
        raise UsageError(f"--trial must be in 1..{k}, got {trial}")
    return trial


# -- stages ---------------------------------------------------------------------

def stage_ingest(opts: dict) -> None:
    columns = SchemeConfig()
    if opts.get("columns"):
        columns = SchemeConfig.from_mapping(_read_json(opts["columns"]))
    with open(_require(opts, "events"), newline="") as fh:
        raw = parse_progsnap2(fh, columns)
    sequences = categorize(raw, opts["scheme"])
    dropped = dropped_kinds(raw)
    os.makedirs(opts["out"], exist_ok=True)
    with open(_path(opts, "sequences.jsonl"), "w") as fh:
        write_sequences(sequences, fh)
    summary = {"raw_events": len(raw), "sequences": len(sequences), "scheme": opts["scheme"],
               "dropped": dict(sorted(dropped.items()))}
    _write_json(_path(opts, "ingest_summary.json"), summary)
    logger.info("ingested %d events into %d sequences (%d dropped)",
                len(raw), len(sequences), sum(dropped.values()))


def stage_mine(opts: dict, config: CdsmConfig) -> None:
    sequences = _load_sequences(opts)
    gradebook = _load_grades(opts)
    minings = mine_all(sequences, gradebook.labels(), config, gradebook.assignments)
    _write_json(_path(opts, "patterns.json"), mining_to_json(minings, config), indent=None)


def stage_featurize(opts: dict, config: CdsmConfig) -> None:
    gradebook = _load_grades(opts)
    trial = _trial(opts, gradebook)
    minings = mining_from_json(_read_json(_path(opts, "patterns.json")))
    wanted = gradebook.assignments[:trial]
    minings = [m for m in minings if m.assignment_id in wanted]
    subjects = sorted(gradebook.labels())
    table = feature_table(minings, _load_sequences(opts), subjects, config.params.max_gap)
    with open(_path(opts, f"features_M{trial}.csv"), "w", newline="") as fh:
        feat.write_csv(table, fh)


def stage_train(opts: dict, config: CdsmConfig) -> None:
    gradebook = _load_grades(opts)
    trial = _trial(opts, gradebook)
    with open(_path(opts, f"features_M{trial}.csv"), newline="") as fh:
        table = feat.read_csv(fh)
    model = train_full(table, gradebook.labels(), config)
    _write_json(_path(opts, f"model_M{trial}.json"), model.to_json())


def stage_evaluate(opts: dict, config: CdsmConfig) -> TrialResult:
    gradebook = _load_grades(opts)
    trial = _trial(opts, gradebook)
    result = run_trial(trial, _load_sequences(opts), gradebook, config)
    _write_json(_path(opts, f"evaluation_M{trial}.json"), result.to_json())
    return result


def stage_report(opts: dict) -> None:
    minings = mining_from_json(_read_json(_path(opts, "patterns.json")))
    rows = build_report(minings)
    top = top_fraction(rows, opts["top_fraction"])
    _write_json(_path(opts, "report.json"), {
        "top_fraction": opts["top_fraction"],
        "top": [r.to_json() for r in top],
        "rows": [r.to_json() for r in rows],
    }, indent=2)
    with open(_path(opts, "report.txt"), "w") as fh:
        fh.write(render_text(top))


def stage_synth(opts: dict) -> None:
    plants = DEMO_PLANTS
    if opts.get("plants"):
        plants = tuple(Plant(tuple(p["pattern"]), p["target"], p["high"], p["low"],
                             p.get("containment", 1.0),
                             tuple(p["assignments"]) if p.get("assignments") else None)
                       for p in _read_json(opts["plants"]))
    config = SynthConfig(
        n_high=opts["n_high"], n_low=opts["n_low"],
        assignments=tuple(a.strip() for a in opts["assignments"].split(",") if a.strip()),
        length_mean=opts["length_mean"], length_spread=opts["length_mean"] / 10,
        plants=plants, seed=opts["seed"],
    )
    generate(config).write(opts["out"])


def summary_table(results: Sequence[TrialResult]) -> str:
    """Trial rows with accuracy, precision and recall for Majority (b.1), Expert Rule (b.2) and CDSM (G)."""
    head = f"{'':4}| {'Accuracy':^20} | {'Precision':^20} | {'Recall':^20}"
    sub = f"{'':4}|" + " |".join(f" {'b.1':>6}{'b.2':>7}{'G':>7}" for _ in range(3))
    lines = [head, sub]
    for r in results:
        cells = []
        for metric in ("accuracy", "precision", "recall"):
            vals = [getattr(ev, metric) for ev in (r.majority, r.expert, r.cdsm)]
            cells.append(" " + "".join(f"{v:>{6 if i == 0 else 7}.3f}" for i, v in enumerate(vals)))
        lines.append(f"M{r.trial:<3}|" + " |".join(cells))
    return "\n".join(lines) + "\n"


def stage_pipeline(opts: dict, config: CdsmConfig) -> None:
    stage_ingest(opts)
    stage_mine(opts, config)
    stage_report(opts)
    gradebook = _load_grades(opts)
    trials = [opts["trial"]] if opts.get("trial") else range(1, len(gradebook.assignments) + 1)
    results = []
    for trial in trials:
        per_trial = dict(opts, trial=trial)
        _trial(per_trial, gradebook)
        stage_featurize(per_trial, config)
        stage_train(per_trial, config)
        results.append(stage_evaluate(per_trial, config))
    text = summary_table(results)
    with open(_path(opts, "summary.txt"), "w") as fh:
        fh.write(text)
    _write_json(_path(opts, "summary.json"), {
        f"M{r.trial}": {name: {"accuracy": ev.accuracy, "precision": ev.precision, "recall": ev.recall}
                        for name, ev in (("majority", r.majority), ("expert", r.expert), ("cdsm", r.cdsm))}
        for r in results
    })
    sys.stdout.write(text)


def run(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="cdsm: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if not args.stage:
            raise UsageError(f"a stage is required: {', '.join(STAGES)}")
        opts = resolve(args)
        config = _check(opts)
        stage = args.stage
        if stage == "ingest":
            stage_ingest(opts)
        elif stage == "mine":
            stage_mine(opts, config)
        elif stage == "featurize":
            stage_featurize(opts, config)
        elif stage == "train":
            stage_train(opts, config)
        elif stage == "evaluate":
            stage_evaluate(opts, config)
        elif stage == "report":
            stage_report(opts)
        elif stage == "synth":
            stage_synth(opts)
        else:
            stage_pipeline(opts, config)
    except OSError as exc:
        name = getattr(exc, "filename", None)
        detail = f"{exc.strerror}: {name}" if name and exc.strerror else str(exc)
        print(f"cdsm: I/O error: {detail}", file=sys.stderr)
        return 2
    except (UsageError, IngestError, ValueError, KeyError) as exc:
        message = str(exc).strip("'\"").replace("\n", " ")
        print(f"cdsm: error: {message}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
