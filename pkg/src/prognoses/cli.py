"""``prognoses`` command line: validate | synth | run | ablate | importance.

Exit codes: 0 success, 1 runtime failure, 2 input/schema error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

import yaml

from . import __version__
from .ablation import EXHIBITS, AblationError, plan_cells, run_cells, write_cell_results, write_exhibits
from .cohort import Cohort, CohortError, FeatureSource, completeness_warnings, load_cohort, summarize
from .evaluation import ConfigError, EvaluationError, ExperimentConfig, nested_cv
from .importance import BiomarkerGrouping, export_radar, profile_from_report
from .learners import Kind, LearnerError
from .synth import GeneratorError, GeneratorParams, easy_preset, generate, trajectory_preset, write_synthetic

log = logging.getLogger("prognoses")

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2

PRESETS = {"easy": easy_preset, "trajectory": trajectory_preset}


class InputError(ValueError):
    pass


def _read_config(path: str) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise InputError(f"{path}: not valid YAML ({exc})") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be a mapping")
    return doc, raw


def _coerce_numbers(obj):
    """YAML 1.1 reads '1e-3' as a string; turn numeric-looking strings into floats."""
    if isinstance(obj, dict):
        return {k: _coerce_numbers(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_coerce_numbers(v) for v in obj]
    if isinstance(obj, str):
        try:
            return float(obj)
        except ValueError:
            return obj
    return obj


def _seed(args, doc: dict) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PROGNOSES_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"PROGNOSES_SEED={env!r} is not an integer") from None
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise InputError(f"seed: expected integer, got {seed!r}")
    return seed


def generator_params(spec: dict, seed: int | None = None, path: str = "synth") -> GeneratorParams:
    spec = dict(spec)
    preset = spec.pop("preset", None)
    if seed is not None:
        spec["seed"] = seed
    try:
        if preset is not None:
            if preset not in PRESETS:
                raise InputError(f"{path}.preset: unknown preset {preset!r} (choose from {', '.join(PRESETS)})")
            return PRESETS[preset](**spec)
        return GeneratorParams.from_dict(spec)
    except (GeneratorError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_data(section: Any, base: Path, seed: int, path: str) -> Cohort:
    if not isinstance(section, dict):
        raise InputError(f"{path}: expected a mapping with features/labels or synth")
    if "synth" in section:
        synth = _coerce_numbers(section["synth"] or {})
        return generate(generator_params(synth, synth.get("seed", seed), f"{path}.synth"))[0]
    for key in ("features", "labels"):
        if key not in section:
            raise InputError(f"{path}.{key}: missing")
    source = section.get("source")
    try:
        src = FeatureSource(source) if source is not None else None
    except ValueError:
        raise InputError(f"{path}.source: {source!r} not one of tsm, biomarker") from None
    return load_cohort(base / section["features"], base / section["labels"], src)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, raw_config: bytes, seed: int, started: str, outputs: list[Path], extra=None):
    digest = hashlib.sha256(raw_config).hexdigest()
    doc = {
        "config_digest": digest,
        "tool_version": __version__,
        "seed": seed,
        "started": started,
        "finished": _now(),
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    if extra:
        doc.update(extra)
    (out / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n")
    return digest


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ------------------------------------------------------------------ commands


def cmd_validate(args) -> int:
    if args.features and args.labels:
        src = FeatureSource(args.source) if args.source else None
        cohort = load_cohort(args.features, args.labels, src)
    elif args.config:
        doc, _ = _read_config(args.config)
        cohort = _load_data(doc.get("data"), Path(args.config).resolve().parent, _seed(args, doc), "data")
    else:
        raise InputError("validate needs FEATURES LABELS or --config")
    summary = summarize(cohort)
    notes = completeness_warnings(cohort)
    print(summary.render())
    for note in notes:
        print(f"warning: {note}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        doc = {"patients": summary.patients, "positives": summary.positives, "negatives": summary.negatives,
               "records": summary.records, "day_counts": {str(k): v for k, v in summary.day_counts.items()},
               "warnings": notes}
        (out / "summary.json").write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_synth(args) -> int:
    doc, _ = _read_config(args.config) if args.config else ({}, b"")
    params = generator_params(_coerce_numbers(doc), _seed(args, doc))
    paths = write_synthetic(params, args.out)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def _experiment_from(doc: dict, seed: int, path: str = "experiment", **defaults) -> ExperimentConfig:
    section = _coerce_numbers(doc.get(path, {}) or {})
    if not isinstance(section, dict):
        raise InputError(f"{path}: expected a mapping")
    section = {**defaults, **section}
    section["seed"] = seed
    return ExperimentConfig.from_dict(section, path)


def cmd_run(args) -> int:
    started = _now()
    doc, raw = _read_config(args.config)
    seed = _seed(args, doc)
    base = Path(args.config).resolve().parent
    cohort = _load_data(doc.get("data"), base, seed, "data")
    config = _experiment_from(doc, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log.info("running %s / %s on %r", config.view_name, config.classifier.value, cohort)
    report = nested_cv(config, cohort)
    digest = hashlib.sha256(raw).hexdigest()
    outputs = [out / "report.json", out / "predictions.csv"]
    report.write_json(outputs[0], include_timing=False, extra={"manifest_digest": digest})
    report.write_predictions(outputs[1])
    if report.importance_counts is not None:
        p = out / "importance_counts.json"
        p.write_text(json.dumps({"manifest_digest": digest, "importance_counts": report.importance_counts}) + "\n")
        outputs.append(p)
    _write_manifest(out, raw, seed, started, outputs, {"runtime_seconds": report.runtime_seconds})
    print(f"{config.view_name} {config.classifier.title}: weighted F1 {report.f1:.3f} "
          f"[{report.ci[0]:.3f}–{report.ci[1]:.3f}] (n={len(report.predictions)}, dim={report.feature_dim})")
    for note in report.notes:
        log.warning(note)
    violations = report.audit.violations(report.plan)
    if violations:
        print("leakage audit FAILED:\n  " + "\n  ".join(violations[:10]), file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_ablate(args) -> int:
    started = _now()
    doc, raw = _read_config(args.config)
    seed = _seed(args, doc)
    base = Path(args.config).resolve().parent
    cohorts = {"main": _load_data(doc.get("data"), base, seed, "data")}
    if doc.get("biomarker_data") is not None:
        cohorts["biomarker"] = _load_data(doc["biomarker_data"], base, seed, "biomarker_data")
    elif cohorts["main"].source is FeatureSource.BIOMARKER:
        cohorts["biomarker"] = cohorts["main"]

    # every cell sets its own view and fusion; the base only carries shared settings
    base_cfg = _experiment_from(doc, seed, view="L3")
    try:
        classifiers = [Kind(k) for k in doc.get("classifiers", [k.value for k in Kind])]
        focus = Kind(doc.get("focus_classifier", "mlp"))
    except ValueError as exc:
        raise InputError(f"classifiers: {exc}") from None
    grids_doc = _coerce_numbers(doc.get("grids", {}) or {})
    grids = {}
    for name, g in grids_doc.items():
        try:
            grids[Kind(name)] = g
        except ValueError:
            raise InputError(f"grids.{name}: unknown classifier") from None
    exhibits = doc.get("exhibits", list(EXHIBITS))
    unknown = [e for e in exhibits if e not in EXHIBITS]
    if unknown:
        raise InputError(f"exhibits: unknown exhibit {unknown[0]!r}")
    for kind, g in grids.items():
        try:
            base_cfg.with_(classifier=kind, grid=g)
        except ConfigError as exc:
            raise ConfigError(f"grids.{kind.value}", str(exc).split(": ", 1)[1]) from None

    cells = plan_cells(base_cfg, classifiers, grids, exhibits, focus, "biomarker" in cohorts)
    n_unique = len({c.key for c in cells})
    log.info("%d cells (%d distinct runs), jobs=%d", len(cells), n_unique, args.jobs)
    results = run_cells(cells, cohorts, args.jobs, lambda i, n: log.info("run %d/%d done", i, n))

    out = Path(args.out)
    outputs = write_exhibits(cells, results, out)
    cell_path = out / "ablation_cells.json"
    write_cell_results(cells, results, cell_path)
    outputs.append(cell_path)
    _write_manifest(out, raw, seed, started, outputs, {"jobs": args.jobs})
    for p in outputs:
        print(p)
    return EXIT_OK


def cmd_importance(args) -> int:
    doc = {}
    if args.config:
        doc, _ = _read_config(args.config)
    report_path = args.report or doc.get("report")
    grouping_path = args.grouping or doc.get("grouping")
    if not report_path:
        raise InputError("importance needs --report (or 'report' in --config)")
    report = json.loads(Path(report_path).read_text())
    grouping = BiomarkerGrouping.read(grouping_path) if grouping_path else BiomarkerGrouping.placeholder()
    try:
        prof = profile_from_report(report, grouping)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "radar.csv"
    export_radar(prof, out)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="overrides config and PROGNOSES_SEED")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--jobs", type=int, default=1, help="parallel cells (ablate only)")

    parser = argparse.ArgumentParser(prog="prognoses", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a features/labels pair and summarize it")
    p.add_argument("features", nargs="?")
    p.add_argument("labels", nargs="?")
    p.add_argument("--source", choices=[s.value for s in FeatureSource])
    p.add_argument("--config", help="YAML with a data section, instead of the two paths")
    p.add_argument("--out", help="also write summary.json here")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic cohort")
    p.add_argument("--config", help="generator params YAML (may name a preset)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", parents=[common], help="one nested-CV experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", parents=[common], help="ablation grids laid out as result exhibits")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("importance", parents=[common], help="forest selection-frequency radar data")
    p.add_argument("--config")
    p.add_argument("--report")
    p.add_argument("--grouping")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_importance)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, CohortError, ConfigError, GeneratorError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EvaluationError, AblationError, LearnerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
