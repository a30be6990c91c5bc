"""Ablation grids laid out like the published exhibits (view x classifier table, fusion heatmap, ...)."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .cohort import VIEW_ORDER, Cohort
from .evaluation import ExperimentConfig, format_cell, nested_cv
from .fusion import DecisionFusion, FeatureFusion
from .importance import BiomarkerGrouping, export_radar, fold_blocks, profile
from .learners import Kind
from .temporal import DayPairPolicy, TemporalMode

log = logging.getLogger(__name__)

EXHIBITS = ("table1", "fig3", "fig4", "fig5", "table2", "table3")
ROWS = [v.label for v in VIEW_ORDER] + ["All Views"]

# (row label, feature fusion, decision fusion) in the heatmap's row order
FUSION_ROWS = [
    ("Avg. Features", FeatureFusion.AVERAGE, None),
    ("Avg. Proba.", None, DecisionFusion.AVERAGE_PROBA),
    ("Concatenate", FeatureFusion.CONCATENATE, None),
    ("Max. Features", FeatureFusion.MAX, None),
    ("Max. Votes", None, DecisionFusion.MAX_VOTES),
]


class AblationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Cell:
    exhibit: str
    row: str
    col: str
    cohort: str  # "main" or "biomarker"
    config: ExperimentConfig

    @property
    def key(self) -> str:
        return self.cohort + ":" + json.dumps(self.config.to_dict(), sort_keys=True)


def _row_config(base: ExperimentConfig, row: str, **kw) -> ExperimentConfig:
    if row == "All Views":
        kw.setdefault("feature_fusion", FeatureFusion.CONCATENATE)
        return base.with_(view=None, **kw)
    view = VIEW_ORDER[ROWS.index(row)]
    return base.with_(view=view, feature_fusion=None, decision_fusion=None, **kw)


def plan_cells(
    base: ExperimentConfig,
    classifiers: Sequence[Kind],
    grids: Mapping[Kind, Mapping | None],
    exhibits: Sequence[str],
    focus: Kind = Kind.MLP,
    biomarker: bool = False,
) -> list[Cell]:
    """Enumerate every (exhibit, row, column) cell with its experiment config."""
    cells: list[Cell] = []
    fb = base.with_(classifier=focus, grid=grids.get(focus))
    d, c = TemporalMode.DIFFERENCE, TemporalMode.CONCATENATE
    first, allp = DayPairPolicy.FIRST_PAIR, DayPairPolicy.ALL_SEQUENTIAL
    for ex in exhibits:
        if ex == "table1":
            for row in ROWS:
                for k in classifiers:
                    cfg = _row_config(base.with_(classifier=k, grid=grids.get(k)), row, temporal=d, day_policy=first)
                    cells.append(Cell(ex, row, k.title, "main", cfg))
        elif ex == "fig3":
            for name, ff, df in FUSION_ROWS:
                for col, mode in (("Concatenate", c), ("Difference", d)):
                    cfg = fb.with_(view=None, feature_fusion=ff, decision_fusion=df, temporal=mode, day_policy=first)
                    cells.append(Cell(ex, name, col, "main", cfg))
        elif ex == "fig4":
            for row in ROWS:
                for col, mode in (("Temporal Concatenate", c), ("Temporal Difference", d)):
                    cells.append(Cell(ex, row, col, "main", _row_config(fb, row, temporal=mode, day_policy=first)))
        elif ex == "fig5":
            for row in ROWS:
                for col, pooled in (("No Cross-Lung", False), ("With Cross-Lung", True)):
                    # pooling is per-view only; the all-view bar repeats the unpooled model
                    pooled = pooled and row != "All Views"
                    cfg = _row_config(fb, row, temporal=d, day_policy=first, cross_lung=pooled)
                    cells.append(Cell(ex, row, col, "main", cfg))
        elif ex == "table2":
            settings = [
                ("Day 1 vs Day 2 (Single-Day Model)", first, None),
                ("Day 1 vs Day 2 (All-Days Model)", allp, (1, 2)),
                ("All Days (All-Days Model)", allp, None),
            ]
            for row in ROWS:
                for col, pol, flt in settings:
                    cfg = _row_config(fb, row, temporal=d, day_policy=pol, eval_day_filter=flt)
                    cells.append(Cell(ex, row, col, "main", cfg))
        elif ex == "table3":
            if not biomarker:
                continue
            for row in ("Left-3", "Right-3", "All Views"):
                for suffix, pol in (("(Day 1 vs. Day 2)", first), ("(All Days)", allp)):
                    for k in classifiers:
                        cfg = _row_config(base.with_(classifier=k, grid=grids.get(k)), row, temporal=d, day_policy=pol)
                        cells.append(Cell(ex, f"{row} {suffix}", k.title, "biomarker", cfg))
        else:
            raise AblationError(f"unknown exhibit {ex!r}")
    return cells


def _run_cell(args):
    key, cfg, cohort = args
    try:
        report = nested_cv(cfg, cohort)
    except Exception as exc:  # reported with cell coordinates by the caller
        return key, None, f"{type(exc).__name__}: {exc}"
    return key, {
        "f1": report.f1,
        "ci": list(report.ci),
        "cell": format_cell(report.f1, report.ci),
        "n_predictions": len(report.predictions),
        "feature_dim": report.feature_dim,
        "importance_counts": report.importance_counts,
        "config": cfg.to_dict(),
    }, None


def run_cells(
    cells: Sequence[Cell],
    cohorts: Mapping[str, Cohort],
    jobs: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> dict[str, dict]:
    """Evaluate each distinct cell once; results are keyed by cell key."""
    unique: dict[str, Cell] = {}
    for cell in cells:
        unique.setdefault(cell.key, cell)
    tasks = [(k, c.config, cohorts[c.cohort]) for k, c in unique.items()]
    results: dict[str, dict] = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = pool.map(_run_cell, tasks)
            for i, (key, res, err) in enumerate(outcomes, 1):
                _collect(results, unique[key], key, res, err)
                if progress:
                    progress(i, len(tasks))
    else:
        for i, task in enumerate(tasks, 1):
            key, res, err = _run_cell(task)
            _collect(results, unique[key], key, res, err)
            if progress:
                progress(i, len(tasks))
    return results


def _collect(results, cell, key, res, err):
    if err is not None:
        raise AblationError(f"cell {cell.exhibit}[{cell.row}, {cell.col}] failed: {err}")
    results[key] = res


def _grid(cells: Sequence[Cell], results, exhibit: str) -> tuple[list[str], list[str], dict]:
    rows, cols, table = [], [], {}
    for c in cells:
        if c.exhibit != exhibit:
            continue
        if c.row not in rows:
            rows.append(c.row)
        if c.col not in cols:
            cols.append(c.col)
        table[(c.row, c.col)] = results[c.key]
    return rows, cols, table


def _write_csv(path: Path, header: list[str], body: list[list[Any]]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
    _write_text(path.with_suffix(".txt"), header, body)


def _write_text(path: Path, header, body):
    cells = [[str(x) for x in header]] + [[_fmt(x) for x in r] for r in body]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fmt(x) -> str:
    return f"{x:.3f}" if isinstance(x, float) else str(x)


def _num(x: float) -> str:
    return f"{x:.6f}"


def write_exhibits(cells: Sequence[Cell], results: Mapping[str, dict], out_dir: Path) -> list[Path]:
    """Emit one CSV (plus aligned .txt) per exhibit present in ``cells``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    present = {c.exhibit for c in cells}

    if "table1" in present:
        rows, cols, t = _grid(cells, results, "table1")
        p = out_dir / "table1_view_classifier.csv"
        _write_csv(p, ["view", *cols], [[r, *(t[(r, c)]["cell"] for c in cols)] for r in rows])
        written.append(p)
    if "fig3" in present:
        rows, cols, t = _grid(cells, results, "fig3")
        p = out_dir / "fig3_fusion_heatmap.csv"
        header = ["fusion", *(c.lower() for c in cols)]
        _write_csv(p, header, [[r, *(_num(t[(r, c)]["f1"]) for c in cols)] for r in rows])
        written.append(p)
    for ex, name, tags in (
        ("fig4", "fig4_temporal_bars.csv", ("concatenate", "difference")),
        ("fig5", "fig5_crosslung_bars.csv", ("no_crosslung", "crosslung")),
    ):
        if ex not in present:
            continue
        rows, cols, t = _grid(cells, results, ex)
        header = ["view"] + [f"{tag}_{s}" for tag in tags for s in ("f1", "lo", "hi")]
        body = []
        for r in rows:
            line = [r]
            for c in cols:
                res = t[(r, c)]
                line += [_num(res["f1"]), _num(res["ci"][0]), _num(res["ci"][1])]
            body.append(line)
        p = out_dir / name
        _write_csv(p, header, body)
        written.append(p)
    if "table2" in present:
        rows, cols, t = _grid(cells, results, "table2")
        p = out_dir / "table2_daypair.csv"
        _write_csv(p, ["view", *cols], [[r, *(t[(r, c)]["cell"] for c in cols)] for r in rows])
        written.append(p)
    if "table3" in present:
        rows, cols, t = _grid(cells, results, "table3")
        p = out_dir / "table3_biomarker.csv"
        _write_csv(p, ["view", *cols], [[r, *(t[(r, c)]["cell"] for c in cols)] for r in rows])
        written.append(p)
        rf = t.get(("All Views (Day 1 vs. Day 2)", Kind.RANDOM_FOREST.title))
        if rf and rf.get("importance_counts"):
            grouping = BiomarkerGrouping.placeholder()
            folded = [fold_blocks(c) for c in rf["importance_counts"]]
            p = out_dir / "fig2_radar.csv"
            export_radar(profile(folded, grouping), p)
            written.append(p)
    return written


def write_cell_results(cells: Sequence[Cell], results: Mapping[str, dict], path: Path) -> None:
    doc = [
        {"exhibit": c.exhibit, "row": c.row, "col": c.col, "cohort": c.cohort, **{k: v for k, v in results[c.key].items() if k != "importance_counts"}}
        for c in cells
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, ensure_ascii=False)
        fh.write("\n")
