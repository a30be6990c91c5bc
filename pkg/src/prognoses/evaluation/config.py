"""Experiment coordinates for one nested cross-validation run."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any, Mapping

from ..cohort import ViewId
from ..fusion import DecisionFusion, FeatureFusion, MissingViewPolicy
from ..learners import DEFAULT_GRIDS, ClassifierSpec, Kind, grid_candidates
from ..temporal import DayPairPolicy, TemporalMode


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    view: ViewId | None = None  # None means all six views
    temporal: TemporalMode = TemporalMode.DIFFERENCE
    feature_fusion: FeatureFusion | None = None
    decision_fusion: DecisionFusion | None = None
    cross_lung: bool = False
    day_policy: DayPairPolicy = DayPairPolicy.FIRST_PAIR
    eval_day_filter: tuple[int, int] | None = None
    classifier: Kind = Kind.MLP
    grid: Mapping[str, list] | None = None
    outer_folds: int = 5
    seed: int = 0
    n_bootstrap: int = 2000
    bootstrap_unit: str = "sample"
    missing_views: MissingViewPolicy = MissingViewPolicy.SKIP
    threshold: float = 0.5

    def __post_init__(self):
        if self.view is None:
            if (self.feature_fusion is None) == (self.decision_fusion is None):
                raise ConfigError("fusion", "all-view runs need exactly one of feature_fusion / decision_fusion")
            if self.cross_lung:
                raise ConfigError("cross_lung", "cross-lung pooling applies to single-view runs only")
        elif self.feature_fusion is not None or self.decision_fusion is not None:
            raise ConfigError("fusion", "single-view runs take no fusion strategy")
        if self.outer_folds < 3:
            raise ConfigError("outer_folds", "need at least 3 outer folds")
        if self.bootstrap_unit not in ("sample", "patient"):
            raise ConfigError("bootstrap_unit", "must be 'sample' or 'patient'")
        if self.n_bootstrap < 1:
            raise ConfigError("n_bootstrap", "must be positive")
        if self.eval_day_filter is not None:
            a, b = self.eval_day_filter
            if not a < b:
                raise ConfigError("eval_day_filter", "needs day_a < day_b")
        try:
            for cand in grid_candidates(self.classifier, self.grid):
                ClassifierSpec(self.classifier, cand, 0)
        except ValueError as exc:
            raise ConfigError("grid", str(exc)) from None

    @property
    def view_name(self) -> str:
        return "All Views" if self.view is None else self.view.label

    @property
    def candidates(self) -> list[dict]:
        return grid_candidates(self.classifier, self.grid)

    def to_dict(self) -> dict[str, Any]:
        return {
            "view": "all" if self.view is None else self.view.value,
            "temporal": self.temporal.value,
            "feature_fusion": self.feature_fusion.value if self.feature_fusion else None,
            "decision_fusion": self.decision_fusion.value if self.decision_fusion else None,
            "cross_lung": self.cross_lung,
            "day_policy": self.day_policy.value,
            "eval_day_filter": list(self.eval_day_filter) if self.eval_day_filter else None,
            "classifier": self.classifier.value,
            "grid": {k: list(v) for k, v in sorted((self.grid or DEFAULT_GRIDS[self.classifier]).items())},
            "outer_folds": self.outer_folds,
            "seed": self.seed,
            "n_bootstrap": self.n_bootstrap,
            "bootstrap_unit": self.bootstrap_unit,
            "missing_views": self.missing_views.value,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], path: str = "experiment") -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"{path}.{unknown[0]}", "unknown field")
        kw: dict[str, Any] = {}

        def enum(name, typ, allow_none=False):
            if name not in d:
                return
            value = d[name]
            if value is None and allow_none:
                kw[name] = None
                return
            try:
                kw[name] = typ(value)
            except ValueError:
                choices = ", ".join(m.value for m in typ)
                raise ConfigError(f"{path}.{name}", f"{value!r} not one of {choices}") from None

        if "view" in d:
            v = d["view"]
            if v in (None, "all", "ALL", "All Views"):
                kw["view"] = None
            else:
                try:
                    kw["view"] = ViewId(v)
                except ValueError:
                    raise ConfigError(f"{path}.view", f"{v!r} is not a view or 'all'") from None
        enum("temporal", TemporalMode)
        enum("feature_fusion", FeatureFusion, True)
        enum("decision_fusion", DecisionFusion, True)
        enum("day_policy", DayPairPolicy)
        enum("classifier", Kind)
        enum("missing_views", MissingViewPolicy)
        for name, typ in (("cross_lung", bool), ("outer_folds", int), ("seed", int), ("n_bootstrap", int), ("threshold", float)):
            if name in d:
                if not isinstance(d[name], typ) and not (typ is float and isinstance(d[name], int)):
                    raise ConfigError(f"{path}.{name}", f"expected {typ.__name__}, got {d[name]!r}")
                kw[name] = typ(d[name])
        if "bootstrap_unit" in d:
            kw["bootstrap_unit"] = d["bootstrap_unit"]
        if d.get("eval_day_filter") is not None:
            f = d["eval_day_filter"]
            if not (isinstance(f, (list, tuple)) and len(f) == 2 and all(isinstance(x, int) for x in f)):
                raise ConfigError(f"{path}.eval_day_filter", "expected [day_a, day_b]")
            kw["eval_day_filter"] = tuple(f)
        if d.get("grid") is not None:
            g = d["grid"]
            if not isinstance(g, Mapping) or not all(isinstance(v, list) and v for v in g.values()):
                raise ConfigError(f"{path}.grid", "expected a mapping of name -> non-empty list")
            kw["grid"] = {k: list(v) for k, v in g.items()}
        try:
            return cls(**kw)
        except ConfigError as exc:
            raise ConfigError(f"{path}.{exc.path}", str(exc).split(": ", 1)[1]) from None

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)
