"""Clinical data model: views, clip feature records, outcomes and cohorts.

Feature files are JSONL (one clip per line), labels are a two-column CSV.
"""
from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class CohortError(ValueError):
    """Raised for schema or consistency violations in cohort inputs."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ViewId(str, Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"

    @property
    def mirror(self) -> "ViewId":
        side = "R" if self.value[0] == "L" else "L"
        return ViewId(side + self.value[1])

    @property
    def region(self) -> str:
        return {"1": "upper anterior", "2": "lateral", "3": "posterior/dependent"}[self.value[1]]

    @property
    def label(self) -> str:
        side = "Left" if self.value[0] == "L" else "Right"
        return f"{side}-{self.value[1]}"


# Fixed order used for concatenation and for every table.
VIEW_ORDER: tuple[ViewId, ...] = (ViewId.L1, ViewId.L2, ViewId.L3, ViewId.R1, ViewId.R2, ViewId.R3)


class FeatureSource(str, Enum):
    ENCODER = "tsm"
    BIOMARKER = "biomarker"

    @property
    def dim(self) -> int:
        return 512 if self is FeatureSource.ENCODER else 38

    @classmethod
    def from_dim(cls, dim: int) -> "FeatureSource":
        for src in cls:
            if src.dim == dim:
                return src
        raise ValueError(f"no feature source has dimension {dim}")


@dataclass(frozen=True)
class ClipRecord:
    patient_id: str
    view: ViewId
    day: int
    source: FeatureSource
    features: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.day, (int, np.integer)) or isinstance(self.day, bool) or self.day < 1:
            raise CohortError(f"day must be a positive integer, got {self.day!r}")
        arr = np.array(self.features, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] != self.source.dim:
            raise CohortError(
                f"vector length {arr.size} != {self.source.value} dim {self.source.dim}"
            )
        if not np.all(np.isfinite(arr)):
            raise CohortError("non-finite feature value")
        arr.flags.writeable = False
        object.__setattr__(self, "features", arr)

    @property
    def key(self) -> tuple[str, ViewId, int]:
        return (self.patient_id, self.view, self.day)


@dataclass(frozen=True)
class PatientOutcome:
    patient_id: str
    readmitted_30d: bool


def collapse_clips(records: Sequence[ClipRecord]) -> ClipRecord:
    """Merge repeat clips of one (patient, view, day) by element-wise mean."""
    if not records:
        raise CohortError("collapse_clips needs at least one record")
    first = records[0]
    if len(records) == 1:
        return first
    for r in records[1:]:
        if r.source is not first.source:
            raise CohortError(f"mixed feature sources for {first.key}")
        if r.key != first.key:
            raise CohortError(f"cannot collapse records with different keys {first.key} / {r.key}")
    # math.fsum per column keeps the mean independent of record order
    stacked = np.stack([r.features for r in records])
    mean = np.array([math.fsum(col) for col in stacked.T]) / len(records)
    # the exact mean lies in [min, max]; clamping makes k identical clips collapse to themselves
    mean = np.clip(mean, stacked.min(axis=0), stacked.max(axis=0))
    return ClipRecord(first.patient_id, first.view, first.day, first.source, mean)


class Cohort:
    """Validated, immutable collection of clip records with patient outcomes."""

    def __init__(
        self,
        records: Iterable[ClipRecord],
        outcomes: Iterable[PatientOutcome],
        source: FeatureSource,
    ):
        grouped: dict[tuple, list[ClipRecord]] = defaultdict(list)
        for r in records:
            if r.source is not source:
                raise CohortError(f"record {r.key} has source {r.source.value}, cohort is {source.value}")
            grouped[r.key].append(r)
        if not grouped:
            raise CohortError("no records")
        labels: dict[str, bool] = {}
        for o in outcomes:
            if o.patient_id in labels:
                raise CohortError(f"duplicate outcome for patient {o.patient_id}")
            labels[o.patient_id] = bool(o.readmitted_30d)

        collapsed = [collapse_clips(grouped[k]) for k in sorted(grouped, key=_sort_key)]
        with_records = {r.patient_id for r in collapsed}
        missing = sorted(with_records - labels.keys())
        if missing:
            raise CohortError(f"label missing for patient(s): {', '.join(missing)}")
        unused = sorted(labels.keys() - with_records)
        if unused:
            raise CohortError(f"label given for patient(s) without records: {', '.join(unused)}")

        self._records = tuple(collapsed)
        self._labels = dict(sorted(labels.items()))
        self._index = {r.key: r for r in self._records}
        self.source = source

    @property
    def records(self) -> tuple[ClipRecord, ...]:
        return self._records

    @property
    def labels(self) -> Mapping[str, bool]:
        return dict(self._labels)

    @property
    def outcomes(self) -> tuple[PatientOutcome, ...]:
        return tuple(PatientOutcome(p, y) for p, y in self._labels.items())

    @property
    def patients(self) -> list[str]:
        return list(self._labels)

    @property
    def positive_count(self) -> int:
        return sum(self._labels.values())

    @property
    def negative_count(self) -> int:
        return len(self._labels) - self.positive_count

    def label(self, patient_id: str) -> bool:
        return self._labels[patient_id]

    def get(self, patient_id: str, view: ViewId, day: int) -> ClipRecord | None:
        return self._index.get((patient_id, view, day))

    def days(self, patient_id: str, view: ViewId) -> list[int]:
        return sorted(d for (p, v, d) in self._index if p == patient_id and v is view)

    def __len__(self) -> int:
        return len(self._records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cohort):
            return NotImplemented
        if self.source is not other.source or self._labels != other._labels:
            return False
        if [r.key for r in self._records] != [r.key for r in other._records]:
            return False
        return all(
            np.array_equal(a.features, b.features) for a, b in zip(self._records, other._records)
        )

    def __repr__(self) -> str:
        return (
            f"Cohort(patients={len(self._labels)}, positive={self.positive_count}, "
            f"records={len(self._records)}, source={self.source.value})"
        )


def _sort_key(key):
    patient, view, day = key
    return (patient, view.value, day)


_TRUE = {"1", "true"}
_FALSE = {"0", "false"}


def _parse_label(value: str, line: int) -> bool:
    v = value.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise CohortError(f"label value {value!r} not in {{0,1,true,false}}", line)


def read_labels(path: str | Path) -> list[PatientOutcome]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["patient_id", "readmitted"]:
            raise CohortError("labels header must be 'patient_id,readmitted'", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise CohortError(f"expected 2 columns, got {len(row)}", lineno)
            out.append(PatientOutcome(row[0].strip(), _parse_label(row[1], lineno)))
    return out


def read_features(path: str | Path, source: FeatureSource | None = None) -> list[ClipRecord]:
    """Parse a JSONL features file.

    If ``source`` is None it is taken from the first record; every line must agree.
    """
    records = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CohortError(f"malformed JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict):
                raise CohortError("expected a JSON object", lineno)
            try:
                pid = obj["patient_id"]
                view = ViewId(obj["view"])
                day = obj["day"]
                src = FeatureSource(obj["source"])
                feats = obj["features"]
            except KeyError as exc:
                raise CohortError(f"missing field {exc.args[0]!r}", lineno) from None
            except ValueError as exc:
                raise CohortError(str(exc), lineno) from None
            if not isinstance(pid, str) or not pid:
                raise CohortError("patient_id must be a non-empty string", lineno)
            if source is None:
                source = src
            if src is not source:
                raise CohortError(f"source {src.value!r} does not match {source.value!r}", lineno)
            if not isinstance(feats, list) or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in feats
            ):
                raise CohortError("features must be a list of numbers", lineno)
            try:
                records.append(ClipRecord(pid, view, day, src, np.asarray(feats, dtype=np.float64)))
            except CohortError as exc:
                raise CohortError(str(exc), lineno) from None
    if not records:
        raise CohortError("no records")
    return records


def load_cohort(
    features_path: str | Path,
    labels_path: str | Path,
    source: FeatureSource | None = None,
) -> Cohort:
    records = read_features(features_path, source)
    return Cohort(records, read_labels(labels_path), records[0].source)


def write_cohort(cohort: Cohort, features_path: str | Path, labels_path: str | Path) -> None:
    """Serialize in the same formats ``load_cohort`` reads (floats round-trip exactly)."""
    with open(features_path, "w") as fh:
        for r in cohort.records:
            fh.write(
                json.dumps(
                    {
                        "patient_id": r.patient_id,
                        "view": r.view.value,
                        "day": int(r.day),
                        "source": r.source.value,
                        "features": [float(x) for x in r.features],
                    }
                )
            )
            fh.write("\n")
    with open(labels_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "readmitted"])
        for pid, y in cohort.labels.items():
            w.writerow([pid, int(y)])


@dataclass(frozen=True)
class CohortSummary:
    patients: int
    positives: int
    negatives: int
    records: int
    day_counts: dict[int, int]
    view_counts: dict[str, int]

    def render(self) -> str:
        days = ", ".join(f"day{d}={n}" for d, n in self.day_counts.items())
        views = ", ".join(f"{v}={n}" for v, n in self.view_counts.items())
        return (
            f"patients={self.patients} positive={self.positives} negative={self.negatives} "
            f"records={self.records}\nscans per day: {days}\nscans per view: {views}"
        )


def summarize(cohort: Cohort) -> CohortSummary:
    days = Counter(r.day for r in cohort.records)
    views = Counter(r.view for r in cohort.records)
    return CohortSummary(
        patients=len(cohort.patients),
        positives=cohort.positive_count,
        negatives=cohort.negative_count,
        records=len(cohort),
        day_counts={d: days[d] for d in sorted(days)},
        view_counts={v.value: views[v] for v in VIEW_ORDER if views[v]},
    )


def completeness_warnings(cohort: Cohort) -> list[str]:
    """Per-patient notes on missing views and on views imaged on fewer days than others."""
    notes = []
    for pid in cohort.patients:
        per_view = {v: cohort.days(pid, v) for v in VIEW_ORDER}
        all_days = sorted({d for ds in per_view.values() for d in ds})
        absent = [v.value for v, ds in per_view.items() if not ds]
        if absent:
            notes.append(f"{pid}: missing view(s) {','.join(absent)}")
        for v, ds in per_view.items():
            if ds and ds != all_days:
                lacking = sorted(set(all_days) - set(ds))
                notes.append(f"{pid}: view {v.value} missing day(s) {','.join(map(str, lacking))}")
        if len(all_days) < 2:
            notes.append(f"{pid}: fewer than two imaging days, no day-pairs possible")
    return notes
