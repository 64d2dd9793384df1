"""Ingestion, cleaning, feature derivation, rule labeling, splitting and scaling
of generator fuel-consumption logs."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, SchemaError

log = logging.getLogger(__name__)

# field name -> (canonical CSV header, numeric?, mandatory?)
SCHEMA: dict[str, tuple[str, bool, bool]] = {
    "site_id": ("SITE ID", False, True),
    "visit_date": ("VISIT DATE", False, True),
    "power_type": ("POWER TYPE", False, False),
    "generator_capacity": ("GENERATOR CAPACITY (kVA)", True, True),
    "running_time": ("RUNNING TIME", True, True),
    "consumption_his": ("CONSUMPTION HIS", True, True),
    "number_of_days": ("NUMBER OF DAYS", True, True),
    "quantity_consumed_between_visits": ("QUANTITY CONSUMED BETWEEN VISITS", True, True),
    "total_quantity_left": ("TOTAL QUANTITY LEFT", True, True),
    "maximum_consumption_per_day": ("MAXIMUM CONSUMPTION PER DAY", True, True),
    "consumption_rate": ("CONSUMPTION RATE", True, True),
}
NUMERIC_FIELDS = [k for k, (_, num, _) in SCHEMA.items() if num]
DERIVED_FIELDS = [
    "running_time_per_day",
    "daily_consumption_within_period",
    "daily_consumed_quantity_between_visits",
]
FEATURE_NAMES = NUMERIC_FIELDS + DERIVED_FIELDS


def _norm(header: str) -> str:
    return re.sub(r"[^a-z0-9]", "", header.lower())


def _aliases(schema) -> dict[str, str]:
    out = {}
    for name, (header, _, _) in schema.items():
        out[_norm(header)] = name
        out[_norm(name)] = name
    # "GENERATOR CAPACITY" without the unit suffix
    out.setdefault("generatorcapacity", "generator_capacity")
    return out


@dataclass
class FuelRecord:
    site_id: Optional[str]
    visit_date: Optional[date]
    power_type: Optional[str]
    generator_capacity: Optional[float]
    running_time: Optional[float]
    consumption_his: Optional[float]
    number_of_days: Optional[float]
    quantity_consumed_between_visits: Optional[float]
    total_quantity_left: Optional[float]
    maximum_consumption_per_day: Optional[float]
    consumption_rate: Optional[float]
    line: int = 0


@dataclass(frozen=True)
class DerivedFeatures:
    running_time_per_day: float
    daily_consumption_within_period: float
    daily_consumed_quantity_between_visits: float


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str


def load_csv(path, schema=SCHEMA) -> tuple[list[FuelRecord], list[Rejection]]:
    """Parse a raw log CSV.

    Header names are matched case- and punctuation-insensitively. Empty cells
    become ``None`` and are left for :func:`clean`; cells that fail to parse
    send the row to the rejection report instead of aborting the load.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    aliases = _aliases(schema)
    records, rejected = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: missing header row")
        cols: dict[str, int] = {}
        for i, h in enumerate(header):
            name = aliases.get(_norm(h))
            if name is not None and name not in cols:
                cols[name] = i
        missing = [SCHEMA[n][0] for n, (_, _, mand) in schema.items() if mand and n not in cols]
        if missing:
            raise SchemaError(f"{path}: missing mandatory column(s): {', '.join(missing)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                records.append(_parse_row(row, cols, schema, line))
            except ValueError as exc:
                rejected.append(Rejection(line, str(exc)))
    return records, rejected


def _parse_row(row, cols, schema, line) -> FuelRecord:
    values = {}
    for name, (header, numeric, _) in schema.items():
        idx = cols.get(name)
        raw = row[idx].strip() if idx is not None and idx < len(row) else ""
        if raw == "":
            values[name] = None
        elif numeric:
            try:
                v = float(raw)
            except ValueError:
                raise ValueError(f"non-numeric {header}: {raw!r}") from None
            if not math.isfinite(v):
                raise ValueError(f"non-finite {header}: {raw!r}")
            values[name] = v
        elif name == "visit_date":
            try:
                values[name] = date.fromisoformat(raw)
            except ValueError:
                raise ValueError(f"bad {header}: {raw!r}") from None
        else:
            values[name] = raw
    return FuelRecord(**values, line=line)


def write_rejections(rejections: Sequence[Rejection], path, fingerprint: str = "") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if fingerprint:
            fh.write(f"# fingerprint={fingerprint}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["line", "reason"])
        for r in rejections:
            w.writerow([r.line, r.reason])


def clean(records: Sequence[FuelRecord]) -> tuple[list[FuelRecord], Counter]:
    """Drop rows with missing mandatory values, periods under one day, or negative quantities."""
    kept, tally = [], Counter()
    for r in records:
        reason = defect_reason(r)
        if reason:
            tally[reason] += 1
        else:
            kept.append(r)
    return kept, tally


def defect_reason(r: FuelRecord) -> str | None:
    """Why :func:`clean` would drop ``r``, or None if it is kept."""
    for name, (_, _, mandatory) in SCHEMA.items():
        if mandatory and getattr(r, name) is None:
            return "missing"
    if r.number_of_days < 1:
        return "zero-day period"
    if any(getattr(r, n) < 0 for n in NUMERIC_FIELDS):
        return "negative"
    return None


def derive_features(record: FuelRecord) -> DerivedFeatures:
    days = record.number_of_days
    if days is None or days < 1:
        raise DomainError(f"line {record.line}: number of days must be >= 1 (clean the records first)")
    if None in (record.running_time, record.consumption_his, record.quantity_consumed_between_visits):
        raise DomainError(f"line {record.line}: missing value (clean the records first)")
    return DerivedFeatures(
        running_time_per_day=record.running_time / days,
        daily_consumption_within_period=record.consumption_his / days,
        daily_consumed_quantity_between_visits=record.quantity_consumed_between_visits / days,
    )


@dataclass(frozen=True)
class LabelRuleSet:
    """R1: running time per day above the threshold.
    R2: daily quantity consumed between visits above the maximum consumption per day.
    """

    running_time_threshold: float = 24.0
    r1: bool = True
    r2: bool = True

    def __post_init__(self):
        if not self.running_time_threshold > 0:
            raise ValueError("running_time_threshold must be positive")
        if not (self.r1 or self.r2):
            raise ValueError("at least one labeling rule must be enabled")

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def label(record: FuelRecord, derived: DerivedFeatures, rules: LabelRuleSet = LabelRuleSet()) -> int:
    """1 (anomalous) iff any enabled rule fires, else 0."""
    if rules.r1 and derived.running_time_per_day > rules.running_time_threshold:
        return 1
    if rules.r2 and derived.daily_consumed_quantity_between_visits > record.maximum_consumption_per_day:
        return 1
    return 0


@dataclass
class ProcessedDataset:
    feature_names: list[str]
    X: np.ndarray  # raw units
    labels: np.ndarray  # 0 normal, 1 anomalous
    is_test: np.ndarray  # bool per row
    site_ids: list[str] = field(default_factory=list)
    dates: list[str] = field(default_factory=list)
    source_row: Optional[np.ndarray] = None  # provenance of augmented rows
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(len(self.labels), len(self.feature_names))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.is_test = np.asarray(self.is_test, dtype=bool)
        if set(np.unique(self.labels)) - {0, 1}:
            raise DomainError("labels must be 0 or 1")
        if self.is_test.shape != self.labels.shape:
            raise DimensionError("split assignment length differs from row count")

    def __len__(self):
        return len(self.labels)

    @property
    def train_mask(self) -> np.ndarray:
        return ~self.is_test

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    def subset(self, mask) -> "ProcessedDataset":
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        return ProcessedDataset(
            feature_names=list(self.feature_names),
            X=self.X[idx],
            labels=self.labels[idx],
            is_test=self.is_test[idx],
            site_ids=[self.site_ids[i] for i in idx] if self.site_ids else [],
            dates=[self.dates[i] for i in idx] if self.dates else [],
            source_row=None if self.source_row is None else self.source_row[idx],
            meta=dict(self.meta),
        )


def build_dataset(records: Sequence[FuelRecord], rules: LabelRuleSet = LabelRuleSet(),
                  test_fraction: float = 0.2, seed: int = 0) -> ProcessedDataset:
    """Derive features, label and split cleaned records."""
    rows, labels = [], []
    for r in records:
        d = derive_features(r)
        rows.append([getattr(r, n) for n in NUMERIC_FIELDS] + [getattr(d, n) for n in DERIVED_FIELDS])
        labels.append(label(r, d, rules))
    labels = np.array(labels, dtype=np.int64)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(FEATURE_NAMES))
    return ProcessedDataset(
        feature_names=list(FEATURE_NAMES),
        X=X,
        labels=labels,
        is_test=split(labels, test_fraction, seed) if len(labels) else np.zeros(0, bool),
        site_ids=[r.site_id for r in records],
        dates=[r.visit_date.isoformat() for r in records],
        meta={"label_rules": rules.to_dict(), "label_rules_fingerprint": rules.fingerprint()},
    )


def split(labels, test_fraction: float, seed: int) -> np.ndarray:
    """Stratified test assignment: each class sends round(n_c * fraction) rows to test."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    labels = np.asarray(labels)
    rng = np.random.Generator(np.random.PCG64(seed))
    is_test = np.zeros(labels.shape[0], dtype=bool)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 2:
            raise DomainError(f"class {cls} has {idx.size} row(s); stratified split needs >= 2")
        n_test = int(math.floor(idx.size * test_fraction + 0.5))
        n_test = min(max(n_test, 1), idx.size - 1)
        is_test[rng.permutation(idx)[:n_test]] = True
    return is_test


class MinMaxScaler:
    """Per-feature affine map of [min, max] onto [-1, 1]; constant features map to 0."""

    def __init__(self, data_min, data_max, feature_names=None):
        self.min = np.asarray(data_min, dtype=np.float64)
        self.max = np.asarray(data_max, dtype=np.float64)
        if np.any(self.min > self.max):
            raise ValueError("scaler min exceeds max")
        self.feature_names = list(feature_names) if feature_names is not None else None

    @classmethod
    def fit(cls, X, feature_names=None) -> "MinMaxScaler":
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            raise DomainError("cannot fit a scaler on zero rows")
        return cls(X.min(axis=0), X.max(axis=0), feature_names)

    @property
    def constant(self) -> np.ndarray:
        return self.max == self.min

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.min.size:
            raise DimensionError(f"scaler fitted on {self.min.size} features, got {X.shape[-1]}")
        span = np.where(self.constant, 1.0, self.max - self.min)
        out = 2.0 * (X - self.min) / span - 1.0
        return np.where(self.constant, 0.0, out)

    def inverse_transform(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        span = self.max - self.min
        return np.where(self.constant, self.min, (Z + 1.0) / 2.0 * span + self.min)

    def to_dict(self) -> dict:
        return {"feature_names": self.feature_names, "min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        return cls(d["min"], d["max"], d.get("feature_names"))


def scale_fit_transform(dataset: ProcessedDataset) -> tuple[MinMaxScaler, np.ndarray]:
    """Fit on training rows only, then scale every row."""
    scaler = MinMaxScaler.fit(dataset.X[dataset.train_mask], dataset.feature_names)
    return scaler, scaler.transform(dataset.X)


def correlation_matrix(X) -> np.ndarray:
    """Pearson correlations; constant columns get 0 off the diagonal (with a warning)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("correlation_matrix needs at least 2 rows")
    p = X.shape[1]
    centered = X - X.mean(axis=0)
    ss = np.einsum("ij,ij->j", centered, centered)
    constant = ss == 0
    if constant.any():
        log.warning("constant feature(s) at columns %s; correlation set to 0", np.flatnonzero(constant).tolist())
    C = np.eye(p)
    for i in range(p):
        for j in range(i + 1, p):
            if constant[i] or constant[j]:
                c = 0.0
            else:
                c = float(centered[:, i] @ centered[:, j]) / math.sqrt(ss[i] * ss[j])
                c = min(1.0, max(-1.0, c))
            C[i, j] = C[j, i] = c
    return C


def write_matrix_csv(names: Sequence[str], M: np.ndarray, path, fingerprint: str = "") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if fingerprint:
            fh.write(f"# fingerprint={fingerprint}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", *names])
        for name, row in zip(names, M):
            w.writerow([name, *(repr(float(v)) for v in row)])


PLOT_KINDS = ("scatter-running-time", "time-series-running-time")


def export_plot_data(dataset: ProcessedDataset, kind: str, path, threshold: float = 24.0,
                     fingerprint: str = "") -> int:
    """Write (x, running time per day, label, 24 h reference) rows; returns the row count."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    rtpd = dataset.column("running_time_per_day")
    if kind == "scatter-running-time":
        xs = [str(i) for i in range(len(dataset))]
        order = range(len(dataset))
        head = "index"
    else:
        if not dataset.dates:
            raise ValueError("time-series export needs visit dates")
        order = sorted(range(len(dataset)), key=lambda i: (dataset.dates[i], i))
        xs = dataset.dates
        head = "visit_date"
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if fingerprint:
            fh.write(f"# fingerprint={fingerprint}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([head, "running_time_per_day", "label", "threshold_hours"])
        for i in order:
            w.writerow([xs[i], repr(float(rtpd[i])), int(dataset.labels[i]), repr(float(threshold))])
    return len(dataset)


def write_dataset(ds: ProcessedDataset, path, extra_meta: dict | None = None) -> None:
    """CSV of rows plus a ``<path>.meta.json`` sidecar with feature names and provenance."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["site_id", "visit_date", *ds.feature_names, "label", "split"]
        if ds.source_row is not None:
            header.append("source_row")
        w.writerow(header)
        for i in range(len(ds)):
            row = [ds.site_ids[i] if ds.site_ids else "", ds.dates[i] if ds.dates else ""]
            row += [repr(float(v)) for v in ds.X[i]]
            row += [int(ds.labels[i]), "test" if ds.is_test[i] else "train"]
            if ds.source_row is not None:
                row.append(int(ds.source_row[i]))
            w.writerow(row)
    meta = dict(ds.meta)
    meta.update(extra_meta or {})
    meta["feature_names"] = ds.feature_names
    meta["rows"] = len(ds)
    meta["anomalous"] = int(ds.labels.sum())
    meta["test_rows"] = int(ds.is_test.sum())
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def read_dataset(path) -> ProcessedDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    meta_path = Path(str(path) + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    fixed = {"site_id", "visit_date", "label", "split", "source_row"}
    names = [h for h in header if h not in fixed]
    if "label" not in header or "split" not in header:
        raise SchemaError(f"{path}: not a processed dataset (needs label and split columns)")
    col = {h: i for i, h in enumerate(header)}
    X = np.array([[float(r[col[n]]) for n in names] for r in rows], dtype=np.float64)
    meta.pop("feature_names", None)
    for k in ("rows", "anomalous", "test_rows"):
        meta.pop(k, None)
    return ProcessedDataset(
        feature_names=names,
        X=X.reshape(len(rows), len(names)),
        labels=np.array([int(r[col["label"]]) for r in rows], dtype=np.int64),
        is_test=np.array([r[col["split"]] == "test" for r in rows], dtype=bool),
        site_ids=[r[col["site_id"]] for r in rows] if "site_id" in col else [],
        dates=[r[col["visit_date"]] for r in rows] if "visit_date" in col else [],
        source_row=np.array([int(r[col["source_row"]]) for r in rows]) if "source_row" in col else None,
        meta=meta,
    )
