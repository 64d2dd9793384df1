"""Synthetic generator for fuel-consumption logs.

The real site logs are private, so this produces rows with the same columns,
a controllable anomaly share and a controllable number of defective rows.
Normal rows run at most ``normal_hours_max`` hours a day and burn fuel at the
site's consumption rate (+/-5%). Anomalies are built to trip the labeling
rules: inflated running time (R1), fuel drawn beyond the daily maximum (R2),
or both.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .data import SCHEMA
from .errors import ConfigError

KINDS = ("normal", "r1", "r2", "both")
DEFECT_KINDS = ("missing", "negative", "zero-days", "non-numeric")


@dataclass
class SynthConfig:
    record_count: int = 5905  # rows that survive cleaning
    anomaly_rate: float = 0.3512
    defect_rate: float = 105 / 6010  # share of all emitted rows that are defective
    site_count: int = 120
    start_date: str = "2017-09-01"
    end_date: str = "2018-08-31"
    seed: int = 0
    # anomaly mechanism shares: R1 only, R2 only, both
    mechanism_split: list[float] = field(default_factory=lambda: [0.6, 0.3, 0.1])
    capacity_tiers: list[float] = field(default_factory=lambda: [15.0, 20.0, 30.0, 40.0, 50.0])
    litres_per_kva_hour: float = 0.1
    days_range: list[int] = field(default_factory=lambda: [3, 30])
    normal_hours_mean: float = 13.0
    normal_hours_sd: float = 3.5
    normal_hours_max: float = 20.0
    anomaly_hours_range: list[float] = field(default_factory=lambda: [26.0, 40.0])
    overdraw_range: list[float] = field(default_factory=lambda: [1.2, 2.0])

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.record_count < 1:
            raise ConfigError("record_count must be >= 1")
        for name in ("anomaly_rate", "defect_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.defect_rate >= 1.0:
            raise ConfigError("defect_rate must be < 1")
        if len(self.mechanism_split) != 3 or min(self.mechanism_split) < 0 or sum(self.mechanism_split) <= 0:
            raise ConfigError("mechanism_split needs three non-negative shares")
        if self.site_count < 1 or not self.capacity_tiers:
            raise ConfigError("need at least one site and one capacity tier")
        if self.normal_hours_max * 1.05 * 1.03 >= 24.0 or self.anomaly_hours_range[0] <= 24.0:
            raise ConfigError("hour ranges would blur the normal/anomalous boundary")
        if date.fromisoformat(self.end_date) < date.fromisoformat(self.start_date):
            raise ConfigError("end_date precedes start_date")

    @property
    def defect_count(self) -> int:
        return _round(self.record_count * self.defect_rate / (1.0 - self.defect_rate))

    @property
    def anomaly_count(self) -> int:
        return _round(self.record_count * self.anomaly_rate)


def _round(x: float) -> int:
    return int(math.floor(x + 0.5))


HEADER = [h for h, _, _ in SCHEMA.values()]


def generate_rows(config: SynthConfig) -> tuple[list[list[str]], list[str]]:
    """Return CSV rows (as strings, header excluded) and the kind of each row.

    Kinds are ``normal``, ``r1``, ``r2``, ``both`` or ``defect:<how>``.
    """
    config.validate()
    rng = np.random.Generator(np.random.PCG64(config.seed))
    n_clean, n_anom = config.record_count, config.anomaly_count
    shares = np.asarray(config.mechanism_split, dtype=float) / sum(config.mechanism_split)
    n_r1 = _round(n_anom * shares[0])
    n_both = min(_round(n_anom * shares[2]), n_anom - n_r1)
    n_r2 = n_anom - n_r1 - n_both
    kinds = ["normal"] * (n_clean - n_anom) + ["r1"] * n_r1 + ["r2"] * n_r2 + ["both"] * n_both
    kinds += ["defect"] * config.defect_count
    kinds = [kinds[i] for i in rng.permutation(len(kinds))]

    caps = np.asarray(config.capacity_tiers, dtype=float)
    site_cap = caps[rng.integers(0, caps.size, size=config.site_count)]
    site_rate = np.round(site_cap * config.litres_per_kva_hour * rng.uniform(0.9, 1.1, config.site_count), 3)
    start = date.fromisoformat(config.start_date)
    span_days = (date.fromisoformat(config.end_date) - start).days
    power_types = ["GENERATOR", "GENERATOR+SOLAR", "GRID+GENERATOR"]

    rows, out_kinds = [], []
    n_defect = 0
    for kind in kinds:
        site = int(rng.integers(0, config.site_count))
        cap, rate = float(site_cap[site]), float(site_rate[site])
        days = int(rng.integers(config.days_range[0], config.days_range[1] + 1))
        visit = start + timedelta(days=int(rng.integers(0, span_days + 1)))
        normal_hours = float(np.clip(rng.normal(config.normal_hours_mean, config.normal_hours_sd),
                                     2.0, config.normal_hours_max))
        base = "normal" if kind == "defect" else kind
        hours = normal_hours
        if base in ("r1", "both"):
            hours = float(rng.uniform(*config.anomaly_hours_range))
        running = hours * days
        consumption = rate * running * rng.uniform(0.95, 1.05)
        if base in ("r2", "both"):
            quantity = rate * 24.0 * days * rng.uniform(*config.overdraw_range)
        else:
            quantity = rate * normal_hours * days * rng.uniform(0.95, 1.05) * rng.uniform(0.97, 1.03)
        left = rng.uniform(20.0, 400.0)
        values = {
            "site_id": f"SITE-{site:03d}",
            "visit_date": visit.isoformat(),
            "power_type": power_types[int(rng.integers(0, len(power_types)))],
            "generator_capacity": _fmt(cap),
            "running_time": _fmt(running),
            "consumption_his": _fmt(consumption),
            "number_of_days": str(days),
            "quantity_consumed_between_visits": _fmt(quantity),
            "total_quantity_left": _fmt(left),
            "maximum_consumption_per_day": _fmt(rate * 24.0),
            "consumption_rate": _fmt(rate),
        }
        if kind == "defect":
            how = DEFECT_KINDS[n_defect % len(DEFECT_KINDS)]
            n_defect += 1
            _corrupt(values, how, rng)
            kind = f"defect:{how}"
        rows.append([values[k] for k in SCHEMA])
        out_kinds.append(kind)
    return rows, out_kinds


def _fmt(v: float) -> str:
    return repr(round(float(v), 2))


def _corrupt(values: dict, how: str, rng: np.random.Generator) -> None:
    numeric = ["running_time", "consumption_his", "quantity_consumed_between_visits", "total_quantity_left"]
    target = numeric[int(rng.integers(0, len(numeric)))]
    if how == "missing":
        values[target] = ""
    elif how == "negative":
        values[target] = "-" + values[target]
    elif how == "zero-days":
        values["number_of_days"] = "0"
    else:
        values[target] = "n/a"


def to_csv_text(rows: list[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    w.writerows(rows)
    return buf.getvalue()


def generate(config: SynthConfig, path, fingerprint: str = "") -> dict:
    """Write the raw CSV and a ``<path>.meta.json`` companion; return the metadata."""
    rows, kinds = generate_rows(config)
    path = Path(path)
    path.write_text(to_csv_text(rows), encoding="utf-8")
    counts = {k: kinds.count(k) for k in sorted(set(kinds))}
    meta = {"config": asdict(config), "fingerprint": fingerprint, "rows": len(rows), "kinds": counts}
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return meta
