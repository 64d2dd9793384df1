import numpy as np
import pytest

from fuelgan import data, synth
from fuelgan.errors import ConfigError
from fuelgan.synth import SynthConfig


def test_byte_identical_per_seed(tmp_path):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    synth.generate(SynthConfig(seed=3, record_count=300), a)
    synth.generate(SynthConfig(seed=3, record_count=300), b)
    synth.generate(SynthConfig(seed=4, record_count=300), c)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_header_matches_schema(tmp_path):
    p = tmp_path / "a.csv"
    synth.generate(SynthConfig(record_count=20), p)
    assert p.read_text().splitlines()[0] == ",".join(h for h, _, _ in data.SCHEMA.values())


def test_default_counts(default_synthetic):
    ds, rejected, tally = default_synthetic
    assert len(ds) == 5905
    assert len(rejected) + sum(tally.values()) == SynthConfig().defect_count
    assert abs(ds.labels.mean() - 0.3512) <= 0.02 * 0.3512


def test_every_constructed_anomaly_flagged(tmp_path):
    rows, kinds = synth.generate_rows(SynthConfig(record_count=2000, seed=5))
    p = tmp_path / "a.csv"
    p.write_text(synth.to_csv_text(rows))
    records, _ = data.load_csv(p)
    by_line = {r.line: r for r in records}
    checked = 0
    for i, kind in enumerate(kinds):
        if kind.startswith("defect"):
            continue
        r = by_line[i + 2]
        d = data.derive_features(r)
        flagged = data.label(r, d)
        assert flagged == (kind != "normal"), (i, kind)
        if kind in ("r1", "both"):
            assert d.running_time_per_day > 24
        if kind in ("r2", "both"):
            assert d.daily_consumed_quantity_between_visits > r.maximum_consumption_per_day
        checked += 1
    assert checked == 2000


def test_defects_are_all_removed():
    cfg = SynthConfig(record_count=500, seed=2)
    rows, kinds = synth.generate_rows(cfg)
    assert kinds.count("normal") + sum(kinds.count(k) for k in ("r1", "r2", "both")) == 500
    assert sum(k.startswith("defect") for k in kinds) == cfg.defect_count


def test_zero_anomaly_rate(tmp_path):
    p = tmp_path / "a.csv"
    synth.generate(SynthConfig(record_count=400, anomaly_rate=0.0), p)
    records, _ = data.load_csv(p)
    kept, _ = data.clean(records)
    assert len(kept) == 400
    assert sum(data.label(r, data.derive_features(r)) for r in kept) == 0


def test_consumption_running_time_correlation(default_synthetic):
    ds = default_synthetic[0]
    c = np.corrcoef(ds.column("consumption_his"), ds.column("running_time"))[0, 1]
    assert 0.7 <= c <= 0.95


def test_meta_sidecar(tmp_path):
    p = tmp_path / "a.csv"
    meta = synth.generate(SynthConfig(record_count=50), p, fingerprint="abc")
    assert meta["fingerprint"] == "abc"
    assert (tmp_path / "a.csv.meta.json").exists()
    assert sum(meta["kinds"].values()) == meta["rows"]


@pytest.mark.parametrize("kw", [dict(record_count=0), dict(anomaly_rate=1.5),
                                dict(mechanism_split=[1, 1]), dict(anomaly_hours_range=[20, 30])])
def test_bad_config(kw):
    with pytest.raises(ConfigError):
        SynthConfig(**kw)
