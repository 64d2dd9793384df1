import csv
import json
import math
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuelgan import data
from fuelgan.data import FuelRecord, LabelRuleSet, MinMaxScaler
from fuelgan.errors import DimensionError, DomainError, SchemaError

HEADER = [h for h, _, _ in data.SCHEMA.values()]


def record(running=100.0, days=10.0, qty=50.0, max_day=6.0, **kw):
    values = dict(site_id="S1", visit_date=date(2018, 1, 1), power_type="GENERATOR",
                  generator_capacity=20.0, running_time=running, consumption_his=40.0,
                  number_of_days=days, quantity_consumed_between_visits=qty,
                  total_quantity_left=100.0, maximum_consumption_per_day=max_day,
                  consumption_rate=0.25)
    values.update(kw)
    return FuelRecord(**values)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def good_row(site="S1", day="2018-01-01", running="100"):
    return [site, day, "GENERATOR", "20", running, "40", "10", "50", "100", "6", "0.25"]


class TestLoad:
    def test_round_trip(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", HEADER, [good_row(), good_row("S2", "2018-02-03", "250.5")])
        records, rejected = data.load_csv(p)
        assert rejected == []
        assert [r.site_id for r in records] == ["S1", "S2"]
        assert records[1].running_time == 250.5
        assert records[1].visit_date == date(2018, 2, 3)
        assert records[0].line == 2

    def test_header_matching_is_lenient(self, tmp_path):
        header = [h.lower().replace(" ", "_") for h in HEADER]
        header[3] = "Generator Capacity"
        records, _ = data.load_csv(write_csv(tmp_path / "a.csv", header, [good_row()]))
        assert records[0].generator_capacity == 20.0

    def test_missing_mandatory_column(self, tmp_path):
        header = [h for h in HEADER if h != "RUNNING TIME"]
        row = good_row()
        del row[4]
        with pytest.raises(SchemaError, match="RUNNING TIME"):
            data.load_csv(write_csv(tmp_path / "a.csv", header, [row]))

    def test_optional_column_absent(self, tmp_path):
        header = [h for h in HEADER if h != "POWER TYPE"]
        row = good_row()
        del row[2]
        records, _ = data.load_csv(write_csv(tmp_path / "a.csv", header, [row]))
        assert records[0].power_type is None

    def test_bad_cells_are_rejected_not_fatal(self, tmp_path):
        bad_num = good_row()
        bad_num[4] = "n/a"
        bad_date = good_row(day="31/01/2018")
        p = write_csv(tmp_path / "a.csv", HEADER, [good_row(), bad_num, bad_date])
        records, rejected = data.load_csv(p)
        assert len(records) == 1
        assert [r.line for r in rejected] == [3, 4]
        assert "RUNNING TIME" in rejected[0].reason

    def test_empty_cell_becomes_none(self, tmp_path):
        row = good_row()
        row[5] = ""
        records, _ = data.load_csv(write_csv(tmp_path / "a.csv", HEADER, [row]))
        assert records[0].consumption_his is None

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            data.load_csv(tmp_path / "nope.csv")

    def test_rejection_report(self, tmp_path):
        out = tmp_path / "rej.csv"
        data.write_rejections([data.Rejection(7, "bad")], out, "abc")
        assert out.read_text().splitlines() == ["# fingerprint=abc", "line,reason", "7,bad"]


class TestClean:
    def test_reasons(self):
        records = [record(), record(days=0.0), record(qty=-1.0), record(consumption_his=None)]
        kept, tally = data.clean(records)
        assert kept == [records[0]]
        assert tally == {"zero-day period": 1, "negative": 1, "missing": 1}

    def test_optional_missing_kept(self):
        kept, _ = data.clean([record(power_type=None)])
        assert len(kept) == 1


class TestDerive:
    def test_values(self):
        d = data.derive_features(record(running=100.0, days=8.0, qty=50.0))
        assert d.running_time_per_day == 12.5
        assert d.daily_consumption_within_period == 5.0
        assert d.daily_consumed_quantity_between_visits == 6.25

    def test_zero_days(self):
        with pytest.raises(DomainError):
            data.derive_features(record(days=0.0))

    @given(st.floats(0, 1e5), st.integers(1, 400))
    def test_inverse_of_days(self, running, days):
        d = data.derive_features(record(running=running, days=float(days)))
        assert math.isclose(d.running_time_per_day * days, running, rel_tol=1e-12, abs_tol=1e-9)


class TestLabel:
    @pytest.mark.parametrize("running, qty, expected", [
        (240.0, 50.0, 0),  # exactly 24 h/day is not anomalous
        (240.1, 50.0, 1),
        (100.0, 60.0, 0),  # exactly the daily maximum
        (100.0, 60.1, 1),
        (300.0, 90.0, 1),
    ])
    def test_rules(self, running, qty, expected):
        r = record(running=running, days=10.0, qty=qty, max_day=6.0)
        assert data.label(r, data.derive_features(r)) == expected

    def test_rules_can_be_disabled(self):
        r = record(running=100.0, days=10.0, qty=90.0, max_day=6.0)
        assert data.label(r, data.derive_features(r), LabelRuleSet(r2=False)) == 0

    def test_custom_threshold(self):
        r = record(running=200.0, days=10.0)
        assert data.label(r, data.derive_features(r), LabelRuleSet(running_time_threshold=18)) == 1

    def test_rules_fingerprint_differs(self):
        assert LabelRuleSet().fingerprint() != LabelRuleSet(r2=False).fingerprint()
        assert LabelRuleSet().fingerprint() == LabelRuleSet().fingerprint()

    def test_no_rules(self):
        with pytest.raises(ValueError):
            LabelRuleSet(r1=False, r2=False)


class TestSplit:
    def test_stratified_counts(self):
        labels = np.array([0] * 13 + [1] * 7)
        is_test = data.split(labels, 0.2, 0)
        assert is_test[labels == 0].sum() == math.floor(13 * 0.2 + 0.5)
        assert is_test[labels == 1].sum() == math.floor(7 * 0.2 + 0.5)

    def test_seeded(self):
        labels = np.array([0, 1] * 50)
        assert np.array_equal(data.split(labels, 0.3, 4), data.split(labels, 0.3, 4))
        assert not np.array_equal(data.split(labels, 0.3, 4), data.split(labels, 0.3, 5))

    def test_tiny_class(self):
        with pytest.raises(DomainError):
            data.split(np.array([0, 0, 0, 1]), 0.2, 0)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            data.split(np.array([0, 1, 0, 1]), 1.0, 0)


class TestScaler:
    def test_fit_transform(self):
        X = np.array([[0.0, 5.0], [10.0, 5.0], [5.0, 5.0]])
        s = MinMaxScaler.fit(X)
        np.testing.assert_array_equal(s.transform(X), [[-1, 0], [1, 0], [0, 0]])

    def test_inverse(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 4)) * [1, 100, 1e-3, 7]
        s = MinMaxScaler.fit(X)
        np.testing.assert_allclose(s.inverse_transform(s.transform(X)), X, rtol=1e-12, atol=1e-12)

    def test_out_of_range_rows_extrapolate(self):
        s = MinMaxScaler.fit(np.array([[0.0], [2.0]]))
        assert s.transform(np.array([[4.0]]))[0, 0] == 3.0

    def test_dict_round_trip(self):
        s = MinMaxScaler.fit(np.array([[0.1, 3.0], [0.7, 1.0]]), ["a", "b"])
        t = MinMaxScaler.from_dict(json.loads(json.dumps(s.to_dict())))
        assert np.array_equal(t.min, s.min) and np.array_equal(t.max, s.max)

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            MinMaxScaler.fit(np.zeros((2, 2))).transform(np.zeros((1, 3)))

    def test_fit_on_train_only(self):
        recs = [record(running=10.0 * (i + 1), qty=5.0 * (i + 1) if i % 2 else 90.0) for i in range(20)]
        ds = data.build_dataset(recs)
        scaler, Z = data.scale_fit_transform(ds)
        train = Z[ds.train_mask]
        assert np.all(train >= -1) and np.all(train <= 1)
        np.testing.assert_array_equal(scaler.max, ds.X[ds.train_mask].max(axis=0))


class TestCorrelation:
    FIXTURE = np.array([[1.0, 2.0, 0.5], [2.0, 1.0, 0.1], [3.0, 4.0, 0.9], [4.0, 3.0, 0.3], [5.0, 6.0, 0.2]])

    @staticmethod
    def textbook(x, y):
        n = len(x)
        mx, my = sum(x) / n, sum(y) / n
        num = sum((a - mx) * (b - my) for a, b in zip(x, y))
        den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
        return num / den

    def test_matches_formula(self):
        C = data.correlation_matrix(self.FIXTURE)
        cols = self.FIXTURE.T.tolist()
        for i in range(3):
            for j in range(3):
                expected = 1.0 if i == j else self.textbook(cols[i], cols[j])
                assert abs(C[i, j] - expected) <= 1e-12

    def test_symmetric_unit_diagonal(self):
        C = data.correlation_matrix(self.FIXTURE)
        assert np.array_equal(C, C.T)
        assert np.all(np.diag(C) == 1.0)

    def test_constant_column(self, caplog):
        X = self.FIXTURE.copy()
        X[:, 1] = 3.0
        C = data.correlation_matrix(X)
        assert C[0, 1] == 0.0 and C[1, 1] == 1.0
        assert "constant" in caplog.text

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_bounds(self, seed):
        X = np.random.default_rng(seed).normal(size=(6, 4))
        C = data.correlation_matrix(X)
        assert np.all(np.abs(C) <= 1.0)


class TestDataset:
    def build(self):
        recs = [record(running=50.0 + 30 * i, qty=40.0 + 3 * i, site_id=f"S{i}") for i in range(20)]
        return data.build_dataset(recs, test_fraction=0.25, seed=1)

    def test_features_and_labels(self):
        ds = self.build()
        assert ds.feature_names == data.FEATURE_NAMES
        assert len(ds.feature_names) == 11
        rtpd = ds.column("running_time_per_day")
        expected = ((rtpd > 24) | (ds.column("daily_consumed_quantity_between_visits") > 6.0)).astype(int)
        assert np.array_equal(ds.labels, expected)
        assert ds.meta["label_rules_fingerprint"] == LabelRuleSet().fingerprint()

    def test_write_read_exact(self, tmp_path):
        ds = self.build()
        data.write_dataset(ds, tmp_path / "d.csv")
        back = data.read_dataset(tmp_path / "d.csv")
        assert np.array_equal(back.X, ds.X)
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.is_test, ds.is_test)
        assert back.site_ids == ds.site_ids and back.dates == ds.dates
        assert back.meta["label_rules"] == ds.meta["label_rules"]

    def test_bad_labels(self):
        with pytest.raises(DomainError):
            data.ProcessedDataset(["a"], np.zeros((2, 1)), [0, 2], [False, True])

    def test_plot_export(self, tmp_path):
        ds = self.build()
        out = tmp_path / "p.csv"
        n = data.export_plot_data(ds, "time-series-running-time", out, fingerprint="f")
        lines = out.read_text().splitlines()
        assert lines[0] == "# fingerprint=f"
        assert lines[1] == "visit_date,running_time_per_day,label,threshold_hours"
        assert len(lines) == n + 2
        with pytest.raises(ValueError):
            data.export_plot_data(ds, "pie", out)
