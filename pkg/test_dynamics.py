"""
Tests de l'analyse glissante, du bootstrap paramétrique, des ratios et des événements
"""

import logging
import time

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from conftest import PHI_2X2, SIGMA_CORRELATED
from volscope import dynamics
from volscope.dynamics import (
    EventGrid,
    RollingResult,
    annotate,
    bootstrap_bands,
    default_events,
    flatten_measures,
    linear_trend,
    ratio_series,
    ratio_table,
    read_events_csv,
    rolling_connectedness,
)
from volscope.errors import DataError, NumericError, UnstableModelError
from volscope.freqdomain import frequency_connectedness, parse_band_string
from volscope.ingest import synth_var_panel
from volscope.varcore import fit_var, model_from_parameters

BANDS = parse_band_string("1:5,5:inf")
FAST = {"h_trunc": 40, "n_freq": 64}


@pytest.fixture(scope="module")
def panel():
    return synth_var_panel([PHI_2X2], np.eye(2), 260, seed=17, names=["OIL", "GAS"])


def hand_result(values_by_key, dates):
    series = {
        key: pd.DataFrame({"value": values, "lower": np.nan, "upper": np.nan}, index=dates)
        for key, values in values_by_key.items()
    }
    return RollingResult(window_length=10, step=1, anchor_dates=dates, series=series, bands_used=list(BANDS))


class TestRolling:
    def test_single_window_equals_full_sample(self, panel):
        result = rolling_connectedness(panel, p=1, window=panel.T, bands=BANDS, **FAST)
        assert result.n_windows == 1
        report = frequency_connectedness(fit_var(panel, 1), BANDS, **FAST)
        expected = flatten_measures(report)
        assert set(result.series) == set(expected)
        for key, value in expected.items():
            assert result.series[key]["value"].iloc[0] == pytest.approx(value, abs=1e-14)
        assert result.anchor_dates[0] == panel.dates[-1]

    def test_window_count(self, panel):
        result = rolling_connectedness(panel, p=1, window=panel.T - 100, step=10, bands=BANDS, **FAST)
        assert result.n_windows == 11
        assert result.anchor_dates.is_monotonic_increasing and result.anchor_dates.is_unique
        assert all(len(frame) == 11 for frame in result.series.values())

    def test_reconstruction_each_window(self, panel):
        result = rolling_connectedness(panel, p=2, window=200, step=20, bands=BANDS, **FAST)
        assert (result.reconciliation < 1e-6).all()
        short, long = (result.series[("absolute_total", b.label)]["value"] for b in BANDS)
        assert_allclose(short + long, result.series[("total", "time")]["value"], atol=1e-6)

    def test_workers_do_not_change_output(self, panel):
        serial = rolling_connectedness(panel, p=1, window=200, step=30, bands=BANDS, workers=1, **FAST)
        parallel = rolling_connectedness(panel, p=1, window=200, step=30, bands=BANDS, workers=2, **FAST)
        for key, frame in serial.series.items():
            pd.testing.assert_frame_equal(frame, parallel.series[key])

    def test_unstable_window_recorded_as_gap(self, panel, monkeypatch, caplog):
        original = dynamics.frequency_connectedness
        calls = {"n": 0}

        def flaky(model, *args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 2:
                raise UnstableModelError(1.02)
            return original(model, *args, **kwargs)

        monkeypatch.setattr(dynamics, "frequency_connectedness", flaky)
        with caplog.at_level(logging.WARNING):
            result = rolling_connectedness(panel, p=1, window=200, step=20, bands=BANDS, **FAST)
        assert [(g.index, g.reason) for g in result.gaps] == [(1, "unstable")]
        total = result.series[("total", "time")]["value"]
        assert len(total) == result.n_windows
        assert np.isnan(total.iloc[1]) and not np.isnan(total.iloc[0])
        assert "event=window_gap" in caplog.text

    def test_no_valid_window(self, panel, monkeypatch):
        def always_unstable(*args, **kwargs):
            raise UnstableModelError(1.5)

        monkeypatch.setattr(dynamics, "frequency_connectedness", always_unstable)
        with pytest.raises(NumericError):
            rolling_connectedness(panel, p=1, window=200, step=30, bands=BANDS, **FAST)

    def test_preconditions(self, panel):
        with pytest.raises(DataError):
            rolling_connectedness(panel, p=1, window=panel.T + 1, bands=BANDS, **FAST)
        with pytest.raises(DataError):
            rolling_connectedness(panel, p=2, window=5, bands=BANDS, **FAST)

    def test_rolling_with_bootstrap(self, panel):
        result = rolling_connectedness(
            panel, p=1, window=200, step=60, bands=BANDS, replications=100, seed=3, **FAST
        )
        assert result.bootstrap_meta == (100, 0.10, 3)
        for frame in result.series.values():
            valid = frame.dropna()
            assert (valid["lower"] <= valid["value"]).all()
            assert (valid["value"] <= valid["upper"]).all()

    @pytest.mark.slow
    def test_stationary_mean_near_truth(self):
        truth_model = model_from_parameters([PHI_2X2], np.eye(2))
        truth = frequency_connectedness(truth_model, BANDS, **FAST).time_measures.total
        panel = synth_var_panel([PHI_2X2], np.eye(2), 20_000, seed=23)
        result = rolling_connectedness(panel, p=1, window=500, step=500, bands=BANDS, **FAST)
        values = result.series[("total", "time")]["value"].to_numpy()
        assert abs(values.mean() - truth) < 3 * values.std(ddof=1) / np.sqrt(len(values)) + 0.01


class TestBootstrap:
    @pytest.fixture(scope="class")
    def model(self):
        return fit_var(synth_var_panel([PHI_2X2], np.eye(2), 200, seed=31), 1)

    def test_deterministic(self, model):
        first = bootstrap_bands(model, 200, BANDS, replications=100, seed=5, **FAST)
        second = bootstrap_bands(model, 200, BANDS, replications=100, seed=5, **FAST)
        assert first.bounds == second.bounds

    def test_point_inside_band(self, model):
        point = flatten_measures(frequency_connectedness(model, BANDS, **FAST))
        boot = bootstrap_bands(model, 200, BANDS, replications=100, seed=5, point=point, **FAST)
        for key, (lower, upper) in boot.bounds.items():
            assert lower <= point[key] <= upper

    def test_monotone_in_significance(self, model):
        wide = bootstrap_bands(model, 200, BANDS, replications=100, significance=0.10, seed=5, **FAST)
        narrow = bootstrap_bands(model, 200, BANDS, replications=100, significance=0.50, seed=5, **FAST)
        for key, (lower, upper) in narrow.bounds.items():
            assert wide.bounds[key][0] <= lower <= upper <= wide.bounds[key][1]

    def test_widening_logged_and_quantiles_kept(self, model, caplog):
        point = {("total", "time"): 5.0}
        with caplog.at_level(logging.INFO):
            boot = bootstrap_bands(model, 200, BANDS, replications=100, seed=5, point=point, **FAST)
        lower, upper = boot.quantiles[("total", "time")]
        assert upper < 1.0
        assert boot.bounds[("total", "time")] == (lower, 5.0)
        assert boot.n_widened == 1
        for key in boot.bounds:
            if key != ("total", "time"):
                assert_allclose(boot.bounds[key], boot.quantiles[key])
        assert "event=bootstrap_widened" in caplog.text

    def test_too_few_replications(self, model):
        with pytest.raises(DataError):
            bootstrap_bands(model, 200, BANDS, replications=50, **FAST)

    def test_too_many_unstable(self, model, monkeypatch):
        def unstable_fit(*args, **kwargs):
            raise UnstableModelError(1.01)

        monkeypatch.setattr(dynamics, "fit_var", unstable_fit)
        with pytest.raises(NumericError, match="fenêtre"):
            bootstrap_bands(model, 200, BANDS, replications=100, **FAST)

    @pytest.mark.slow
    def test_coverage(self):
        truth_model = model_from_parameters([PHI_2X2], np.eye(2))
        truth = frequency_connectedness(truth_model, BANDS, **FAST).time_measures.total
        inside = 0
        trials = 200
        for trial in range(trials):
            sample = synth_var_panel([PHI_2X2], np.eye(2), 500, seed=1000 + trial)
            model = fit_var(sample, 1)
            boot = bootstrap_bands(model, 500, BANDS, replications=300, significance=0.10, seed=trial, **FAST)
            lower, upper = boot.bounds[("total", "time")]
            inside += lower <= truth <= upper
        assert inside >= 0.8 * trials


class TestRatiosAndTrend:
    dates = pd.date_range("2020-01-01", periods=4, freq="D", name="date")

    def test_identical_series(self):
        short, long = (b.label for b in BANDS)
        result = hand_result({("within_total", short): [0.2, 0.3, 0.4, 0.5], ("within_total", long): [0.2, 0.3, 0.4, 0.5]}, self.dates)
        ratio = ratio_series(result, ("within_total", short), ("within_total", long))
        assert_allclose(ratio.to_numpy(), 1.0)

    def test_zero_numerator_and_small_denominator(self):
        short, long = (b.label for b in BANDS)
        result = hand_result({("within_total", short): [0.0, 0.0, 0.0, 0.0], ("within_total", long): [0.5, 1e-13, 0.2, 0.1]}, self.dates)
        ratio = ratio_series(result, ("within_total", short), ("within_total", long))
        assert ratio.iloc[0] == 0.0 and ratio.iloc[2] == 0.0
        assert np.isnan(ratio.iloc[1])

    def test_missing_measure(self):
        result = hand_result({("within_total", "x"): [1.0] * 4}, self.dates)
        with pytest.raises(DataError):
            ratio_series(result, ("within_total", "x"), ("within_total", "y"))

    def test_known_trends(self):
        fit = linear_trend([1.0, 2.0, 3.0])
        assert fit.slope == pytest.approx(1.0) and fit.r_squared == pytest.approx(1.0)
        flat = linear_trend([4.0, 4.0, 4.0])
        assert (flat.slope, flat.r_squared) == (0.0, 0.0)
        hand = linear_trend([0.0, 1.0, 0.0, 1.0])
        assert hand.slope == pytest.approx(0.2) and hand.intercept == pytest.approx(0.2)
        assert hand.n == 4

    def test_trend_skips_gaps(self):
        fit = linear_trend(pd.Series([1.0, np.nan, 3.0, 4.0]))
        assert fit.slope == pytest.approx(1.0) and fit.n == 3
        with pytest.raises(DataError):
            linear_trend([np.nan, np.nan, 1.0])

    def test_scale_invariance(self, panel):
        result = rolling_connectedness(panel, p=1, window=200, step=10, bands=BANDS, **FAST)
        short, long = (b.label for b in BANDS)
        base = linear_trend(ratio_series(result, ("within_total", short), ("within_total", long)))
        scaled_series = dict(result.series)
        for label in (short, long):
            frame = result.series[("within_total", label)].copy()
            frame["value"] *= 3.0
            scaled_series[("within_total", label)] = frame
        scaled = RollingResult(result.window_length, result.step, result.anchor_dates, scaled_series, result.bands_used)
        again = linear_trend(ratio_series(scaled, ("within_total", short), ("within_total", long)))
        assert again.slope == pytest.approx(base.slope, abs=1e-12)

    def test_ratio_table(self, panel):
        result = rolling_connectedness(panel, p=1, window=200, step=10, bands=BANDS, **FAST)
        ratios, trends = ratio_table(result)
        assert "within_total" in ratios.columns and "within_from:OIL" in ratios.columns
        assert not any("pairwise" in c for c in ratios.columns)
        assert list(trends.columns) == ["measure", "slope", "intercept", "r_squared", "slope_stderr", "n"]
        assert len(ratios) == result.n_windows


class TestFlatSpectrumRatios:
    def test_true_white_noise_ratio_is_one(self):
        model = model_from_parameters(np.zeros((1, 2, 2)), SIGMA_CORRELATED)
        values = flatten_measures(frequency_connectedness(model, BANDS, **FAST))
        dates = pd.date_range("2020-01-01", periods=3, freq="D", name="date")
        result = hand_result({key: [value] * 3 for key, value in values.items()}, dates)
        short, long = (b.label for b in BANDS)
        for name in ("within_total", "within_from:V1", "within_to:V2"):
            assert_allclose(ratio_series(result, (name, short), (name, long)).to_numpy(), 1.0, atol=1e-12)

    def test_estimated_white_noise_ratio_near_one(self):
        panel = synth_var_panel(np.zeros((1, 2, 2)), SIGMA_CORRELATED, 51_000, seed=41)
        result = rolling_connectedness(panel, p=1, window=50_000, step=500, bands=BANDS, **FAST)
        short, long = (b.label for b in BANDS)
        ratio = ratio_series(result, ("within_total", short), ("within_total", long))
        assert result.n_windows == 3
        assert np.abs(ratio.to_numpy() - 1.0).max() < 0.15


@pytest.mark.slow
class TestThroughput:
    def test_protocol_sized_run(self):
        sigma = np.eye(3) + 0.3 * (np.ones((3, 3)) - np.eye(3))
        panel = synth_var_panel([np.diag([0.5, 0.4, 0.3]), np.diag([0.1, 0.1, 0.1])], sigma, 6499, seed=8)
        started = time.perf_counter()
        result = rolling_connectedness(panel, p=2, window=500, step=1, bands=BANDS, h_trunc=100, n_freq=512, workers=4)
        elapsed = time.perf_counter() - started
        assert result.n_windows == 6000 and not result.gaps
        assert elapsed < 60.0


class TestEvents:
    dates = pd.DatetimeIndex(["2020-01-01", "2020-01-03", "2020-01-07"], name="date")

    def test_annotate(self):
        result = hand_result({("total", "time"): [0.1, 0.2, 0.3]}, self.dates)
        events = EventGrid(events=(
            (pd.Timestamp("2020-01-03"), "on anchor"),
            (pd.Timestamp("2019-12-31"), "before"),
            (pd.Timestamp("2020-01-05"), "tie"),
            (pd.Timestamp("2020-01-06"), "closer to later"),
            (pd.Timestamp("2020-02-01"), "after"),
        ))
        annotated = annotate(result, events)
        anchors = {mark.label: mark.anchor for mark in annotated.events}
        assert anchors["on anchor"] == pd.Timestamp("2020-01-03")
        assert anchors["before"] is None and anchors["after"] is None
        assert anchors["tie"] == pd.Timestamp("2020-01-03")
        assert anchors["closer to later"] == pd.Timestamp("2020-01-07")
        assert annotated.series is result.series
        assert result.events == []

    def test_default_events(self):
        grid = default_events()
        assert len(grid.events) == 7
        assert (pd.Timestamp("2008-09-15"), "Lehman Brothers") in grid.events

    def test_read_events_errors(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("date,label\n2020-01-01,\n", encoding="utf-8")
        with pytest.raises(DataError, match="ligne 2"):
            read_events_csv(path)
        path.write_text("when,what\n2020-01-01,x\n", encoding="utf-8")
        with pytest.raises(DataError):
            read_events_csv(path)
        with pytest.raises(DataError):
            EventGrid(events=((pd.Timestamp("2020-01-01"), " "),))
