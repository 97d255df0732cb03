import io
import itertools
import math

import numpy as np
import pandas as pd
import pytest

from src.core.config import ExperimentConfig
from src.toeplitz_testing.errors import ConfigError
from src.core.harness import (
    MA_COLUMNS,
    POWER_COLUMNS,
    RISK_COLUMNS,
    SELECTION_COLUMNS,
    TYPE1_COLUMNS,
    VERIFY_COLUMNS,
    ResultTable,
    ThresholdBook,
    binomial_estimate,
    default_sigma_grid,
    draw_alternative,
    run_experiment,
    run_ma_experiment,
    run_ms_vs_hs,
    run_power_curve,
    run_risk_check,
    run_selection_risk,
    run_type1,
    run_verify_concentration,
)
from src.toeplitz_testing.concentration import ThresholdSpec, risk_bound, tail_bound
from src.toeplitz_testing.model import pd_safe_sigma


def _frame(table):
    return pd.read_csv(io.StringIO(table.to_csv()))


def _check_binomial_se(frame, estimate):
    for _, row in frame.iterrows():
        expected = math.sqrt(row[estimate] * (1 - row[estimate]) / row["R"])
        assert abs(row["se"] - expected) <= 1e-12


def test_result_table_csv():
    table = ResultTable(["kind", "power", "se", "R"])
    table.add(kind="ms", power=0.25, se=math.sqrt(0.25 * 0.75 / 40), R=40)
    text = table.to_csv()
    assert text.splitlines()[0] == "kind,power,se,R"
    assert text.splitlines()[1].startswith("ms,0.25,")
    assert len(table) == 1
    with pytest.raises(ValueError):
        table.add(kind="ms")


def test_result_table_writes_file(tmp_path):
    table = ResultTable(["x"])
    table.add(x=1.5)
    path = tmp_path / "out.csv"
    table.to_csv(str(path))
    assert path.read_text() == "x\n1.5\n"


def test_binomial_estimate_skips_missing_outcomes():
    assert binomial_estimate([True, False, None, True]) == pytest.approx((2 / 3, math.sqrt(2 / 9 / 3), 3))
    power, se, R = binomial_estimate([None, None])
    assert math.isnan(power) and math.isnan(se) and R == 0


def test_default_sigma_grid_stays_positive_definite():
    grid = default_sigma_grid(0.3, 4, 12)
    assert len(grid) == 12
    assert grid == sorted(grid)
    assert grid[-1] * 4 == pytest.approx(min(3.0, 4 * pd_safe_sigma(4)))
    assert grid[0] * 4 == pytest.approx(0.003)


def test_draw_alternative_gives_up_on_infeasible_level(rng):
    assert draw_alternative(100, 4, 10, 0.9, "near_diagonal", False, rng) is None
    assert draw_alternative(100, 2, 10, 0.1, "random", True, rng) is not None


def test_threshold_book_shares_null_draws():
    config = ExperimentConfig(scenario="type1", n=10, p=20, R=100, master_seed=3)
    book = ThresholdBook(config)
    first = book.null_xi(10, 20, 4)
    assert book.null_xi(10, 20, 4) is first
    assert book.threshold("ms", 10, 20, 4) == book.threshold("ms", 10, 20, 4)
    theoretical = ThresholdBook(config.with_overrides(threshold_source="theoretical"))
    assert theoretical.aggregate(10, 20, 4, [1, 2]) == [theoretical.threshold("hs", 10, 20, 4, s) for s in (1, 2)]


def _power_config(**overrides):
    document = dict(
        scenario="power_curve",
        n=20,
        p=20,
        R=60,
        calibration_R=200,
        kinds=["ms+", "hs"],
        sigma_grid=[0.0, 0.05, 0.2],
        master_seed=11,
    )
    document.update(overrides)
    return ExperimentConfig.from_dict(document)


def test_power_curve_layout():
    frame = _frame(run_power_curve(_power_config()))
    assert list(frame.columns) == POWER_COLUMNS
    assert list(frame["kind"]) == ["ms+"] * 3 + ["hs"] * 3
    assert (frame["R"] == 60).all()
    _check_binomial_se(frame, "power")
    hs = frame[frame["kind"] == "hs"]
    assert np.allclose(hs["separation"], hs["sigma"])  # s = 1 at S = 4
    assert np.isneginf(frame["log10_separation"].iloc[0])


def test_power_curve_is_worker_independent():
    single = run_power_curve(_power_config(workers=1)).to_csv()
    pooled = run_power_curve(_power_config(workers=3)).to_csv()
    assert single == pooled
    assert run_power_curve(_power_config(workers=1)).to_csv() == single


def test_power_curve_sweeps_dimensions():
    frame = _frame(run_power_curve(_power_config(p_values=[10, 20], kinds=["ms"], sigma_grid=None, grid_points=3)))
    assert list(frame.columns) == ["p"] + POWER_COLUMNS
    assert list(frame["p"]) == [10, 10, 10, 20, 20, 20]
    assert frame["sigma"].min() > 0


def test_power_at_zero_signal_matches_level():
    config = _power_config(kinds=["ms"], sigma_grid=[0.0], R=1000, calibration_R=2000)
    row = _frame(run_power_curve(config)).iloc[0]
    assert abs(row["power"] - 0.1) <= 0.05


def test_strong_signal_is_detected():
    config = _power_config(n=100, p=40, kinds=["ms+"], sigma_grid=[0.2], placement="far", R=50)
    assert _frame(run_power_curve(config))["power"].iloc[0] == 1.0


def test_infeasible_signal_leaves_empty_row(caplog):
    config = _power_config(n=10, p=100, S=10, s=4, kinds=["ms+"], sigma_grid=[0.9], placement="near_diagonal", R=5)
    row = _frame(run_power_curve(config)).iloc[0]
    assert row["R"] == 0 and math.isnan(row["power"])
    assert "no positive definite alternative" in caplog.text


def test_type1_rates():
    config = ExperimentConfig(scenario="type1", n=20, p=20, R=400, calibration_R=400, master_seed=1)
    frame = _frame(run_type1(config))
    assert list(frame.columns) == TYPE1_COLUMNS
    assert list(frame["kind"]) == ["ms+", "ms", "hs+", "hs"]
    assert (frame["threshold_source"] == "calibrated").all()
    _check_binomial_se(frame, "type1")
    assert ((frame["type1"] - 0.1).abs() <= 0.1).all()


def test_selection_risk_vanishes_for_strong_signal():
    config = ExperimentConfig(
        scenario="selection_risk", p=50, S=5, s=1, n_values=[500, 2000], sigma_factor=10.0, R=100, master_seed=4
    )
    frame = _frame(run_selection_risk(config))
    assert list(frame.columns) == SELECTION_COLUMNS
    assert list(frame["n"]) == [500, 2000]
    assert (frame["avg_hamming"] < 0.2).all()
    assert (frame["R"] == 100).all()


def test_selection_risk_needs_room_for_false_lags():
    config = ExperimentConfig(scenario="selection_risk", p=10, S=3, s=3, R=5)
    with pytest.raises(ValueError):
        run_selection_risk(config)


def test_ma_experiment_rows_and_null_level():
    config = ExperimentConfig(
        scenario="ma_power", n=30, p_values=[8, 16], phi_grid=[0.0, 0.6], R=400, calibration_R=1000, master_seed=2
    )
    frame = _frame(run_ma_experiment(config))
    assert list(frame.columns) == MA_COLUMNS
    assert list(zip(frame["p"], frame["phi"])) == [(8, 0.0), (8, 0.6), (16, 0.0), (16, 0.6)]
    _check_binomial_se(frame, "power")
    null_rows = frame[frame["phi"] == 0.0]
    assert ((null_rows["power"] - 0.1).abs() <= 0.08).all()


def test_verify_concentration_bounds_hold():
    config = ExperimentConfig(
        scenario="verify_concentration", n_values=[10], p_values=[20], u_grid=[4.0, 200.0], R=400, master_seed=6
    )
    frame = _frame(run_verify_concentration(config))
    assert list(frame.columns) == VERIFY_COLUMNS
    assert frame["bound"].iloc[0] == pytest.approx(math.exp(-1))
    assert frame["empirical"].iloc[1] == 0.0
    assert frame["pass"].all()


def test_verify_concentration_singleton_two_sided():
    config = ExperimentConfig(
        scenario="verify_concentration", n=10, p=10, S=1, w=1, u_grid=[4.0], two_sided=True, R=300
    )
    row = _frame(run_verify_concentration(config)).iloc[0]
    assert (row["S"], row["w"]) == (1, 1)
    assert row["bound"] == pytest.approx(tail_bound(4.0, two_sided=True))
    assert bool(row["pass"])


def test_ms_vs_hs_layout():
    config = ExperimentConfig(
        scenario="ms_vs_hs", n=30, p=40, S=6, s_values=[1, 3], s_grid=[2, 10], sigma_grid=[0.05, 0.1],
        aggregate_mode="joint", R=40, calibration_R=200,
    )
    frame = _frame(run_ms_vs_hs(config))
    assert list(frame["kind"].unique()) == ["ms", "hs", "hs-aggregate"]
    assert len(frame) == 2 * 3 * 2
    assert list(frame["s"]) == [1] * 6 + [3] * 6
    _check_binomial_se(frame, "power")


def test_risk_check_arithmetic():
    config = ExperimentConfig(scenario="risk_check", n=100, p=100, S=10, s=2, kinds=["ms+", "hs+"], R=100)
    frame = _frame(run_risk_check(config))
    assert list(frame.columns) == RISK_COLUMNS
    for _, row in frame.iterrows():
        spec = ThresholdSpec(row["kind"], n=100, p=100, S=10, s=2)
        assert row["bound"] == pytest.approx(risk_bound(spec))
        assert row["risk"] == pytest.approx(row["type1"] + row["type2"])
        assert row["u"] == spec.u


def test_run_experiment_dispatches():
    config = ExperimentConfig(scenario="verify_concentration", n=10, p=20, u_grid=[2.0], R=50)
    assert run_experiment(config).columns == VERIFY_COLUMNS


@pytest.mark.slow
def test_calibrated_type1_at_full_scale():
    config = ExperimentConfig(scenario="type1", n=100, p=100, S=10, s=4, R=5000, workers=-1)
    frame = _frame(run_type1(config))
    assert ((frame["type1"] - 0.1).abs() <= 0.015).all()


def test_risk_check_leaves_unreachable_radius_unchecked(caplog):
    config = ExperimentConfig(scenario="risk_check", n=100, p=100, S=10, s=2, kinds=["ms"], R=20)
    table = run_risk_check(config)
    row = table.rows[0]
    assert row["R"] == 0
    assert math.isnan(row["type2"]) and math.isnan(row["pass"])
    assert "risk bound left unchecked" in caplog.text
    assert table.to_csv().splitlines()[1].endswith(",0,nan")


def test_selection_risk_rejects_degenerate_tau():
    config = ExperimentConfig(scenario="selection_risk", p=5, S=2, s=1, R=5)
    with pytest.raises(ConfigError, match="tau_n is 0"):
        run_selection_risk(config)


def _increasing_within(values, se, k):
    combined = np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
    return bool(np.all(values[1:] >= values[:-1] - k * combined - 1e-12))


@pytest.mark.slow
def test_ms_power_curve_shape():
    config = ExperimentConfig(
        scenario="power_curve", n=100, p_values=[10, 100], kinds=["ms"], R=300, calibration_R=1000, master_seed=5
    )
    frame = _frame(run_power_curve(config))
    for _, curve in frame.groupby("p"):
        power, se = curve["power"].to_numpy(), curve["se"].to_numpy()
        assert power[0] <= 0.2
        assert power[-1] >= 0.9
        # grid points use independent draws
        assert _increasing_within(power, se, 3)


@pytest.mark.slow
def test_ms_power_shifts_left_with_dimension():
    small = ExperimentConfig(scenario="power_curve", n=100, p=10, kinds=["ms"], sigma_grid=[0.1], R=300,
                             calibration_R=1000, master_seed=5)
    large = small.with_overrides(p=100, sigma_grid=[0.025])
    assert (small.sparsity(small.horizon()), large.sparsity(large.horizon())) == (1, 4)
    low = _frame(run_power_curve(small)).iloc[0]
    high = _frame(run_power_curve(large)).iloc[0]
    assert high["separation"] == pytest.approx(low["separation"])
    assert high["power"] >= low["power"] - 2 * math.sqrt(low["se"] ** 2 + high["se"] ** 2)


@pytest.mark.slow
def test_risk_bounds_hold_at_separation_radius():
    config = ExperimentConfig(scenario="risk_check", n=100, p=100, S=10, s=2, kinds=["ms+", "hs+", "hs"], R=1000)
    rows = run_risk_check(config).rows
    assert [row["kind"] for row in rows] == ["ms+", "hs+", "hs"]
    assert all(row["R"] > 0 and row["pass"] is True for row in rows)


@pytest.mark.slow
def test_support_placement_does_not_change_ms_plus_power():
    curves = []
    for placement in ("random", "near_diagonal", "far"):
        config = ExperimentConfig(
            scenario="power_curve", n=100, p=10, kinds=["ms+"], placement=placement,
            sigma_grid=[0.02, 0.05, 0.1, 0.2], R=300, calibration_R=1000, master_seed=9,
        )
        curves.append(_frame(run_power_curve(config)))
    for first, second in itertools.combinations(curves, 2):
        combined = np.sqrt(first["se"] ** 2 + second["se"] ** 2)
        assert ((first["power"] - second["power"]).abs() <= 3 * combined + 1e-12).all()


@pytest.mark.slow
def test_scan_beats_sum_at_high_sparsity():
    config = ExperimentConfig(
        scenario="ms_vs_hs", n=100, p=100, S=10, s_values=[1, 2], sigma_grid=[0.025, 0.035, 0.05],
        R=400, calibration_R=1000, master_seed=13,
    )
    frame = _frame(run_ms_vs_hs(config))
    for s in (1, 2):
        ms = frame[(frame["kind"] == "ms") & (frame["s"] == s)].reset_index(drop=True)
        hs = frame[(frame["kind"] == "hs") & (frame["s"] == s)].reset_index(drop=True)
        combined = np.sqrt(ms["se"] ** 2 + hs["se"] ** 2)
        assert (hs["power"] >= ms["power"] - 2 * combined - 1e-12).all()
        if s == 1:
            assert (hs["power"] - ms["power"] >= 3 * combined).any()


@pytest.mark.slow
@pytest.mark.parametrize("s_rule, n_values", [("half", [500, 1000, 2000]), ("minus_one", [2000, 4000])])
def test_selection_risk_at_twice_tau(s_rule, n_values):
    config = ExperimentConfig(
        scenario="selection_risk", p=100, s_rule=s_rule, u=2.0, sigma_factor=2.0, n_values=n_values, R=200,
        master_seed=21,
    )
    frame = _frame(run_selection_risk(config))
    assert (frame["R"] == 200).all()
    for _, row in frame.iterrows():
        spec = ThresholdSpec("selector", n=int(row["n"]), p=100, S=int(row["S"]), s=int(row["s"]), u=2.0)
        assert row["avg_hamming"] <= risk_bound(spec) + 3 * row["se"]
    loss, se = frame["avg_hamming"].to_numpy(), frame["se"].to_numpy()
    assert _increasing_within(-loss, se, 2)


@pytest.mark.slow
def test_ma_power_grows_with_dimension():
    config = ExperimentConfig(
        scenario="ma_power", n=100, p_values=[8, 16, 32, 64], phi_grid=[0.0, 0.6], R=1000, calibration_R=10000,
        master_seed=17,
    )
    frame = _frame(run_ma_experiment(config))
    signal = frame[frame["phi"] == 0.6]
    assert _increasing_within(signal["power"].to_numpy(), signal["se"].to_numpy(), 2)
    null = frame[frame["phi"] == 0.0]
    level_se = math.sqrt(0.1 * 0.9 / 1000)
    assert ((null["power"] - 0.1).abs() <= 3 * level_se).all()
