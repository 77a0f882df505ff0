import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from propout.detector import DetectionResult, DetectorParams, Label
from propout.errors import InputError, ParameterError, ScenarioError
from propout.simulation import (
    PRESETS,
    TYPES,
    TYPES_AND_ANTITYPES,
    EvalMetrics,
    ScenarioSpec,
    admissible_tails,
    alternating_depths,
    case_study_spec,
    derive_seed,
    estimator_mse,
    generate_scenario,
    plant_outlier,
    run_cell,
    run_experiment,
    score,
)
from propout.table import ProportionTable

from oracles import brute_one_tailed, brute_two_tailed, enumerate_mse


def test_no_outliers_scenario():
    truth = generate_scenario(ScenarioSpec(20, 0, 100, 0.05, seed=3), alpha_gen=1e-2)
    assert not truth.is_outlier.any()
    assert truth.planted == ()
    assert truth.table.k == 20


def test_one_tailed_plant_beyond_threshold():
    threshold = brute_one_tailed(100, 0.01, 1e-2)
    rng = np.random.default_rng(0)
    for _ in range(300):
        n, side = plant_outlier(100, 0.01, 1e-2, TYPES, rng)
        assert side == "upper" and n >= threshold + 1


def test_two_tailed_sides_balanced():
    rng = np.random.default_rng(1)
    sides = [plant_outlier(1000, 0.2, 1e-3, TYPES_AND_ANTITYPES, rng)[1] for _ in range(1000)]
    assert abs(sides.count("upper") / 1000 - 0.5) <= 0.05


def test_left_tail_skipped_when_zero_is_inlier():
    lower, upper = admissible_tails(100, 0.01, 1e-3, TYPES_AND_ANTITYPES)
    assert len(lower) == 0 and len(upper) > 0


def test_no_admissible_count_raises():
    with pytest.raises(ScenarioError, match="column 1"):
        generate_scenario(ScenarioSpec(5, 1, 2, 0.5, seed=0), alpha_gen=1e-3)


@settings(max_examples=60, deadline=None)
@given(
    d=st.integers(20, 400),
    p=st.sampled_from([0.01, 0.05, 0.1, 0.2, 0.5]),
    alpha=st.sampled_from([1e-4, 1e-3, 1e-2]),
    seed=st.integers(0, 2**32),
)
def test_planted_strictly_outside_with_boundary_excluded(d, p, alpha, seed):
    rng = np.random.default_rng(seed)
    try:
        n, side = plant_outlier(d, p, alpha, TYPES_AND_ANTITYPES, rng)
    except ScenarioError:
        return
    members = brute_two_tailed(d, p, alpha)
    assert n in members
    upper = [k for k in members if k > d * p]
    lower = [k for k in members if k < d * p]
    if side == "upper":
        assert n > min(upper)
    else:
        assert n < max(lower)


def test_scenario_deterministic():
    spec = ScenarioSpec(100, 3, alternating_depths(100), 0.05, seed=42, shuffle_depths=True)
    a = generate_scenario(spec, 1e-3)
    b = generate_scenario(spec, 1e-3)
    assert a.table == b.table and np.array_equal(a.is_outlier, b.is_outlier)
    c = generate_scenario(ScenarioSpec(100, 3, alternating_depths(100), 0.05, seed=43), 1e-3)
    assert c.table != a.table


def test_planted_positions_recorded():
    truth = generate_scenario(ScenarioSpec(50, 4, 100, 0.05, seed=9), 1e-3)
    cols = sorted(c for c, _, _ in truth.planted)
    assert cols == np.flatnonzero(truth.is_outlier).tolist()
    for c, n, _ in truth.planted:
        assert truth.table.n[c] == n


def _result_for(table, outlier_mask):
    labels = tuple(Label.OUTLIER if x else Label.INLIER for x in outlier_mask)
    ones = np.ones(table.k, dtype=np.int64)
    return DetectionResult(table, DetectorParams(seed=0), ones, ones * 0, labels, 1)


def test_score_arithmetic():
    truth = generate_scenario(ScenarioSpec(100, 3, 100, 0.05, seed=1), 1e-3)
    true = truth.is_outlier
    m = score(_result_for(truth.table, true), truth)
    assert (m.sensitivity, m.specificity) == (1.0, 1.0)
    m = score(_result_for(truth.table, np.zeros(100, bool)), truth)
    assert (m.sensitivity, m.specificity) == (0.0, 1.0)
    flipped = true.copy()
    flipped[np.flatnonzero(~true)[0]] = True
    m = score(_result_for(truth.table, flipped), truth)
    assert m.specificity == 96 / 97 and m.fp == 1


def test_score_id_mismatch():
    truth = generate_scenario(ScenarioSpec(10, 1, 100, 0.05, seed=1), 1e-3)
    other = ProportionTable(tuple("abcdefghij"), truth.table.n, truth.table.d)
    with pytest.raises(InputError):
        score(_result_for(other, truth.is_outlier), truth)


def test_metrics_undefined():
    assert math.isnan(EvalMetrics(0, 0, 5, 0).sensitivity)
    assert math.isnan(EvalMetrics(1, 0, 0, 0).specificity)


def test_mse_no_outliers_has_zero_bias():
    depths = (100, 200, 300, 400)
    r = estimator_mse(depths, 0.05, [], 2)
    assert np.all(r.bias == 0)
    expected = np.mean([0.05 * 0.95 / (depths[i] + depths[j]) for i in range(4) for j in range(i + 1, 4)])
    assert r.mse == pytest.approx(expected, rel=1e-12)


def test_mse_hand_case_matches_enumeration():
    depths, counts = (100, 100, 1000, 1000), [20]
    r = estimator_mse(depths, 0.05, counts, 2)
    assert r.patterns == 6
    exact = enumerate_mse(depths, 0.05, counts, 2)
    assert abs(Fraction(r.mse) - exact) <= Fraction(1, 10**12) * exact


def test_mse_monte_carlo_agrees():
    depths = (100, 1000) * 5
    counts = [30, 120]
    exact = estimator_mse(depths, 0.05, counts, 5)
    mc = estimator_mse(depths, 0.05, counts, 5, mode="monte-carlo", samples=100_000, seed=1)
    assert abs(mc.mse - exact.mse) <= 0.01 * exact.mse


def test_mse_cap():
    with pytest.raises(ParameterError, match="monte-carlo"):
        estimator_mse((100,) * 40, 0.05, [], 20)
    with pytest.raises(ParameterError):
        estimator_mse((100,) * 4, 0.05, [], 2, mode="bootstrap")


def test_reps_one_no_outliers():
    cell = run_cell(ScenarioSpec(20, 0, 100, 0.05), 1e-2, 1, DetectorParams(seed=5, replicates=100))
    assert math.isnan(cell.sensitivity)
    assert 0.0 <= cell.specificity <= 1.0
    assert cell.row()["sens"] is None


def test_reps_must_be_positive():
    with pytest.raises(ParameterError):
        run_cell(ScenarioSpec(20, 0, 100, 0.05), 1e-2, 0, DetectorParams(seed=5))


def test_cells_independent_of_grid_and_threads():
    a_spec = ScenarioSpec(20, 1, 100, 0.05)
    b_spec = ScenarioSpec(20, 1, 100, 0.10)
    params = DetectorParams(seed=17, replicates=200)
    alone = run_experiment([a_spec], 5, params, alphas=[1e-3])
    both = run_experiment([b_spec, a_spec], 5, params, alphas=[1e-2, 1e-3], threads=4)
    assert alone.cell(a_spec, 1e-3) == both.cell(a_spec, 1e-3)
    assert alone.to_csv().splitlines()[1] in both.to_csv()


def test_table3_cell_example():
    res = run_experiment(PRESETS["table3-row1"].rows, 200, DetectorParams(seed=7), alphas=[1e-2])
    cell = res.cells[0]
    assert abs(cell.sensitivity - 1.000) <= 0.05
    assert abs(cell.specificity - 0.997) <= 0.05


def test_table4_cell_example():
    res = run_experiment(PRESETS["table4-row1"].rows, 200, DetectorParams(seed=7), alphas=[1e-4])
    cell = res.cells[0]
    assert abs(cell.sensitivity - 0.944) <= 0.05
    assert abs(cell.specificity - 1.000) <= 0.05


def test_text_layout():
    res = run_experiment([ScenarioSpec(20, 1, 100, 0.01)], 2, DetectorParams(seed=1, replicates=50), alphas=[1e-3, 1e-2])
    lines = res.to_text().splitlines()
    assert lines[0].split()[-2:] == ["0.001", "0.01"]
    assert lines[1].split()[5] == "sens" and lines[2].split()[0] == "spec"


def test_no_outlier_specificity_floor():
    # mean specificity >= 1 - 2 alpha with exchangeable columns
    cell = run_cell(ScenarioSpec(100, 0, 100, 0.05), 1e-2, 30, DetectorParams(seed=2, replicates=300))
    assert cell.specificity >= 1 - 2e-2


def test_seed_derivation_stable():
    assert derive_seed(1, "a", [2], 3) == derive_seed(1, "a", [2], 3)
    assert derive_seed(1, "a", [2], 3) != derive_seed(1, "a", [2], 4)
    assert 0 <= derive_seed(99, "x") < 2**64


def test_case_study_spec_shape():
    spec = case_study_spec(seed=0)
    assert spec.k == 3572 and spec.n_outliers == 26
    assert set(spec.depth_array().tolist()) <= {5000, 5001, 2563, 2486}
    truth = generate_scenario(spec)
    inliers = truth.table.n[~truth.is_outlier & (truth.table.d == 5000)]
    assert inliers.max() <= 9


def test_presets_complete():
    assert len(PRESETS["table3"].rows) == 12
    assert len(PRESETS["table4"].rows) == 17
    assert PRESETS["table4-row1"].rows[0].depth_label == "100/1000*"
