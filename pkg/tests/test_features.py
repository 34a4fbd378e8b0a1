import io

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SPACE, make_store
from uwb_adapt.dataset import generate_records, SynthConfig, SynthModel
from uwb_adapt.features import (
    CANDIDATE_FEATURES,
    F_CAP,
    FeatureMatrix,
    ZeroVarianceError,
    anova_f,
    build_feature_matrix,
    cross_correlation,
    f_value,
    rank_features,
    write_ranking_csv,
)


def test_self_correlation():
    v = np.array([1.0, 2.0, 5.0, 3.0])
    assert cross_correlation(v, v) == pytest.approx(1.0)
    assert cross_correlation(v, -v) == pytest.approx(-1.0)


def test_correlation_hand_value():
    f = np.array([1.0, 2.0, 3.0, 4.0])
    g = np.array([2.0, 4.0, 5.0, 9.0])
    # 11 / sqrt(5 * 26)
    assert cross_correlation(f, g) == pytest.approx(11.0 / np.sqrt(130.0))
    assert cross_correlation(f, g) == pytest.approx(0.9648, abs=5e-5)


def test_correlation_matches_library():
    rng = np.random.default_rng(0)
    f = rng.normal(size=40)
    g = 0.3 * f + rng.normal(size=40)
    assert cross_correlation(f, g) == pytest.approx(scipy.stats.pearsonr(f, g)[0])


def test_zero_variance_rejected():
    with pytest.raises(ZeroVarianceError):
        cross_correlation(np.ones(5), np.arange(5.0))


def test_f_value_zero():
    assert f_value(0.0, 17) == 0.0


def test_f_value_unit_ratio():
    assert f_value(1.0 / np.sqrt(2.0), 17) == pytest.approx(17.0)


def test_f_value_hand():
    assert f_value(0.5, 17) == pytest.approx(0.25 / 0.75 * 17)


def test_f_value_perfect_correlation_capped():
    with pytest.warns(RuntimeWarning):
        assert f_value(1.0, 17) == F_CAP


@given(st.floats(0.0, 0.98), st.floats(0.01, 0.98))
def test_f_value_strictly_increasing_in_xcor(a, delta):
    b = min(a + delta, 0.995)
    assert f_value(b, 10) > f_value(a, 10)


def test_anova_identical_means():
    f = np.array([1.0, 2.0, 3.0, 1.0, 2.0, 3.0])
    labels = np.array([0, 0, 0, 1, 1, 1])
    assert anova_f(f, labels) == pytest.approx(0.0)


def test_anova_perfect_separation_capped():
    f = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
    labels = np.array([0, 0, 0, 1, 1, 1])
    with pytest.warns(RuntimeWarning):
        assert anova_f(f, labels) == F_CAP


def test_anova_hand_value():
    f = np.array([1.0, 2.0, 3.0, 2.0, 3.0, 4.0])
    labels = np.array([0, 0, 0, 1, 1, 1])
    assert anova_f(f, labels) == pytest.approx(1.5)


def test_anova_matches_library():
    rng = np.random.default_rng(1)
    groups = [rng.normal(loc=m, size=12) for m in (0.0, 0.4, 1.1)]
    f = np.concatenate(groups)
    labels = np.repeat([0, 1, 2], 12)
    expected = scipy.stats.f_oneway(*groups).statistic
    assert anova_f(f, labels) == pytest.approx(expected)


def test_anova_degenerate_classes_rejected():
    with pytest.raises(ValueError):
        anova_f(np.array([1.0, 2.0, 3.0]), np.array([0, 0, 0]))
    with pytest.raises(ValueError):
        anova_f(np.array([1.0, 2.0, 3.0]), np.array([0, 0, 1]))


@given(st.floats(-100, 100), st.floats(0.1, 50))
@settings(max_examples=30)
def test_anova_invariant_to_affine_feature_transform(shift, scale):
    rng = np.random.default_rng(7)
    f = rng.normal(size=24)
    labels = np.repeat([0, 1, 2], 8)
    base = anova_f(f, labels)
    moved = anova_f(f * scale + shift, labels)
    assert moved == pytest.approx(base, rel=1e-9, abs=1e-9)


def _matrix(rng, n=60):
    g = rng.uniform(0.0, 2.0, n)
    cols = {
        "noisy_copy": g + rng.normal(0, 0.01, n),
        "noise": rng.normal(0, 1, n),
        "anti": -g + rng.normal(0, 0.3, n),
    }
    labels = (g > 1.0).astype(int)
    return FeatureMatrix(columns=cols, target_g=g, target_class=labels)


def test_noisy_copy_ranks_first_for_regression():
    m = _matrix(np.random.default_rng(5))
    ranking = rank_features(m)
    assert ranking.regression[0][0] == "noisy_copy"


def test_constant_feature_excluded_with_warning():
    m = _matrix(np.random.default_rng(6))
    cols = dict(m.columns)
    cols["flat"] = np.full(len(m.target_g), 3.3)
    m2 = FeatureMatrix(columns=cols, target_g=m.target_g, target_class=m.target_class)
    with pytest.warns(RuntimeWarning):
        ranking = rank_features(m2)
    assert "flat" in ranking.excluded
    assert all(name != "flat" for name, _ in ranking.regression)


def test_ranking_permutation_invariant():
    m = _matrix(np.random.default_rng(8))
    reversed_cols = dict(reversed(list(m.columns.items())))
    m2 = FeatureMatrix(columns=reversed_cols, target_g=m.target_g, target_class=m.target_class)
    assert rank_features(m).regression == rank_features(m2).regression
    assert rank_features(m).classification == rank_features(m2).classification


def test_dof_conventions():
    m = _matrix(np.random.default_rng(9))
    by_features = rank_features(m, "features")
    by_samples = rank_features(m, "samples")
    ratio = (len(m.target_g) - 2) / (len(m.columns) - 1)
    for (name_a, f_a), (name_b, f_b) in zip(by_features.regression, by_samples.regression):
        assert name_a == name_b
        assert f_b == pytest.approx(f_a * ratio)
    with pytest.raises(ValueError):
        rank_features(m, "bogus")


def test_build_matrix_from_synthetic_store():
    cfg = SynthConfig(n_nodes=4, attempts_per_combination=20, seed=2)
    model = SynthModel(cfg)
    from uwb_adapt.dataset import DatasetStore

    records = list(generate_records(model))
    store = DatasetStore.from_records(records, cfg.attempts_per_combination)
    matrix = build_feature_matrix(records, store)
    assert set(matrix.columns) == set(CANDIDATE_FEATURES)
    n = len(matrix.target_g)
    assert n == store.total_received()
    assert np.all(np.isfinite(matrix.target_g))
    # Class labels are valid action indices.
    assert matrix.target_class.min() >= 0
    assert matrix.target_class.max() < len(SPACE)
    ranking = rank_features(matrix)
    reg_f = [f for _, f in ranking.regression]
    cls_f = [f for _, f in ranking.classification]
    assert reg_f == sorted(reg_f, reverse=True)
    assert cls_f == sorted(cls_f, reverse=True)
    assert all(f >= 0.0 for f in reg_f + cls_f)
    assert len(ranking.regression) + len(ranking.excluded) == len(CANDIDATE_FEATURES)


def test_ranking_csv_shape():
    m = _matrix(np.random.default_rng(10))
    ranking = rank_features(m)
    buf = io.StringIO()
    write_ranking_csv(ranking, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "feature,f_value_regression,f_value_classification,rank_r,rank_c"
    assert len(lines) == 1 + len(m.columns)
