"""Weighted ridge fitting against independent oracles, and explain()."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from limescope import (
    ClassLabel,
    Explanation,
    FusionPolicy,
    PerturbationBatch,
    RidgeConfig,
    WeightedRidge,
    build_batch,
    explain,
    fit_weighted_ridge,
    sample_masks,
    segment_grid,
    weighted_r2,
)
from limescope.adapters import PlantedOracle
from limescope.errors import ContractError, UndefinedMetricError

RESIDUAL_LIMIT = 1e-8


# -- fit_weighted_ridge -------------------------------------------------------


def test_constant_target_gives_zero_coefficients():
    X = np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.full(3, 0.7)
    fit = fit_weighted_ridge(X, y, np.ones(3), 0.0)
    assert fit.coef == pytest.approx([0.0, 0.0], abs=1e-12)
    assert fit.intercept == pytest.approx(0.7, abs=1e-12)
    assert fit.normal_residual < RESIDUAL_LIMIT


def test_exact_interpolation_two_points():
    fit = fit_weighted_ridge(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), np.ones(2), 0.0)
    assert fit.coef[0] == pytest.approx(1.0, abs=1e-12)
    assert fit.intercept == pytest.approx(0.0, abs=1e-12)


def test_doubling_weight_equals_duplicating_row():
    rng = np.random.default_rng(3)
    X = rng.integers(0, 2, (20, 5)).astype(float)
    y = rng.random(20)
    w = np.ones(20)
    w[4] = 2.0
    weighted = fit_weighted_ridge(X, y, w, 0.5)
    # oracle: the same design with row 4 physically duplicated, unit weights
    X_dup = np.vstack([X, X[4]])
    y_dup = np.append(y, y[4])
    duplicated = fit_weighted_ridge(X_dup, y_dup, np.ones(21), 0.5)
    assert weighted.coef == pytest.approx(duplicated.coef, abs=1e-10)
    assert weighted.intercept == pytest.approx(duplicated.intercept, abs=1e-10)


def test_all_zero_weights_rejected():
    with pytest.raises(ContractError):
        fit_weighted_ridge(np.eye(3), np.ones(3), np.zeros(3), 1.0)


def test_single_sample_rejected():
    with pytest.raises(ContractError):
        fit_weighted_ridge(np.ones((1, 2)), np.ones(1), np.ones(1), 1.0)


def test_singular_unpenalized_system_flagged_min_norm():
    # two identical columns: infinitely many solutions at lambda=0
    X = np.array([[1.0, 1.0], [0.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
    y = np.array([1.0, 0.0, 1.0, 0.0])
    fit = fit_weighted_ridge(X, y, np.ones(4), 0.0)
    assert fit.singular
    assert fit.normal_residual < RESIDUAL_LIMIT
    # minimum-norm solution splits the effect evenly across the twin columns
    assert fit.coef[0] == pytest.approx(fit.coef[1], abs=1e-10)
    assert fit.coef[0] + fit.coef[1] == pytest.approx(1.0, abs=1e-10)


def test_residual_contract_on_random_problems():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(2, 40))
        d = int(rng.integers(1, 10))
        X = rng.integers(0, 2, (n, d)).astype(float)
        y = rng.random(n)
        w = rng.random(n) + 1e-3
        lam = float(rng.choice([0.0, 0.01, 1.0, 10.0]))
        fit = fit_weighted_ridge(X, y, w, lam)
        assert fit.normal_residual < RESIDUAL_LIMIT


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1), scale=st.floats(min_value=1e-3, max_value=1e3))
def test_scale_equivariance_unpenalized(seed, scale):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 2, (16, 4)).astype(float)
    X[0] = 1.0
    y = rng.random(16)
    w = rng.random(16) + 0.1
    base = fit_weighted_ridge(X, y, w, 0.0)
    scaled = fit_weighted_ridge(X, y * scale, w, 0.0)
    assert scaled.coef == pytest.approx(base.coef * scale, rel=1e-8, abs=1e-10)
    assert scaled.intercept == pytest.approx(base.intercept * scale, rel=1e-8, abs=1e-10)
    # |weight| ranking (and hence any selection) survives the scaling; skip
    # only when two magnitudes are too close for float noise to keep apart
    gaps = np.diff(np.sort(np.abs(base.coef)))
    if gaps.size == 0 or gaps.min() > 1e-9:
        assert np.array_equal(np.argsort(-np.abs(scaled.coef), kind="stable"),
                              np.argsort(-np.abs(base.coef), kind="stable"))


def test_permutation_symmetry():
    rng = np.random.default_rng(8)
    X = rng.integers(0, 2, (30, 6)).astype(float)
    y = rng.random(30)
    w = rng.random(30) + 0.1
    perm = np.array([3, 0, 5, 1, 4, 2])
    base = fit_weighted_ridge(X, y, w, 0.7)
    permuted = fit_weighted_ridge(X[:, perm], y, w, 0.7)
    assert permuted.coef == pytest.approx(base.coef[perm], abs=1e-10)
    assert permuted.intercept == pytest.approx(base.intercept, abs=1e-10)


# -- weighted_r2 ----------------------------------------------------------------


def test_perfect_fit_r2_is_one():
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([1.0, 3.0, 5.0])
    assert weighted_r2(X, y, np.ones(3), np.array([2.0]), 1.0) == pytest.approx(1.0)


def test_mean_predictor_r2_is_zero():
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([1.0, 2.0, 6.0])
    w = np.array([1.0, 2.0, 1.0])
    mean = float(w @ y / w.sum())
    assert weighted_r2(X, y, w, np.array([0.0]), mean) == pytest.approx(0.0, abs=1e-12)


def test_r2_hand_evaluated_three_points():
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([0.0, 1.0, 1.0])
    w = np.array([1.0, 1.0, 2.0])
    coef, intercept = np.array([0.4]), 0.2
    y_hat = intercept + X @ coef
    y_bar = float(w @ y) / 4.0
    expected = 1 - float(w @ (y - y_hat) ** 2) / float(w @ (y - y_bar) ** 2)
    assert weighted_r2(X, y, w, coef, intercept) == pytest.approx(expected, abs=1e-12)


def test_r2_undefined_for_constant_target():
    with pytest.raises(UndefinedMetricError):
        weighted_r2(np.eye(2), np.ones(2), np.ones(2), np.zeros(2), 1.0)


# -- explain ----------------------------------------------------------------------


def _lattice_model(d: int, seed: int):
    """Bounded deterministic function over mask bits, with an interaction term."""
    rng = np.random.default_rng(seed)
    slope = rng.uniform(-1.0, 1.0, d)

    def f(masks: np.ndarray) -> np.ndarray:
        z = masks.astype(float)
        linear = z @ slope / (np.abs(slope).sum() + 1e-12)
        pairwise = 0.2 * z[:, 0] * z[:, 1 % d]
        return np.clip(0.5 + 0.4 * linear + pairwise - 0.1, 0.0, 1.0)

    return f


def _batch_from_function(masks: np.ndarray, f, weights=None) -> PerturbationBatch:
    p1 = f(masks)
    predictions = np.stack([1 - p1, p1], axis=1)
    n = masks.shape[0]
    if weights is None:
        weights = np.ones(n)
    return PerturbationBatch(
        masks=masks,
        weights=weights,
        predictions=predictions,
        seed=0,
        kernel_width=0.25,
        model_id="lattice",
    )


def _closed_form_lattice_projection(d: int, f) -> tuple[np.ndarray, float]:
    """Exact OLS over the full mask lattice.

    Centered bit columns are orthogonal there (variance 1/4, covariance 0),
    so beta_i = 4 * E[f * (z_i - 1/2)] and the intercept is E[f] - sum
    beta_i / 2. Independent of the solver under test.
    """
    lattice = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.uint8)
    values = f(lattice)
    centered = lattice.astype(float) - 0.5
    beta = 4.0 * (centered * values[:, None]).mean(axis=0)
    intercept = values.mean() - 0.5 * beta.sum()
    return beta, intercept


@pytest.mark.parametrize("d", [4, 8])
def test_enumeration_fit_matches_closed_form(d):
    f = _lattice_model(d, seed=d)
    lattice = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.uint8)
    fit = fit_weighted_ridge(lattice, f(lattice), np.ones(len(lattice)), 0.0)
    beta, intercept = _closed_form_lattice_projection(d, f)
    assert fit.coef == pytest.approx(beta, abs=1e-10)
    assert fit.intercept == pytest.approx(intercept, abs=1e-10)
    assert fit.normal_residual < RESIDUAL_LIMIT


@pytest.mark.parametrize("d", [8, 12])
def test_sampled_fit_tracks_enumeration(d):
    f = _lattice_model(d, seed=100 + d)
    beta, _ = _closed_form_lattice_projection(d, f)
    masks = sample_masks(d, 4096, seed=5)
    fit = fit_weighted_ridge(masks, f(masks), np.ones(4096), 0.0)
    assert fit.normal_residual < RESIDUAL_LIMIT
    assert np.max(np.abs(fit.coef - beta)) < 0.05


def test_explain_recovers_planted_segment(random_image):
    img = random_image(16, 16, seed=21)
    smap = segment_grid(img, 2, 4)
    oracle = PlantedOracle(smap, key_segment=6, reference=img)
    batch = build_batch(img, smap, 500, seed=13, sigma=0.25, policy=FusionPolicy(), model=oracle)
    result = explain(batch, config=RidgeConfig(ridge_lambda=1.0, top_k=5))
    assert result.selected[0] == 6
    assert result.weights[6] > 0
    assert result.target_class.value == 1
    assert not result.degenerate
    assert result.normal_residual < RESIDUAL_LIMIT


def test_explain_constant_model_is_degenerate_flagged():
    masks = sample_masks(4, 32, seed=1)
    batch = PerturbationBatch(
        masks=masks,
        weights=np.ones(32),
        predictions=np.tile([0.5, 0.5], (32, 1)),
        seed=1,
        kernel_width=0.25,
        model_id="constant",
    )
    result = explain(batch, target_class=ClassLabel(1, "glaucoma"))
    assert result.degenerate
    assert result.r2 is None
    assert (result.weights == 0).all()
    assert result.selected == ()


def test_explain_requires_filled_predictions():
    batch = PerturbationBatch(
        masks=sample_masks(4, 8, seed=0),
        weights=np.ones(8),
        predictions=None,
        seed=0,
        kernel_width=0.25,
    )
    with pytest.raises(ContractError):
        explain(batch, target_class=ClassLabel(0, "non-glaucoma"))


def test_explain_selection_stability_over_seeds(random_image):
    img = random_image(16, 16, seed=77)
    smap = segment_grid(img, 2, 4)
    oracle = PlantedOracle(smap, key_segment=2, reference=img)
    hits = 0
    for seed in range(100):
        batch = build_batch(img, smap, 200, seed=seed, sigma=0.25, policy=FusionPolicy(), model=oracle)
        result = explain(batch, config=RidgeConfig(ridge_lambda=1.0, top_k=3))
        hits += result.selected[0] == 2
    assert hits >= 99


def test_explain_permuting_segments_permutes_weights(random_image):
    d = 6
    masks = sample_masks(d, 256, seed=4)
    f = _lattice_model(d, seed=9)
    base = explain(_batch_from_function(masks, f), target_class=ClassLabel(1, "glaucoma"),
                   config=RidgeConfig(ridge_lambda=0.3, top_k=d))
    perm = np.array([2, 0, 1, 5, 3, 4])
    permuted_masks = masks[:, perm].copy()
    permuted_masks[0] = 1

    def f_perm(m):
        return f(m[:, np.argsort(perm)])

    permuted = explain(_batch_from_function(permuted_masks, f_perm), target_class=ClassLabel(1, "glaucoma"),
                       config=RidgeConfig(ridge_lambda=0.3, top_k=d))
    assert permuted.weights == pytest.approx(base.weights[perm], abs=1e-10)


def test_explanation_json_round_trip(random_image):
    img = random_image(12, 12, seed=3)
    smap = segment_grid(img, 2, 2)
    oracle = PlantedOracle(smap, key_segment=1, reference=img)
    batch = build_batch(img, smap, 64, seed=2, sigma=0.25, policy=FusionPolicy(), model=oracle)
    result = explain(batch)
    restored = Explanation.from_json_dict(result.to_json_dict())
    assert np.array_equal(restored.weights, result.weights)
    assert restored.selected == result.selected
    assert restored.provenance == result.provenance
    assert restored.r2 == result.r2


def test_explanation_rejects_bad_selected_order():
    from limescope.surrogate import Provenance

    with pytest.raises(ContractError):
        Explanation(
            target_class=ClassLabel(1, "glaucoma"),
            weights=np.array([0.1, 0.9]),
            intercept=0.0,
            r2=0.5,
            selected=(0, 1),  # not ordered by |weight|
            provenance=Provenance(0, 2, 0.25, 1.0, 2, "m", 2),
        )


# -- estimator ---------------------------------------------------------------------


def test_weighted_ridge_estimator_round_trip():
    rng = np.random.default_rng(2)
    X = rng.integers(0, 2, (64, 5)).astype(float)
    y = rng.random(64)
    w = rng.random(64) + 0.1
    est = WeightedRidge(alpha=0.5).fit(X, y, sample_weight=w)
    direct = fit_weighted_ridge(X, y, w, 0.5)
    assert est.coef_ == pytest.approx(direct.coef)
    assert est.intercept_ == pytest.approx(direct.intercept)
    assert est.predict(X[:3]) == pytest.approx(direct.intercept + X[:3] @ direct.coef)
    assert est.score(X, y, sample_weight=w) == pytest.approx(weighted_r2(X, y, w, direct.coef, direct.intercept))


def test_weighted_ridge_sklearn_clone():
    from sklearn.base import clone

    est = WeightedRidge(alpha=2.5)
    cloned = clone(est)
    assert cloned.get_params() == {"alpha": 2.5}
