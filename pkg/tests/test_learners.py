"""Classifier unit tests: hand-built fixtures, traversal oracles, FD checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atmfusion.learners import (
    BaggingModel,
    ForestModel,
    SvmModel,
    TreeModel,
    load_model,
    model_from_dict,
    model_to_dict,
    logreg_gradient,
    logreg_objective,
    save_model,
    svm_gradient,
    svm_objective,
    train_bagging,
    train_cat_like,
    train_lgbm_like,
    train_logreg,
    train_random_forest,
    train_svm,
    train_tree,
)

LR = 0.1
LAM = 1.0  # leaf-weight regulariser used by both boosting variants

# one feature, clean two-point margin between 2 and 3
STEP_X = np.array([[1.0], [2.0], [3.0], [4.0]])
STEP_Y = np.array([0, 0, 1, 1], dtype=np.int8)


def leaf_only(value: float) -> TreeModel:
    return TreeModel(
        feature=np.array([-1], dtype=np.int32),
        threshold=np.zeros(1),
        left=np.array([-1], dtype=np.int32),
        right=np.array([-1], dtype=np.int32),
        value=np.array([value]),
        n_features=1,
    )


def walk_tree(t: TreeModel, x: np.ndarray) -> float:
    """Reference traversal: left on x[f] <= threshold, leaf at feature < 0."""
    node = 0
    while t.feature[node] >= 0:
        node = t.left[node] if x[t.feature[node]] <= t.threshold[node] else t.right[node]
    return float(t.value[node])


def blobs(n=60, d=3, seed=5, separable=True):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    if separable:
        y = (X[:, 0] > 0.0).astype(np.int8)
        X[:, 0] += np.where(y == 1, 0.5, -0.5)  # clear corridor along x0
    else:
        y = rng.integers(0, 2, size=n).astype(np.int8)
    return X, y


# ---------------------------------------------------------------- trees


def test_tree_single_split_structure():
    t = train_tree(STEP_X, STEP_Y)
    assert t.n_nodes == 3 and t.n_leaves == 2
    assert t.feature[0] == 0
    assert t.threshold[0] == pytest.approx(2.5)
    assert walk_tree(t, np.array([2.0])) == 0.0
    assert walk_tree(t, np.array([3.0])) == 1.0
    assert np.array_equal(t.predict_label(STEP_X), STEP_Y)


def test_tree_no_split_between_equal_values():
    X = np.array([[1.0], [1.0], [2.0]])
    y = np.array([0, 1, 1], dtype=np.int8)
    t = train_tree(X, y)
    # only the 1|2 boundary is a legal threshold; the tied pair stays mixed
    assert t.threshold[0] == pytest.approx(1.5)
    assert t.predict_proba(np.array([[1.0]]))[0] == pytest.approx(0.5)
    assert t.predict_proba(np.array([[2.0]]))[0] == 1.0


def test_tree_grows_to_purity_on_xor():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0], dtype=np.int8)
    t = train_tree(X, y)
    assert np.array_equal(t.predict_label(X), y)
    assert set(np.unique(t.value[t.feature < 0])) == {0.0, 1.0}


def test_tree_min_split_collapses_to_prior():
    t = train_tree(STEP_X, STEP_Y, min_split=5)
    assert t.n_nodes == 1
    assert np.all(t.predict_proba(STEP_X) == 0.5)


def test_tree_min_leaf_blocks_unbalanced_split():
    # any split of 4 rows violates a 3-row minimum on one side
    t = train_tree(STEP_X, STEP_Y, min_leaf=3)
    assert t.n_nodes == 1


def test_tree_traversal_matches_reference():
    X, y = blobs(n=120, d=4, seed=7, separable=False)
    t = train_tree(X, y)
    Q = np.random.default_rng(8).uniform(-1.2, 1.2, size=(300, 4))
    want = np.array([walk_tree(t, q) for q in Q])
    assert np.array_equal(t.predict_proba(Q), want)


def test_tree_input_validation():
    with pytest.raises(ValueError):
        train_tree(np.zeros((3, 2)), np.array([0, 1, 2]))
    with pytest.raises(ValueError):
        train_tree(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        train_tree(np.zeros(3), np.array([0, 1, 0]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_tree_memorizes_distinct_rows(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(30, 2))
    y = rng.integers(0, 2, size=30).astype(np.int8)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    t = train_tree(X, y)
    assert np.array_equal(t.predict_label(X), y)


# -------------------------------------------------------------- bagging


def test_bagging_members_replay_their_bootstrap():
    X, y = blobs(n=80, seed=3, separable=False)
    model = train_bagging(X, y, n_trees=3, seed=42)
    assert len(model.trees) == 3
    for t in range(3):
        rng = np.random.default_rng(np.random.SeedSequence((42, t)))
        rows = np.sort(rng.integers(0, len(y), size=len(y)))
        ref = train_tree(X[rows], y[rows])
        member = model.trees[t]
        assert np.array_equal(member.feature, ref.feature)
        assert np.array_equal(member.threshold, ref.threshold)
        assert np.array_equal(member.value, ref.value)


def test_bagging_probability_is_member_mean():
    model = BaggingModel(trees=[leaf_only(0.2), leaf_only(0.4), leaf_only(0.9)], n_features=1)
    q = np.zeros((1, 1))
    assert model.predict_proba(q)[0] == pytest.approx(0.5)
    assert model.predict_label(q)[0] == 1


def test_bagging_determinism():
    X, y = blobs(n=50, seed=9, separable=False)
    a = train_bagging(X, y, n_trees=3, seed=7)
    b = train_bagging(X, y, n_trees=3, seed=7)
    c = train_bagging(X, y, n_trees=3, seed=8)
    assert all(
        np.array_equal(ta.threshold, tb.threshold) for ta, tb in zip(a.trees, b.trees)
    )
    assert any(
        not np.array_equal(ta.threshold, tc.threshold) for ta, tc in zip(a.trees, c.trees)
    )


# --------------------------------------------------------------- forest


def test_forest_feature_budget_is_sqrt():
    X, y = blobs(n=40, d=6, seed=1, separable=False)
    assert train_random_forest(X, y, n_trees=2, seed=1).max_features == 3
    X4, y4 = blobs(n=40, d=4, seed=1, separable=False)
    assert train_random_forest(X4, y4, n_trees=2, seed=1).max_features == 2


def test_forest_probability_is_vote_fraction():
    # 63 of 100 stub members vote in-service
    trees = [leaf_only(0.9)] * 63 + [leaf_only(0.1)] * 37
    model = ForestModel(trees=trees, n_features=1, max_features=1)
    assert model.predict_proba(np.zeros((1, 1)))[0] == pytest.approx(0.63)
    # a member sitting exactly on 0.5 counts as an in-service vote
    half = ForestModel(trees=[leaf_only(0.5), leaf_only(0.1)], n_features=1, max_features=1)
    assert half.predict_proba(np.zeros((1, 1)))[0] == pytest.approx(0.5)
    assert half.predict_label(np.zeros((1, 1)))[0] == 1


def test_forest_determinism_and_member_variety():
    X, y = blobs(n=60, d=4, seed=2, separable=False)
    a = train_random_forest(X, y, n_trees=8, seed=5)
    b = train_random_forest(X, y, n_trees=8, seed=5)
    for ta, tb in zip(a.trees, b.trees):
        assert np.array_equal(ta.feature, tb.feature)
        assert np.array_equal(ta.threshold, tb.threshold)
    roots = {(int(t.feature[0]), float(t.threshold[0])) for t in a.trees}
    assert len(roots) > 1


def test_forest_separable_accuracy():
    X, y = blobs(n=200, d=3, seed=4)
    model = train_random_forest(X, y, n_trees=20, seed=1)
    assert np.mean(model.predict_label(X) == y) == 1.0


# ------------------------------------------------------------- boosting


def test_gbdt_zero_rounds_is_prior():
    X, y = blobs(n=50, seed=6, separable=False)
    model = train_lgbm_like(X, y, n_rounds=0)
    assert model.stages == []
    assert np.allclose(model.predict_proba(X), float(np.mean(y)), atol=1e-12)


def test_gbdt_single_round_stump_by_hand():
    model = train_lgbm_like(STEP_X, STEP_Y.astype(np.float64), n_rounds=1)
    assert model.base_score == pytest.approx(0.0)
    (stage,) = model.stages
    # base p = 0.5: g = +-0.5, h = 0.25; G_left = 1.0, H_left = 0.5
    want = LR * 1.0 / (0.5 + LAM)
    assert stage.feature[0] == 0
    assert stage.threshold[0] == pytest.approx(2.5)
    leaf_vals = sorted(stage.value[stage.feature < 0])
    assert leaf_vals == pytest.approx([-want, want], abs=1e-12)
    raw = model.raw_score(STEP_X)
    assert raw == pytest.approx([-want, -want, want, want], abs=1e-12)
    loss = np.mean(np.logaddexp(0.0, raw) - STEP_Y * raw)
    assert model.train_loss[0] == pytest.approx(loss, abs=1e-12)


def test_gbdt_loss_monotone_non_increasing():
    X, y = blobs(n=300, d=3, seed=10, separable=False)
    yn = y.copy()
    yn[::7] = 1 - yn[::7]  # label noise keeps the fit from trivially saturating
    leafwise = train_lgbm_like(X, yn, n_rounds=60)
    oblivious = train_cat_like(X, yn, n_iters=60)
    assert np.all(np.diff(leafwise.train_loss) <= 1e-9)
    assert np.all(np.diff(oblivious.train_loss) <= 1e-9)


def test_gbdt_fits_separable_data():
    X, y = blobs(n=200, d=3, seed=12)
    model = train_lgbm_like(X, y, n_rounds=40)
    assert np.mean(model.predict_label(X) == y) == 1.0


def test_gbdt_single_leaf_budget_never_moves():
    X, y = blobs(n=40, seed=13, separable=False)
    model = train_lgbm_like(X, y, n_rounds=5, num_leaves=1)
    # the prior zeroes the pooled gradient, so every stage adds exactly 0
    assert np.allclose(model.predict_proba(X), float(np.mean(y)), atol=1e-12)
    assert np.all(model.train_loss == model.train_loss[0])


def test_gbdt_depth_cap_limits_stage_size():
    X, y = blobs(n=200, d=4, seed=14, separable=False)
    model = train_lgbm_like(X, y, n_rounds=10, max_depth=1)
    for stage in model.stages:
        assert int(np.sum(stage.feature < 0)) <= 2


def test_gbdt_rejects_bad_budgets():
    with pytest.raises(ValueError):
        train_lgbm_like(STEP_X, STEP_Y, num_leaves=0)
    with pytest.raises(ValueError):
        train_cat_like(STEP_X, STEP_Y, depth=0)


def test_oblivious_depth1_stump_by_hand():
    model = train_cat_like(STEP_X, STEP_Y.astype(np.float64), n_iters=1, depth=1)
    (stage,) = model.stages
    want = LR * 1.0 / (0.5 + LAM)
    assert stage.features.tolist() == [0]
    assert stage.thresholds[0] == pytest.approx(2.5)
    assert stage.values == pytest.approx([-want, want], abs=1e-12)


def test_oblivious_level_structure_and_routing():
    X, y = blobs(n=150, d=4, seed=15, separable=False)
    model = train_cat_like(X, y, n_iters=3, depth=2)
    Q = np.random.default_rng(16).uniform(-1.2, 1.2, size=(80, 4))
    raw = np.full(80, model.base_score)
    for stage in model.stages:
        assert stage.features.shape == (2,)
        assert stage.values.shape == (4,)
        code = np.zeros(80, dtype=np.int64)
        for level in range(2):
            bit = Q[:, stage.features[level]] > stage.thresholds[level]
            code = (code << 1) | bit.astype(np.int64)
        raw += stage.values[code]
    assert np.array_equal(model.raw_score(Q), raw)


def test_oblivious_constant_features_fall_back():
    X = np.ones((30, 2))
    y = (np.arange(30) % 2).astype(np.int8)
    model = train_cat_like(X, y, n_iters=3, depth=2)
    assert np.all(np.diff(model.train_loss) <= 1e-9)
    assert np.allclose(model.predict_proba(X), 0.5, atol=1e-9)


# ----------------------------------------------------------- svm/logreg


def finite_difference(objective, w, b, eps=1e-6):
    grad_w = np.empty_like(w)
    for i in range(len(w)):
        step = np.zeros_like(w)
        step[i] = eps
        grad_w[i] = (objective(w + step, b) - objective(w - step, b)) / (2 * eps)
    grad_b = (objective(w, b + eps) - objective(w, b - eps)) / (2 * eps)
    return grad_w, grad_b


def test_svm_separates_clean_margin():
    X, y = blobs(n=120, d=3, seed=17)
    model = train_svm(X, y)
    assert np.mean(model.predict_label(X) == y) == 1.0


def test_svm_objective_path_descends():
    X, y = blobs(n=150, d=4, seed=18, separable=False)
    model = train_svm(X, y)
    assert len(model.objective_path) >= 2
    assert np.all(np.diff(model.objective_path) <= 1e-9)
    assert model.objective_path[0] == pytest.approx(
        svm_objective(np.zeros(4), 0.0, X, y.astype(float))
    )


def test_svm_gradient_matches_finite_differences():
    rng = np.random.default_rng(19)
    X = rng.uniform(-1.0, 1.0, size=(40, 5))
    y = rng.integers(0, 2, size=40).astype(np.float64)
    w = rng.normal(scale=0.5, size=5)
    b = 0.3
    gw, gb = svm_gradient(w, b, X, y, C=1.0)
    fw, fb = finite_difference(lambda ww, bb: svm_objective(ww, bb, X, y, C=1.0), w, b)
    assert np.linalg.norm(gw - fw) / max(np.linalg.norm(fw), 1e-12) < 1e-4
    assert abs(gb - fb) / max(abs(fb), 1e-12) < 1e-4


def test_svm_label_threshold_at_zero_margin():
    model = SvmModel(w=np.array([1.0]), b=0.0, C=1.0, n_features=1)
    labels = model.predict_label(np.array([[-0.1], [0.0], [0.1]]))
    assert labels.tolist() == [0, 1, 1]


def test_linear_models_reject_single_class():
    X = np.zeros((4, 2))
    y = np.ones(4)
    with pytest.raises(ValueError):
        train_svm(X, y)
    with pytest.raises(ValueError):
        train_logreg(X, y)
    with pytest.raises(ValueError):
        train_svm(np.zeros((4, 2)), np.array([0, 1, 1]))


def test_logreg_symmetric_fixture_centers_at_half():
    X = np.array([[-1.0], [1.0]])
    y = np.array([0, 1], dtype=np.int8)
    model = train_logreg(X, y)
    assert model.b == pytest.approx(0.0, abs=1e-8)
    assert model.w[0] > 0.0
    assert model.predict_proba(np.zeros((1, 1)))[0] == pytest.approx(0.5, abs=1e-8)


def test_logreg_stationary_at_fit():
    X, y = blobs(n=200, d=3, seed=20, separable=False)
    model = train_logreg(X, y)
    gw, gb = logreg_gradient(model.w, model.b, X, y.astype(float), C=1.0)
    assert np.linalg.norm(np.append(gw, gb)) < 1e-5


def test_logreg_gradient_matches_finite_differences():
    rng = np.random.default_rng(21)
    X = rng.uniform(-1.0, 1.0, size=(40, 5))
    y = rng.integers(0, 2, size=40).astype(np.float64)
    w = rng.normal(scale=0.5, size=5)
    b = -0.2
    gw, gb = logreg_gradient(w, b, X, y, C=2.0)
    fw, fb = finite_difference(lambda ww, bb: logreg_objective(ww, bb, X, y, C=2.0), w, b)
    assert np.linalg.norm(gw - fw) / max(np.linalg.norm(fw), 1e-12) < 1e-4
    assert abs(gb - fb) / max(abs(fb), 1e-12) < 1e-4


def test_logreg_stronger_penalty_shrinks_weights():
    X, y = blobs(n=150, d=3, seed=22)
    loose = train_logreg(X, y, C=100.0)
    tight = train_logreg(X, y, C=0.01)
    assert np.linalg.norm(tight.w) < np.linalg.norm(loose.w)


# ------------------------------------------------------------ persistence


def trained_zoo(tmp_path):
    X, y = blobs(n=60, d=3, seed=23, separable=False)
    return X, {
        "svm": train_svm(X, y),
        "logreg": train_logreg(X, y),
        "tree": train_tree(X, y),
        "bagging": train_bagging(X, y, n_trees=3, seed=1),
        "random_forest": train_random_forest(X, y, n_trees=5, seed=1),
        "leafwise_gbdt": train_lgbm_like(X, y, n_rounds=5),
        "oblivious_gbdt": train_cat_like(X, y, n_iters=5, depth=3),
    }


def test_save_load_round_trip_preserves_predictions(tmp_path):
    X, zoo = trained_zoo(tmp_path)
    Q = np.random.default_rng(24).uniform(-1.5, 1.5, size=(50, 3))
    for kind, model in zoo.items():
        path = tmp_path / f"{kind}.json"
        save_model(model, path)
        back = load_model(path)
        assert model_to_dict(back)["kind"] == kind
        assert np.array_equal(back.predict_proba(Q), model.predict_proba(Q)), kind
        assert np.array_equal(back.predict_label(Q), model.predict_label(Q)), kind


def test_model_payload_validation():
    with pytest.raises(ValueError):
        model_from_dict({"state": {}})
    with pytest.raises(ValueError):
        model_from_dict({"format_version": 99, "kind": "svm", "state": {}})
    with pytest.raises(ValueError):
        model_from_dict({"format_version": 1, "kind": "perceptron", "state": {}})
    with pytest.raises(TypeError):
        model_to_dict(object())
