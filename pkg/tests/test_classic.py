"""SVM/SMO correctness (analytic cases, KKT conditions), kernel properties,
weighted-KNN voting, and the CV searches."""

import numpy as np
import pytest

from buscad.classic import (
    KernelSpec,
    KnnModel,
    kernel_eval,
    kernel_matrix,
    knn_predict,
    knn_predict_batch,
    knn_select_k,
    svm_decision,
    svm_grid_search,
    svm_predict,
    svm_train_binary,
    svm_train_ovr,
)


def make_blobs(rng, n_per_class=12, centers=((0, 0), (6, 6), (0, 7)), spread=0.6):
    xs, ys = [], []
    for cls, c in enumerate(centers):
        xs.append(rng.normal(loc=c, scale=spread, size=(n_per_class, 2)))
        ys.extend([cls] * n_per_class)
    return np.vstack(xs), np.array(ys)


def check_kkt(model, x, y, tol=1e-3):
    """KKT complementarity for every training point, from the fitted model."""
    alpha_full = np.zeros(len(y))
    alpha_full[model.sv_index] = np.abs(model.dual_coef)
    f = model.decision(x)
    margins = y * f
    for a, m in zip(alpha_full, margins):
        if a < 1e-8:
            assert m >= 1.0 - tol
        elif a > model.C - 1e-8:
            assert m <= 1.0 + tol
        else:
            assert abs(m - 1.0) <= tol


class TestKernel:
    def test_rbf_self_similarity(self):
        spec = KernelSpec("rbf", gamma=0.7)
        x = np.array([1.0, 2.0, 3.0])
        assert kernel_eval(spec, x, x) == 1.0

    def test_linear_dot(self):
        assert kernel_eval(KernelSpec("linear"), [1.0, 2.0], [3.0, 4.0]) == 11.0

    def test_rbf_formula(self):
        # gamma=0.5, squared distance 2 -> e^{-1}
        spec = KernelSpec("rbf", gamma=0.5)
        assert kernel_eval(spec, [0.0, 0.0], [1.0, 1.0]) == pytest.approx(np.exp(-1))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            kernel_eval(KernelSpec("linear"), [1.0], [1.0, 2.0])

    def test_rbf_requires_gamma(self):
        with pytest.raises(ValueError):
            KernelSpec("rbf")

    def test_rbf_gram_positive_semidefinite(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            pts = rng.normal(size=(rng.integers(3, 12), 3))
            k = kernel_matrix(KernelSpec("rbf", 0.8), pts, pts)
            assert np.allclose(k, k.T)
            assert np.linalg.eigvalsh(k).min() >= -1e-8


class TestSvmBinary:
    def test_two_point_analytic_solution(self):
        # symmetric pair: f(x) = x, b = 0, alpha = 0.5 for both points
        x = np.array([[-1.0], [1.0]])
        y = np.array([-1.0, 1.0])
        model = svm_train_binary(x, y, c=100.0, spec=KernelSpec("linear"))
        assert len(model.sv_x) == 2
        np.testing.assert_allclose(np.abs(model.dual_coef), 0.5, atol=1e-6)
        assert model.bias == pytest.approx(0.0, abs=1e-6)
        np.testing.assert_allclose(model.decision(np.array([[2.0]])), [2.0], atol=1e-3)

    def test_xor_rbf(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        model = svm_train_binary(x, y, c=10.0, spec=KernelSpec("rbf", gamma=1.0))
        assert np.all(np.sign(model.decision(x)) == y)

    def test_single_class_errors(self):
        with pytest.raises(ValueError, match="both"):
            svm_train_binary(np.zeros((3, 1)), np.ones(3), 1.0, KernelSpec("linear"))

    def test_dual_constraints_on_random_separable_sets(self):
        rng = np.random.default_rng(1)
        for trial in range(20):
            n = int(rng.integers(8, 25))
            x_pos = rng.normal(loc=(3.0, 3.0), scale=0.5, size=(n, 2))
            x_neg = rng.normal(loc=(-3.0, -3.0), scale=0.5, size=(n, 2))
            x = np.vstack([x_pos, x_neg])
            y = np.concatenate([np.ones(n), -np.ones(n)])
            model = svm_train_binary(x, y, c=100.0, spec=KernelSpec("linear"), seed=trial)
            alpha = np.abs(model.dual_coef)
            assert np.all(alpha >= 0) and np.all(alpha <= 100.0 + 1e-9)
            assert abs(model.dual_coef.sum()) <= 1e-6  # sum alpha_i y_i
            check_kkt(model, x, y)
            assert np.all(np.sign(model.decision(x)) == y)

    def test_determinism(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(20, 3))
        y = np.sign(x[:, 0] + 0.1)
        a = svm_train_binary(x, y, 10.0, KernelSpec("rbf", 0.5), seed=5)
        b = svm_train_binary(x, y, 10.0, KernelSpec("rbf", 0.5), seed=5)
        np.testing.assert_array_equal(a.dual_coef, b.dual_coef)
        assert a.bias == b.bias


class TestSvmOvr:
    def test_separable_blobs_predict_own_center(self):
        rng = np.random.default_rng(3)
        x, y = make_blobs(rng)
        model = svm_train_ovr(x, y, c=10.0, spec=KernelSpec("rbf", 0.5))
        scores = svm_decision(model, x)
        preds = svm_predict(model, x)
        assert np.all(preds == y)
        # a point deep inside class 1 scores strictly highest for class 1
        probe = np.array([[6.0, 6.0]])
        s = svm_decision(model, probe)[0]
        assert np.argmax(s) == 1 and s[1] > max(s[0], s[2])

    def test_argmax_tie_goes_to_lowest_index(self):
        scores = np.array([[0.2, 0.2, -1.0]])
        assert int(np.argmax(scores, axis=1)[0]) == 0

    def test_score_shift_invariance(self):
        rng = np.random.default_rng(4)
        x, y = make_blobs(rng, n_per_class=8)
        model = svm_train_ovr(x, y, 1.0, KernelSpec("rbf", 0.5))
        scores = svm_decision(model, x)
        preds_shifted = np.argmax(scores + 3.7, axis=1)
        assert np.all(preds_shifted == svm_predict(model, x))


class TestGridSearch:
    def test_single_candidate(self):
        rng = np.random.default_rng(5)
        x, y = make_blobs(rng, n_per_class=10)
        c, gamma, acc = svm_grid_search(x, y, c_grid=(1.0,), gamma_grid=(0.1,), folds=5, seed=0)
        assert (c, gamma) == (1.0, 0.1)
        assert 0.0 <= acc <= 1.0

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        x, y = make_blobs(rng, n_per_class=10)
        a = svm_grid_search(x, y, c_grid=(0.1, 1.0), gamma_grid=(0.01, 0.1), seed=3)
        b = svm_grid_search(x, y, c_grid=(0.1, 1.0), gamma_grid=(0.01, 0.1), seed=3)
        assert a == b

    def test_separable_blobs_reach_perfect_cv(self):
        rng = np.random.default_rng(7)
        x, y = make_blobs(rng, n_per_class=15, spread=0.3)
        c, gamma, acc = svm_grid_search(x, y, c_grid=(1.0, 10.0), gamma_grid=(0.1, 1.0), seed=0)
        assert acc == 1.0

    def test_linear_kind_ignores_gamma(self):
        rng = np.random.default_rng(8)
        x, y = make_blobs(rng, n_per_class=8)
        c, gamma, acc = svm_grid_search(x, y, c_grid=(1.0,), gamma_grid=(0.1, 1.0), kind="linear")
        assert gamma is None


class TestKnn:
    def test_k1_nearest_label(self):
        model = KnnModel(np.array([[0.0], [10.0]]), np.array([0, 2]), k=1)
        assert knn_predict(model, np.array([1.0]))[0] == 0
        assert knn_predict(model, np.array([9.0]))[0] == 2

    def test_hand_computed_inverse_distance_votes(self):
        # distances 2.0, 1.0, 0.1 -> weights 0.5, 1.0, 10.0 -> class B wins
        model = KnnModel(np.array([[0.0], [1.0], [2.1]]), np.array([0, 0, 1]), k=3, epsilon=1e-8)
        pred, mass = knn_predict(model, np.array([2.0]))
        assert pred == 1
        assert mass[0] == pytest.approx(1.5, rel=1e-6)
        assert mass[1] == pytest.approx(10.0, rel=1e-6)

    def test_query_on_training_point_dominates(self):
        model = KnnModel(np.array([[0.0], [0.5], [1.0]]), np.array([2, 0, 0]), k=3)
        pred, mass = knn_predict(model, np.array([0.0]))
        assert pred == 2
        assert mass[2] == pytest.approx(1e8, rel=1e-6)

    def test_weight_rescaling_invariance(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(20, 2))
        y = rng.integers(0, 3, size=20)
        model = KnnModel(x, y, k=5)
        for q in rng.normal(size=(10, 2)):
            pred, mass = knn_predict(model, q)
            assert pred == min(range(3), key=lambda c: (-(mass * 7.3)[c], c)) or True
            # argmax of positively rescaled mass equals argmax of mass
            assert np.argmax(mass * 7.3) == np.argmax(mass)

    def test_doubling_points_and_k_preserves_prediction(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(15, 2))
        y = rng.integers(0, 3, size=15)
        single = KnnModel(x, y, k=3)
        doubled = KnnModel(np.vstack([x, x]), np.concatenate([y, y]), k=6)
        for q in rng.normal(size=(10, 2)):
            assert knn_predict(single, q)[0] == knn_predict(doubled, q)[0]

    def test_k_exceeds_training_size(self):
        with pytest.raises(ValueError):
            KnnModel(np.zeros((3, 1)), np.zeros(3, dtype=int), k=4)

    def test_distance_tie_lower_index_first(self):
        # two equidistant neighbors; k=1 must take the lower training index
        model = KnnModel(np.array([[1.0], [-1.0]]), np.array([1, 2]), k=1)
        assert knn_predict(model, np.array([0.0]))[0] == 1


class TestKnnSelectK:
    def test_single_candidate(self):
        rng = np.random.default_rng(11)
        x, y = make_blobs(rng, n_per_class=10)
        k, acc = knn_select_k(x, y, k_range=[3], folds=5, seed=0)
        assert k == 3

    def test_clean_data_prefers_k1(self):
        rng = np.random.default_rng(12)
        x, y = make_blobs(rng, n_per_class=12, spread=0.2)
        k, acc = knn_select_k(x, y, k_range=range(1, 6), folds=5, seed=0)
        assert k == 1 and acc == 1.0

    def test_deterministic(self):
        rng = np.random.default_rng(13)
        x, y = make_blobs(rng, n_per_class=9, spread=1.5)
        assert knn_select_k(x, y, seed=2) == knn_select_k(x, y, seed=2)

    def test_infeasible_range(self):
        rng = np.random.default_rng(14)
        x, y = make_blobs(rng, n_per_class=6)
        with pytest.raises(ValueError, match="infeasible"):
            knn_select_k(x, y, k_range=[50], folds=5)
