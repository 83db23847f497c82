import warnings

import numpy as np
import pytest

from cryptobench import svr
from cryptobench.svr import (
    ConvergenceWarning,
    GridCell,
    KernelSpec,
    SvrConfig,
    SvrModel,
    TooFewSamplesError,
    dual_objective,
    fit,
    grid_search,
    gram_matrix,
    kernel_eval,
    predict,
    predict_batch,
)

from oracles import qp_reference_solve

RBF_E_MINUS_1 = 0.36787944117144233  # exp(-0.1 * 10)


def random_instance(seed, n=8, d=2, kind="rbf", gamma=0.5, spread=1.0):
    """Small regression problem with a PSD Gram for the chosen kernel.

    The sigmoid (tanh) kernel is not positive semidefinite in general,
    so those instances use near-orthogonal sample vectors (d = n): the
    Gram is then a small perturbation of a positive diagonal and stays
    PSD, keeping the dual convex so the projected-gradient oracle finds
    the same optimum the pairwise solver does.  PSD is asserted, not
    assumed.
    """
    rng = np.random.default_rng(seed)
    if kind == "sigmoid":
        d = n
        q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        X = 1.5 * q + 0.05 * rng.normal(size=(n, n))
    else:
        X = rng.normal(scale=spread, size=(n, d))
    y = rng.normal(scale=spread, size=n)
    spec = KernelSpec(kind=kind, gamma=gamma)
    K = gram_matrix(spec, X)
    min_eig = float(np.linalg.eigvalsh(K)[0])
    assert min_eig >= -1e-10, f"{kind} Gram not PSD for seed {seed}: {min_eig}"
    return X, y, spec


class TestKernelEval:
    def test_rbf_at_identical_points(self):
        x = np.array([1.0, -2.0, 3.0])
        for gamma in (0.001, 0.1, 10.0):
            assert kernel_eval(KernelSpec("rbf", gamma=gamma), x, x) == 1.0

    def test_sigmoid_orthogonal_points(self):
        spec = KernelSpec("sigmoid", gamma=0.5, coef0=0.0)
        assert kernel_eval(spec, np.array([1.0, 0.0]), np.array([0.0, 2.0])) == 0.0

    def test_rbf_hand_value(self):
        # gamma 0.1 and squared distance 10 gives exp(-1)
        spec = KernelSpec("rbf", gamma=0.1)
        x = np.zeros(10)
        z = np.ones(10)
        np.testing.assert_allclose(kernel_eval(spec, x, z), RBF_E_MINUS_1, rtol=1e-15)

    def test_linear_is_dot_product(self):
        x = np.array([1.0, 2.0])
        z = np.array([3.0, -1.0])
        assert kernel_eval(KernelSpec("linear"), x, z) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            kernel_eval(KernelSpec("linear"), np.ones(2), np.ones(3))

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            KernelSpec("poly")
        with pytest.raises(ValueError):
            KernelSpec("rbf", gamma=0.0)

    def test_gram_matches_pointwise_eval(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(5, 3))
        Z = rng.normal(size=(4, 3))
        for spec in (KernelSpec("linear"), KernelSpec("rbf", gamma=0.7),
                     KernelSpec("sigmoid", gamma=0.3, coef0=0.2)):
            K = gram_matrix(spec, X, Z)
            for i in range(5):
                for j in range(4):
                    np.testing.assert_allclose(
                        K[i, j], kernel_eval(spec, X[i], Z[j]), rtol=1e-12)


class TestFit:
    def test_constant_targets_give_empty_model(self):
        X = np.arange(6.0).reshape(-1, 1)
        y = np.full(6, 3.25)
        model = fit(X, y, SvrConfig(kernel=KernelSpec("rbf", gamma=0.5), epsilon=0.1))
        assert model.dual_coefs.size == 0
        assert model.bias == 3.25
        np.testing.assert_array_equal(predict_batch(model, X), 3.25)

    def test_exact_line_within_tube(self):
        X = np.arange(8.0).reshape(-1, 1)
        y = 2.0 * X[:, 0] + 1.0
        cfg = SvrConfig(kernel=KernelSpec("linear"), c=1e3, epsilon=0.01, tol=1e-6)
        model = fit(X, y, cfg)
        preds = predict_batch(model, X)
        assert np.max((preds - y) ** 2) <= 1e-4

    def test_dual_feasibility_invariants(self):
        for seed in range(5):
            X, y, spec = random_instance(seed, kind="rbf")
            cfg = SvrConfig(kernel=spec, c=2.0, epsilon=0.05, tol=1e-6)
            model = fit(X, y, cfg)
            assert np.all(model.dual_coefs >= -cfg.c - 1e-12)
            assert np.all(model.dual_coefs <= cfg.c + 1e-12)
            assert abs(model.dual_coefs.sum()) <= 1e-12

    def test_tube_kkt_conditions(self):
        for seed in (11, 12, 13):
            X, y, spec = random_instance(seed, kind="linear")
            cfg = SvrConfig(kernel=spec, c=5.0, epsilon=0.2, tol=1e-6)
            model = fit(X, y, cfg)
            assert model.converged
            preds = np.array([predict(model, x) for x in X])
            resid = np.abs(preds - y)
            coefs = np.zeros(len(y))
            # map support coefficients back to sample positions
            for sv, coef in zip(model.support_vectors, model.dual_coefs):
                idx = np.where(np.all(np.isclose(X, sv), axis=1))[0][0]
                coefs[idx] = coef
            inside = resid < cfg.epsilon - cfg.tol
            assert np.all(coefs[inside] == 0.0)
            unbounded = (np.abs(coefs) > 0) & (np.abs(coefs) < cfg.c)
            assert np.all(np.abs(resid[unbounded] - cfg.epsilon) <= cfg.tol)

    def test_objective_matches_qp_oracle_each_kernel(self):
        for kind, gamma in (("linear", 1.0), ("rbf", 0.4), ("sigmoid", 0.2)):
            for seed in (1, 2):
                X, y, spec = random_instance(seed, n=7, kind=kind, gamma=gamma)
                cfg = SvrConfig(kernel=spec, c=4.0, epsilon=0.1, tol=1e-6,
                                max_iter=50_000)
                model = fit(X, y, cfg)
                K = gram_matrix(spec, X)
                beta = np.zeros(len(y))
                for sv, coef in zip(model.support_vectors, model.dual_coefs):
                    idx = np.where(np.all(np.isclose(X, sv), axis=1))[0][0]
                    beta[idx] = coef
                ours = dual_objective(K, y, beta, cfg.epsilon)
                _, reference = qp_reference_solve(K, y, cfg.c, cfg.epsilon)
                assert abs(ours - reference) <= 1e-6 * max(1.0, abs(reference))

    def test_not_converged_warns_but_returns_model(self):
        X, y, spec = random_instance(3, n=10, kind="rbf", gamma=1.0)
        cfg = SvrConfig(kernel=spec, c=100.0, epsilon=0.0, tol=1e-12, max_iter=3)
        with pytest.warns(ConvergenceWarning):
            model = fit(X, y, cfg)
        assert not model.converged
        assert model.kkt_violation > 0

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit(np.array([[1.0]]), np.array([2.0]), SvrConfig(kernel=KernelSpec("linear")))


class TestPredict:
    def test_empty_support_set_returns_bias(self):
        model = SvrModel(support_vectors=np.empty((0, 1)), dual_coefs=np.empty(0),
                         bias=1.5, kernel=KernelSpec("rbf", gamma=1.0))
        assert predict(model, np.array([42.0])) == 1.5

    def test_single_linear_support_vector(self):
        model = SvrModel(support_vectors=np.array([[2.0, 1.0]]),
                         dual_coefs=np.array([0.5]), bias=-1.0,
                         kernel=KernelSpec("linear"))
        x = np.array([4.0, 3.0])
        np.testing.assert_allclose(predict(model, x), 0.5 * (2 * 4 + 1 * 3) - 1.0,
                                   rtol=1e-15)

    def test_matches_oracle_predictions(self):
        X, y, spec = random_instance(7, n=6, kind="rbf", gamma=0.6)
        cfg = SvrConfig(kernel=spec, c=3.0, epsilon=0.05, tol=1e-7, max_iter=200_000)
        model = fit(X, y, cfg)
        K = gram_matrix(spec, X)
        beta_ref, _ = qp_reference_solve(K, y, cfg.c, cfg.epsilon)
        # oracle bias from an unbounded support vector of its own solution
        interior = (np.abs(beta_ref) > 1e-6) & (np.abs(beta_ref) < cfg.c - 1e-6)
        assert np.any(interior)
        idx = int(np.where(interior)[0][0])
        bias_ref = y[idx] - K[idx] @ beta_ref - cfg.epsilon * np.sign(beta_ref[idx])
        rng = np.random.default_rng(8)
        for _ in range(5):
            x = rng.normal(size=2)
            ref = float(gram_matrix(spec, X, x.reshape(1, -1))[:, 0] @ beta_ref + bias_ref)
            assert abs(predict(model, x) - ref) <= 1e-6

    def test_dimension_mismatch(self):
        model = SvrModel(support_vectors=np.ones((2, 3)), dual_coefs=np.ones(2),
                         bias=0.0, kernel=KernelSpec("linear"))
        with pytest.raises(ValueError, match="dimension"):
            predict(model, np.ones(2))


class TestGammaInvariance:
    def test_linear_fit_identical_across_gammas(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(12, 1))
        y = rng.normal(size=12)
        models = [
            fit(X, y, SvrConfig(kernel=KernelSpec("linear", gamma=g), c=10.0))
            for g in (0.001, 0.01, 0.1, 1.0)
        ]
        base = models[0]
        for other in models[1:]:
            np.testing.assert_array_equal(other.dual_coefs, base.dual_coefs)
            np.testing.assert_array_equal(other.support_vectors, base.support_vectors)
            assert other.bias == base.bias


class TestGridSearch:
    GAMMAS = (0.001, 0.01, 0.1, 1.0)
    CS = (1.0, 10.0, 100.0, 1000.0)

    def _data(self, n=30, seed=5):
        rng = np.random.default_rng(seed)
        t = np.linspace(0.0, 1.0, n).reshape(-1, 1)
        y = 0.3 + 0.5 * t[:, 0] + 0.05 * rng.normal(size=n)
        return t, y

    def test_full_grid_has_48_cells_in_order(self):
        X, y = self._data()
        grid = grid_search(X, y, ("rbf", "sigmoid", "linear"), self.GAMMAS, self.CS,
                           k=5, epsilon=0.1, tol=1e-3)
        assert len(grid.cells) == 48
        expected = [
            (kind, gamma, c)
            for kind in ("rbf", "sigmoid", "linear")
            for gamma in self.GAMMAS
            for c in self.CS
        ]
        assert [(c.kernel, c.gamma, c.c) for c in grid.cells] == expected
        assert all(c.cv_mse >= 0 for c in grid.cells)

    def test_linear_rows_bitwise_equal_across_gammas(self):
        X, y = self._data()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            grid = grid_search(X, y, ("linear",), self.GAMMAS, self.CS, k=5)
        by_c = {}
        for cell in grid.cells:
            by_c.setdefault(cell.c, []).append(cell.cv_mse)
        for c, mses in by_c.items():
            assert len(set(mses)) == 1, f"C={c} rows differ across gammas: {mses}"

    def test_exactly_linear_data_selects_linear_cell(self):
        # slope 25 exceeds the dual budget sum|beta_i| * max|x| at C=1,
        # so only the large-C linear cell can track the line
        n = 25
        t = np.linspace(0.0, 1.0, n).reshape(-1, 1)
        y = 0.2 + 25.0 * t[:, 0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            grid = grid_search(t, y, ("rbf", "linear"), (0.1,), (1.0, 1000.0),
                               k=5, epsilon=0.001, tol=1e-6)
        best = grid.best
        assert best.kernel == "linear"
        assert best.c == 1000.0
        assert best.cv_mse < 1e-5
        worst = max(cell.cv_mse for cell in grid.cells)
        assert worst > 1.0

    def test_deterministic(self):
        X, y = self._data()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            a = grid_search(X, y, ("rbf", "linear"), (0.1, 1.0), (1.0, 10.0), k=3)
            b = grid_search(X, y, ("rbf", "linear"), (0.1, 1.0), (1.0, 10.0), k=3)
        assert a.cells == b.cells
        assert a.best_index == b.best_index

    def test_tie_break_prefers_grid_order(self):
        # constant targets make every cell identical (zero coefficients,
        # bias = mean); the first cell must win
        X = np.linspace(0, 1, 12).reshape(-1, 1)
        y = np.full(12, 0.5)
        grid = grid_search(X, y, ("rbf", "linear"), (0.1, 1.0), (1.0, 10.0), k=3)
        assert grid.best_index == 0

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamplesError):
            grid_search(np.ones((3, 1)), np.ones(3), ("linear",), (0.1,), (1.0,), k=5)


class TestDualObjective:
    def test_zero_beta_is_zero(self):
        K = np.eye(3)
        assert dual_objective(K, np.ones(3), np.zeros(3), 0.1) == 0.0

    def test_hand_value(self):
        K = np.array([[1.0, 0.5], [0.5, 1.0]])
        y = np.array([1.0, -1.0])
        beta = np.array([0.5, -0.5])
        # -0.5*(0.25) + 1.0*0.5 + ... worked by hand:
        # quad = b'Kb = 0.25+0.25-2*0.125 = 0.25 -> -0.125
        # y'b = 0.5+0.5 = 1.0 ; l1 = 0.1*1.0
        np.testing.assert_allclose(dual_objective(K, y, beta, 0.1),
                                   -0.125 + 1.0 - 0.1, rtol=1e-15)
