import numpy as np
import pytest

from helios.learn import (
    FeaturePipeline,
    FitError,
    gp_fit,
    gp_predict,
    inverse_design,
    load_gp,
    log_marginal_likelihood,
    n_features,
    r2_score,
    save_gp,
    train_test_split,
)
from helios.sim import RgbSetting, default_model, expected_counts, measure
from tests.conftest import EPOCH

CLRGB_IDX = [6, 3, 1]   # 630nm, 515nm, 445nm rows of the count vector


def simulator_outputs(X, noise=True, seed=0):
    model = default_model() if noise else default_model().with_noise(0.0)
    rng = np.random.default_rng(seed)
    rows = [measure(model, RgbSetting(*x), EPOCH, rng).as_list() for x in X]
    return np.asarray(rows, dtype=float)[:, CLRGB_IDX]


def oracle_outputs(x):
    model = default_model()
    return expected_counts(model, RgbSetting(*x), EPOCH)[CLRGB_IDX]


def ridge_oracle(pipeline, X_train, Y_train, x_query, sigma0_sq, noise):
    """Regularized linear regression in the augmented feature space: the
    closed-form twin of the dot-product-kernel posterior mean."""
    phi = pipeline.transform(X_train)
    psi = np.column_stack([phi, np.full(len(phi), np.sqrt(sigma0_sq))])
    y_mean = Y_train.mean(axis=0)
    y_std = np.where(Y_train.std(axis=0) == 0, 1.0, Y_train.std(axis=0))
    y_norm = (Y_train - y_mean) / y_std
    w = np.linalg.solve(psi.T @ psi + noise * np.eye(psi.shape[1]),
                        psi.T @ y_norm)
    phi_q = pipeline.transform(np.atleast_2d(x_query))
    psi_q = np.column_stack([phi_q, [np.sqrt(sigma0_sq)]])
    return y_mean + y_std * (psi_q @ w)[0]


class TestFeaturePipeline:
    def test_standardizes_training_data(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 5, (30, 3))
        pipe = FeaturePipeline.fit(X)
        Z = (X - pipe.input_mean) / pipe.input_std
        assert np.allclose(Z.mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(Z.std(axis=0), 1.0, atol=1e-9)

    def test_feature_layout(self):
        pipe = FeaturePipeline(np.zeros(3), np.ones(3))
        row = pipe.transform(np.array([[1.0, 2.0, 3.0]]))[0]
        assert row.tolist() == [1.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 4.0, 6.0, 9.0]
        assert len(row) == n_features(3)


class TestTrainTestSplit:
    def test_twenty_at_fifth(self):
        X = np.arange(60.0).reshape(20, 3)
        Y = np.arange(20.0)
        X_tr, X_te, Y_tr, Y_te = train_test_split(X, Y, 0.2, seed=42)
        assert X_tr.shape == (16, 3) and X_te.shape == (4, 3)
        assert len(Y_tr) == 16 and len(Y_te) == 4

    def test_two_rows(self):
        X = np.array([[1.0], [2.0]])
        X_tr, X_te, _, _ = train_test_split(X, X, 0.5, seed=0)
        assert len(X_tr) == 1 and len(X_te) == 1

    def test_partition_exact(self):
        X = np.arange(33.0)[:, None]
        X_tr, X_te, _, _ = train_test_split(X, X, 0.3, seed=5)
        together = sorted(np.concatenate([X_tr, X_te]).ravel().tolist())
        assert together == X.ravel().tolist()

    def test_same_seed_same_split(self):
        X = np.arange(30.0).reshape(10, 3)
        a = train_test_split(X, X, 0.2, seed=9)
        b = train_test_split(X, X, 0.2, seed=9)
        for left, right in zip(a, b):
            assert np.array_equal(left, right)

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            train_test_split(np.ones((1, 3)), np.ones(1), 0.5, seed=0)
        with pytest.raises(ValueError):
            train_test_split(np.ones((4, 3)), np.ones(4), 1.5, seed=0)


class TestGpFit:
    def test_noise_free_linear_interpolates(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(0, 1, (20, 3))
        W = np.array([[3.0, -1.0], [0.5, 2.0], [1.0, 1.0]])
        Y = X @ W + 5.0
        model = gp_fit(X, Y)
        assert model.noise <= 1e-6   # normalized output variance is 1
        for i in range(0, 20, 4):
            mean, _ = gp_predict(model, X[i])
            assert np.allclose(mean, Y[i], rtol=1e-6)

    def test_constant_outputs(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 1, (12, 3))
        Y = np.full((12, 2), 7.5)
        model = gp_fit(X, Y, hyperparams=(1.0, 0.5))
        mean, std = gp_predict(model, np.array([0.4, 0.4, 0.4]))
        assert np.allclose(mean, 7.5, atol=1e-8)
        # normalization guard keeps y_std at 1, so std is sqrt(noise)-scale
        assert np.all(std < 2.0)

    def test_zero_noise_simulator_r2(self):
        rng = np.random.default_rng(42)
        X = rng.uniform(0.0, 0.8, (20, 3))
        Y = simulator_outputs(X, noise=False)
        X_tr, X_te, Y_tr, Y_te = train_test_split(X, Y, 0.2, seed=42)
        model = gp_fit(X_tr, Y_tr)
        preds = np.array([gp_predict(model, x)[0] for x in X_te])
        assert r2_score(Y_te, preds) >= 0.999

    def test_too_few_rows_rejected(self):
        with pytest.raises(ValueError):
            gp_fit(np.ones((9, 3)), np.ones((9, 1)))

    def test_ridge_identity(self):
        # dot-product-kernel GP mean == ridge regression in feature space
        rng = np.random.default_rng(4)
        for d, n in ((1, 10), (2, 12), (3, 15)):
            X = rng.uniform(-1, 1, (n, d))
            Y = rng.normal(size=(n, 2)) * 10 + 3
            sigma0_sq, noise = 0.7, 0.05
            model = gp_fit(X, Y, hyperparams=(sigma0_sq, noise))
            for _ in range(4):
                x_q = rng.uniform(-1.5, 1.5, d)
                gp_mean, _ = gp_predict(model, x_q)
                oracle = ridge_oracle(model.pipeline, X, Y, x_q, sigma0_sq, noise)
                assert np.allclose(gp_mean, oracle, rtol=1e-8)

    def test_singular_inputs_raise_fit_error(self):
        X = np.zeros((12, 3))   # constant inputs: rank-deficient features
        Y = np.arange(12.0)
        with pytest.raises(FitError):
            gp_fit(X, Y, hyperparams=(0.0, 0.0))


class TestLml:
    def test_noise_gradient_matches_central_difference(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(0, 1, (12, 3))
        Y = rng.normal(size=(12, 2))
        pipe = FeaturePipeline.fit(X)
        phi = pipe.transform(X)
        y_norm = (Y - Y.mean(axis=0)) / Y.std(axis=0)
        for log_noise in (-2.0, 0.0, 1.0):
            noise = np.exp(log_noise)
            _, grad = log_marginal_likelihood(phi, y_norm, 0.5, noise,
                                              with_noise_gradient=True)
            h = 1e-5
            up = log_marginal_likelihood(phi, y_norm, 0.5, np.exp(log_noise + h))
            down = log_marginal_likelihood(phi, y_norm, 0.5, np.exp(log_noise - h))
            fd = (up - down) / (2 * h)
            assert np.sign(fd) == np.sign(grad)
            assert grad == pytest.approx(fd, rel=0.05)


class TestGpPredict:
    def test_training_point_with_tiny_noise(self):
        # as many rows as features, so the kernel can interpolate any target
        rng = np.random.default_rng(6)
        X = rng.uniform(0, 1, (n_features(3), 3))
        Y = rng.normal(size=(n_features(3), 1))
        model = gp_fit(X, Y, hyperparams=(1.0, 1e-10))
        mean, std = gp_predict(model, X[3])
        assert mean[0] == pytest.approx(Y[3, 0], rel=1e-6, abs=1e-6)
        assert std[0] < 1e-3 * np.abs(Y).max()

    def test_predicted_std_is_noise_scale_at_interior_points(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(0.0, 0.8, (20, 3))
        Y = simulator_outputs(X, seed=7)
        model = gp_fit(X, Y)
        _, std = gp_predict(model, np.array([0.3, 0.3, 0.3]))
        assert np.all(std >= 70.0 / 3.0) and np.all(std <= 3.0 * 70.0)

    def test_far_query_finite_and_growing(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(0, 1, (15, 3))
        Y = rng.normal(size=(15, 2))
        model = gp_fit(X, Y, hyperparams=(1.0, 0.1))
        direction = np.array([1.0, 1.0, 1.0])
        stds = []
        for t in (2.0, 4.0, 8.0, 16.0):
            mean, std = gp_predict(model, t * direction)
            assert np.all(np.isfinite(mean))
            stds.append(std[0])
        assert all(b > a for a, b in zip(stds, stds[1:]))

    def test_variance_non_negative_everywhere(self):
        rng = np.random.default_rng(9)
        X = rng.uniform(0, 1, (14, 3))
        Y = rng.normal(size=(14, 1))
        model = gp_fit(X, Y, hyperparams=(2.0, 0.01))
        for _ in range(200):
            _, std = gp_predict(model, rng.uniform(-3, 3, 3))
            assert np.all(std >= 0.0)

    def test_normalization_affine_equivariance(self):
        rng = np.random.default_rng(10)
        X = rng.uniform(0, 1, (16, 3))
        Y = rng.normal(size=(16, 2)) * 4
        k, c = 12.5, -300.0
        # fixed hyperparameters isolate the normalize/denormalize identity
        base = gp_fit(X, Y, hyperparams=(0.8, 0.05))
        scaled = gp_fit(X, Y * k + c, hyperparams=(0.8, 0.05))
        for _ in range(5):
            x_q = rng.uniform(0, 1, 3)
            m1, s1 = gp_predict(base, x_q)
            m2, s2 = gp_predict(scaled, x_q)
            assert np.allclose(m2, m1 * k + c, rtol=1e-9, atol=1e-9)
            assert np.allclose(s2, s1 * k, rtol=1e-9, atol=1e-12)

    def test_normalization_equivariance_survives_refit(self):
        # with the marginal-likelihood refit the identity holds to optimizer
        # precision rather than machine precision
        rng = np.random.default_rng(14)
        X = rng.uniform(0, 1, (16, 3))
        Y = rng.normal(size=(16, 2)) * 4
        k, c = 12.5, -300.0
        base = gp_fit(X, Y)
        scaled = gp_fit(X, Y * k + c)
        x_q = np.array([0.5, 0.2, 0.7])
        m1, s1 = gp_predict(base, x_q)
        m2, s2 = gp_predict(scaled, x_q)
        assert np.allclose(m2, m1 * k + c, rtol=1e-4, atol=1e-4 * abs(c))
        assert np.allclose(s2, s1 * k, rtol=1e-3)


class TestR2Score:
    def test_perfect(self):
        Y = np.arange(12.0).reshape(6, 2)
        assert r2_score(Y, Y) == pytest.approx(1.0)

    def test_column_means_give_zero(self):
        Y = np.arange(12.0).reshape(6, 2)
        pred = np.tile(Y.mean(axis=0), (6, 1))
        assert r2_score(Y, pred) == pytest.approx(0.0)

    def test_hand_computed_table(self):
        Y = np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 40.0]])
        P = np.array([[1.0, 15.0], [2.5, 20.0], [2.5, 35.0]])
        # col 1: ss_res 0.5, ss_tot 2 -> 0.75
        # col 2: ss_res 50, ss_tot 466.666... -> 0.8928571...
        expected = 0.5 * (0.75 + (1 - 50.0 / (1400.0 / 3.0)))
        assert r2_score(Y, P) == pytest.approx(expected, rel=1e-12)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            r2_score(np.ones((4, 1)), np.ones((4, 1)))


class TestInverseDesign:
    def test_self_consistency(self):
        rng = np.random.default_rng(11)
        X = rng.uniform(0, 1, (20, 3))
        W = np.array([[800.0, 100.0, 60.0],
                      [90.0, 900.0, 40.0],
                      [50.0, 80.0, 700.0]])
        Y = X @ W.T + 100.0
        model = gp_fit(X, Y)
        x_hat = np.array([0.4, 0.5, 0.6])
        target, _ = gp_predict(model, x_hat)
        result = inverse_design(model, target)
        assert result.converged
        assert np.allclose(result.setting.as_array(), x_hat, atol=1e-3)

    def test_noisy_fit_hits_target_through_oracle(self):
        rng = np.random.default_rng(42)
        X = rng.uniform(0.0, 0.8, (20, 3))
        Y = simulator_outputs(X, seed=42)
        model = gp_fit(X, Y)
        result = inverse_design(model, np.array([10000.0, 10000.0, 10000.0]))
        achieved = oracle_outputs(result.setting.as_array())
        assert np.all(np.abs(achieved - 10000.0) <= 3 * 70.0)

    def test_unreachable_target_pins_boundary(self):
        rng = np.random.default_rng(12)
        X = rng.uniform(0.0, 0.8, (20, 3))
        Y = simulator_outputs(X, seed=12)
        model = gp_fit(X, Y)
        result = inverse_design(model, np.array([1e6, 1e6, 1e6]))
        s = result.setting
        assert 1.0 in (s.r, s.g, s.b)   # clamped onto the upper boundary


class TestSaveLoad:
    def test_round_trip_predictions(self, tmp_path):
        rng = np.random.default_rng(13)
        X = rng.uniform(0, 1, (15, 3))
        Y = rng.normal(size=(15, 2))
        model = gp_fit(X, Y, hyperparams=(1.0, 0.1))
        path = tmp_path / "model.yaml"
        save_gp(model, path)
        loaded = load_gp(path)
        for _ in range(5):
            x_q = rng.uniform(0, 1, 3)
            m1, s1 = gp_predict(model, x_q)
            m2, s2 = gp_predict(loaded, x_q)
            assert np.allclose(m1, m2, rtol=1e-9)
            assert np.allclose(s1, s2, rtol=1e-9)

    def test_schema_checked(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("schema: nope/1\n")
        with pytest.raises(ValueError):
            load_gp(path)
