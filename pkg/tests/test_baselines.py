"""Reference detectors: Gaussian fits, decomposition, KNN, hypersphere, logits."""

import math

import numpy as np
import pytest

from apood.baselines import (
    Decomposition,
    GaussianFit,
    LogitModel,
    SvddModel,
    decompose_covariance,
    jacobi_eigh,
    knn_score,
    load_baseline,
    logit_score,
    logit_train,
    maha_fit,
    maha_score,
    mean_pool,
    relative_maha_score,
    sad_train,
    save_baseline,
    svdd_score,
    svdd_train,
)
from apood.errors import ArgumentError, ShapeError
from apood.metrics import auroc
from apood.model import Hyperparams
from apood.toy import ToyConfig, generate_toy


def random_spd(rng, d, scale=1.0):
    a = rng.standard_normal((d, d))
    return a @ a.T / d + scale * np.eye(d)


class TestMeanPool:
    def test_single_token(self):
        tok = np.array([[3.0, -1.0]])
        np.testing.assert_array_equal(mean_pool(tok), tok[0])

    def test_opposite_tokens_cancel(self):
        z = np.array([[1.0, 1.0], [-1.0, -1.0]])
        np.testing.assert_allclose(mean_pool(z), [0.0, 0.0])

    def test_matches_double_loop(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((6, 4))
        expect = np.zeros(4)
        for s in range(6):
            for d in range(4):
                expect[d] += z[s, d] / 6
        np.testing.assert_allclose(mean_pool(z), expect, atol=1e-12)


class TestMahaFit:
    def test_two_points(self):
        fit = maha_fit([np.array([0.0, 0.0]), np.array([2.0, 0.0])])
        np.testing.assert_allclose(fit.mean, [1.0, 0.0])
        np.testing.assert_allclose(fit.cov, [[1.0, 0.0], [0.0, 0.0]], atol=1e-15)
        assert fit.ridge > 0

    def test_isotropic_cloud(self):
        rng = np.random.default_rng(1)
        X = 0.5 * rng.standard_normal((20000, 3))
        fit = maha_fit(X)
        np.testing.assert_allclose(fit.cov, 0.25 * np.eye(3), atol=0.01)

    def test_rank_deficient_line_still_scores(self):
        t = np.linspace(0, 1, 50)
        X = np.stack([t, 2 * t, -t], axis=1)
        fit = maha_fit(X)
        s = maha_score(np.array([1.0, 0.0, 0.0]), fit)
        assert math.isfinite(s)

    def test_needs_two_vectors(self):
        with pytest.raises(ArgumentError):
            maha_fit([np.zeros(3)])

    def test_covariance_uses_denominator_n(self):
        X = np.array([[0.0], [1.0]])
        fit = maha_fit(X)
        assert fit.cov[0, 0] == pytest.approx(0.25)  # biased: ((.5)^2+(.5)^2)/2

    def test_fit_invariants(self):
        rng = np.random.default_rng(30)
        for _ in range(10):
            d = int(rng.integers(2, 9))
            fit = maha_fit(rng.standard_normal((3 * d, d)) @ random_spd(rng, d))
            assert np.abs(fit.cov - fit.cov.T).max() <= 1e-10
            reg = fit.cov + fit.ridge * np.eye(d)
            assert np.abs(fit.chol @ fit.chol.T - reg).max() <= 1e-8


class TestMahaScore:
    def test_zero_at_mean(self):
        rng = np.random.default_rng(2)
        fit = maha_fit(rng.standard_normal((30, 4)))
        assert maha_score(fit.mean, fit) == pytest.approx(0.0, abs=1e-18)

    def test_identity_covariance_hand_value(self):
        eye = np.eye(2)
        fit = GaussianFit(mean=np.zeros(2), cov=eye,
                          chol=np.linalg.cholesky(eye), ridge=0.0)
        assert maha_score(np.array([3.0, 4.0]), fit) == pytest.approx(-25.0)

    def test_matches_explicit_inverse(self):
        rng = np.random.default_rng(3)
        X = rng.multivariate_normal(np.zeros(5), random_spd(rng, 5), size=200)
        fit = maha_fit(X)
        inv = np.linalg.inv(fit.cov + fit.ridge * np.eye(5))
        for _ in range(20):
            z = rng.standard_normal(5) * 2
            d = z - fit.mean
            assert maha_score(z, fit) == pytest.approx(-float(d @ inv @ d), abs=1e-8)

    def test_translation_invariance(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((50, 3))
        shift = np.array([10.0, -5.0, 2.5])
        f1 = maha_fit(X)
        f2 = maha_fit(X + shift)
        for _ in range(10):
            z = rng.standard_normal(3)
            assert maha_score(z, f1) == pytest.approx(
                maha_score(z + shift, f2), abs=1e-9)

    def test_dim_mismatch(self):
        fit = maha_fit(np.zeros((3, 2)) + np.arange(3)[:, None])
        with pytest.raises(ShapeError):
            maha_score(np.zeros(3), fit)


class TestJacobi:
    def test_diagonal_matrix(self):
        vals, vecs = jacobi_eigh(np.diag([4.0, 1.0]))
        np.testing.assert_allclose(vals, [1.0, 4.0])
        np.testing.assert_allclose(np.abs(vecs), np.eye(2)[:, ::-1], atol=1e-12)

    def test_orthogonality_and_residual(self):
        rng = np.random.default_rng(5)
        for d in (2, 5, 16, 33):
            A = random_spd(rng, d)
            vals, vecs = jacobi_eigh(A)
            np.testing.assert_allclose(vecs.T @ vecs, np.eye(d), atol=1e-8)
            norm = np.linalg.norm(A)
            for j in range(d):
                res = A @ vecs[:, j] - vals[j] * vecs[:, j]
                assert np.linalg.norm(res) <= 1e-8 * norm

    def test_matches_numpy_eigh(self):
        rng = np.random.default_rng(6)
        A = random_spd(rng, 12)
        vals, _ = jacobi_eigh(A)
        np.testing.assert_allclose(vals, np.linalg.eigvalsh(A), atol=1e-10)

    def test_non_square_rejected(self):
        with pytest.raises(ArgumentError):
            jacobi_eigh(np.zeros((2, 3)))


class TestDecomposition:
    def test_diagonal_covariance(self):
        cov = np.diag([1.0, 4.0])
        fit = GaussianFit(mean=np.zeros(2), cov=cov,
                          chol=np.linalg.cholesky(cov), ridge=0.0)
        dec = decompose_covariance(fit)
        rows = sorted(dec.weights.tolist(), key=lambda r: -abs(r[0]))
        np.testing.assert_allclose(np.abs(rows[0]), [1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(np.abs(rows[1]), [0.0, 0.5], atol=1e-12)

    def test_identity_covariance_outer_sum(self):
        eye = np.eye(3)
        fit = GaussianFit(mean=np.zeros(3), cov=eye,
                          chol=np.linalg.cholesky(eye), ridge=0.0)
        dec = decompose_covariance(fit)
        outer = sum(np.outer(w, w) for w in dec.weights)
        np.testing.assert_allclose(outer, eye, atol=1e-10)

    def test_outer_sum_equals_inverse(self):
        rng = np.random.default_rng(7)
        X = rng.multivariate_normal(np.zeros(6), random_spd(rng, 6), size=100)
        fit = maha_fit(X)
        dec = decompose_covariance(fit)
        inv = np.linalg.inv(fit.cov + fit.ridge * np.eye(6))
        outer = sum(np.outer(w, w) for w in dec.weights)
        np.testing.assert_allclose(outer, inv, rtol=1e-6, atol=1e-6 * np.abs(inv).max())

    def test_quadratic_roundtrip_8x8(self):
        rng = np.random.default_rng(8)
        X = rng.multivariate_normal(np.zeros(8), random_spd(rng, 8), size=200)
        fit = maha_fit(X)
        dec = decompose_covariance(fit)
        for _ in range(100):
            z = rng.standard_normal(8) * 3
            direct = -maha_score(z, fit)
            via = dec.quadratic(z, fit.mean)
            assert abs(via - direct) <= 1e-6 * (1.0 + abs(direct))


class TestKnn:
    def test_query_in_bank(self):
        bank = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        assert knn_score(np.array([0.0, 1.0]), bank, k=1) == pytest.approx(0.0)

    def test_hand_value_k2(self):
        bank = np.array([[1.0, 0.0], [0.0, 1.0]])
        got = knn_score(np.array([1.0, 0.0]), bank, k=2)
        assert got == pytest.approx(-math.sqrt(2.0))

    def test_matches_sort_oracle(self):
        rng = np.random.default_rng(9)
        bank = rng.standard_normal((40, 3))
        nb = bank / np.linalg.norm(bank, axis=1, keepdims=True)
        for _ in range(20):
            z = rng.standard_normal(3)
            q = z / np.linalg.norm(z)
            d = np.sort(np.linalg.norm(nb - q, axis=1))
            for k in (1, 5, 40):
                assert knn_score(z, bank, k) == pytest.approx(-d[k - 1], abs=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(10)
        bank = rng.standard_normal((20, 4))
        z = rng.standard_normal(4)
        base = knn_score(z, bank, k=3)
        assert knn_score(2.5 * z, 17.0 * bank, k=3) == pytest.approx(base, abs=1e-12)

    def test_k_out_of_range(self):
        bank = np.eye(3)
        with pytest.raises(ArgumentError):
            knn_score(np.ones(3), bank, k=4)
        with pytest.raises(ArgumentError):
            knn_score(np.ones(3), bank, k=0)


class TestSvdd:
    def test_identity_init_zero_steps(self):
        rng = np.random.default_rng(11)
        means = rng.standard_normal((30, 4))
        hp = Hyperparams(steps=0, lr=0.01, seed=0)
        model = svdd_train(means, out_dim=4, hp=hp, init_map=np.eye(4))
        mu = means.mean(axis=0)
        for z in means[:5]:
            assert svdd_score(z, model) == pytest.approx(-float((z - mu) @ (z - mu)))

    def test_orders_cluster_members_above_far_points(self):
        rng = np.random.default_rng(12)
        means = rng.standard_normal((100, 3)) * 0.3
        model = svdd_train(means, None, Hyperparams(steps=200, lr=0.01, seed=1))
        near = svdd_score(np.zeros(3), model)
        far = svdd_score(np.array([10.0, 10.0, 10.0]), model)
        assert near > far

    def test_toy_means_near_chance(self):
        # mean-pooled toy data is inseparable: both classes cluster at origin
        id_c, ood_c = generate_toy(ToyConfig(n_per_class=300, sigma=0.1, seed=5))
        id_means = np.stack([mean_pool(s) for s in id_c])
        ood_means = np.stack([mean_pool(s) for s in ood_c])
        model = svdd_train(id_means, None, Hyperparams(steps=300, lr=0.01, seed=2))
        a = auroc([svdd_score(z, model) for z in id_means],
                  [svdd_score(z, model) for z in ood_means])
        assert 0.35 <= a <= 0.65

    def test_sad_empty_aux_equals_svdd(self):
        rng = np.random.default_rng(13)
        means = rng.standard_normal((40, 3))
        hp = Hyperparams(steps=50, lr=0.02, seed=3)
        a = svdd_train(means, 2, hp)
        b = sad_train(means, None, 2, hp, eta=1.0)
        np.testing.assert_array_equal(a.map, b.map)
        np.testing.assert_array_equal(a.center, b.center)

    def test_sad_eta_zero_equals_svdd(self):
        rng = np.random.default_rng(14)
        means = rng.standard_normal((40, 3))
        aux = rng.standard_normal((10, 3)) + 2.0
        hp = Hyperparams(steps=50, lr=0.02, seed=4)
        a = svdd_train(means, 2, hp)
        b = sad_train(means, aux, 2, hp, eta=0.0)
        np.testing.assert_array_equal(a.map, b.map)

    def test_sad_improves_on_separable_aux(self):
        rng = np.random.default_rng(15)
        id_means = rng.standard_normal((200, 4)) * 0.8
        aux_means = rng.standard_normal((100, 4)) * 0.8 + np.array([2.5, 0, 0, 0])
        hp = Hyperparams(steps=400, lr=0.02, seed=5)
        plain = svdd_train(id_means, 2, hp)
        sad = sad_train(id_means, aux_means, 2, hp, eta=1.0)
        eval_id = rng.standard_normal((200, 4)) * 0.8
        eval_aux = rng.standard_normal((200, 4)) * 0.8 + np.array([2.5, 0, 0, 0])
        a_plain = auroc([svdd_score(z, plain) for z in eval_id],
                        [svdd_score(z, plain) for z in eval_aux])
        a_sad = auroc([svdd_score(z, sad) for z in eval_id],
                      [svdd_score(z, sad) for z in eval_aux])
        assert a_sad > a_plain


class TestLogit:
    def test_orders_two_separated_points(self):
        id_means = np.array([[1.0, 0.0], [1.2, 0.1]])
        aux_means = np.array([[-1.0, 0.0], [-1.2, -0.1]])
        model = logit_train(id_means, aux_means, Hyperparams(steps=300, lr=0.05))
        assert logit_score(np.array([1.0, 0.0]), model) > logit_score(
            np.array([-1.0, 0.0]), model)

    def test_symmetric_data_boundary_at_midpoint(self):
        rng = np.random.default_rng(16)
        base = rng.standard_normal((80, 3)) * 0.4
        center = np.array([1.0, -0.5, 2.0])
        id_means = center + np.array([1.5, 0.0, 0.0]) + base
        aux_means = center - np.array([1.5, 0.0, 0.0]) - base
        model = logit_train(id_means, aux_means,
                            Hyperparams(steps=8000, lr=0.05, seed=0))
        assert abs(logit_score(center, model)) <= 1e-3

    def test_duplicate_features_stay_finite(self):
        rng = np.random.default_rng(17)
        x = rng.standard_normal((30, 1))
        id_means = np.hstack([x + 1.0, x + 1.0])
        aux_means = np.hstack([x - 1.0, x - 1.0])
        model = logit_train(id_means, aux_means, Hyperparams(steps=500, lr=0.05))
        assert np.all(np.isfinite(model.weights)) and math.isfinite(model.bias)

    def test_empty_class_rejected(self):
        with pytest.raises(ArgumentError):
            logit_train(np.ones((3, 2)), np.zeros((0, 2)), Hyperparams())


class TestRelativeMaha:
    def test_identical_fits_score_zero(self):
        rng = np.random.default_rng(18)
        fit = maha_fit(rng.standard_normal((50, 3)))
        for _ in range(10):
            z = rng.standard_normal(3)
            assert relative_maha_score(z, fit, fit) == pytest.approx(0.0, abs=1e-12)

    def test_id_mean_scores_background_distance(self):
        rng = np.random.default_rng(19)
        id_m = rng.standard_normal((50, 3))
        bg_m = np.vstack([id_m, rng.standard_normal((50, 3)) + 3.0])
        fit_id = maha_fit(id_m)
        fit_bg = maha_fit(bg_m)
        got = relative_maha_score(fit_id.mean, fit_id, fit_bg)
        assert got == pytest.approx(-maha_score(fit_id.mean, fit_bg), abs=1e-12)
        assert got >= 0.0

    def test_is_difference_of_maha_scores(self):
        rng = np.random.default_rng(20)
        f1 = maha_fit(rng.standard_normal((40, 4)))
        f2 = maha_fit(rng.standard_normal((40, 4)) + 1.0)
        z = rng.standard_normal(4)
        assert relative_maha_score(z, f1, f2) == pytest.approx(
            maha_score(z, f1) - maha_score(z, f2), abs=1e-12)


class TestSerialization:
    def test_maha_roundtrip(self, tmp_path):
        rng = np.random.default_rng(21)
        fit = maha_fit(rng.standard_normal((30, 3)))
        p = tmp_path / "m.json"
        save_baseline(fit, p)
        loaded = load_baseline(p)
        assert isinstance(loaded, GaussianFit)
        np.testing.assert_array_equal(loaded.mean, fit.mean)
        np.testing.assert_array_equal(loaded.cov, fit.cov)
        z = rng.standard_normal(3)
        assert maha_score(z, loaded) == pytest.approx(maha_score(z, fit), abs=1e-12)

    def test_svdd_and_sad_tags(self, tmp_path):
        rng = np.random.default_rng(22)
        means = rng.standard_normal((20, 3))
        hp = Hyperparams(steps=5, lr=0.01, seed=0)
        import json

        p = tmp_path / "svdd.json"
        save_baseline(svdd_train(means, 2, hp), p)
        assert json.loads(p.read_text())["format"] == "svdd-v1"
        q = tmp_path / "sad.json"
        save_baseline(sad_train(means, means + 3.0, 2, hp, eta=1.0), q)
        assert json.loads(q.read_text())["format"] == "sad-v1"
        assert isinstance(load_baseline(q), SvddModel)

    def test_logit_roundtrip(self, tmp_path):
        model = LogitModel(weights=np.array([1.0, -2.0]), bias=0.25)
        p = tmp_path / "l.json"
        save_baseline(model, p)
        loaded = load_baseline(p)
        np.testing.assert_array_equal(loaded.weights, model.weights)
        assert loaded.bias == model.bias

    def test_unknown_tag_rejected(self, tmp_path):
        from apood.errors import FormatError

        p = tmp_path / "x.json"
        p.write_text('{"format": "mystery-v9"}')
        with pytest.raises(FormatError):
            load_baseline(p)
