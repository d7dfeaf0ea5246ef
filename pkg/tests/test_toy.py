"""Toy experiment: data generation, basin landscape, training, separation."""

import numpy as np
import pytest

from apood.corpus import Corpus, EmbeddingSequence, Label
from apood.errors import ArgumentError
from apood.toy import (
    ToyConfig,
    generate_toy,
    grid_local_minima,
    run_toy_experiment,
    toy_loss_grid,
    train_toy_query,
)

C = np.array([1.0, 1.0])


def nearest_basin_distance(w):
    return min(np.linalg.norm(w - C), np.linalg.norm(w + C))


class TestGenerateToy:
    def test_near_zero_sigma_hits_centers(self):
        id_c, ood_c = generate_toy(ToyConfig(n_per_class=20, sigma=1e-9, seed=0))
        for s in id_c:
            np.testing.assert_allclose(s.tokens[0], [1.0, 1.0], atol=1e-6)
            np.testing.assert_allclose(s.tokens[1], [-1.0, -1.0], atol=1e-6)
        for s in ood_c:
            np.testing.assert_allclose(s.tokens[0], [-1.0, 1.0], atol=1e-6)
            np.testing.assert_allclose(s.tokens[1], [1.0, -1.0], atol=1e-6)

    def test_pooled_means_cluster_at_origin(self):
        cfg = ToyConfig(n_per_class=500, sigma=0.1, seed=0)
        id_c, ood_c = generate_toy(cfg)
        bound = 3.0 * cfg.sigma / np.sqrt(2.0 * cfg.n_per_class)
        for corpus in (id_c, ood_c):
            means = np.stack([s.tokens64().mean(axis=0) for s in corpus])
            assert np.all(np.abs(means.mean(axis=0)) <= bound)

    def test_deterministic(self):
        a1, b1 = generate_toy(ToyConfig(50, 0.1, seed=3))
        a2, b2 = generate_toy(ToyConfig(50, 0.1, seed=3))
        for x, y in zip(a1.sequences + b1.sequences, a2.sequences + b2.sequences):
            np.testing.assert_array_equal(x.tokens, y.tokens)

    def test_shapes_and_labels(self):
        id_c, ood_c = generate_toy(ToyConfig(7, 0.1, seed=1))
        assert id_c.dim == 2 and ood_c.dim == 2
        assert id_c.label is Label.ID and ood_c.label is Label.OOD
        assert all(s.length == 2 for s in id_c)

    def test_config_validation(self):
        with pytest.raises(ArgumentError):
            generate_toy(ToyConfig(0, 0.1, 0))
        with pytest.raises(ArgumentError):
            generate_toy(ToyConfig(5, 0.0, 0))


class TestLandscape:
    def test_exactly_two_minima_at_token_clusters(self):
        id_c, _ = generate_toy(ToyConfig(500, 0.1, seed=0))
        xs, ys, grid = toy_loss_grid(id_c, beta=5.0, resolution=100)
        minima = grid_local_minima(grid)
        assert len(minima) == 2
        locs = sorted((xs[i], ys[j]) for i, j in minima)
        assert np.linalg.norm(np.array(locs[0]) + C) <= 0.15
        assert np.linalg.norm(np.array(locs[1]) - C) <= 0.15

    def test_two_minima_across_beta_sweep(self):
        id_c, _ = generate_toy(ToyConfig(300, 0.1, seed=1))
        for beta in (1.0, 5.0, 20.0):
            _, _, grid = toy_loss_grid(id_c, beta=beta, resolution=100)
            assert len(grid_local_minima(grid)) == 2

    def test_exact_symmetry_on_ideal_corpus(self):
        # tokens exactly at the centers: negating w permutes the two tokens
        # of every sequence, so the grid is its own point reflection
        seq = EmbeddingSequence(np.array([[1.0, 1.0], [-1.0, -1.0]], dtype="f4"))
        corpus = Corpus(dim=2, sequences=[seq] * 10)
        _, _, grid = toy_loss_grid(corpus, beta=5.0, resolution=100)
        np.testing.assert_array_equal(grid, grid[::-1, ::-1])

    def test_noisy_symmetry_within_tolerance(self):
        # sampling noise scales like 1/sqrt(n); 2000 per class keeps every
        # mirrored pair within 5% relative
        id_c, _ = generate_toy(ToyConfig(2000, 0.1, seed=2))
        _, _, grid = toy_loss_grid(id_c, beta=5.0, resolution=100)
        mirrored = grid[::-1, ::-1]
        rel = np.abs(grid - mirrored) / (np.abs(grid) + np.abs(mirrored) + 1e-12)
        assert rel.max() <= 0.05


class TestTrainToyQuery:
    def test_lands_in_a_basin(self):
        id_c, _ = generate_toy(ToyConfig(500, 0.1, seed=0))
        w = train_toy_query(id_c, seed=0)
        assert nearest_basin_distance(w) <= 0.15

    def test_near_zero_sigma_converges_to_center(self):
        id_c, _ = generate_toy(ToyConfig(200, 1e-9, seed=4))
        w = train_toy_query(id_c, seed=4)
        assert nearest_basin_distance(w) <= 1e-3

    def test_deterministic(self):
        id_c, _ = generate_toy(ToyConfig(100, 0.1, seed=5))
        w1 = train_toy_query(id_c, seed=5)
        w2 = train_toy_query(id_c, seed=5)
        np.testing.assert_array_equal(w1, w2)


@pytest.fixture(scope="module")
def report():
    return run_toy_experiment(ToyConfig(n_per_class=500, sigma=0.1, seed=0))


class TestRunToyExperiment:

    def test_mean_pool_baseline_at_chance(self, report):
        assert 0.40 <= report.auroc_maha <= 0.60

    def test_attention_detector_separates(self, report):
        assert report.auroc_apood >= 0.99

    def test_plot_data_schema(self, report):
        doc = report.to_json()
        assert set(doc) == {"auroc_maha", "auroc_apood", "w_final", "scatter",
                            "landscape", "histograms"}
        assert set(doc["landscape"]) == {"xs", "ys", "loss_grid"}
        assert set(doc["histograms"]) == {"id_scores", "ood_scores"}
        assert set(doc["scatter"]) == {"id", "ood"}
        assert len(doc["landscape"]["xs"]) == 100
        assert len(doc["landscape"]["loss_grid"]) == 100
        assert len(doc["scatter"]["id"][0]) == 2  # two tokens per sequence

    def test_beta_sweep_separation(self):
        for beta in (1.0, 20.0):
            rep = run_toy_experiment(ToyConfig(300, 0.1, seed=1), beta=beta)
            assert rep.auroc_apood >= 0.97
