import numpy as np
import pytest
from oracles import best_partition_energy, partition_energy

from ideotype.cluster import (
    ClusterModel,
    ClusteringConfig,
    RelationalKMeans,
    prototype_distances,
    relational_kmeans,
    select_representatives,
)


def planted(rng, sizes=(10, 10), within=0.1, across=1.0, noise=0.02):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    same = labels[:, None] == labels[None, :]
    D = np.where(same, within, across) + rng.uniform(-noise, noise, size=(labels.size,) * 2)
    D = (D + D.T) / 2
    np.fill_diagonal(D, 0.0)
    return D, labels


def same_partition(a, b) -> bool:
    pairs_a = a[:, None] == a[None, :]
    pairs_b = b[:, None] == b[None, :]
    return bool((pairs_a == pairs_b).all())


class TestRelationalKMeans:
    def test_single_class(self, rng):
        D, _ = planted(rng)
        m = relational_kmeans(D, ClusteringConfig(K=1, restarts=2))
        assert (m.assignment == 0).all()
        assert m.energy == pytest.approx(0.5 * D.mean() * len(D))

    def test_one_class_per_element(self, rng):
        D, _ = planted(rng, sizes=(3, 3))
        m = relational_kmeans(D, ClusteringConfig(K=6, restarts=2))
        assert sorted(m.assignment) == list(range(6))
        assert m.energy == pytest.approx(0.0, abs=1e-12)

    def test_four_element_blocks(self):
        D = np.array([[0, 0, 1, 1], [0, 0, 1, 1], [1, 1, 0, 0], [1, 1, 0, 0]], dtype=float)
        m = relational_kmeans(D, ClusteringConfig(K=2, restarts=3))
        assert same_partition(m.assignment, np.array([0, 0, 1, 1]))
        assert m.energy == pytest.approx(best_partition_energy(D, 2), abs=1e-12)

    def test_planted_recovery(self, rng):
        D, labels = planted(rng)
        for seed in range(3):
            m = relational_kmeans(D, ClusteringConfig(K=2, seed=seed))
            assert same_partition(m.assignment, labels)

    def test_invariants(self, rng):
        D, _ = planted(rng, sizes=(5, 7, 4))
        m = relational_kmeans(D, ClusteringConfig(K=3, T=200, restarts=4))
        assert np.allclose(m.beta.sum(axis=1), 1.0) and (m.beta >= 0).all()
        assert m.class_sizes.sum() == len(D)
        for k in range(3):
            assert m.assignment[m.representatives[k]] == k
        np.testing.assert_array_equal(np.argmin(prototype_distances(D, m.beta), axis=1), m.assignment)
        assert m.energy == pytest.approx(partition_energy(D, m.assignment))
        assert m.energy <= m.restart_energies.min() + 1e-12

    def test_debug_mode_checks_simplex(self, rng):
        D, _ = planted(rng)
        relational_kmeans(D, ClusteringConfig(K=2, T=50, restarts=1), debug=True)

    def test_deterministic(self, rng):
        D = rng.random((12, 12))
        D = D + D.T
        np.fill_diagonal(D, 0)
        a = relational_kmeans(D, ClusteringConfig(K=3, seed=5))
        b = relational_kmeans(D, ClusteringConfig(K=3, seed=5))
        np.testing.assert_array_equal(a.assignment, b.assignment)
        np.testing.assert_array_equal(a.beta, b.beta)

    def test_permutation_equivariance(self, rng):
        P = rng.normal(size=(15, 2))
        D = np.sqrt(((P[:, None] - P[None]) ** 2).sum(-1))
        cfg = ClusteringConfig(K=4, seed=2)
        base = relational_kmeans(D, cfg)
        for perm in (np.arange(15), rng.permutation(15)):
            m = relational_kmeans(D[np.ix_(perm, perm)], cfg)
            assert same_partition(m.assignment, base.assignment[perm])
            assert sorted(perm[m.representatives]) == sorted(base.representatives)

    def test_k_larger_than_n(self, rng):
        with pytest.raises(ValueError, match="exceeds"):
            relational_kmeans(np.zeros((3, 3)), ClusteringConfig(K=4))

    @pytest.mark.parametrize("bad", [{"K": 0}, {"T": 0}, {"restarts": 0}, {"eps0": 1.5}, {"c0": 0}])
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            ClusteringConfig(**bad)

    def test_json_round_trip(self, tmp_path, rng):
        D, _ = planted(rng)
        m = relational_kmeans(D, ClusteringConfig(K=2, restarts=2))
        m.to_json(tmp_path / "c.json")
        again = ClusterModel.from_json(tmp_path / "c.json")
        np.testing.assert_array_equal(again.assignment, m.assignment)
        np.testing.assert_array_equal(again.representatives, m.representatives)
        assert again.energy == m.energy


class TestRepresentatives:
    def test_middle_element(self):
        D = np.array([[0, 1, 4], [1, 0, 2], [4, 2, 0]], dtype=float)
        assert select_representatives(D, np.zeros(3, dtype=int))[0] == 1

    def test_singleton(self):
        D = np.array([[0, 1, 4], [1, 0, 2], [4, 2, 0]], dtype=float)
        reps = select_representatives(D, np.array([0, 0, 1]))
        assert reps[1] == 2

    def test_tie_goes_to_lowest_index(self):
        D = np.array([[0.0, 3.0], [3.0, 0.0]])
        assert select_representatives(D, np.array([0, 0]))[0] == 0

    def test_empty_class(self):
        with pytest.raises(ValueError, match="empty"):
            select_representatives(np.zeros((2, 2)), np.array([0, 0]), n_classes=2)


class TestEstimator:
    def test_fit_predict(self, rng):
        D, labels = planted(rng)
        est = RelationalKMeans(n_clusters=2, n_restarts=3, random_state=1).fit(D)
        assert same_partition(est.labels_, labels)
        np.testing.assert_array_equal(est.predict(D), est.labels_)
        assert est.get_params()["n_clusters"] == 2

    def test_predict_before_fit(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            RelationalKMeans().predict(np.zeros((1, 3)))
