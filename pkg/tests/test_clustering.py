import itertools

import numpy as np
import pytest

from multikernel.clustering import (
    Clustering,
    KSelectConfig,
    build_cost,
    candidate_ks,
    cosine_complement_distance,
    pam,
    select_representatives,
    silhouette,
    weight_distance_matrix,
    write_report,
)
from multikernel.family import DetectorFamily


def abs_distance_matrix(points):
    pts = np.asarray(points, dtype=float)
    return np.abs(pts[:, None] - pts[None, :])


def exhaustive_best_cost(dm, k):
    """Brute-force optimum over all medoid subsets of size k."""
    n = dm.shape[0]
    best = np.inf
    best_sets = []
    for medoids in itertools.combinations(range(n), k):
        cost = dm[:, medoids].min(axis=1).sum()
        if cost < best - 1e-12:
            best = cost
            best_sets = [set(medoids)]
        elif abs(cost - best) <= 1e-12:
            best_sets.append(set(medoids))
    return best, best_sets


def swap_is_optimal(dm, clustering):
    """No single (medoid, non-medoid) exchange lowers the cost by > 1e-12."""
    n = dm.shape[0]
    medoids = set(clustering.medoids.tolist())
    for m in list(medoids):
        for h in range(n):
            if h in medoids:
                continue
            trial = sorted((medoids - {m}) | {h})
            cost = dm[:, trial].min(axis=1).sum()
            if cost < clustering.cost - 1e-12:
                return False
    return True


def toy_family(vectors, subclasses=None):
    vectors = np.asarray(vectors, dtype=float)
    n, sv = vectors.shape
    if subclasses is None:
        subclasses = 1 + (np.arange(n) % 5)
    return DetectorFamily(
        weight_matrix=vectors.copy(),
        bias=-0.1,
        fg_indices=np.arange(n, dtype=np.intp),
        subclasses=np.asarray(subclasses, dtype=np.intp),
        sv_weight_matrix=vectors,
        model_fingerprint="toy",
        shared_sv_count=sv,
    )


class TestCosineComplement:
    def test_identical_nonzero(self):
        v = np.array([1.0, 2.0, -0.5])
        assert cosine_complement_distance(v, v) == 0.0

    def test_orthogonal(self):
        assert cosine_complement_distance(
            np.array([1.0, 0.0]), np.array([0.0, 3.0])
        ) == pytest.approx(1.0)

    def test_antipodal(self):
        v = np.array([0.3, -0.7])
        assert cosine_complement_distance(v, -v) == pytest.approx(2.0)

    def test_zero_vector_rules(self):
        z = np.zeros(3)
        assert cosine_complement_distance(z, z) == 0.0
        assert cosine_complement_distance(z, np.ones(3)) == 1.0

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b = rng.normal(size=(2, 6))
            d1 = cosine_complement_distance(a, b)
            assert d1 == cosine_complement_distance(b, a)
            assert 0.0 <= d1 <= 2.0

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(1)
        vecs = rng.normal(size=(8, 5))
        vecs[3] = 0.0
        dm = weight_distance_matrix(vecs)
        np.testing.assert_array_equal(dm, dm.T)
        assert np.all(np.diag(dm) == 0.0)
        for i in range(8):
            for j in range(8):
                if i == j:
                    continue
                assert dm[i, j] == pytest.approx(
                    cosine_complement_distance(vecs[i], vecs[j]), abs=1e-12
                )


class TestPam:
    def test_k_equals_n(self):
        dm = abs_distance_matrix([0.0, 2.0, 5.0])
        c = pam(dm, 3)
        assert sorted(c.medoids.tolist()) == [0, 1, 2]
        assert c.cost == 0.0

    def test_two_cluster_oracle_instance(self):
        # {0, 1, 10, 11} with k=2: optimal cost exactly 2, medoid pairs
        # drawn from {0,1} x {10,11}; verified by enumerating all 6 pairs.
        points = [0.0, 1.0, 10.0, 11.0]
        dm = abs_distance_matrix(points)
        best, best_sets = exhaustive_best_cost(dm, 2)
        assert best == 2.0
        c = pam(dm, 2)
        assert c.cost == 2.0
        assert set(c.medoids.tolist()) in best_sets
        m = sorted(points[i] for i in c.medoids)
        assert m[0] in (0.0, 1.0) and m[1] in (10.0, 11.0)

    def test_k1_matches_exhaustive_scan(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=12) * 4
        dm = abs_distance_matrix(pts)
        c = pam(dm, 1)
        best = min(dm[:, j].sum() for j in range(12))
        assert c.cost == pytest.approx(best, abs=1e-12)

    def test_swap_optimal_and_below_build_cost_on_small_integer_instances(self):
        # Full enumeration over a finite family of 1-D integer instances.
        instances = []
        for n in range(2, 6):
            instances.extend(itertools.combinations_with_replacement(range(7), n))
        for n in range(6, 9):
            instances.extend(itertools.combinations(range(10), n))
        checked = 0
        for pts in instances:
            dm = abs_distance_matrix(pts)
            for k in range(1, min(3, len(pts)) + 1):
                c = pam(dm, k)
                assert swap_is_optimal(dm, c)
                assert c.cost <= build_cost(dm, k) + 1e-12
                checked += 1
        assert checked > 3000

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        dm = weight_distance_matrix(rng.normal(size=(20, 6)))
        c1 = pam(dm, 5, seed=0)
        c2 = pam(dm, 5, seed=99)  # seed does not influence the outcome
        np.testing.assert_array_equal(c1.medoids, c2.medoids)
        assert c1.cost == c2.cost

    def test_cost_consistent_with_assignment(self):
        rng = np.random.default_rng(4)
        dm = weight_distance_matrix(rng.normal(size=(15, 4)))
        c = pam(dm, 4)
        recomputed = sum(
            dm[p, c.medoids[c.assignment[p]]] for p in range(15)
        )
        assert abs(recomputed - c.cost) <= 1e-12
        # Every point sits with its nearest medoid.
        for p in range(15):
            assert dm[p, c.medoids[c.assignment[p]]] == dm[p, c.medoids].min()

    def test_k_out_of_range(self):
        dm = abs_distance_matrix([0.0, 1.0])
        with pytest.raises(ValueError):
            pam(dm, 3)
        with pytest.raises(ValueError):
            pam(dm, 0)


class TestSilhouette:
    def test_two_tight_far_clusters(self):
        # Direct formula evaluation: intra 0.01, inter 1.0 -> ~0.99.
        n = 10
        dm = np.full((n, n), 1.0)
        dm[:5, :5] = 0.01
        dm[5:, 5:] = 0.01
        np.fill_diagonal(dm, 0.0)
        c = pam(dm, 2)
        val = silhouette(c, dm)
        assert val >= 0.9
        assert val == pytest.approx((1.0 - 0.01) / 1.0, abs=1e-9)

    def test_identical_points_give_zero(self):
        dm = np.zeros((6, 6))
        c = pam(dm, 2)
        assert silhouette(c, dm) == 0.0

    def test_bounded_in_minus_one_one(self):
        rng = np.random.default_rng(5)
        for trial in range(10):
            dm = weight_distance_matrix(rng.normal(size=(12, 5)))
            k = int(rng.integers(2, 6))
            val = silhouette(pam(dm, k), dm)
            assert -1.0 <= val <= 1.0

    def test_k1_signalled(self):
        dm = abs_distance_matrix([0.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            silhouette(pam(dm, 1), dm)


class TestSelectRepresentatives:
    def test_schedule_starts_at_half_and_decays(self):
        ks = candidate_ks(833, KSelectConfig())
        assert ks[0] == 417
        assert all(b < a for a, b in zip(ks, ks[1:]))
        assert ks[-1] >= 5

    def test_selected_k_maximizes_reported_silhouette(self):
        rng = np.random.default_rng(6)
        # Three well-separated direction bundles.
        dirs = np.eye(6)[:3]
        vecs = np.concatenate(
            [d + 0.05 * rng.normal(size=(8, 6)) for d in dirs], axis=0
        )
        fam = toy_family(vecs)
        reduced, report = select_representatives(fam, KSelectConfig(k_min=2))
        sils = {k: s for k, s, _ in report.rows}
        assert report.selected_k in sils
        assert sils[report.selected_k] == max(sils.values())
        assert len(reduced) == report.selected_k
        assert report.selected_k <= 0.5 * len(fam)

    def test_small_family_returned_unchanged(self):
        fam = toy_family(np.eye(2))
        reduced, report = select_representatives(fam, KSelectConfig(k_min=1))
        assert len(reduced) == 2
        assert report.warning is not None

    def test_validation_hook_reports_but_does_not_select(self):
        rng = np.random.default_rng(7)
        base = np.concatenate([np.tile(np.eye(4)[0], (6, 1)), np.tile(np.eye(4)[1], (6, 1))])
        vecs = base + 0.05 * rng.normal(size=base.shape)
        fam = toy_family(vecs)
        feats = rng.normal(size=(10, 4))
        _, plain = select_representatives(fam, KSelectConfig(k_min=2))
        _, hooked = select_representatives(
            fam, KSelectConfig(k_min=2), validation=(feats, np.ones(10, dtype=int))
        )
        assert hooked.selected_k == plain.selected_k
        assert set(hooked.validation_false_negatives) == {k for k, _, _ in hooked.rows}

    def test_report_csv_format(self, tmp_path):
        fam = toy_family(np.vstack([np.eye(3)] * 3 + [np.eye(3)]))
        _, report = select_representatives(fam, KSelectConfig(k_min=2))
        write_report(report, tmp_path / "report.csv")
        lines = (tmp_path / "report.csv").read_text().splitlines()
        assert lines[0] == "k,silhouette,cost,selected"
        assert sum(line.endswith(",1") for line in lines[1:]) == 1
        for line in lines[1:]:
            k, sil, cost, selected = line.split(",")
            assert int(k) >= 2
            float(sil), float(cost)
            assert selected in ("0", "1")
