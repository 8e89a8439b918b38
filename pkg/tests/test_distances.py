import math

import numpy as np
import pytest

from progclust.distances import (
    DistanceMatrix,
    audit_metric,
    distance_matrix,
    load_matrix_bin,
    matrix_from_points,
    pair_distance,
    save_matrix_bin,
    save_matrix_csv,
)


class TestPairDistance:
    def test_manhattan_and_euclidean_hand_values(self):
        x, y = np.zeros(3), np.ones(3)
        assert pair_distance(x, y, "MAN") == 3.0
        assert pair_distance(x, y, "EUC") == pytest.approx(math.sqrt(3.0))

    def test_cosine_angle_cases(self):
        v = np.array([0.3, 0.7, 0.1])
        assert pair_distance(v, v, "COS") == pytest.approx(0.0, abs=1e-12)
        e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        assert pair_distance(e1, e2, "COS") == pytest.approx(1.0)
        assert pair_distance(e1, -e1, "COS") == pytest.approx(2.0)

    def test_cosine_zero_vectors(self):
        zero = np.zeros(3)
        assert pair_distance(zero, zero, "COS") == 0.0
        with pytest.warns(UserWarning, match="zero vector"):
            assert pair_distance(zero, np.ones(3), "COS") == 1.0

    def test_wsd_identity_and_symmetry(self):
        rng = np.random.default_rng(0)
        w = rng.normal(0, 1, 7)
        for _ in range(200):
            x = rng.uniform(0, 1, 7)
            y = rng.uniform(0, 1, 7)
            assert pair_distance(x, x, "WSD", w) == 0.0
            assert pair_distance(x, y, "WSD", w) == pair_distance(y, x, "WSD", w)

    def test_wsd_requires_weights(self):
        with pytest.raises(ValueError, match="weights"):
            pair_distance(np.zeros(3), np.ones(3), "WSD")

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            pair_distance(np.zeros(3), np.zeros(4), "MAN")

    def test_unknown_measure(self):
        with pytest.raises(ValueError):
            pair_distance(np.zeros(3), np.ones(3), "CHEBYSHEV")


class TestDistanceMatrix:
    def test_duplicated_patient_zero_entry(self):
        X = np.array([[1.0, 2.0], [1.0, 2.0], [4.0, 0.0]])
        m = distance_matrix(X, "MAN", ("a", "b", "c"))
        assert m.values[0, 1] == 0.0
        assert m.values[0, 2] > 0.0

    def test_symmetric_zero_diagonal_by_construction(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 1, size=(40, 7))
        for measure in ("MAN", "EUC", "COS"):
            m = distance_matrix(X, measure, tuple(f"P{i}" for i in range(40)))
            assert np.array_equal(m.values, m.values.T)
            assert np.all(np.diag(m.values) == 0.0)

    def test_distinct_offdiagonal_count_full_cohort(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(0, 1, size=(353, 7))
        m = distance_matrix(X, "EUC", tuple(f"P{i:04d}" for i in range(353)))
        iu = np.triu_indices(353, k=1)
        assert np.unique(m.values[iu]).size == 353 * 352 // 2

    def test_man_equals_euc_iff_single_active_variable(self):
        # crafted: patients differ in exactly one coordinate per pair
        X = np.zeros((4, 3))
        X[:, 1] = [0.0, 0.2, 0.5, 1.0]
        ids = tuple("abcd")
        man = distance_matrix(X, "MAN", ids, normalize=False)
        euc = distance_matrix(X, "EUC", ids, normalize=False)
        assert np.allclose(man.values, euc.values, atol=1e-15)
        # two active coordinates break the equality off the diagonal
        X[0, 0] = 0.7
        man = distance_matrix(X, "MAN", ids, normalize=False)
        euc = distance_matrix(X, "EUC", ids, normalize=False)
        assert man.values[0, 1] > euc.values[0, 1]

    def test_normalization_recorded(self):
        X = np.array([[0.0, 10.0], [5.0, 20.0], [10.0, 40.0]])
        m = distance_matrix(X, "MAN", ("a", "b", "c"))
        assert m.normalization == {"min": [0.0, 10.0], "max": [10.0, 40.0]}
        # column spans normalized: |a-c| = 1 + 1
        assert m.values[0, 2] == pytest.approx(2.0)

    def test_wsd_matches_pair_distance(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 1, size=(10, 5))
        w = rng.normal(0, 1, 5)
        m = distance_matrix(X, "WSD", tuple(f"P{i}" for i in range(10)), weights=w,
                            normalize=False)
        for i in range(10):
            for j in range(10):
                if i != j:
                    assert m.values[i, j] == pytest.approx(
                        pair_distance(X[i], X[j], "WSD", w), abs=1e-12)

    def test_matrix_validation(self):
        bad = np.array([[0.0, 1.0], [2.0, 0.0]])
        with pytest.raises(ValueError, match="symmetric"):
            DistanceMatrix(bad, "MAN", ("a", "b"))
        with pytest.raises(ValueError, match="diagonal"):
            DistanceMatrix(np.array([[1.0]]), "MAN", ("a",))

    def test_single_patient_rejected(self):
        with pytest.raises(ValueError):
            distance_matrix(np.zeros((1, 3)), "MAN", ("a",))


class TestAudit:
    def test_true_metrics_pass_exhaustively(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(0, 1, size=(50, 7))
        for measure in ("MAN", "EUC"):
            m = distance_matrix(X, measure, tuple(f"P{i}" for i in range(50)))
            audit = audit_metric(m, triples=200_000)
            assert audit.exhaustive
            assert audit.positivity_pct == 100.0
            assert audit.symmetry_pct == 100.0
            assert audit.identity_pct == 100.0
            assert audit.triangle_pct == 100.0
            assert audit.max_violation == 0.0

    def test_crafted_violation_detected_exactly(self):
        # d(a,c)=10 but d(a,b)=d(b,c)=1: violation magnitude 8
        D = np.array([[0.0, 1.0, 10.0], [1.0, 0.0, 1.0], [10.0, 1.0, 0.0]])
        audit = audit_metric(DistanceMatrix(D, "BAD", ("a", "b", "c")))
        assert audit.triangle_pct < 100.0
        assert audit.max_violation == pytest.approx(8.0, abs=1e-12)
        assert audit.violation_bands  # magnitude reported in decade bands

    def test_wsd_with_nonnegative_weights_is_metric(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(0, 1, size=(40, 7))
        w = rng.uniform(0.1, 2.0, 7)
        m = distance_matrix(X, "WSD", tuple(f"P{i}" for i in range(40)), weights=w)
        audit = audit_metric(m, triples=100_000)
        assert audit.exhaustive
        assert audit.triangle_pct == 100.0

    def test_sampled_mode_reports_budget(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(0, 1, size=(120, 7))
        m = distance_matrix(X, "EUC", tuple(f"P{i:03d}" for i in range(120)))
        audit = audit_metric(m, triples=50_000, seed=1)
        assert not audit.exhaustive
        assert audit.triples_checked == 50_000
        assert audit.triangle_pct == 100.0

    def test_cosine_audit_runs_and_reports(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(0, 1, size=(30, 7))
        m = distance_matrix(X, "COS", tuple(f"P{i}" for i in range(30)))
        audit = audit_metric(m, triples=30 ** 3)
        assert 0.0 <= audit.triangle_pct <= 100.0

    def test_audit_json(self, tmp_path):
        D = np.array([[0.0, 1.0], [1.0, 0.0]])
        audit = audit_metric(DistanceMatrix(D, "MAN", ("a", "b")))
        audit.save(tmp_path / "audit.json")
        import json
        payload = json.loads((tmp_path / "audit.json").read_text())
        assert payload["measure"] == "MAN"
        assert payload["triangle_pct"] == 100.0


class TestPersistence:
    def test_binary_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        X = rng.uniform(0, 1, size=(12, 7))
        m = distance_matrix(X, "EUC", tuple(f"P{i:02d}" for i in range(12)))
        save_matrix_bin(m, tmp_path / "m.bin")
        loaded = load_matrix_bin(tmp_path / "m.bin", ids=m.ids)
        assert loaded.measure == "EUC"
        assert np.array_equal(loaded.values, m.values)

    def test_binary_layout(self, tmp_path):
        m = matrix_from_points(np.array([[0.0, 0.0], [3.0, 4.0]]), ("a", "b"), "EMB")
        save_matrix_bin(m, tmp_path / "m.bin")
        blob = (tmp_path / "m.bin").read_bytes()
        # u32 n, u32 tag length, ascii tag, then f64-LE row-major values
        assert blob[:4] == (2).to_bytes(4, "little")
        assert blob[4:8] == (3).to_bytes(4, "little")
        assert blob[8:11] == b"EMB"
        values = np.frombuffer(blob[11:], dtype="<f8").reshape(2, 2)
        assert values[0, 1] == 5.0

    def test_csv_export(self, tmp_path):
        m = matrix_from_points(np.array([[0.0, 0.0], [3.0, 4.0]]), ("a", "b"))
        save_matrix_csv(m, tmp_path / "m.csv")
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0] == "patient_id,a,b"
        assert lines[1].startswith("a,0.0,5.0")
