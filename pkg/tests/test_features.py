import math

import numpy as np
import pytest

from progclust.features import (
    FeatureVector,
    VARIABLE_NAMES,
    denormalize,
    minmax_normalize,
    pairwise_table,
    sequence_features,
    spearman_filter,
    write_features_csv,
    write_pairs_csv,
)
from progclust.sigmoid import SigmoidFit
from progclust.weaksup import apply_labeling_functions

from .conftest import make_sequence

REFERENCE = SigmoidFit(48.0, 0.02, 300.0, 0.0, 0.0, True, 0)


def vector(pid, values):
    return FeatureVector(pid, *values)


def random_vectors(n, seed=0):
    rng = np.random.default_rng(seed)
    return [vector(f"P{i:04d}", rng.uniform(0, 1, 7)) for i in range(n)]


class TestSequenceFeatures:
    def test_two_point_slope(self):
        seq = make_sequence("P1", [(0, 48), (400, 8)])
        f = sequence_features(seq, REFERENCE)
        assert f.overall_slope == pytest.approx(-0.1, abs=1e-12)
        assert f.duration == 400.0
        assert f.first_score == 48.0

    def test_stiffest_slope_hand_computed(self):
        seq = make_sequence("P1", [(0, 48), (90, 46), (180, 30)])
        f = sequence_features(seq, REFERENCE)
        assert f.stiffest_slope == pytest.approx((30 - 46) / 90, abs=1e-12)
        assert f.stiffest_slope <= f.overall_slope

    def test_curve_features_match_closed_form(self):
        # independent closed-form evaluation via math.exp
        seq = make_sequence("P1", [(0, 48), (90, 46), (180, 40), (270, 30), (360, 18)])
        f = sequence_features(seq, REFERENCE)
        score_m12 = 48.0 / (1.0 + math.exp(0.02 * (365.0 - 300.0)))
        s0 = 48.0 / (1.0 + math.exp(0.02 * (0.0 - 300.0)))
        s183 = 48.0 / (1.0 + math.exp(0.02 * (183.0 - 300.0)))
        assert f.score_m12 == pytest.approx(score_m12, abs=1e-12)
        assert f.pc_change_m6 == pytest.approx((s0 - s183) / s0, abs=1e-12)
        assert f.d50 == pytest.approx(300.0, abs=1e-9)

    def test_stiffest_never_above_overall(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            days = np.cumsum(rng.integers(30, 120, size=6))
            days = [0] + days.tolist()
            scores = np.maximum.accumulate(rng.integers(0, 49, size=7)[::-1])[::-1]
            seq = make_sequence("P1", list(zip(days, scores.tolist())))
            f = sequence_features(seq, REFERENCE)
            assert f.stiffest_slope <= f.overall_slope + 1e-12


class TestPairwiseTable:
    def test_three_patients_three_rows(self):
        table = pairwise_table(random_vectors(3))
        assert table.n_pairs == 3
        assert table.pairs == (("P0000", "P0001"), ("P0000", "P0002"), ("P0001", "P0002"))

    def test_full_cohort_pair_count(self):
        # n*(n-1)/2 distinct unordered pairs, i < j by id
        table = pairwise_table(random_vectors(353, seed=2))
        assert table.n_pairs == 353 * 352 // 2 == 62_128

    def test_identical_patients_zero_row(self):
        values = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])
        table = pairwise_table([vector("A", values), vector("B", values)])
        assert np.all(table.values == 0.0)

    def test_symmetric_under_input_order(self):
        vecs = random_vectors(6, seed=3)
        t1 = pairwise_table(vecs)
        t2 = pairwise_table(list(reversed(vecs)))
        assert t1.pairs == t2.pairs
        assert np.array_equal(t1.values, t2.values)

    def test_single_patient_rejected(self):
        with pytest.raises(ValueError):
            pairwise_table(random_vectors(1))


class TestNormalization:
    def test_affine_map(self):
        vecs = [vector(f"P{i}", [v] * 7) for i, v in enumerate([0.0, 2.0, 6.0])]
        table = minmax_normalize(pairwise_table(vecs))
        # diffs per column: {2, 6, 4} -> min 2, max 6 -> {0, 1, 0.5}
        assert sorted(table.values[:, 0].tolist()) == [0.0, 0.5, 1.0]

    def test_constant_column_zeroed_and_flagged(self):
        vecs = [vector(f"P{i}", [float(i), 1.0, float(i), 0.0, 1.0, 2.0, float(i)])
                for i in range(4)]
        table = minmax_normalize(pairwise_table(vecs))
        assert table.constant_mask[1]
        assert np.all(table.values[:, 1] == 0.0)

    def test_denormalize_roundtrip(self):
        raw = pairwise_table(random_vectors(20, seed=4))
        normalized = minmax_normalize(raw)
        assert np.all(normalized.values >= 0.0) and np.all(normalized.values <= 1.0)
        recovered = denormalize(normalized)
        assert np.max(np.abs(recovered - raw.values)) < 1e-12


class TestSpearmanFilter:
    def test_duplicated_column_dropped(self):
        rng = np.random.default_rng(0)
        base = rng.uniform(0, 1, 200)
        vecs = [vector(f"P{i:03d}", [base[i], base[i], rng.uniform(), rng.uniform(),
                                     rng.uniform(), rng.uniform(), rng.uniform()])
                for i in range(200)]
        table = minmax_normalize(pairwise_table(vecs))
        mask = spearman_filter(table)
        assert mask[0] and not mask[1]  # larger enumeration index dropped

    def test_comonotone_columns_rho_one(self):
        # {1,2,3} vs {10,20,30}: identical ranks, so the second column drops
        rng = np.random.default_rng(11)
        noise = rng.uniform(0, 1, (3, 5))
        vecs = [vector(f"P{i}", [v, 10 * v, *noise[i]])
                for i, v in enumerate([1.0, 2.0, 3.0])]
        table = minmax_normalize(pairwise_table(vecs))
        mask = spearman_filter(table)
        assert mask[0] and not mask[1]

    def test_independent_noise_retained(self):
        rng = np.random.default_rng(7)
        n = 150  # ~11k pairs
        vecs = [vector(f"P{i:04d}", rng.uniform(0, 1, 7)) for i in range(n)]
        table = minmax_normalize(pairwise_table(vecs))
        mask = spearman_filter(table)
        assert mask.all()

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(8)
        vecs = random_vectors(40, seed=8)
        table = minmax_normalize(pairwise_table(vecs))
        transformed = table.select_columns(np.ones(7, dtype=bool))
        transformed.values = transformed.values.copy()
        transformed.values[:, 3] = np.expm1(3.0 * transformed.values[:, 3])  # increasing
        assert np.array_equal(spearman_filter(table), spearman_filter(transformed))

    def test_manual_rank_correlation_oracle(self):
        # average-rank Spearman computed by hand for a tiny table with ties
        x = np.array([1.0, 2.0, 2.0, 3.0])
        y = np.array([10.0, 30.0, 20.0, 40.0])
        rx = np.array([1.0, 2.5, 2.5, 4.0])
        ry = np.array([1.0, 3.0, 2.0, 4.0])
        expected = np.corrcoef(rx, ry)[0, 1]
        from scipy import stats
        assert stats.spearmanr(x, y).statistic == pytest.approx(expected, abs=1e-12)


def test_quartile_labels_invariant_under_normalization():
    raw = pairwise_table(random_vectors(40, seed=9))
    normalized = minmax_normalize(raw)
    votes_raw = apply_labeling_functions(raw).votes
    votes_norm = apply_labeling_functions(normalized).votes
    assert np.array_equal(votes_raw, votes_norm)


def test_csv_writers(tmp_path):
    vecs = random_vectors(5, seed=10)
    table = minmax_normalize(pairwise_table(vecs))
    write_features_csv(vecs, tmp_path / "features.csv")
    write_pairs_csv(table, tmp_path / "pairs.csv")
    flines = (tmp_path / "features.csv").read_text().splitlines()
    plines = (tmp_path / "pairs.csv").read_text().splitlines()
    assert flines[0] == "patient_id," + ",".join(
        ("duration", "first_score", "overall_slope", "stiffest_slope",
         "score_m12", "pc_change_m6", "d50"))
    assert len(flines) == 6
    assert plines[0] == "patient_a,patient_b," + ",".join(VARIABLE_NAMES)
    assert len(plines) == 11
