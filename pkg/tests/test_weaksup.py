import numpy as np
import pytest

from progclust.features import PairTable
from progclust.weaksup import (
    LABEL_S,
    LABEL_T,
    LABEL_U,
    LabelMatrix,
    LabelModel,
    apply_labeling_functions,
    fit_label_model,
    infer_labels,
    model_log_likelihood,
    save_wsd_weights,
    train_wsd,
    write_labels_csv,
)


def table_from_columns(*columns, names=None):
    values = np.column_stack(columns)
    n = values.shape[0]
    pairs = tuple((f"a{i:05d}", f"b{i:05d}") for i in range(n))
    names = names or tuple(f"v{j}" for j in range(values.shape[1]))
    return PairTable(pairs, values.astype(float), tuple(names))


def matrix_from_votes(votes):
    votes = np.asarray(votes, dtype=np.int8)
    pairs = tuple((f"a{i:05d}", f"b{i:05d}") for i in range(votes.shape[0]))
    k = votes.shape[1]
    return LabelMatrix(votes, np.zeros(k), np.ones(k), tuple(f"v{j}" for j in range(k)), pairs)


def simulate_votes(rng, n, accuracies, propensities, prior=0.5):
    y = rng.random(n) < prior  # True = T
    votes = np.zeros((n, len(accuracies)), dtype=np.int8)
    for j, (acc, prop) in enumerate(zip(accuracies, propensities)):
        fires = rng.random(n) < prop
        correct = rng.random(n) < acc
        emitted = np.where(correct == y, LABEL_T, LABEL_S)
        votes[:, j] = np.where(fires, emitted, LABEL_U)
    return votes, y


class TestLabelingFunctions:
    def test_uniform_grid_quartiles(self):
        column = np.arange(101, dtype=float)  # Q1 = 25, Q3 = 75
        table = table_from_columns(column)
        lm = apply_labeling_functions(table)
        votes = lm.votes[:, 0]
        assert votes[10] == LABEL_T
        assert votes[90] == LABEL_S
        assert votes[50] == LABEL_U

    def test_value_exactly_at_quartile_abstains(self):
        column = np.arange(101, dtype=float)
        lm = apply_labeling_functions(table_from_columns(column))
        assert lm.q1[0] == 25.0
        assert lm.votes[25, 0] == LABEL_U
        assert lm.votes[75, 0] == LABEL_U

    def test_continuous_fractions_near_quarter(self):
        rng = np.random.default_rng(0)
        column = rng.uniform(0, 1, 20_000)
        lm = apply_labeling_functions(table_from_columns(column))
        frac_t = (lm.votes[:, 0] == LABEL_T).mean()
        frac_s = (lm.votes[:, 0] == LABEL_S).mean()
        assert frac_t == pytest.approx(0.25, abs=0.01)
        assert frac_s == pytest.approx(0.25, abs=0.01)

    def test_constant_column_all_abstain_with_warning(self):
        with pytest.warns(UserWarning, match="abstains everywhere"):
            lm = apply_labeling_functions(
                table_from_columns(np.full(50, 0.3), np.linspace(0, 1, 50))
            )
        assert np.all(lm.votes[:, 0] == LABEL_U)


class TestLabelModel:
    def test_all_abstain_rejected(self):
        with pytest.raises(ValueError, match="no signal"):
            fit_label_model(matrix_from_votes(np.zeros((10, 3))))

    def test_single_function_accuracy_recovery(self):
        rng = np.random.default_rng(1)
        votes, _ = simulate_votes(rng, 10_000, accuracies=[0.7], propensities=[0.8])
        model = fit_label_model(matrix_from_votes(votes))
        assert model.accuracy[0] == pytest.approx(0.7, abs=0.03)
        assert model.propensity[0] == pytest.approx(0.8, abs=0.02)

    def test_planted_accuracies_recovered(self):
        rng = np.random.default_rng(2)
        votes, _ = simulate_votes(
            rng, 10_000, accuracies=[0.9, 0.7, 0.6], propensities=[0.9, 0.8, 0.7]
        )
        model = fit_label_model(matrix_from_votes(votes))
        assert np.allclose(model.accuracy, [0.9, 0.7, 0.6], atol=0.05)

    def test_always_agreeing_functions_symmetry(self):
        votes = np.full((500, 2), LABEL_T, dtype=np.int8)
        votes[:250] = LABEL_S  # two functions, always agreeing, never abstaining
        model = fit_label_model(matrix_from_votes(votes))
        assert model.accuracy[0] == pytest.approx(model.accuracy[1], abs=1e-9)
        assert model.accuracy[0] >= 0.5  # symmetry resolved upward
        assert model.accuracy[0] == pytest.approx(1.0, abs=1e-3)

    def test_loglikelihood_monotone(self):
        rng = np.random.default_rng(3)
        votes, _ = simulate_votes(rng, 2_000, [0.8, 0.6, 0.55], [0.7, 0.6, 0.9])
        model = fit_label_model(matrix_from_votes(votes))
        trace = np.array(model.log_likelihood)
        assert np.all(np.diff(trace) >= -1e-7)

    def test_posterior_invariant_to_column_order(self):
        rng = np.random.default_rng(4)
        votes, _ = simulate_votes(rng, 3_000, [0.85, 0.65, 0.6], [0.8, 0.7, 0.6])
        lm = matrix_from_votes(votes)
        lm_perm = matrix_from_votes(votes[:, [2, 0, 1]])
        model = fit_label_model(lm)
        model_perm = fit_label_model(lm_perm)
        _, post = infer_labels(model, lm)
        _, post_perm = infer_labels(model_perm, lm_perm)
        assert np.allclose(post, post_perm, atol=1e-9)

    def test_em_beats_coarse_grid(self):
        # EM log-likelihood should match a parameter grid at its own resolution
        rng = np.random.default_rng(5)
        votes, _ = simulate_votes(rng, 200, [0.8, 0.6], [0.9, 0.7])
        lm = matrix_from_votes(votes)
        model = fit_label_model(lm)
        em_ll = model.log_likelihood[-1]
        grid = np.linspace(0.01, 0.99, 50)
        best = -np.inf
        for prior in grid[::7]:
            for a1 in grid:
                for a2 in grid:
                    ll = model_log_likelihood(lm, prior, model.propensity, [a1, a2])
                    best = max(best, ll)
        assert em_ll >= best - 1e-3


class TestInferLabels:
    def test_all_abstain_is_undetermined(self):
        votes = np.array([[LABEL_U, LABEL_U], [LABEL_T, LABEL_U]], dtype=np.int8)
        lm = matrix_from_votes(votes)
        model = LabelModel(0.7, np.array([0.5, 0.5]), np.array([0.9, 0.9]), (), 1, True)
        labels, posterior = infer_labels(model, lm)
        assert labels[0] == LABEL_U
        assert labels[1] == LABEL_T

    def test_single_reliable_vote_wins(self):
        votes = np.array([[LABEL_T]], dtype=np.int8)
        model = LabelModel(0.5, np.array([0.8]), np.array([0.9]), (), 1, True)
        labels, posterior = infer_labels(model, matrix_from_votes(votes))
        assert labels[0] == LABEL_T
        assert posterior[0] == pytest.approx(0.9)

    def test_majority_wins_under_equal_accuracies(self):
        votes = np.array([[LABEL_T, LABEL_T, LABEL_S, LABEL_T, LABEL_S]], dtype=np.int8)
        model = LabelModel(0.5, np.full(5, 0.9), np.full(5, 0.7), (), 1, True)
        labels, _ = infer_labels(model, matrix_from_votes(votes))
        assert labels[0] == LABEL_T

    def test_tied_posterior_is_undetermined(self):
        votes = np.array([[LABEL_T, LABEL_S]], dtype=np.int8)
        model = LabelModel(0.5, np.array([0.8, 0.8]), np.array([0.7, 0.7]), (), 1, True)
        labels, posterior = infer_labels(model, matrix_from_votes(votes))
        assert posterior[0] == pytest.approx(0.5)
        assert labels[0] == LABEL_U


def planted_rule_table(n=800, seed=0, margin=(0.4, 0.6)):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(n, 5))
    X[:, 2] = np.where(rng.random(n) < 0.5,
                       rng.uniform(0, margin[0], n), rng.uniform(margin[1], 1, n))
    labels = np.where(X[:, 2] > 0.5, LABEL_S, LABEL_T).astype(np.int8)
    return table_from_columns(*X.T), labels


class TestTrainWsd:
    def test_planted_rule_weight_dominates(self):
        table, labels = planted_rule_table()
        wsd = train_wsd(table, labels)
        assert wsd.converged
        assert wsd.weights[2] > 0  # S has larger variable-3 values
        assert np.argmax(np.abs(wsd.weights)) == 2

    def test_separable_training_accuracy_is_full(self):
        table, labels = planted_rule_table(seed=1)
        wsd = train_wsd(table, labels)
        scores = table.values @ wsd.weights + wsd.intercept
        predicted = np.where(scores > 0, LABEL_S, LABEL_T)
        assert np.array_equal(predicted, labels)

    def test_undetermined_pairs_ignored(self):
        table, labels = planted_rule_table(seed=2)
        with_u = labels.copy()
        with_u[::7] = LABEL_U
        wsd_full = train_wsd(table, labels)
        mask = with_u != LABEL_U
        sub = PairTable(tuple(np.array(table.pairs, dtype=object)[mask].tolist()),
                        table.values[mask], table.columns)
        wsd_dropped = train_wsd(sub, labels[mask])
        wsd_u = train_wsd(table, with_u)
        assert np.allclose(wsd_u.weights, wsd_dropped.weights)
        assert not np.allclose(wsd_u.weights, wsd_full.weights)

    def test_single_class_rejected(self):
        table, labels = planted_rule_table(seed=3)
        with pytest.raises(ValueError, match="both T and S"):
            train_wsd(table, np.full_like(labels, LABEL_T))
        with pytest.raises(ValueError, match="no labeled pairs"):
            train_wsd(table, np.full_like(labels, LABEL_U))


def test_labels_csv_and_weights_json(tmp_path):
    table, labels = planted_rule_table(n=50, seed=4)
    lm = apply_labeling_functions(table)
    model = fit_label_model(lm)
    inferred, posterior = infer_labels(model, lm)
    write_labels_csv(lm, inferred, posterior, tmp_path / "labels.csv")
    lines = (tmp_path / "labels.csv").read_text().splitlines()
    assert lines[0] == "patient_a,patient_b,label,posterior"
    assert len(lines) == 51
    assert lines[1].split(",")[2] in ("T", "S", "U")

    wsd = train_wsd(table, labels)
    save_wsd_weights(wsd, tmp_path / "w.json")
    import json
    payload = json.loads((tmp_path / "w.json").read_text())
    assert set(payload["weights"]) == set(table.columns)
    assert payload["C"] == 1.0
