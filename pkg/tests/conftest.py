import warnings

import pytest

from progclust.cohort import PatientOutcome, Sequence, VisitRecord, apply_exclusions
from progclust.pipeline import RunConfig, run_all
from progclust.synth import generate_cohort, three_cluster_spec


def make_sequence(patient_id, day_scores, survival_days=400, event=True,
                  first_contact_day=None, subscores=False):
    """Build a Sequence from (day, score) tuples."""
    visits = []
    for day, score in day_scores:
        subs = None
        if subscores:
            base, rem = divmod(score, 12)
            subs = tuple([base + 1] * rem + [base] * (12 - rem))
        visits.append(VisitRecord(patient_id, day, score, subs))
    outcome = PatientOutcome(patient_id, survival_days, event, first_contact_day)
    return Sequence(patient_id, tuple(visits), outcome)


@pytest.fixture(scope="session")
def small_cohort():
    """40 synthetic patients with planted labels, post-exclusion."""
    sequences, labels = generate_cohort(three_cluster_spec(n_patients=40, seed=17))
    retained, _ = apply_exclusions(sequences)
    return retained, labels


@pytest.fixture(scope="session")
def small_run(small_cohort):
    """One shared full-grid run over the small cohort (reduced epochs)."""
    retained, labels = small_cohort
    config = RunConfig(seed=5, n_epochs=150, audit_triples=50_000)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = run_all(retained, config)
    return result, labels
