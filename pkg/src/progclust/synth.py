"""Synthetic cohorts with planted progression clusters and linked survival.

Each archetype draws sigmoid parameters, visit schedules and follow-up
lengths from its own ranges; a patient's survival time is the analytic D50
of the sampled curve plus an archetype-specific offset, so planted clusters
have genuinely different survival curves. Generated cohorts always pass the
default exclusion rules.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .cohort import (
    MAX_TOTAL,
    MIN_VISITS,
    N_ITEMS,
    PatientOutcome,
    Sequence,
    VisitRecord,
    write_cohort,
)
from .sigmoid import DEFAULT_HORIZON_DAYS, SigmoidFit, invert_for_score

LABELS_HEADER = ("patient_id", "label")


@dataclass(frozen=True)
class ClusterArchetype:
    """Parameter ranges for one planted progression profile."""

    label: str
    b_range: tuple[float, float]
    m_range: tuple[float, float]
    a_range: tuple[float, float]
    c_range: tuple[float, float]
    visit_interval_days: float
    visit_jitter_days: float
    followup_range_days: tuple[float, float]
    death_offset_mean: float
    death_offset_sd: float
    censor_prob: float

    def __post_init__(self):
        for name in ("b_range", "m_range", "a_range", "c_range", "followup_range_days"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        if self.m_range[0] <= 0:
            raise ValueError("m must be positive (declining curve)")
        if self.c_range[0] < 0 or self.b_range[0] < 0:
            raise ValueError("b and c must be non-negative")
        if self.b_range[1] + self.c_range[1] > MAX_TOTAL:
            raise ValueError(f"b + c may not exceed {MAX_TOTAL}")
        if not 0.0 <= self.censor_prob <= 1.0:
            raise ValueError("censor_prob must be in [0, 1]")


@dataclass(frozen=True)
class SynthSpec:
    archetypes: tuple[ClusterArchetype, ...]
    weights: tuple[float, ...]
    n_patients: int
    noise_sd: float
    seed: int

    def __post_init__(self):
        if not self.archetypes:
            raise ValueError("at least one archetype is required")
        if len(self.weights) != len(self.archetypes):
            raise ValueError("one weight per archetype")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(self.weights)}")
        if self.n_patients < 1:
            raise ValueError("n_patients must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


def _visit_days(rng, interval, jitter, followup):
    days = [0]
    while True:
        gap = max(1, int(round(rng.normal(interval, jitter))))
        nxt = days[-1] + gap
        if nxt > followup and len(days) >= MIN_VISITS:
            break
        days.append(nxt)
    return np.array(days, dtype=int)


def _split_subscores(total: int) -> tuple[int, ...]:
    # largest-remainder allocation with equal quotas; exact sum, per-item cap 4
    base, remainder = divmod(total, N_ITEMS)
    return tuple([base + 1] * remainder + [base] * (N_ITEMS - remainder))


def generate_cohort(spec: SynthSpec) -> tuple[list[Sequence], dict[str, str]]:
    """Draw a cohort; returns (sequences, planted labels by patient_id).

    Deterministic for a given spec: one sequential RNG stream seeded by
    ``spec.seed`` drives every draw.
    """
    rng = np.random.default_rng(spec.seed)
    weights = np.asarray(spec.weights, dtype=float)
    sequences = []
    labels: dict[str, str] = {}

    width = max(4, len(str(spec.n_patients - 1)))
    for index in range(spec.n_patients):
        patient_id = f"SYN{index:0{width}d}"
        arch = spec.archetypes[rng.choice(len(spec.archetypes), p=weights)]
        b = rng.uniform(*arch.b_range)
        m = rng.uniform(*arch.m_range)
        a = rng.uniform(*arch.a_range)
        c = rng.uniform(*arch.c_range)
        followup = rng.uniform(*arch.followup_range_days)

        days = _visit_days(rng, arch.visit_interval_days, arch.visit_jitter_days, followup)
        curve = SigmoidFit(b, m, a, c, 0.0, True, 0)
        true_scores = np.asarray(
            b / (1.0 + np.exp(np.clip(m * (days - a), -700, 700))) + c
        )
        noise = rng.normal(0.0, spec.noise_sd, size=days.size)
        scores = np.clip(np.rint(true_scores + noise), 0, MAX_TOTAL).astype(int)
        # cap rises so the physician-implausibility rule can never fire
        for i in range(scores.size - 1):
            scores[i + 1] = min(scores[i + 1], scores[i] + 2)

        visits = tuple(
            VisitRecord(patient_id, int(day), int(score), _split_subscores(int(score)))
            for day, score in zip(days, scores)
        )

        d50 = invert_for_score(curve, horizon_days=DEFAULT_HORIZON_DAYS)
        offset = rng.normal(arch.death_offset_mean, arch.death_offset_sd)
        survival = max(0, int(round(d50 + offset)))
        event = bool(rng.random() >= arch.censor_prob)
        outcome = PatientOutcome(patient_id, survival, event, None)

        sequences.append(Sequence(patient_id, visits, outcome))
        labels[patient_id] = arch.label
    return sequences, labels


def three_cluster_spec(n_patients: int = 150, noise_sd: float = 1.0, seed: int = 0) -> SynthSpec:
    """Well-separated slow / medium / fast progression benchmark cohort."""
    slow = ClusterArchetype(
        label="slow",
        b_range=(42.0, 46.0), m_range=(0.0045, 0.0055), a_range=(700.0, 800.0),
        c_range=(0.0, 2.0), visit_interval_days=90.0, visit_jitter_days=7.0,
        followup_range_days=(720.0, 1080.0),
        death_offset_mean=250.0, death_offset_sd=50.0, censor_prob=0.15,
    )
    medium = ClusterArchetype(
        label="medium",
        b_range=(42.0, 46.0), m_range=(0.013, 0.017), a_range=(300.0, 380.0),
        c_range=(0.0, 2.0), visit_interval_days=90.0, visit_jitter_days=7.0,
        followup_range_days=(540.0, 810.0),
        death_offset_mean=140.0, death_offset_sd=35.0, censor_prob=0.15,
    )
    fast = ClusterArchetype(
        label="fast",
        b_range=(42.0, 46.0), m_range=(0.035, 0.045), a_range=(120.0, 180.0),
        c_range=(0.0, 2.0), visit_interval_days=60.0, visit_jitter_days=7.0,
        followup_range_days=(330.0, 540.0),
        death_offset_mean=60.0, death_offset_sd=20.0, censor_prob=0.10,
    )
    return SynthSpec(
        archetypes=(slow, medium, fast),
        weights=(1 / 3, 1 / 3, 1 / 3),
        n_patients=n_patients,
        noise_sd=noise_sd,
        seed=seed,
    )


def write_labels_csv(labels: dict[str, str], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(LABELS_HEADER)
        for patient_id in sorted(labels):
            writer.writerow([patient_id, labels[patient_id]])


def read_labels_csv(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if tuple(h.strip() for h in header) != LABELS_HEADER:
            raise ValueError(f"{path}: expected header 'patient_id,label'")
        return {row[0].strip(): row[1].strip() for row in reader if row}


def write_synthetic_cohort(spec: SynthSpec, visits_path, outcomes_path, labels_path) -> tuple[list[Sequence], dict[str, str]]:
    """Generate and persist a cohort plus its planted labels."""
    sequences, labels = generate_cohort(spec)
    write_cohort(sequences, visits_path, outcomes_path)
    write_labels_csv(labels, labels_path)
    return sequences, labels
