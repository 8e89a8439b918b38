"""Visit/outcome file parsing, validation and cohort exclusion rules.

Input is two CSV files:

* visits:   ``patient_id,day,total[,q1,...,q12]`` - one row per visit, days
  relative to the patient's first visit, total ALSFRS-R score in [0, 48],
  optional block of 12 item subscores in [0, 4] summing to the total.
* outcomes: ``patient_id,survival_days,event[,first_contact_day]`` - days
  from first visit to death (event=1) or censoring (event=0), plus the
  optional day of first clinical contact (<= 0, relative to the first
  scored visit).

Exclusion rules, applied in order:

1. fewer than 5 visits;
2. any consecutive score rise of more than 2 points;
3. first scored visit more than 30 days after first contact (skipped when
   the contact day is unknown).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

N_ITEMS = 12
MAX_TOTAL = 48
MAX_ITEM = 4
MIN_VISITS = 5
MAX_CONSECUTIVE_RISE = 2
MAX_FIRST_SCORE_GAP_DAYS = 30

RULE_MIN_VISITS = "fewer_than_5_visits"
RULE_SCORE_RISE = "score_rise_above_2"
RULE_LATE_FIRST_SCORE = "first_score_gap_above_30"
RULE_ORDER = (RULE_MIN_VISITS, RULE_SCORE_RISE, RULE_LATE_FIRST_SCORE)

SUBSCORE_COLUMNS = tuple(f"q{i}" for i in range(1, N_ITEMS + 1))
VISITS_BASE_HEADER = ("patient_id", "day", "total")
OUTCOMES_HEADER = ("patient_id", "survival_days", "event", "first_contact_day")


class CohortFormatError(ValueError):
    """Malformed input row; message carries file path and line number."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class VisitRecord:
    patient_id: str
    day: int
    total_score: int
    subscores: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.day < 0:
            raise ValueError(f"day must be >= 0, got {self.day}")
        if not 0 <= self.total_score <= MAX_TOTAL:
            raise ValueError(
                f"total_score must be in [0, {MAX_TOTAL}], got {self.total_score}"
            )
        if self.subscores is not None:
            if len(self.subscores) != N_ITEMS:
                raise ValueError(f"expected {N_ITEMS} subscores, got {len(self.subscores)}")
            for i, s in enumerate(self.subscores):
                if not 0 <= s <= MAX_ITEM:
                    raise ValueError(f"subscore q{i + 1} must be in [0, {MAX_ITEM}], got {s}")
            if sum(self.subscores) != self.total_score:
                raise ValueError(
                    f"subscores sum to {sum(self.subscores)} but total_score is "
                    f"{self.total_score}"
                )


@dataclass(frozen=True)
class PatientOutcome:
    patient_id: str
    survival_days: int
    event_observed: bool
    first_contact_day: int | None = None

    def __post_init__(self):
        if self.survival_days < 0:
            raise ValueError(f"survival_days must be >= 0, got {self.survival_days}")
        if self.first_contact_day is not None and self.first_contact_day > 0:
            raise ValueError(
                f"first_contact_day is relative to the first scored visit and must "
                f"be <= 0, got {self.first_contact_day}"
            )


@dataclass(frozen=True)
class Sequence:
    """One patient's ordered visits plus survival outcome."""

    patient_id: str
    visits: tuple[VisitRecord, ...]
    outcome: PatientOutcome

    def __post_init__(self):
        if not self.visits:
            raise ValueError("sequence must contain at least one visit")
        if self.visits[0].day != 0:
            raise ValueError("first visit day must be 0")
        days = [v.day for v in self.visits]
        if any(b <= a for a, b in zip(days, days[1:])):
            raise ValueError("visit days must be strictly increasing")

    @property
    def days(self) -> tuple[int, ...]:
        return tuple(v.day for v in self.visits)

    @property
    def scores(self) -> tuple[int, ...]:
        return tuple(v.total_score for v in self.visits)

    def has_subscores(self) -> bool:
        return all(v.subscores is not None for v in self.visits)


@dataclass
class ExclusionReport:
    n_input: int
    n_retained: int
    rule_counts: dict[str, int] = field(default_factory=dict)
    tags: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "input": self.n_input,
            "retained": self.n_retained,
            "excluded": self.n_input - self.n_retained,
            "rule_counts": {rule: self.rule_counts.get(rule, 0) for rule in RULE_ORDER},
            "tags": dict(sorted(self.tags.items())),
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def _parse_int(text: str, path, line: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise CohortFormatError(path, line, f"column {column}: expected integer, got {text!r}")


def _read_rows(path):
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        for line, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            yield line, [cell.strip() for cell in row]


def _parse_visits(path):
    rows = _read_rows(path)
    try:
        header_line, header = next(rows)
    except StopIteration:
        raise CohortFormatError(path, 1, "empty visits file")
    has_subscores = tuple(header) == VISITS_BASE_HEADER + SUBSCORE_COLUMNS
    if not has_subscores and tuple(header) != VISITS_BASE_HEADER:
        raise CohortFormatError(
            path, header_line,
            "expected header 'patient_id,day,total' optionally followed by q1..q12",
        )
    expected = len(VISITS_BASE_HEADER) + (N_ITEMS if has_subscores else 0)

    visits: dict[str, list[tuple[int, VisitRecord]]] = {}
    seen: set[tuple[str, int]] = set()
    for line, row in rows:
        if len(row) != expected:
            raise CohortFormatError(path, line, f"expected {expected} columns, got {len(row)}")
        patient_id = row[0]
        if not patient_id:
            raise CohortFormatError(path, line, "empty patient_id")
        day = _parse_int(row[1], path, line, "day")
        total = _parse_int(row[2], path, line, "total")
        subscores = None
        if has_subscores and any(cell for cell in row[3:]):
            if not all(cell for cell in row[3:]):
                raise CohortFormatError(path, line, "partially filled subscore block")
            subscores = tuple(
                _parse_int(cell, path, line, col)
                for cell, col in zip(row[3:], SUBSCORE_COLUMNS)
            )
        if (patient_id, day) in seen:
            raise CohortFormatError(path, line, f"duplicate visit ({patient_id}, day {day})")
        seen.add((patient_id, day))
        try:
            record = VisitRecord(patient_id, day, total, subscores)
        except ValueError as err:
            raise CohortFormatError(path, line, str(err))
        visits.setdefault(patient_id, []).append((line, record))
    return visits


def _parse_outcomes(path):
    rows = _read_rows(path)
    try:
        header_line, header = next(rows)
    except StopIteration:
        raise CohortFormatError(path, 1, "empty outcomes file")
    if tuple(header) not in (OUTCOMES_HEADER, OUTCOMES_HEADER[:3]):
        raise CohortFormatError(
            path, header_line,
            "expected header 'patient_id,survival_days,event[,first_contact_day]'",
        )

    outcomes: dict[str, PatientOutcome] = {}
    for line, row in rows:
        if len(row) not in (3, 4):
            raise CohortFormatError(path, line, f"expected 3 or 4 columns, got {len(row)}")
        patient_id = row[0]
        if patient_id in outcomes:
            raise CohortFormatError(path, line, f"duplicate outcome for patient {patient_id}")
        survival = _parse_int(row[1], path, line, "survival_days")
        event_text = row[2].lower()
        if event_text in ("1", "true"):
            event = True
        elif event_text in ("0", "false"):
            event = False
        else:
            raise CohortFormatError(path, line, f"column event: expected 0/1, got {row[2]!r}")
        contact = None
        if len(row) == 4 and row[3] != "":
            contact = _parse_int(row[3], path, line, "first_contact_day")
        try:
            outcomes[patient_id] = PatientOutcome(patient_id, survival, event, contact)
        except ValueError as err:
            raise CohortFormatError(path, line, str(err))
    return outcomes


def parse_cohort(visits_path, outcomes_path) -> list[Sequence]:
    """Read and validate the two cohort files into one Sequence per patient.

    Visits are re-based so each patient's first visit is day 0. Output is
    sorted by patient_id.
    """
    visits = _parse_visits(visits_path)
    outcomes = _parse_outcomes(outcomes_path)

    missing = sorted(set(visits) - set(outcomes))
    if missing:
        raise CohortFormatError(outcomes_path, 0, f"no outcome row for patients: {missing}")
    orphans = sorted(set(outcomes) - set(visits))
    if orphans:
        raise CohortFormatError(visits_path, 0, f"no visits for patients: {orphans}")

    sequences = []
    for patient_id in sorted(visits):
        rows = sorted(visits[patient_id], key=lambda item: item[1].day)
        base_day = rows[0][1].day
        rebased = tuple(
            VisitRecord(patient_id, rec.day - base_day, rec.total_score, rec.subscores)
            for _, rec in rows
        )
        sequences.append(Sequence(patient_id, rebased, outcomes[patient_id]))
    return sequences


def _violated_rule(seq: Sequence) -> str | None:
    if len(seq.visits) < MIN_VISITS:
        return RULE_MIN_VISITS
    scores = seq.scores
    if any(b - a > MAX_CONSECUTIVE_RISE for a, b in zip(scores, scores[1:])):
        return RULE_SCORE_RISE
    contact = seq.outcome.first_contact_day
    if contact is not None and -contact > MAX_FIRST_SCORE_GAP_DAYS:
        return RULE_LATE_FIRST_SCORE
    return None


def apply_exclusions(cohort: list[Sequence]) -> tuple[list[Sequence], ExclusionReport]:
    """Filter a parsed cohort by the three exclusion rules.

    Each excluded patient is tagged with the first rule (in rule order) it
    violates. Filtering is pure and idempotent.
    """
    retained = []
    tags: dict[str, str] = {}
    counts = {rule: 0 for rule in RULE_ORDER}
    for seq in cohort:
        rule = _violated_rule(seq)
        if rule is None:
            retained.append(seq)
        else:
            tags[seq.patient_id] = rule
            counts[rule] += 1
    report = ExclusionReport(len(cohort), len(retained), counts, tags)
    return retained, report


def write_visits_csv(sequences: list[Sequence], path) -> None:
    include_subscores = any(
        v.subscores is not None for seq in sequences for v in seq.visits
    )
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        header = list(VISITS_BASE_HEADER)
        if include_subscores:
            header += list(SUBSCORE_COLUMNS)
        writer.writerow(header)
        for seq in sorted(sequences, key=lambda s: s.patient_id):
            for v in seq.visits:
                row = [v.patient_id, v.day, v.total_score]
                if include_subscores:
                    row += list(v.subscores) if v.subscores is not None else [""] * N_ITEMS
                writer.writerow(row)


def write_outcomes_csv(sequences: list[Sequence], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(OUTCOMES_HEADER)
        for seq in sorted(sequences, key=lambda s: s.patient_id):
            o = seq.outcome
            writer.writerow(
                [
                    o.patient_id,
                    o.survival_days,
                    int(o.event_observed),
                    "" if o.first_contact_day is None else o.first_contact_day,
                ]
            )


def write_cohort(sequences: list[Sequence], visits_path, outcomes_path) -> None:
    """Serialize a cohort back to the two input file formats."""
    write_visits_csv(sequences, visits_path)
    write_outcomes_csv(sequences, outcomes_path)
