"""Scoring: route/plan metrics, stage checkpoints, failure classification.

All functions here are pure and order-insensitive where the contract says
so; aggregation over a set of case results never depends on input order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .domain import (
    PHASE_ORDER,
    KNOWN_DISEASES,
    PlanStep,
    RouteLabel,
    SurgicalCase,
)
from .engine import SimulationReport
from .errors import EmptyGold, NoCases

CHECKPOINT_FRACTIONS = (0.25, 0.50, 0.75, 1.00)
OVERLOAD_THRESHOLD = 75.0


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Classic quadratic longest-common-subsequence table, two rows."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def score_route(predicted: RouteLabel | None, gold: RouteLabel) -> float:
    """Exact canonical match: 1.0 or 0.0. No partial credit for routes."""
    if predicted is None:
        return 0.0
    return 1.0 if predicted.canonical == gold.canonical else 0.0


def score_plan(
    predicted: Sequence[PlanStep], gold: Sequence[PlanStep]
) -> float:
    """Order-aware recall: shared subsequence length over gold length."""
    if not gold:
        raise EmptyGold("gold plan has no steps")
    pred_ids = [s.step_id for s in predicted]
    gold_ids = [s.step_id for s in gold]
    return lcs_length(pred_ids, gold_ids) / len(gold_ids)


# --- stage checkpoints ---


@dataclass(frozen=True)
class CheckpointScore:
    fraction: float
    completeness: float  # percent of expected-so-far subtasks done at all
    accuracy: float  # percent of actions so far that were expected and in phase


def flatten_gold_subtasks(case: SurgicalCase) -> tuple[str, ...]:
    return tuple(
        sid for phase in PHASE_ORDER for sid in case.gold_subtasks.get(phase, ())
    )


def stage_checkpoints(
    report: SimulationReport,
    case: SurgicalCase,
    fractions: Sequence[float] = CHECKPOINT_FRACTIONS,
) -> tuple[CheckpointScore, ...]:
    """Progress snapshots at fixed fractions of the gold subtask sequence.

    Completeness asks "of the work expected by this point, how much got
    done"; accuracy asks "of the actions taken by this point, how many
    were the right work in the right phase".
    """
    gold = flatten_gold_subtasks(case)
    owner = {
        sid: phase
        for phase in PHASE_ORDER
        for sid in case.gold_subtasks.get(phase, ())
    }
    done = {ex.subtask_id for ex in report.executed}
    out: list[CheckpointScore] = []
    for frac in fractions:
        expected_n = math.ceil(frac * len(gold))
        window = gold[:expected_n]
        if window:
            completeness = 100.0 * sum(1 for sid in window if sid in done) / len(window)
        else:
            completeness = 0.0
        window_set = set(window)
        taken = report.executed[:expected_n]
        if taken:
            good = sum(
                1
                for ex in taken
                if ex.subtask_id in window_set and owner.get(ex.subtask_id) == ex.phase
            )
            accuracy = 100.0 * good / len(taken)
        else:
            accuracy = 0.0
        out.append(CheckpointScore(frac, completeness, accuracy))
    return tuple(out)


# --- failure taxonomy ---


class FailureKind(str, Enum):
    MISJUDGED_INITIAL_APPROACH = "misjudged_initial_approach"
    MULTI_SITUATION_OVERLOAD = "multi_situation_overload"
    RARE_DISEASE_HALLUCINATION = "rare_disease_hallucination"
    OTHER = "other"


def foreign_disease_mentions(
    report: SimulationReport, case: SurgicalCase
) -> list[str]:
    """Known disease names voiced in the transcript that are not this case's."""
    text = "\n".join(u.text for u in report.transcript).lower()
    own = case.disease_label.name.lower()
    hits = []
    for disease in KNOWN_DISEASES:
        name = disease.name.lower()
        if name != own and name in text:
            hits.append(disease.name)
    return hits


def classify_failure(
    report: SimulationReport,
    case: SurgicalCase,
    checkpoints: Sequence[CheckpointScore] | None = None,
    overload_threshold: float = OVERLOAD_THRESHOLD,
) -> FailureKind | None:
    """Deterministic first-match rules; None means no diagnosed failure."""
    if score_route(report.chosen_route, case.gold_route) == 0.0:
        return FailureKind.MISJUDGED_INITIAL_APPROACH

    per_phase: dict[str, int] = {}
    for ev in report.events_fired:
        per_phase[ev.phase.value] = per_phase.get(ev.phase.value, 0) + 1
    if any(n >= 2 for n in per_phase.values()):
        cps = checkpoints or stage_checkpoints(report, case)
        final = cps[-1].completeness if cps else 0.0
        if final < overload_threshold:
            return FailureKind.MULTI_SITUATION_OVERLOAD

    if foreign_disease_mentions(report, case):
        return FailureKind.RARE_DISEASE_HALLUCINATION

    plan = score_plan(report.executed_plan, case.gold_plan)
    if plan < 0.5:
        return FailureKind.OTHER
    return None


# --- per-case results and aggregation ---


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    sim_id: str
    route_score: float
    plan_score: float
    checkpoints: tuple[CheckpointScore, ...]
    failure: FailureKind | None
    events_fired: int
    warning_count: int


def evaluate_report(report: SimulationReport, case: SurgicalCase) -> CaseResult:
    cps = stage_checkpoints(report, case)
    return CaseResult(
        case_id=case.case_id,
        sim_id=report.sim_id,
        route_score=score_route(report.chosen_route, case.gold_route),
        plan_score=score_plan(report.executed_plan, case.gold_plan),
        checkpoints=cps,
        failure=classify_failure(report, case, cps),
        events_fired=len(report.events_fired),
        warning_count=len(report.warnings),
    )


@dataclass(frozen=True)
class EvalSummary:
    n_cases: int
    route_accuracy: float  # percent, 2 decimals
    plan_accuracy: float  # percent, 2 decimals
    final_completeness: float  # mean completeness at fraction 1.0
    failure_counts: Mapping[str, int] = field(default_factory=dict)


def aggregate(results: Iterable[CaseResult]) -> EvalSummary:
    """Corpus-level summary; invariant under permutation of the inputs."""
    rows = sorted(results, key=lambda r: (r.case_id, r.sim_id))
    if not rows:
        raise NoCases("nothing to aggregate")
    n = len(rows)
    route = round(100.0 * sum(r.route_score for r in rows) / n, 2)
    plan = round(100.0 * sum(r.plan_score for r in rows) / n, 2)
    final = round(
        sum(r.checkpoints[-1].completeness for r in rows if r.checkpoints) / n, 2
    )
    counts: dict[str, int] = {k.value: 0 for k in FailureKind}
    for r in rows:
        if r.failure is not None:
            counts[r.failure.value] += 1
    return EvalSummary(
        n_cases=n,
        route_accuracy=route,
        plan_accuracy=plan,
        final_completeness=final,
        failure_counts=counts,
    )


def config_fingerprint(flags: Mapping[str, bool], **extra: object) -> str:
    """Short stable digest of the ablation switches (plus any extras)."""
    payload = {str(k): bool(v) for k, v in flags.items()}
    payload.update({str(k): v for k, v in extra.items()})  # type: ignore[misc]
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def render_ablation_table(
    rows: Sequence[tuple[str, str, EvalSummary]]
) -> str:
    """Fixed-width text table: one line per configuration."""
    header = f"{'config':<14} {'fingerprint':<14} {'n':>4} {'route%':>8} {'plan%':>8} {'complete%':>10}"
    lines = [header, "-" * len(header)]
    for label, fingerprint, summary in rows:
        lines.append(
            f"{label:<14} {fingerprint:<14} {summary.n_cases:>4} "
            f"{summary.route_accuracy:>8.2f} {summary.plan_accuracy:>8.2f} "
            f"{summary.final_completeness:>10.2f}"
        )
    return "\n".join(lines)
