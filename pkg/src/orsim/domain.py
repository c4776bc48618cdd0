"""Shared domain vocabulary: roles, phases, cases, utterances, actions.

Everything here is immutable value data; instances can be shared freely
across threads and simulations.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .errors import EmptyRoute


class RoleId(str, Enum):
    """Closed set of operating-room roles."""

    PATIENT = "patient"
    CHIEF_SURGEON = "chief_surgeon"
    SURGEON_ASSISTANT = "surgeon_assistant"
    SCRUB_NURSE = "scrub_nurse"
    WARD_NURSE = "ward_nurse"
    ROOM_NURSE = "room_nurse"
    ANESTHETIST = "anesthetist"
    SURGERY_COPILOT = "surgery_copilot"


class StageId(str, Enum):
    PREOPERATIVE = "preoperative"
    INTRAOPERATIVE = "intraoperative"
    POSTOPERATIVE = "postoperative"


class PhaseId(str, Enum):
    """The five episode phases, in fixed order."""

    PATIENT_TRANSFER = "patient_transfer"
    ANESTHESIA = "anesthesia"
    PREPARATION = "preparation"
    SURGICAL_OPERATION = "surgical_operation"
    POSTOPERATIVE_CARE = "postoperative_care"


PHASE_ORDER: tuple[PhaseId, ...] = (
    PhaseId.PATIENT_TRANSFER,
    PhaseId.ANESTHESIA,
    PhaseId.PREPARATION,
    PhaseId.SURGICAL_OPERATION,
    PhaseId.POSTOPERATIVE_CARE,
)

_PHASE_STAGE: dict[PhaseId, StageId] = {
    PhaseId.PATIENT_TRANSFER: StageId.PREOPERATIVE,
    PhaseId.ANESTHESIA: StageId.PREOPERATIVE,
    PhaseId.PREPARATION: StageId.PREOPERATIVE,
    PhaseId.SURGICAL_OPERATION: StageId.INTRAOPERATIVE,
    PhaseId.POSTOPERATIVE_CARE: StageId.POSTOPERATIVE,
}


def stage_of(phase: PhaseId) -> StageId:
    """Map a phase to its stage; pure and total."""
    return _PHASE_STAGE[phase]


def phase_index(phase: PhaseId) -> int:
    return PHASE_ORDER.index(phase)


def next_phase(phase: PhaseId) -> PhaseId | None:
    """Successor in the fixed order, or None for the last phase."""
    i = phase_index(phase)
    return PHASE_ORDER[i + 1] if i + 1 < len(PHASE_ORDER) else None


@dataclass(frozen=True)
class DiseaseLabel:
    """A named condition; D1..D5 are the built-in pituitary adenoma variants."""

    code: str
    name: str

    @classmethod
    def other(cls, name: str) -> "DiseaseLabel":
        return cls(code="other", name=name)


D1 = DiseaseLabel("D1", "Primary non-functioning pituitary adenoma")
D2 = DiseaseLabel("D2", "Recurrent nonfunctioning pituitary adenoma")
D3 = DiseaseLabel("D3", "Aggressive nonfunctioning pituitary adenoma")
D4 = DiseaseLabel("D4", "Primary pituitary adrenocorticotroph adenoma")
D5 = DiseaseLabel("D5", "Recurrent pituitary adrenocorticotroph adenoma")

KNOWN_DISEASES: tuple[DiseaseLabel, ...] = (D1, D2, D3, D4, D5)


@dataclass(frozen=True)
class RouteLabel:
    """A canonical surgical route name (lower-cased, whitespace-normalized)."""

    canonical: str


def normalize_route_text(raw: str) -> str:
    return re.sub(r"\s+", " ", raw.strip().lower())


# Alias tables map a normalized alias to its canonical form.
AliasTable = Mapping[str, str]


def canonicalize_route(raw: str, aliases: AliasTable | None = None) -> RouteLabel:
    """Resolve a raw route mention to its canonical label.

    Resolution is deterministic: an exact alias hit replaces the whole text;
    otherwise the longest alias occurring inside the text wins (ties broken
    lexicographically); otherwise the normalized text stands as-is.
    Idempotent: canonical values are returned unchanged.
    """
    text = normalize_route_text(raw)
    if not text:
        raise EmptyRoute("route text is blank")
    table = aliases or {}
    canonicals = set(table.values())
    if text in canonicals:
        return RouteLabel(text)
    if text in table:
        return RouteLabel(table[text])
    hits = [a for a in table if re.search(rf"\b{re.escape(a)}\b", text)]
    if hits:
        best = sorted(hits, key=lambda a: (-len(a), a))[0]
        return RouteLabel(table[best])
    return RouteLabel(text)


@dataclass(frozen=True)
class PlanStep:
    """One procedural step; non-canonical steps carry synthetic ids."""

    step_id: str
    description: str
    phase: PhaseId
    canonical: bool = True


@dataclass(frozen=True)
class MriReport:
    findings: str
    impression: str = ""
    lesion_attributes: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Subtask:
    subtask_id: str
    description: str
    phase: PhaseId


class SubtaskTaxonomy:
    """Corpus-supplied inventory of subtasks, one ordered list per phase."""

    def __init__(self, by_phase: Mapping[PhaseId, Iterable[Subtask]]):
        self._by_phase: dict[PhaseId, tuple[Subtask, ...]] = {
            phase: tuple(by_phase.get(phase, ())) for phase in PHASE_ORDER
        }
        self._index: dict[str, Subtask] = {}
        for subtasks in self._by_phase.values():
            for st in subtasks:
                self._index[st.subtask_id] = st

    def for_phase(self, phase: PhaseId) -> tuple[Subtask, ...]:
        return self._by_phase[phase]

    def flattened(self) -> tuple[Subtask, ...]:
        return tuple(st for phase in PHASE_ORDER for st in self._by_phase[phase])

    def get(self, subtask_id: str) -> Subtask | None:
        return self._index.get(subtask_id)

    def __contains__(self, subtask_id: str) -> bool:
        return subtask_id in self._index

    def phase_of(self, subtask_id: str) -> PhaseId | None:
        st = self._index.get(subtask_id)
        return st.phase if st else None


class ActionKind(str, Enum):
    COMPLETE_SUBTASK = "complete_subtask"
    SELECT_ROUTE = "select_route"
    PROPOSE_PLAN = "propose_plan"
    RAISE_ALERT = "raise_alert"
    ADMINISTER = "administer"
    MONITOR = "monitor"
    NOOP = "noop"


@dataclass(frozen=True)
class Action:
    """A machine-readable act derived from an utterance."""

    kind: ActionKind
    subtask_id: str | None = None
    route: RouteLabel | None = None
    steps: tuple[PlanStep, ...] = ()
    text: str = ""

    @classmethod
    def complete_subtask(cls, subtask_id: str) -> "Action":
        return cls(ActionKind.COMPLETE_SUBTASK, subtask_id=subtask_id)

    @classmethod
    def select_route(cls, route: RouteLabel) -> "Action":
        return cls(ActionKind.SELECT_ROUTE, route=route)

    @classmethod
    def propose_plan(cls, steps: Iterable[PlanStep]) -> "Action":
        return cls(ActionKind.PROPOSE_PLAN, steps=tuple(steps))

    @classmethod
    def raise_alert(cls, text: str) -> "Action":
        return cls(ActionKind.RAISE_ALERT, text=text)

    @classmethod
    def administer(cls, text: str) -> "Action":
        return cls(ActionKind.ADMINISTER, text=text)

    @classmethod
    def monitor(cls, text: str) -> "Action":
        return cls(ActionKind.MONITOR, text=text)

    @classmethod
    def noop(cls) -> "Action":
        return cls(ActionKind.NOOP)


@dataclass(frozen=True)
class Utterance:
    """One transcript entry; seq numbers are 0..n-1 with no gaps."""

    seq: int
    tick: int
    phase: PhaseId
    speaker: RoleId
    text: str
    derived_action: Action | None = None
    origin: str = "agent"  # agent | human | system


@dataclass(frozen=True)
class EventTrigger:
    """A dialogue-triggered event; fires at most once per simulation."""

    event_id: str
    pattern: str  # case-insensitive regex over recent utterances
    payload: str
    priority: int = 0
    phase: PhaseId | None = None  # None = any phase


@dataclass(frozen=True)
class SurgicalCase:
    """A patient record with gold labels for route, plan, and subtasks."""

    case_id: str
    demographics: Mapping[str, str]
    history: str
    mri_report: MriReport | None
    disease_label: DiseaseLabel
    gold_route: RouteLabel
    gold_plan: tuple[PlanStep, ...]
    gold_subtasks: Mapping[PhaseId, tuple[str, ...]]
    synthetic: bool = False
    extra: Mapping[str, object] = field(default_factory=dict)

    def summary(self) -> str:
        """One-paragraph summary used for prompts and experience retrieval."""
        demo = ", ".join(f"{k}: {v}" for k, v in self.demographics.items())
        parts = [f"Case {self.case_id}.", f"Patient: {demo}." if demo else ""]
        parts.append(f"Condition: {self.disease_label.name}.")
        if self.history:
            parts.append(f"History: {self.history}")
        if self.mri_report is not None:
            parts.append(f"MRI findings: {self.mri_report.findings}")
            if self.mri_report.impression:
                parts.append(f"Impression: {self.mri_report.impression}")
            lesion = ", ".join(
                f"{k} {v}" for k, v in self.mri_report.lesion_attributes.items()
            )
            if lesion:
                parts.append(f"Lesion: {lesion}.")
        return " ".join(p for p in parts if p)


@dataclass(frozen=True)
class Violation:
    """A named invariant breach found by validate_case."""

    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


def validate_case(
    case: SurgicalCase, taxonomy: SubtaskTaxonomy | None = None
) -> list[Violation]:
    """Check case invariants; returns violations as data, never raises."""
    out: list[Violation] = []
    if not case.case_id.strip():
        out.append(Violation("case_id", "must be non-empty"))
    if not case.gold_plan:
        out.append(Violation("gold_plan", "must be non-empty"))
    seen_steps: set[str] = set()
    for step in case.gold_plan:
        if step.step_id in seen_steps:
            out.append(Violation("gold_plan", f"duplicate step_id {step.step_id!r}"))
        seen_steps.add(step.step_id)
    if not case.gold_route.canonical.strip():
        out.append(Violation("gold_route", "canonical must be non-empty"))
    if case.mri_report is not None and not case.mri_report.findings.strip():
        out.append(Violation("mri_report", "findings must be non-empty when present"))
    for phase, subtask_ids in case.gold_subtasks.items():
        for sid in subtask_ids:
            if taxonomy is None:
                continue
            owner = taxonomy.phase_of(sid)
            if owner is None:
                out.append(
                    Violation("gold_subtasks", f"{sid!r} not in taxonomy")
                )
            elif owner != phase:
                out.append(
                    Violation(
                        "gold_subtasks",
                        f"{sid!r} listed under {phase.value} but belongs to {owner.value}",
                    )
                )
    return out
