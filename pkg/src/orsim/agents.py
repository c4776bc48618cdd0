"""Role agents: prompt assembly, directive parsing, per-role action rules.

Agents never mutate simulation state. They read a TurnContext, call their
backend, and return text plus the action derived from it; the engine owns
everything that happens next.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .backends import Backend
from .domain import (
    Action,
    ActionKind,
    AliasTable,
    PhaseId,
    PlanStep,
    RoleId,
    Subtask,
    SubtaskTaxonomy,
    SurgicalCase,
    Utterance,
    canonicalize_route,
    normalize_route_text,
)
from .errors import EmptyRoute
from .knowledge import Hit, KnowledgeBank

DIRECTIVE = re.compile(r"^\s*\[\[ACTION:\s*([a-z_]+)\s*(?:=\s*(.*?))?\s*\]\]\s*$")

# What each role is allowed to do; anything else is downgraded to noop.
ALLOWED_ACTIONS: dict[RoleId, frozenset[ActionKind]] = {
    RoleId.PATIENT: frozenset({ActionKind.NOOP, ActionKind.MONITOR}),
    RoleId.CHIEF_SURGEON: frozenset(
        {
            ActionKind.COMPLETE_SUBTASK,
            ActionKind.SELECT_ROUTE,
            ActionKind.PROPOSE_PLAN,
            ActionKind.RAISE_ALERT,
            ActionKind.NOOP,
        }
    ),
    RoleId.SURGEON_ASSISTANT: frozenset(
        {ActionKind.COMPLETE_SUBTASK, ActionKind.RAISE_ALERT, ActionKind.NOOP}
    ),
    RoleId.SCRUB_NURSE: frozenset({ActionKind.COMPLETE_SUBTASK, ActionKind.NOOP}),
    RoleId.WARD_NURSE: frozenset(
        {ActionKind.COMPLETE_SUBTASK, ActionKind.MONITOR, ActionKind.NOOP}
    ),
    RoleId.ROOM_NURSE: frozenset({ActionKind.COMPLETE_SUBTASK, ActionKind.NOOP}),
    RoleId.ANESTHETIST: frozenset(
        {
            ActionKind.COMPLETE_SUBTASK,
            ActionKind.ADMINISTER,
            ActionKind.MONITOR,
            ActionKind.RAISE_ALERT,
            ActionKind.NOOP,
        }
    ),
    RoleId.SURGERY_COPILOT: frozenset(
        {
            ActionKind.SELECT_ROUTE,
            ActionKind.PROPOSE_PLAN,
            ActionKind.RAISE_ALERT,
            ActionKind.NOOP,
        }
    ),
}

PERSONAS: dict[RoleId, str] = {
    RoleId.PATIENT: "You are the patient. Answer questions about how you feel.",
    RoleId.CHIEF_SURGEON: "You are the chief surgeon leading this operation.",
    RoleId.SURGEON_ASSISTANT: "You assist the chief surgeon at the table.",
    RoleId.SCRUB_NURSE: "You are the scrub nurse managing sterile instruments.",
    RoleId.WARD_NURSE: "You are the ward nurse handling transfer and recovery.",
    RoleId.ROOM_NURSE: "You are the circulating room nurse.",
    RoleId.ANESTHETIST: "You are the anesthetist responsible for sedation and vitals.",
    RoleId.SURGERY_COPILOT: (
        "You are the surgery copilot, an assistant that advises the team on "
        "route selection, planning, and intraoperative risks."
    ),
}


def extract_directive(text: str) -> tuple[str, str] | None:
    """First [[ACTION: key=value]] line in the text, if any."""
    for line in text.splitlines():
        m = DIRECTIVE.match(line)
        if m:
            return m.group(1), m.group(2) or ""
    return None


class PlanVocabulary:
    """Maps free-text plan step mentions onto canonical steps.

    Unrecognized mentions still become steps (so a proposed plan is never
    silently truncated), just marked non-canonical with a synthetic id.
    """

    def __init__(self, steps: Iterable[PlanStep], aliases: AliasTable | None = None):
        self.steps = tuple(steps)
        self._by_key: dict[str, PlanStep] = {}
        for step in self.steps:
            self._by_key[normalize_route_text(step.step_id)] = step
            self._by_key.setdefault(normalize_route_text(step.description), step)
        for alias, step_id in (aliases or {}).items():
            target = self._by_key.get(normalize_route_text(step_id))
            if target is not None:
                self._by_key[normalize_route_text(alias)] = target

    def resolve(self, raw: str, default_phase: PhaseId) -> PlanStep | None:
        text = normalize_route_text(raw)
        if not text:
            return None
        hit = self._by_key.get(text)
        if hit is not None:
            return hit
        slug = re.sub(r"[^a-z0-9]+", "-", text).strip("-")[:40]
        return PlanStep(
            step_id=f"adhoc-{slug}",
            description=raw.strip(),
            phase=default_phase,
            canonical=False,
        )


@dataclass
class TurnContext:
    """Everything an agent may look at when producing one turn."""

    case: SurgicalCase
    phase: PhaseId
    recent: Sequence[Utterance]
    pending_subtasks: tuple[Subtask, ...]
    taxonomy: SubtaskTaxonomy
    route_aliases: AliasTable = field(default_factory=dict)
    plan_vocab: PlanVocabulary | None = None
    rag_on: bool = True
    react_on: bool = True
    extra: Mapping[str, str] = field(default_factory=dict)

    def next_subtask_id(self) -> str:
        return self.pending_subtasks[0].subtask_id if self.pending_subtasks else "none"


@dataclass(frozen=True)
class AgentReply:
    text: str
    action: Action
    warnings: tuple[str, ...] = ()
    retrieved: tuple[Hit, ...] = ()


def derive_action(
    role: RoleId, text: str, ctx: TurnContext
) -> tuple[Action, list[str]]:
    """Turn the directive in an utterance into a validated Action.

    Anything the grammar rejects collapses to noop with a warning; the
    utterance itself is always kept.
    """
    found = extract_directive(text)
    if found is None:
        return Action.noop(), []
    key, value = found
    warnings: list[str] = []
    try:
        kind = ActionKind(key)
    except ValueError:
        return Action.noop(), [f"{role.value}: unknown directive {key!r}"]
    if kind not in ALLOWED_ACTIONS[role]:
        return Action.noop(), [f"{role.value}: directive {key!r} not permitted"]

    if kind is ActionKind.COMPLETE_SUBTASK:
        sid = value.strip()
        if sid not in ctx.taxonomy:
            return Action.noop(), [f"{role.value}: unknown subtask {sid!r}"]
        return Action.complete_subtask(sid), warnings
    if kind is ActionKind.SELECT_ROUTE:
        try:
            route = canonicalize_route(value, ctx.route_aliases)
        except EmptyRoute:
            return Action.noop(), [f"{role.value}: select_route with empty value"]
        return Action.select_route(route), warnings
    if kind is ActionKind.PROPOSE_PLAN:
        vocab = ctx.plan_vocab or PlanVocabulary(ctx.case.gold_plan)
        steps = []
        for part in value.split(";"):
            step = vocab.resolve(part, ctx.phase)
            if step is not None:
                steps.append(step)
        if not steps:
            return Action.noop(), [f"{role.value}: propose_plan with no steps"]
        return Action.propose_plan(steps), warnings
    if kind is ActionKind.RAISE_ALERT:
        return Action.raise_alert(value.strip()), warnings
    if kind is ActionKind.ADMINISTER:
        return Action.administer(value.strip()), warnings
    if kind is ActionKind.MONITOR:
        return Action.monitor(value.strip()), warnings
    return Action.noop(), warnings


def _menu(role: RoleId) -> str:
    kinds = sorted(k.value for k in ALLOWED_ACTIONS[role])
    return (
        "To act, finish with one line of the form [[ACTION: kind=value]] "
        f"using one of: {', '.join(kinds)}."
    )


class RoleAgent:
    """One operating-room participant backed by a text generator."""

    def __init__(
        self,
        role: RoleId,
        backend: Backend,
        bank: KnowledgeBank | None = None,
        persona: str | None = None,
        retrieval_k: int = 3,
    ):
        self.role = role
        self.backend = backend
        self.bank = bank
        self.persona = persona or PERSONAS[role]
        self.retrieval_k = retrieval_k

    def _retrieve(self, ctx: TurnContext) -> tuple[Hit, ...]:
        if not ctx.rag_on or self.bank is None:
            return ()
        query_parts = [ctx.case.disease_label.name, ctx.phase.value]
        if ctx.recent:
            query_parts.append(ctx.recent[-1].text)
        return tuple(self.bank.search(" ".join(query_parts), self.retrieval_k))

    def build_prompt(self, ctx: TurnContext, retrieved: Sequence[Hit]) -> str:
        lines = [self.persona, "", ctx.case.summary(), f"Current phase: {ctx.phase.value}."]
        if ctx.pending_subtasks:
            pending = ", ".join(st.subtask_id for st in ctx.pending_subtasks)
            lines.append(f"Open subtasks this phase: {pending}.")
        if retrieved:
            lines.append("Reference material:")
            for hit in retrieved:
                snippet = " ".join(hit.chunk.text.split())[:300]
                lines.append(f"- [{hit.chunk.chunk_id}] {snippet}")
        if ctx.recent:
            lines.append("Recent dialogue:")
            for utt in ctx.recent:
                lines.append(f"{utt.speaker.value}: {utt.text}")
        if ctx.react_on:
            lines.append(
                "Reason first: restate the situation in one sentence, "
                "then give your reply and choose a single action."
            )
        lines.append(_menu(self.role))
        return "\n".join(lines)

    def generate_turn(self, ctx: TurnContext) -> AgentReply:
        retrieved = self._retrieve(ctx)
        prompt = self.build_prompt(ctx, retrieved)
        context = {
            "role": self.role.value,
            "phase": ctx.phase.value,
            "case_id": ctx.case.case_id,
            "disease": ctx.case.disease_label.name,
            "next_subtask": ctx.next_subtask_id(),
            **dict(ctx.extra),
        }
        text = self.backend.generate(self.role, ctx.phase, prompt, context)
        action, warnings = derive_action(self.role, text, ctx)
        return AgentReply(
            text=text, action=action, warnings=tuple(warnings), retrieved=retrieved
        )
