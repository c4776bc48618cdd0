"""Surgery copilot: route and plan decisions, stage guidance, memory.

Short memory lives for one simulation and is wiped at finalize. Long
memory is an append-only experience log that survives across runs; each
finished episode contributes one record with extracted lessons, and new
episodes retrieve the lessons of similar past cases.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .agents import AgentReply, RoleAgent, TurnContext, derive_action
from .backends import Backend
from .domain import Action, ActionKind, PhaseId, RoleId, SurgicalCase, Utterance
from .engine import FiredEvent, SimulationConfig, SimulationReport
from .errors import (
    AppendAfterFinalize,
    DuplicateRecord,
    EmptyPlan,
    NoRouteEmitted,
    ParseError,
)
from .evaluation import CaseResult, evaluate_report
from .knowledge import HashEmbedder, KnowledgeBank

LONGMEM_FORMAT = "longmem/1"


# --- short memory ---


@dataclass(frozen=True)
class ShortEntry:
    entry_id: str
    kind: str  # dialogue | event | retrieval | decision
    text: str
    phase: PhaseId
    tick: int
    refs: tuple[str, ...] = ()


class ShortMemory:
    """Working memory for one episode; cleared when the episode finalizes."""

    def __init__(self) -> None:
        self._entries: list[ShortEntry] = []
        self._closed = False

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[ShortEntry, ...]:
        return tuple(self._entries)

    def add(
        self,
        kind: str,
        text: str,
        phase: PhaseId,
        tick: int,
        refs: Sequence[str] = (),
    ) -> ShortEntry:
        if self._closed:
            raise AppendAfterFinalize("short memory was finalized")
        entry = ShortEntry(
            entry_id=f"sm-{len(self._entries)}",
            kind=kind,
            text=text,
            phase=phase,
            tick=tick,
            refs=tuple(refs),
        )
        self._entries.append(entry)
        return entry

    def recent(self, k: int, kind: str | None = None) -> tuple[ShortEntry, ...]:
        pool = [e for e in self._entries if kind is None or e.kind == kind]
        return tuple(pool[-k:])

    def finalize(self) -> None:
        """Close and wipe; the episode's residue must not leak forward."""
        self._closed = True
        self._entries.clear()


# --- long memory ---


@dataclass(frozen=True)
class ExperienceRecord:
    record_id: str
    case_id: str
    disease: str
    outcome: str  # a FailureKind value, or "success"
    route_score: float
    plan_score: float
    lessons: tuple[str, ...]
    summary: str = ""  # case summary at record time; ranking compares summaries

    def searchable_text(self) -> str:
        # records written before the summary field fall back to lesson text
        return self.summary or " ".join([self.disease, self.outcome, *self.lessons])


@dataclass(frozen=True)
class RetrievedLesson:
    lesson_id: str  # lesson-<record_id>-<i>
    record_id: str
    text: str
    score: float


class LongMemory:
    """Append-only experience store, optionally backed by a JSONL file.

    The file starts with a header line carrying the format version;
    every later line is one record. Appends flush immediately so parallel
    readers always see complete lines.
    """

    def __init__(self, path: str | Path | None = None, embedder: HashEmbedder | None = None):
        self.path = Path(path) if path is not None else None
        self.embedder = embedder or HashEmbedder()
        self._records: list[ExperienceRecord] = []
        self._vectors: list[np.ndarray] = []
        self._ids: set[str] = set()
        if self.path is not None and self.path.exists():
            self._load()
        elif self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", encoding="utf-8") as fh:
                fh.write(json.dumps({"format_version": LONGMEM_FORMAT}) + "\n")

    def _load(self) -> None:
        assert self.path is not None
        with open(self.path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            version = header.get("format_version", "")
            if not str(version).startswith("longmem/"):
                raise ParseError(f"not an experience log: {self.path}")
            for line in fh:
                line = line.strip()
                if line:
                    self._ingest(_record_from_dict(json.loads(line)))

    def _ingest(self, record: ExperienceRecord) -> None:
        if record.record_id in self._ids:
            raise DuplicateRecord(f"record {record.record_id!r} already stored")
        self._ids.add(record.record_id)
        self._records.append(record)
        self._vectors.append(self.embedder.embed(record.searchable_text()))

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> tuple[ExperienceRecord, ...]:
        return tuple(self._records)

    def append(self, record: ExperienceRecord) -> None:
        self._ingest(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(asdict(record)) + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def retrieve(
        self, query: str, k: int = 3, disease: str | None = None
    ) -> list[RetrievedLesson]:
        """Lessons of the k most similar past episodes, best first.

        With disease set, only records matching it exactly are candidates;
        similarity never reaches across labels.
        """
        candidates = [
            i
            for i, r in enumerate(self._records)
            if disease is None or r.disease == disease
        ]
        if not candidates or k <= 0:
            return []
        qvec = self.embedder.embed(query)
        scores = [float(v @ qvec) for v in self._vectors]
        order = sorted(
            candidates,
            key=lambda i: (-scores[i], self._records[i].record_id),
        )
        out: list[RetrievedLesson] = []
        for i in order[:k]:
            rec = self._records[i]
            for j, lesson in enumerate(rec.lessons):
                out.append(
                    RetrievedLesson(
                        lesson_id=f"lesson-{rec.record_id}-{j}",
                        record_id=rec.record_id,
                        text=lesson,
                        score=scores[i],
                    )
                )
        return out

    def compact(self, max_per_case: int = 5) -> int:
        """Keep only the newest records per case; returns how many were dropped.

        Rewrites the backing file atomically when one exists.
        """
        kept: list[ExperienceRecord] = []
        seen_per_case: dict[str, int] = {}
        for rec in reversed(self._records):
            n = seen_per_case.get(rec.case_id, 0)
            if n < max_per_case:
                kept.append(rec)
                seen_per_case[rec.case_id] = n + 1
        kept.reverse()
        dropped = len(self._records) - len(kept)
        self._records = kept
        self._ids = {r.record_id for r in kept}
        self._vectors = [self.embedder.embed(r.searchable_text()) for r in kept]
        if self.path is not None:
            tmp = self.path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(json.dumps({"format_version": LONGMEM_FORMAT}) + "\n")
                for rec in kept:
                    fh.write(json.dumps(asdict(rec)) + "\n")
            tmp.replace(self.path)
        return dropped


def _record_from_dict(payload: Mapping[str, object]) -> ExperienceRecord:
    return ExperienceRecord(
        record_id=str(payload["record_id"]),
        case_id=str(payload["case_id"]),
        disease=str(payload["disease"]),
        outcome=str(payload["outcome"]),
        route_score=float(payload["route_score"]),  # type: ignore[arg-type]
        plan_score=float(payload["plan_score"]),  # type: ignore[arg-type]
        lessons=tuple(str(x) for x in payload.get("lessons", ())),  # type: ignore[union-attr]
        summary=str(payload.get("summary", "")),
    )


def extract_lessons(result: CaseResult, case: SurgicalCase) -> tuple[str, ...]:
    """Short imperative takeaways, one flavor per diagnosed outcome."""
    route = case.gold_route.canonical
    plan_ids = ", ".join(s.step_id for s in case.gold_plan)
    disease = case.disease_label.name
    lessons = []
    if result.failure is None:
        lessons.append(f"For {disease}, route {route} with plan {plan_ids} succeeded.")
    else:
        kind = result.failure.value
        if kind == "misjudged_initial_approach":
            lessons.append(f"For {disease}, the correct route is {route}.")
        elif kind == "multi_situation_overload":
            lessons.append(
                f"Under stacked events with {disease}, alert early and requeue "
                "unfinished subtasks before the phase turns over."
            )
        elif kind == "rare_disease_hallucination":
            lessons.append(
                f"Stay with the documented diagnosis {disease}; do not drift "
                "to other conditions."
            )
        else:
            lessons.append(f"For {disease}, complete the full plan: {plan_ids}.")
    return tuple(lessons)


# --- the copilot agent ---


class CopilotAgent(RoleAgent):
    """Advisory participant with scheduled duties.

    Its first interleaved turn commits a route, its second proposes the
    operative plan, and every later turn surveys short memory for unhandled
    events and either raises a cited alert or reports steady progress.
    Route and plan deliberately ignore short memory: they must depend only
    on the case record, reference material, and past-episode lessons.
    """

    def __init__(
        self,
        backend: Backend,
        bank: KnowledgeBank | None = None,
        long_memory: LongMemory | None = None,
        retrieval_k: int = 3,
        lesson_k: int = 2,
    ):
        super().__init__(RoleId.SURGERY_COPILOT, backend, bank, retrieval_k=retrieval_k)
        self.long_memory = long_memory
        self.lesson_k = lesson_k
        self.short: ShortMemory = ShortMemory()
        self._slot = 0
        self._case: SurgicalCase | None = None
        self._config: SimulationConfig | None = None
        self._lessons: tuple[RetrievedLesson, ...] = ()
        self._alerted_events: set[str] = set()
        self._active = False
        self._last_report: SimulationReport | None = None

    # --- engine hooks ---

    def begin_simulation(self, case: SurgicalCase, config: SimulationConfig) -> None:
        self.short = ShortMemory()
        self._slot = 0
        self._case = case
        self._config = config
        self._alerted_events = set()
        self._active = True
        self._lessons = ()
        if config.long_memory_on and self.long_memory is not None:
            self._lessons = tuple(
                self.long_memory.retrieve(
                    case.summary(),
                    self.lesson_k,
                    disease=case.disease_label.name,
                )
            )

    def observe_utterance(self, utt: Utterance) -> None:
        if not self._active:
            return
        self.short.add("dialogue", f"{utt.speaker.value}: {utt.text}", utt.phase, utt.tick)

    def observe_event(self, ev: FiredEvent) -> None:
        if not self._active:
            return
        self.short.add("event", ev.payload, ev.phase, ev.trigger_seq, refs=(ev.event_id,))

    def on_finalize(self, report: SimulationReport, case: SurgicalCase) -> None:
        if not self._active:
            return
        result = evaluate_report(report, case)
        config = self._config or SimulationConfig()
        if config.long_memory_on and self.long_memory is not None:
            record = ExperienceRecord(
                record_id=report.sim_id,
                case_id=case.case_id,
                disease=case.disease_label.name,
                outcome=result.failure.value if result.failure else "success",
                route_score=result.route_score,
                plan_score=result.plan_score,
                lessons=extract_lessons(result, case),
                summary=case.summary(),
            )
            self.long_memory.append(record)
        self.short.finalize()
        self._last_report = report
        self._active = False

    # --- scheduled duties ---

    def generate_turn(self, ctx: TurnContext) -> AgentReply:
        slot = self._slot
        self._slot += 1
        if slot == 0:
            return self._select_route(ctx)
        if slot == 1:
            return self._generate_plan(ctx)
        return self._guide_stage(ctx)

    def _decision_prompt(self, ctx: TurnContext, instruction: str) -> tuple[str, tuple]:
        retrieved = self._retrieve(ctx)
        lines = [self.persona, "", ctx.case.summary()]
        if self._lessons:
            lines.append("Lessons from similar past cases:")
            for lesson in self._lessons:
                lines.append(f"- [{lesson.lesson_id}] {lesson.text}")
        if retrieved:
            lines.append("Reference material:")
            for hit in retrieved:
                snippet = " ".join(hit.chunk.text.split())[:300]
                lines.append(f"- [{hit.chunk.chunk_id}] {snippet}")
        if ctx.react_on:
            lines.append("Weigh the evidence step by step before committing.")
        lines.append(instruction)
        return "\n".join(lines), retrieved

    def _ask(self, ctx: TurnContext, prompt: str) -> str:
        context = {
            "role": self.role.value,
            "phase": ctx.phase.value,
            "case_id": ctx.case.case_id,
            "disease": ctx.case.disease_label.name,
            "next_subtask": ctx.next_subtask_id(),
        }
        return self.backend.generate(self.role, ctx.phase, prompt, context)

    def _select_route(self, ctx: TurnContext) -> AgentReply:
        prompt, retrieved = self._decision_prompt(
            ctx,
            "Commit to a surgical route now with "
            "[[ACTION: select_route=<route name>]].",
        )
        text = self._ask(ctx, prompt)
        action, warnings = derive_action(self.role, text, ctx)
        if action.kind is not ActionKind.SELECT_ROUTE:
            text = self._ask(
                ctx, prompt + "\nAnswer again with the select_route action line."
            )
            action, more = derive_action(self.role, text, ctx)
            warnings = [*warnings, *more]
            if action.kind is not ActionKind.SELECT_ROUTE:
                raise NoRouteEmitted(
                    f"copilot produced no route for {ctx.case.case_id}"
                )
        self.short.add(
            "decision",
            f"route={action.route.canonical if action.route else ''}",
            ctx.phase,
            0,
        )
        return AgentReply(text=text, action=action, warnings=tuple(warnings), retrieved=retrieved)

    def _generate_plan(self, ctx: TurnContext) -> AgentReply:
        prompt, retrieved = self._decision_prompt(
            ctx,
            "Propose the ordered operative plan with "
            "[[ACTION: propose_plan=<step;step;...>]].",
        )
        text = self._ask(ctx, prompt)
        action, warnings = derive_action(self.role, text, ctx)
        if action.kind is not ActionKind.PROPOSE_PLAN or not action.steps:
            text = self._ask(
                ctx, prompt + "\nAnswer again with the propose_plan action line."
            )
            action, more = derive_action(self.role, text, ctx)
            warnings = [*warnings, *more]
            if action.kind is not ActionKind.PROPOSE_PLAN or not action.steps:
                raise EmptyPlan(f"copilot produced no plan for {ctx.case.case_id}")
        self.short.add(
            "decision",
            "plan=" + ";".join(s.step_id for s in action.steps),
            ctx.phase,
            0,
        )
        return AgentReply(text=text, action=action, warnings=tuple(warnings), retrieved=retrieved)

    def _citation_source(self, ctx: TurnContext) -> str:
        """Best available source id; guidance never goes out uncited."""
        recent = self.short.recent(1)
        if recent:
            return recent[-1].entry_id
        if self.bank is not None and ctx.rag_on:
            hits = self.bank.search(ctx.case.disease_label.name, 1)
            if hits:
                return hits[0].chunk.chunk_id
        if self._lessons:
            return self._lessons[0].lesson_id
        return "case-record"

    def _guide_stage(self, ctx: TurnContext) -> AgentReply:
        pending_events = [
            e
            for e in self.short.entries
            if e.kind == "event"
            and e.phase == ctx.phase
            and e.refs
            and e.refs[0] not in self._alerted_events
        ]
        if pending_events:
            entry = pending_events[0]
            self._alerted_events.add(entry.refs[0])
            text = (
                f"Alert: {entry.text} Prioritize this before continuing. "
                f"[cites: {entry.entry_id}]"
            )
            action = Action.raise_alert(entry.text)
            self.short.add("decision", f"alert={entry.refs[0]}", ctx.phase, 0)
            return AgentReply(text=text, action=action)
        done = len(ctx.case.gold_subtasks.get(ctx.phase, ())) - len(ctx.pending_subtasks)
        total = len(ctx.case.gold_subtasks.get(ctx.phase, ()))
        src = self._citation_source(ctx)
        text = (
            f"Status: {ctx.phase.value} at {done}/{total} subtasks; "
            f"no open risks. [cites: {src}]"
        )
        return AgentReply(text=text, action=Action.noop())

    # --- ad-hoc consultation (service endpoint) ---

    def answer_query(self, question: str, k: int = 3) -> str:
        """Cited answer over the live situation plus reference chunks.

        Live episodes answer from the case record and recent working-memory
        entries; finalized ones answer over the stored transcript and say so.
        Reads only; a query never moves the turn order.
        """
        parts: list[str] = []
        if self._active and self._case is not None:
            entries = self.short.entries
            phase = entries[-1].phase if entries else PhaseId.PATIENT_TRANSFER
            parts.append(
                f"[case:{self._case.case_id}] {self._case.disease_label.name}; "
                f"current stage {phase.value}."
            )
            for entry in self.short.recent(k):
                snippet = " ".join(entry.text.split())[:200]
                parts.append(f"[{entry.entry_id}] {snippet}")
        elif self._last_report is not None:
            report = self._last_report
            parts.append(
                f"[post-op] episode {report.sim_id} is finalized; "
                f"answering over the full transcript ({len(report.transcript)} utterances)."
            )
            for utt in report.transcript[-k:]:
                snippet = " ".join(utt.text.split())[:200]
                parts.append(f"[t{utt.seq}] {utt.speaker.value}: {snippet}")
        if self.bank is not None:
            for hit in self.bank.search(question, k):
                snippet = " ".join(hit.chunk.text.split())[:200]
                parts.append(f"[{hit.chunk.chunk_id}] {snippet}")
        if not parts:
            return "No reference material available for that question."
        return "\n".join(parts)
