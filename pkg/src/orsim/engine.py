"""Turn-based episode engine: phase progression, rotation, events, budget.

The engine is deliberately free of randomness. Given the same case, roster,
and configuration it emits byte-identical transcripts, which is what makes
replay and regression comparison possible.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .agents import PlanVocabulary, RoleAgent, TurnContext, derive_action
from .domain import (
    PHASE_ORDER,
    Action,
    ActionKind,
    AliasTable,
    EventTrigger,
    PhaseId,
    PlanStep,
    RoleId,
    RouteLabel,
    SubtaskTaxonomy,
    SurgicalCase,
    Utterance,
    next_phase,
    validate_case,
)
from .errors import (
    AlreadyFinalized,
    DuplicateEvent,
    IncompleteRoster,
    InvalidCase,
    SimulationNotRunning,
)

DEFAULT_TURN_BUDGET = 20
RECENT_WINDOW = 4


@dataclass(frozen=True)
class SimulationConfig:
    """Per-run switches; the four ablation flags feed the eval fingerprint."""

    sim_id: str = ""
    seed: int = 0
    copilot_on: bool = True
    rag_on: bool = True
    long_memory_on: bool = True
    react_on: bool = True
    turn_budget: int = DEFAULT_TURN_BUDGET
    recent_window: int = RECENT_WINDOW

    def flags(self) -> dict[str, bool]:
        return {
            "copilot_on": self.copilot_on,
            "rag_on": self.rag_on,
            "long_memory_on": self.long_memory_on,
            "react_on": self.react_on,
        }


@dataclass(frozen=True)
class ExecutedSubtask:
    subtask_id: str
    phase: PhaseId
    seq: int
    tick: int


@dataclass(frozen=True)
class FiredEvent:
    event_id: str
    payload: str
    phase: PhaseId
    priority: int
    trigger_seq: int
    announce_seq: int | None = None


@dataclass(frozen=True)
class SimulationReport:
    """Complete record of one finished episode."""

    sim_id: str
    case_id: str
    config: SimulationConfig
    transcript: tuple[Utterance, ...]
    executed: tuple[ExecutedSubtask, ...]
    chosen_route: RouteLabel | None
    proposed_plan: tuple[PlanStep, ...]
    executed_plan: tuple[PlanStep, ...]
    events_fired: tuple[FiredEvent, ...]
    warnings: tuple[str, ...]
    ticks: int


class Simulation:
    """One surgical episode from transfer to postoperative care.

    advance_turn() is the only mutator. It moves the episode forward by at
    most one utterance, advancing at most one phase first, so a driver can
    single-step, pace, or hand turns to a human without special modes.
    """

    def __init__(
        self,
        case: SurgicalCase,
        roster: Mapping[RoleId, RoleAgent],
        config: SimulationConfig,
        taxonomy: SubtaskTaxonomy,
        turn_policy: Mapping[PhaseId, Sequence[RoleId]],
        triggers: Sequence[EventTrigger] = (),
        route_aliases: AliasTable | None = None,
        plan_vocab: PlanVocabulary | None = None,
    ):
        violations = validate_case(case, taxonomy)
        if violations:
            raise InvalidCase("; ".join(str(v) for v in violations))
        needed = {r for roles in turn_policy.values() for r in roles}
        if config.copilot_on:
            needed.add(RoleId.SURGERY_COPILOT)
        missing = sorted(r.value for r in needed if r not in roster)
        if missing:
            raise IncompleteRoster(f"roster lacks: {', '.join(missing)}")
        seen_ids: set[str] = set()
        for trig in triggers:
            if trig.event_id in seen_ids:
                raise DuplicateEvent(f"event_id {trig.event_id!r} registered twice")
            seen_ids.add(trig.event_id)

        self.case = case
        self.roster = dict(roster)
        self.config = config
        self.taxonomy = taxonomy
        self.turn_policy = {p: tuple(turn_policy.get(p, ())) for p in PHASE_ORDER}
        self.triggers = tuple(triggers)
        self.route_aliases = dict(route_aliases or {})
        self.plan_vocab = plan_vocab or PlanVocabulary(case.gold_plan)
        self.sim_id = config.sim_id or f"{case.case_id}-s{config.seed}"

        self.phase: PhaseId = PHASE_ORDER[0]
        self.tick = 0
        self.transcript: list[Utterance] = []
        self.executed: list[ExecutedSubtask] = []
        self.completed: set[str] = set()
        self.chosen_route: RouteLabel | None = None
        self.proposed_plan: tuple[PlanStep, ...] = ()
        self.events_fired: list[FiredEvent] = []
        self.warnings: list[str] = []
        self._fired_ids: set[str] = set()
        self._announce_queue: list[FiredEvent] = []
        self._phase_utterances = 0
        self._rotation_index = 0
        self._done = False
        self._finalized = False

        self._copilot_hook("begin_simulation", case, config)

    # --- public state ---

    @property
    def running(self) -> bool:
        return not self._done

    @property
    def finalized(self) -> bool:
        return self._finalized

    def pending_announcements(self) -> int:
        return len(self._announce_queue)

    def next_speaker(self) -> RoleId:
        """Who the next advance_turn() will voice (after any phase change)."""
        if self._announce_queue:
            # announcements are voiced by the circulating nurse
            return RoleId.ROOM_NURSE
        slots = self._slots(self.phase)
        return slots[self._rotation_index % len(slots)]

    # --- helpers ---

    def _copilot_hook(self, name: str, *args: object) -> None:
        agent = self.roster.get(RoleId.SURGERY_COPILOT)
        hook = getattr(agent, name, None)
        if callable(hook):
            hook(*args)

    def _slots(self, phase: PhaseId) -> tuple[RoleId, ...]:
        base = self.turn_policy[phase]
        if self.config.copilot_on:
            return base + (RoleId.SURGERY_COPILOT,)
        return base

    def _phase_subtasks(self, phase: PhaseId) -> tuple[str, ...]:
        return tuple(self.case.gold_subtasks.get(phase, ()))

    def _phase_complete(self, phase: PhaseId) -> bool:
        if self._phase_utterances == 0:
            return False
        if self._phase_utterances >= self.config.turn_budget:
            return True
        return all(sid in self.completed for sid in self._phase_subtasks(phase))

    def _pending_subtasks(self):
        return tuple(
            st
            for sid in self._phase_subtasks(self.phase)
            if (st := self.taxonomy.get(sid)) is not None
            and sid not in self.completed
        )

    def _turn_context(self) -> TurnContext:
        return TurnContext(
            case=self.case,
            phase=self.phase,
            recent=tuple(self.transcript[-self.config.recent_window :]),
            pending_subtasks=self._pending_subtasks(),
            taxonomy=self.taxonomy,
            route_aliases=self.route_aliases,
            plan_vocab=self.plan_vocab,
            rag_on=self.config.rag_on,
            react_on=self.config.react_on,
        )

    def _append(
        self, speaker: RoleId, text: str, action: Action | None, origin: str
    ) -> Utterance:
        utt = Utterance(
            seq=len(self.transcript),
            tick=self.tick,
            phase=self.phase,
            speaker=speaker,
            text=text,
            derived_action=action,
            origin=origin,
        )
        self.transcript.append(utt)
        self._phase_utterances += 1
        if self.config.copilot_on:
            self._copilot_hook("observe_utterance", utt)
        self._scan_triggers(utt)
        return utt

    def _scan_triggers(self, latest: Utterance) -> None:
        window = self.transcript[-self.config.recent_window :]
        fired_now: list[FiredEvent] = []
        for trig in self.triggers:
            if trig.event_id in self._fired_ids:
                continue
            if trig.phase is not None and trig.phase != self.phase:
                continue
            if any(re.search(trig.pattern, u.text, re.IGNORECASE) for u in window):
                self._fired_ids.add(trig.event_id)
                fired_now.append(
                    FiredEvent(
                        event_id=trig.event_id,
                        payload=trig.payload,
                        phase=self.phase,
                        priority=trig.priority,
                        trigger_seq=latest.seq,
                    )
                )
        if fired_now:
            # every firing is on the record, announced or not
            self.events_fired.extend(fired_now)
            self._announce_queue.extend(fired_now)
            self._announce_queue.sort(key=lambda e: (-e.priority, e.event_id))
            for ev in fired_now:
                if self.config.copilot_on:
                    self._copilot_hook("observe_event", ev)

    def inject_event(self, trigger: EventTrigger) -> FiredEvent:
        """Fire an event by hand, skipping pattern matching.

        The event joins the announcement queue like any pattern firing, so
        the next advance_turn() surfaces it (priority order) before the
        rotation resumes. trigger_seq is the latest utterance at injection
        time, -1 if nobody has spoken yet.
        """
        if self._finalized:
            raise AlreadyFinalized(f"{self.sim_id} is finalized")
        if self._done:
            raise SimulationNotRunning(f"{self.sim_id} awaits finalize()")
        if trigger.event_id in self._fired_ids:
            raise DuplicateEvent(f"event_id {trigger.event_id!r} already fired")
        self._fired_ids.add(trigger.event_id)
        ev = FiredEvent(
            event_id=trigger.event_id,
            payload=trigger.payload,
            phase=self.phase,
            priority=trigger.priority,
            trigger_seq=len(self.transcript) - 1,
        )
        self.events_fired.append(ev)
        self._announce_queue.append(ev)
        self._announce_queue.sort(key=lambda e: (-e.priority, e.event_id))
        if self.config.copilot_on:
            self._copilot_hook("observe_event", ev)
        return ev

    def _apply_action(self, speaker: RoleId, action: Action) -> None:
        if action.kind is ActionKind.COMPLETE_SUBTASK and action.subtask_id:
            sid = action.subtask_id
            if sid in self.completed:
                self.warnings.append(f"{speaker.value}: {sid} already complete")
                return
            owner = self.taxonomy.phase_of(sid)
            if owner != self.phase:
                self.warnings.append(
                    f"{speaker.value}: {sid} belongs to {owner.value if owner else '?'}, "
                    f"completed during {self.phase.value}"
                )
            self.completed.add(sid)
            self.executed.append(
                ExecutedSubtask(
                    subtask_id=sid,
                    phase=self.phase,
                    seq=len(self.transcript) - 1,
                    tick=self.tick,
                )
            )
        elif action.kind is ActionKind.SELECT_ROUTE and action.route:
            self.chosen_route = action.route
        elif action.kind is ActionKind.PROPOSE_PLAN and action.steps:
            self.proposed_plan = action.steps

    # --- the single mutator ---

    def advance_turn(self, human_text: str | None = None) -> list[Utterance]:
        """Produce the next utterance; returns what was added this call.

        Passing human_text voices the next rotation slot with the given
        words instead of calling that role's backend. The same directive
        grammar applies, so a human turn can complete subtasks too.
        """
        if self._finalized:
            raise AlreadyFinalized(f"{self.sim_id} is finalized")
        if self._done:
            raise SimulationNotRunning(f"{self.sim_id} awaits finalize()")

        self.tick += 1

        # Phase bookkeeping first: advance at most one phase per call, and
        # never leave a phase that has not spoken yet.
        if self._phase_complete(self.phase):
            nxt = next_phase(self.phase)
            if nxt is None:
                self._done = True
                return []
            self.phase = nxt
            self._phase_utterances = 0
            self._rotation_index = 0
            self._announce_queue = [
                ev for ev in self._announce_queue if ev.phase == self.phase
            ]

        if self._announce_queue:
            ev = self._announce_queue.pop(0)
            utt = self._append(
                RoleId.ROOM_NURSE,
                f"Event: {ev.payload}",
                None,
                origin="system",
            )
            slot = self.events_fired.index(ev)
            self.events_fired[slot] = replace(ev, announce_seq=utt.seq)
            return [utt]

        slots = self._slots(self.phase)
        speaker = slots[self._rotation_index % len(slots)]
        self._rotation_index += 1
        ctx = self._turn_context()

        if human_text is not None:
            action, warns = derive_action(speaker, human_text, ctx)
            self.warnings.extend(warns)
            utt = self._append(speaker, human_text, action, origin="human")
            self._apply_action(speaker, action)
            return [utt]

        agent = self.roster[speaker]
        reply = agent.generate_turn(ctx)
        self.warnings.extend(reply.warnings)
        utt = self._append(speaker, reply.text, reply.action, origin="agent")
        self._apply_action(speaker, reply.action)
        return [utt]

    def finalize(self) -> SimulationReport:
        """Close the episode and hand the report to the copilot hook."""
        if self._finalized:
            raise AlreadyFinalized(f"{self.sim_id} is finalized")
        self._done = True
        self._finalized = True
        report = SimulationReport(
            sim_id=self.sim_id,
            case_id=self.case.case_id,
            config=self.config,
            transcript=tuple(self.transcript),
            executed=tuple(self.executed),
            chosen_route=self.chosen_route,
            proposed_plan=self.proposed_plan,
            executed_plan=self._derive_executed_plan(),
            events_fired=tuple(self.events_fired),
            warnings=tuple(self.warnings),
            ticks=self.tick,
        )
        self._copilot_hook("on_finalize", report, self.case)
        return report

    def _derive_executed_plan(self) -> tuple[PlanStep, ...]:
        by_id = {step.step_id: step for step in self.case.gold_plan}
        steps = []
        for ex in self.executed:
            step = by_id.get(ex.subtask_id)
            if step is not None:
                steps.append(step)
        return tuple(steps)

    def run(self, max_calls: int = 10_000) -> SimulationReport:
        """Advance to completion, then finalize. Bounded against stalls."""
        calls = 0
        while self.running:
            if calls >= max_calls:
                raise SimulationNotRunning(
                    f"{self.sim_id} exceeded {max_calls} engine steps"
                )
            self.advance_turn()
            calls += 1
        return self.finalize()
