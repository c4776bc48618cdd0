"""On-disk formats: cases, corpora, transcripts, reports.

Every file carries a format_version of the form family/major. Readers
accept any file whose family matches and whose major version is one they
know; anything else is refused up front instead of half-parsed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .domain import (
    Action,
    ActionKind,
    DiseaseLabel,
    EventTrigger,
    MriReport,
    PhaseId,
    PlanStep,
    RoleId,
    RouteLabel,
    SurgicalCase,
    Utterance,
)
from .engine import (
    ExecutedSubtask,
    FiredEvent,
    SimulationConfig,
    SimulationReport,
)
from .errors import ParseError, ValidationError

CASE_FORMAT = "case/1"
CORPUS_FORMAT = "corpus/1"
TRANSCRIPT_FORMAT = "transcript/1"
REPORT_FORMAT = "report/1"


def check_format(payload: Mapping[str, object], family: str, supported_major: int = 1) -> int:
    raw = payload.get("format_version")
    if not isinstance(raw, str) or "/" not in raw:
        raise ParseError(f"missing or malformed format_version: {raw!r}")
    fam, _, major_text = raw.partition("/")
    if fam != family:
        raise ParseError(f"expected a {family} file, found {raw!r}")
    try:
        major = int(major_text)
    except ValueError as exc:
        raise ParseError(f"non-numeric format major in {raw!r}") from exc
    if not 1 <= major <= supported_major:
        raise ParseError(f"unsupported {family} major version {major}")
    return major


def _enum(cls, value: object, what: str):
    try:
        return cls(value)
    except ValueError as exc:
        raise ValidationError(f"bad {what}: {value!r}") from exc


# --- actions on the wire ---


def action_to_wire(action: Action | None) -> str | None:
    if action is None:
        return None
    kind = action.kind
    if kind is ActionKind.COMPLETE_SUBTASK:
        return f"complete_subtask={action.subtask_id}"
    if kind is ActionKind.SELECT_ROUTE:
        return f"select_route={action.route.canonical if action.route else ''}"
    if kind is ActionKind.PROPOSE_PLAN:
        return "propose_plan=" + ";".join(s.step_id for s in action.steps)
    if kind is ActionKind.NOOP:
        return "noop"
    return f"{kind.value}={action.text}"


def action_from_wire(wire: str | None, phase: PhaseId) -> Action | None:
    """Reverse of action_to_wire. Plan steps come back id-only."""
    if wire is None:
        return None
    key, _, value = wire.partition("=")
    kind = _enum(ActionKind, key, "action kind")
    if kind is ActionKind.COMPLETE_SUBTASK:
        return Action.complete_subtask(value)
    if kind is ActionKind.SELECT_ROUTE:
        return Action.select_route(RouteLabel(value))
    if kind is ActionKind.PROPOSE_PLAN:
        steps = tuple(
            PlanStep(step_id=sid, description=sid, phase=phase)
            for sid in value.split(";")
            if sid
        )
        return Action.propose_plan(steps)
    if kind is ActionKind.NOOP:
        return Action.noop()
    return Action(kind, text=value)


# --- plan steps ---


def _step_to_dict(step: PlanStep) -> dict:
    return {
        "step_id": step.step_id,
        "description": step.description,
        "phase": step.phase.value,
        "canonical": step.canonical,
    }


def _step_from_dict(payload: Mapping[str, object]) -> PlanStep:
    return PlanStep(
        step_id=str(payload["step_id"]),
        description=str(payload.get("description", "")),
        phase=_enum(PhaseId, payload.get("phase"), "plan step phase"),
        canonical=bool(payload.get("canonical", True)),
    )


# --- cases ---


@dataclass(frozen=True)
class CaseFile:
    """A stored case plus the dialogue events scripted for it."""

    case: SurgicalCase
    triggers: tuple[EventTrigger, ...] = ()


def case_to_dict(bundle: CaseFile) -> dict:
    case = bundle.case
    payload: dict = {
        "format_version": CASE_FORMAT,
        "case_id": case.case_id,
        "demographics": dict(case.demographics),
        "history": case.history,
        "mri_report": None,
        "disease": {"code": case.disease_label.code, "name": case.disease_label.name},
        "gold_route": case.gold_route.canonical,
        "gold_plan": [_step_to_dict(s) for s in case.gold_plan],
        "gold_subtasks": {
            phase.value: list(ids) for phase, ids in case.gold_subtasks.items()
        },
        "synthetic": case.synthetic,
        "extra": dict(case.extra),
        "triggers": [
            {
                "event_id": t.event_id,
                "pattern": t.pattern,
                "payload": t.payload,
                "priority": t.priority,
                "phase": t.phase.value if t.phase else None,
            }
            for t in bundle.triggers
        ],
    }
    if case.mri_report is not None:
        payload["mri_report"] = {
            "findings": case.mri_report.findings,
            "impression": case.mri_report.impression,
            "lesion_attributes": dict(case.mri_report.lesion_attributes),
        }
    return payload


def case_from_dict(payload: Mapping[str, object]) -> CaseFile:
    check_format(payload, "case")
    mri = None
    mri_raw = payload.get("mri_report")
    if isinstance(mri_raw, Mapping):
        mri = MriReport(
            findings=str(mri_raw.get("findings", "")),
            impression=str(mri_raw.get("impression", "")),
            lesion_attributes={
                str(k): str(v)
                for k, v in dict(mri_raw.get("lesion_attributes", {})).items()
            },
        )
    disease_raw = payload.get("disease")
    if not isinstance(disease_raw, Mapping) or "name" not in disease_raw:
        raise ValidationError("case is missing its disease label")
    subtasks: dict[PhaseId, tuple[str, ...]] = {}
    for phase_text, ids in dict(payload.get("gold_subtasks", {})).items():
        phase = _enum(PhaseId, phase_text, "subtask phase")
        subtasks[phase] = tuple(str(x) for x in ids)
    case = SurgicalCase(
        case_id=str(payload.get("case_id", "")),
        demographics={
            str(k): str(v) for k, v in dict(payload.get("demographics", {})).items()
        },
        history=str(payload.get("history", "")),
        mri_report=mri,
        disease_label=DiseaseLabel(
            code=str(disease_raw.get("code", "other")),
            name=str(disease_raw["name"]),
        ),
        gold_route=RouteLabel(str(payload.get("gold_route", ""))),
        gold_plan=tuple(
            _step_from_dict(s) for s in payload.get("gold_plan", [])  # type: ignore[union-attr]
        ),
        gold_subtasks=subtasks,
        synthetic=bool(payload.get("synthetic", False)),
        extra=dict(payload.get("extra", {})),  # type: ignore[arg-type]
    )
    triggers = tuple(
        EventTrigger(
            event_id=str(t["event_id"]),
            pattern=str(t.get("pattern", "")),
            payload=str(t.get("payload", "")),
            priority=int(t.get("priority", 0)),
            phase=_enum(PhaseId, t["phase"], "trigger phase") if t.get("phase") else None,
        )
        for t in payload.get("triggers", [])  # type: ignore[union-attr]
    )
    return CaseFile(case=case, triggers=triggers)


def save_case(bundle: CaseFile, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(case_to_dict(bundle), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_case(path: str | Path) -> CaseFile:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return case_from_dict(payload)


# --- corpora ---


@dataclass(frozen=True)
class Corpus:
    name: str
    bundles: tuple[CaseFile, ...]
    route_aliases: Mapping[str, str]

    @property
    def cases(self) -> tuple[SurgicalCase, ...]:
        return tuple(b.case for b in self.bundles)


def save_corpus(corpus: Corpus, directory: str | Path) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    filenames = []
    for bundle in corpus.bundles:
        filename = f"{bundle.case.case_id}.json"
        save_case(bundle, root / filename)
        filenames.append(filename)
    manifest = {
        "format_version": CORPUS_FORMAT,
        "name": corpus.name,
        "cases": filenames,
        "route_aliases": dict(corpus.route_aliases),
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_corpus(directory: str | Path) -> Corpus:
    root = Path(directory)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ParseError(f"no manifest.json in {root}")
    payload = json.loads(manifest_path.read_text(encoding="utf-8"))
    check_format(payload, "corpus")
    bundles = tuple(
        load_case(root / str(name)) for name in payload.get("cases", [])
    )
    return Corpus(
        name=str(payload.get("name", root.name)),
        bundles=bundles,
        route_aliases={
            str(k): str(v)
            for k, v in dict(payload.get("route_aliases", {})).items()
        },
    )


# --- transcripts ---


def utterance_to_dict(utt: Utterance) -> dict:
    return {
        "seq": utt.seq,
        "tick": utt.tick,
        "phase": utt.phase.value,
        "speaker": utt.speaker.value,
        "text": utt.text,
        "action": action_to_wire(utt.derived_action),
        "origin": utt.origin,
    }


def utterance_from_dict(payload: Mapping[str, object]) -> Utterance:
    phase = _enum(PhaseId, payload.get("phase"), "phase")
    return Utterance(
        seq=int(payload["seq"]),  # type: ignore[arg-type]
        tick=int(payload["tick"]),  # type: ignore[arg-type]
        phase=phase,
        speaker=_enum(RoleId, payload.get("speaker"), "speaker"),
        text=str(payload.get("text", "")),
        derived_action=action_from_wire(
            payload.get("action"), phase  # type: ignore[arg-type]
        ),
        origin=str(payload.get("origin", "agent")),
    )


def save_transcript(report: SimulationReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "format_version": TRANSCRIPT_FORMAT,
                    "sim_id": report.sim_id,
                    "case_id": report.case_id,
                },
                sort_keys=True,
            )
            + "\n"
        )
        for utt in report.transcript:
            fh.write(json.dumps(utterance_to_dict(utt), sort_keys=True) + "\n")


def load_transcript(path: str | Path) -> tuple[dict, list[Utterance]]:
    with open(path, encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: bad header: {exc}") from exc
        check_format(header, "transcript")
        utterances = [
            utterance_from_dict(json.loads(line))
            for line in fh
            if line.strip()
        ]
    return header, utterances


# --- reports ---


def report_to_dict(report: SimulationReport) -> dict:
    return {
        "format_version": REPORT_FORMAT,
        "sim_id": report.sim_id,
        "case_id": report.case_id,
        "config": {
            "sim_id": report.config.sim_id,
            "seed": report.config.seed,
            "turn_budget": report.config.turn_budget,
            "recent_window": report.config.recent_window,
            **report.config.flags(),
        },
        "transcript": [utterance_to_dict(u) for u in report.transcript],
        "executed": [
            {
                "subtask_id": ex.subtask_id,
                "phase": ex.phase.value,
                "seq": ex.seq,
                "tick": ex.tick,
            }
            for ex in report.executed
        ],
        "chosen_route": report.chosen_route.canonical if report.chosen_route else None,
        "proposed_plan": [_step_to_dict(s) for s in report.proposed_plan],
        "executed_plan": [_step_to_dict(s) for s in report.executed_plan],
        "events_fired": [
            {
                "event_id": ev.event_id,
                "payload": ev.payload,
                "phase": ev.phase.value,
                "priority": ev.priority,
                "trigger_seq": ev.trigger_seq,
                "announce_seq": ev.announce_seq,
            }
            for ev in report.events_fired
        ],
        "warnings": list(report.warnings),
        "ticks": report.ticks,
    }


def report_from_dict(payload: Mapping[str, object]) -> SimulationReport:
    check_format(payload, "report")
    cfg_raw = dict(payload.get("config", {}))
    config = SimulationConfig(
        sim_id=str(cfg_raw.get("sim_id", "")),
        seed=int(cfg_raw.get("seed", 0)),
        copilot_on=bool(cfg_raw.get("copilot_on", True)),
        rag_on=bool(cfg_raw.get("rag_on", True)),
        long_memory_on=bool(cfg_raw.get("long_memory_on", True)),
        react_on=bool(cfg_raw.get("react_on", True)),
        turn_budget=int(cfg_raw.get("turn_budget", 20)),
        recent_window=int(cfg_raw.get("recent_window", 4)),
    )
    chosen = payload.get("chosen_route")
    return SimulationReport(
        sim_id=str(payload.get("sim_id", "")),
        case_id=str(payload.get("case_id", "")),
        config=config,
        transcript=tuple(
            utterance_from_dict(u) for u in payload.get("transcript", [])  # type: ignore[union-attr]
        ),
        executed=tuple(
            ExecutedSubtask(
                subtask_id=str(e["subtask_id"]),
                phase=_enum(PhaseId, e["phase"], "executed phase"),
                seq=int(e["seq"]),
                tick=int(e["tick"]),
            )
            for e in payload.get("executed", [])  # type: ignore[union-attr]
        ),
        chosen_route=RouteLabel(str(chosen)) if chosen else None,
        proposed_plan=tuple(
            _step_from_dict(s) for s in payload.get("proposed_plan", [])  # type: ignore[union-attr]
        ),
        executed_plan=tuple(
            _step_from_dict(s) for s in payload.get("executed_plan", [])  # type: ignore[union-attr]
        ),
        events_fired=tuple(
            FiredEvent(
                event_id=str(ev["event_id"]),
                payload=str(ev.get("payload", "")),
                phase=_enum(PhaseId, ev["phase"], "event phase"),
                priority=int(ev.get("priority", 0)),
                trigger_seq=int(ev.get("trigger_seq", 0)),
                announce_seq=(
                    int(ev["announce_seq"])
                    if ev.get("announce_seq") is not None
                    else None
                ),
            )
            for ev in payload.get("events_fired", [])  # type: ignore[union-attr]
        ),
        warnings=tuple(str(w) for w in payload.get("warnings", [])),  # type: ignore[union-attr]
        ticks=int(payload.get("ticks", 0)),  # type: ignore[arg-type]
    )


def save_report(report: SimulationReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_report(path: str | Path) -> SimulationReport:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return report_from_dict(payload)
