"""HTTP service: live sessions with pushed events, plus evaluation runs.

Each session owns one simulation and one background driver thread. All
mutation goes through the session's condition lock, so there is exactly
one writer per session no matter how many clients watch the stream.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Iterator, Mapping

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .copilot import CopilotAgent, LongMemory
from .defaults import builtin_corpus
from .domain import RoleId
from .engine import Simulation, SimulationConfig
from .errors import (
    InvalidConfig,
    NotTrainingMode,
    NotYourTurn,
    OrsimError,
    RoleUnavailable,
    UnknownCase,
    UnknownSession,
)
from .evaluation import evaluate_report
from .records import CaseFile, Corpus, load_corpus
from .runner import ABLATIONS, Runner, evaluate_corpus
from .synthetic import generate_corpus

DEFAULT_PACE = 1.0  # turns per second in autonomous mode
DEFAULT_TAKEOVER_TIMEOUT = 120.0  # seconds before a held turn is delegated

_NOT_FOUND = (UnknownCase, UnknownSession)
_CONFLICT = (NotYourTurn, NotTrainingMode, RoleUnavailable)


class SessionCreate(BaseModel):
    case_id: str
    mode: str = "autonomous"  # autonomous | training
    trainee_role: str | None = None
    pace: float | None = None
    takeover_timeout: float | None = None
    seed: int = 0
    copilot_on: bool = True
    rag_on: bool = True
    long_memory_on: bool = True
    react_on: bool = True
    turn_budget: int = 20


class TakeoverBody(BaseModel):
    role: str


class InputBody(BaseModel):
    text: str


class CopilotQuery(BaseModel):
    question: str


class EvalRequest(BaseModel):
    label: str = "full"
    seed: int = 0
    count: int = 20
    corpus_dir: str | None = None


class Session:
    """One live simulation and its event log."""

    def __init__(
        self,
        session_id: str,
        bundle: CaseFile,
        sim: Simulation,
        mode: str,
        pace: float,
        takeover_timeout: float,
    ):
        self.session_id = session_id
        self.bundle = bundle
        self.sim = sim
        self.mode = mode
        self.pace = pace
        self.takeover_timeout = takeover_timeout
        self.cond = threading.Condition()
        self.events: list[dict] = []
        self.trainee_role: RoleId | None = None
        self.state = "running"  # running | awaiting_input | done | failed
        self.result: dict | None = None
        self._input_text: str | None = None

    # callers hold self.cond
    def _emit(self, kind: str, data: Mapping[str, object]) -> None:
        self.events.append(
            {"event_seq": len(self.events), "kind": kind, "data": dict(data)}
        )
        self.cond.notify_all()

    def _emit_utterances(self, produced) -> None:
        for utt in produced:
            self._emit(
                "utterance",
                {
                    "seq": utt.seq,
                    "tick": utt.tick,
                    "phase": utt.phase.value,
                    "speaker": utt.speaker.value,
                    "text": utt.text,
                    "origin": utt.origin,
                    "action": utt.derived_action.kind.value
                    if utt.derived_action
                    else None,
                },
            )

    def _step(self, human_text: str | None = None) -> None:
        phase_before = self.sim.phase
        events_before = len(self.sim.events_fired)
        produced = self.sim.advance_turn(human_text=human_text)
        if self.sim.phase != phase_before:
            self._emit("phase_change", {"phase": self.sim.phase.value})
        for ev in self.sim.events_fired[events_before:]:
            self._emit(
                "event_fired",
                {"event_id": ev.event_id, "payload": ev.payload, "phase": ev.phase.value},
            )
        self._emit_utterances(produced)

    def _finish(self) -> None:
        report = self.sim.finalize()
        result = evaluate_report(report, self.bundle.case)
        self.result = {
            "route_score": result.route_score,
            "plan_score": result.plan_score,
            "failure": result.failure.value if result.failure else None,
            "final_completeness": round(result.checkpoints[-1].completeness, 2),
            "utterances": len(report.transcript),
            "events_fired": len(report.events_fired),
        }
        self.state = "done"
        self._emit("session_done", self.result)

    def run_loop(self) -> None:
        """Driver thread: paces turns, parks on the trainee's slots."""
        try:
            while True:
                with self.cond:
                    if not self.sim.running:
                        self._finish()
                        return
                    trainee_turn = (
                        self.mode == "training"
                        and self.trainee_role is not None
                        and self.sim.pending_announcements() == 0
                        and self.sim.next_speaker() == self.trainee_role
                    )
                    if trainee_turn:
                        self.state = "awaiting_input"
                        self._emit(
                            "awaiting_input",
                            {"role": self.trainee_role.value},
                        )
                        deadline = time.monotonic() + self.takeover_timeout
                        while (
                            self._input_text is None
                            and time.monotonic() < deadline
                        ):
                            self.cond.wait(
                                timeout=min(0.1, self.takeover_timeout)
                            )
                        text = self._input_text
                        self._input_text = None
                        self.state = "running"
                        if text is None:
                            self._emit(
                                "auto_delegate",
                                {"role": self.trainee_role.value},
                            )
                            self._step()
                        else:
                            self._step(human_text=text)
                    else:
                        self._step()
                if self.pace > 0:
                    time.sleep(1.0 / self.pace)
        except OrsimError as exc:
            with self.cond:
                self.state = "failed"
                self._emit("session_failed", {"error": exc.code, "detail": str(exc)})

    def submit_input(self, text: str) -> dict:
        with self.cond:
            if self.mode != "training":
                raise NotTrainingMode(f"session {self.session_id} is autonomous")
            if self.state != "awaiting_input" or self.trainee_role is None:
                raise NotYourTurn("no human turn is pending")
            self._input_text = text
            self.cond.notify_all()
        return {"accepted": True}

    def set_takeover(self, role: RoleId) -> dict:
        if role is RoleId.SURGERY_COPILOT:
            raise RoleUnavailable("the copilot cannot be human-controlled")
        with self.cond:
            if self.mode != "training":
                raise NotTrainingMode(f"session {self.session_id} is autonomous")
            self.trainee_role = role
            self._emit("takeover", {"role": role.value})
        return {"trainee_role": role.value}

    def snapshot(self) -> dict:
        with self.cond:
            return {
                "session_id": self.session_id,
                "case_id": self.bundle.case.case_id,
                "mode": self.mode,
                "state": self.state,
                "phase": self.sim.phase.value,
                "tick": self.sim.tick,
                "utterances": len(self.sim.transcript),
                "next_speaker": self.sim.next_speaker().value
                if self.sim.running
                else None,
                "trainee_role": self.trainee_role.value
                if self.trainee_role
                else None,
                "chosen_route": self.sim.chosen_route.canonical
                if self.sim.chosen_route
                else None,
                "flags": self.sim.config.flags(),
                "result": self.result,
            }

    def events_since(self, from_seq: int, timeout: float) -> tuple[list[dict], bool]:
        """Events at or past from_seq; second value is whether to keep waiting."""
        with self.cond:
            if from_seq < len(self.events):
                return self.events[from_seq:], True
            if self.state in ("done", "failed"):
                return [], False
            self.cond.wait(timeout=timeout)
            return self.events[from_seq:], True


def _sse(event: dict) -> str:
    return (
        f"id: {event['event_seq']}\n"
        f"event: {event['kind']}\n"
        f"data: {json.dumps(event['data'], sort_keys=True)}\n\n"
    )


@dataclass
class EvalSlot:
    status: str = "running"
    payload: dict = field(default_factory=dict)


def create_app(
    corpus: Corpus | None = None,
    runner: Runner | None = None,
    pace: float = DEFAULT_PACE,
    takeover_timeout: float = DEFAULT_TAKEOVER_TIMEOUT,
) -> FastAPI:
    """Wire a service around one corpus and one backend runner."""
    app = FastAPI(title="operating-room sandbox")
    state_corpus = corpus or builtin_corpus()
    state_runner = runner or Runner.scripted(long_memory=LongMemory())
    sessions: dict[str, Session] = {}
    eval_runs: dict[str, EvalSlot] = {}
    registry_lock = threading.Lock()

    bundles = {b.case.case_id: b for b in state_corpus.bundles}

    @app.exception_handler(OrsimError)
    def _domain_error(_request: Request, exc: OrsimError) -> JSONResponse:
        if isinstance(exc, _NOT_FOUND):
            status = 404
        elif isinstance(exc, _CONFLICT):
            status = 409
        elif isinstance(exc, InvalidConfig):
            status = 422
        else:
            status = 400
        return JSONResponse(
            status_code=status, content={"error": exc.code, "detail": str(exc)}
        )

    def _get_session(session_id: str) -> Session:
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"no session {session_id!r}")
        return session

    @app.get("/cases")
    def list_cases() -> dict:
        return {
            "corpus": state_corpus.name,
            "cases": [
                {
                    "case_id": b.case.case_id,
                    "disease": b.case.disease_label.name,
                    "synthetic": b.case.synthetic,
                }
                for b in state_corpus.bundles
            ],
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionCreate) -> dict:
        if body.mode not in ("autonomous", "training"):
            raise InvalidConfig(f"unknown mode {body.mode!r}")
        bundle = bundles.get(body.case_id)
        if bundle is None:
            raise UnknownCase(f"no case {body.case_id!r}")
        session_id = f"sess-{uuid.uuid4().hex[:10]}"
        config = SimulationConfig(
            sim_id=session_id,
            seed=body.seed,
            copilot_on=body.copilot_on,
            rag_on=body.rag_on,
            long_memory_on=body.long_memory_on,
            react_on=body.react_on,
            turn_budget=body.turn_budget,
        )
        sim = state_runner.new_simulation(bundle, config)
        session = Session(
            session_id,
            bundle,
            sim,
            mode=body.mode,
            pace=body.pace if body.pace is not None else pace,
            takeover_timeout=body.takeover_timeout
            if body.takeover_timeout is not None
            else takeover_timeout,
        )
        if body.trainee_role is not None:
            if body.mode != "training":
                raise NotTrainingMode("trainee_role requires training mode")
            try:
                wanted = RoleId(body.trainee_role)
            except ValueError as exc:
                raise InvalidConfig(f"unknown role {body.trainee_role!r}") from exc
            if wanted is RoleId.SURGERY_COPILOT:
                raise RoleUnavailable("the copilot cannot be human-controlled")
            session.trainee_role = wanted
        with registry_lock:
            sessions[session_id] = session
        threading.Thread(target=session.run_loop, daemon=True).start()
        return session.snapshot()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return _get_session(session_id).snapshot()

    @app.get("/sessions/{session_id}/events")
    def stream_events(session_id: str, from_seq: int = 0) -> StreamingResponse:
        session = _get_session(session_id)

        def gen() -> Iterator[str]:
            cursor = from_seq
            while True:
                chunk, keep_going = session.events_since(cursor, timeout=0.25)
                for event in chunk:
                    yield _sse(event)
                    cursor = event["event_seq"] + 1
                if not keep_going:
                    return

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.post("/sessions/{session_id}/takeover")
    def takeover(session_id: str, body: TakeoverBody) -> dict:
        try:
            role = RoleId(body.role)
        except ValueError as exc:
            raise InvalidConfig(f"unknown role {body.role!r}") from exc
        return _get_session(session_id).set_takeover(role)

    @app.post("/sessions/{session_id}/input")
    def submit_input(session_id: str, body: InputBody) -> dict:
        return _get_session(session_id).submit_input(body.text)

    @app.post("/sessions/{session_id}/copilot/query")
    def copilot_query(session_id: str, body: CopilotQuery) -> dict:
        session = _get_session(session_id)
        agent = session.sim.roster.get(RoleId.SURGERY_COPILOT)
        if not isinstance(agent, CopilotAgent):
            raise RoleUnavailable("this session runs without the copilot")
        return {"answer": agent.answer_query(body.question)}

    @app.post("/eval/runs", status_code=201)
    def start_eval(body: EvalRequest) -> dict:
        if body.label not in ABLATIONS:
            raise InvalidConfig(
                f"unknown label {body.label!r}; choose from {sorted(ABLATIONS)}"
            )
        run_id = f"run-{uuid.uuid4().hex[:10]}"
        slot = EvalSlot()
        with registry_lock:
            eval_runs[run_id] = slot

        def work() -> None:
            try:
                if body.corpus_dir:
                    corpus_used = load_corpus(body.corpus_dir)
                else:
                    corpus_used = generate_corpus(body.count, seed=body.seed)
                run = evaluate_corpus(
                    state_runner,
                    corpus_used,
                    SimulationConfig(seed=body.seed),
                    label=body.label,
                    run_id=run_id,
                )
                slot.payload = run.to_dict()
                slot.status = "done"
            except OrsimError as exc:
                slot.payload = {"error": exc.code, "detail": str(exc)}
                slot.status = "failed"

        threading.Thread(target=work, daemon=True).start()
        return {"run_id": run_id, "status": slot.status}

    @app.get("/eval/runs/{run_id}")
    def get_eval(run_id: str) -> dict:
        with registry_lock:
            slot = eval_runs.get(run_id)
        if slot is None:
            raise UnknownSession(f"no eval run {run_id!r}")
        return {"run_id": run_id, "status": slot.status, **slot.payload}

    return app
