/**
 * Client-side state for one training session.
 *
 * The model is a pure fold over the event stream plus a handful of local
 * flags (claimed role, in-flight submission). It never derives scores on
 * its own: the debrief panel shows the server's numbers verbatim.
 */

import type { SessionResult, SessionSnapshot, SessionState } from "./api.js";
import type { EventFrame } from "./stream.js";

export interface UtteranceRow {
  seq: number;
  tick: number;
  phase: string;
  speaker: string;
  text: string;
  origin: string;
  action: string | null;
}

export interface RoomEvent {
  eventId: string;
  payload: string;
  phase: string;
}

export interface InlineError {
  code: string;
  detail: string;
}

const COPILOT_SPEAKER = "surgery_copilot";

export class ConsoleViewModel {
  sessionId: string;
  caseId: string;
  mode: string;
  state: SessionState;
  phase: string;

  /** Applied frames, strictly seq-ordered with no duplicates. */
  readonly events: EventFrame[] = [];
  readonly transcript: UtteranceRow[] = [];
  readonly roomEvents: RoomEvent[] = [];
  readonly errors: InlineError[] = [];

  /** Subtasks seen completed per phase; a progress bar, not a metric. */
  readonly subtasksCompleted = new Map<string, number>();

  myRole: string | null = null;
  pendingTurn: string | null = null;
  /** Latest copilot utterance, shown in the guidance pane. */
  guidance: UtteranceRow | null = null;
  /** Server scores, copied verbatim from session_done. */
  debrief: SessionResult | null = null;

  private submitted = false;

  constructor(snapshot: SessionSnapshot) {
    this.sessionId = snapshot.session_id;
    this.caseId = snapshot.case_id;
    this.mode = snapshot.mode;
    this.state = snapshot.state;
    this.phase = snapshot.phase;
    this.myRole = null;
    if (snapshot.result) this.debrief = snapshot.result;
  }

  get nextSeq(): number {
    return this.events.length === 0
      ? 0
      : this.events[this.events.length - 1]!.eventSeq + 1;
  }

  /**
   * Turn entry is open only when the pending turn belongs to my claimed
   * role and nothing of mine is already in flight.
   */
  get turnControlsEnabled(): boolean {
    return (
      this.state === "awaiting_input" &&
      this.myRole !== null &&
      this.pendingTurn === this.myRole &&
      !this.submitted
    );
  }

  /** Record a claimed role; one role per console session. */
  claimRole(role: string): void {
    if (this.myRole !== null && this.myRole !== role) {
      throw new Error(
        `already controlling ${this.myRole}; release the session to switch`,
      );
    }
    this.myRole = role;
  }

  /** Disable turn entry until the stream shows the turn was consumed. */
  markSubmitted(): void {
    this.submitted = true;
  }

  pushError(code: string, detail: string): void {
    this.errors.push({ code, detail });
  }

  /**
   * Fold one frame into the view. Duplicates (seq already applied) return
   * false; a frame from the future throws, because rendering around a hole
   * would silently misorder the transcript.
   */
  applyFrame(frame: EventFrame): boolean {
    if (frame.eventSeq < this.nextSeq) return false;
    if (frame.eventSeq > this.nextSeq) {
      throw new Error(
        `cannot apply seq ${frame.eventSeq}; view is at ${this.nextSeq}`,
      );
    }
    this.events.push(frame);
    const data = frame.data;
    switch (frame.kind) {
      case "utterance": {
        const row: UtteranceRow = {
          seq: data.seq as number,
          tick: data.tick as number,
          phase: data.phase as string,
          speaker: data.speaker as string,
          text: data.text as string,
          origin: data.origin as string,
          action: (data.action as string | null) ?? null,
        };
        this.transcript.push(row);
        this.pendingTurn = null;
        this.submitted = false;
        if (this.state === "awaiting_input") this.state = "running";
        if (row.speaker === COPILOT_SPEAKER) this.guidance = row;
        if (row.action === "complete_subtask") {
          this.subtasksCompleted.set(
            row.phase,
            (this.subtasksCompleted.get(row.phase) ?? 0) + 1,
          );
        }
        break;
      }
      case "phase_change":
        this.phase = data.phase as string;
        break;
      case "event_fired":
        this.roomEvents.push({
          eventId: data.event_id as string,
          payload: data.payload as string,
          phase: data.phase as string,
        });
        break;
      case "awaiting_input":
        this.state = "awaiting_input";
        this.pendingTurn = data.role as string;
        this.submitted = false;
        break;
      case "auto_delegate":
        this.pendingTurn = null;
        this.submitted = false;
        if (this.state === "awaiting_input") this.state = "running";
        break;
      case "takeover":
        // server-side confirmation; claimRole() guards the local side
        break;
      case "session_done":
        this.state = "done";
        this.pendingTurn = null;
        this.debrief = data as unknown as SessionResult;
        break;
      case "session_failed":
        this.state = "failed";
        this.pendingTurn = null;
        this.pushError(
          (data.error as string) ?? "unknown",
          (data.detail as string) ?? "",
        );
        break;
      default:
        // unknown kinds stay in the event list but change nothing
        break;
    }
    return true;
  }
}
