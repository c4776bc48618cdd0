/**
 * The five console operations, glued over the HTTP client and the event
 * stream. Server rejections (NotYourTurn, RoleUnavailable, ...) become
 * inline errors on the view model instead of thrown exceptions, so the UI
 * keeps rendering and the transcript is never mutated locally.
 */

import { ApiError, Client, type ClientConfig, type FetchLike } from "./api.js";
import { renderDebrief } from "./debrief.js";
import { EventStream } from "./stream.js";
import { ConsoleViewModel } from "./viewModel.js";

export class TraineeConsole {
  readonly client: Client;
  view: ConsoleViewModel | null = null;
  stream: EventStream | null = null;

  constructor(
    private readonly config: ClientConfig,
    private readonly fetchImpl: FetchLike = (input, init) =>
      fetch(input, init),
  ) {
    this.client = new Client(config, fetchImpl);
  }

  private get model(): ConsoleViewModel {
    if (this.view === null) throw new Error("join a session first");
    return this.view;
  }

  /** Snapshot the session and prepare a stream cursor at seq 0. */
  async joinSession(sessionId: string): Promise<ConsoleViewModel> {
    const snapshot = await this.client.getSession(sessionId);
    this.view = new ConsoleViewModel(snapshot);
    this.stream = new EventStream(this.config, sessionId, this.fetchImpl);
    return this.view;
  }

  /**
   * Pump the live stream into the view until the session ends or the
   * signal aborts. onFrame, when given, runs after each applied frame.
   */
  async follow(options?: {
    signal?: AbortSignal;
    onFrame?: (view: ConsoleViewModel) => void | Promise<void>;
  }): Promise<void> {
    if (this.stream === null) throw new Error("join a session first");
    const view = this.model;
    for await (const frame of this.stream.frames({
      fromSeq: view.nextSeq,
      signal: options?.signal,
    })) {
      view.applyFrame(frame);
      if (options?.onFrame) await options.onFrame(view);
    }
  }

  async requestTakeover(role: string): Promise<boolean> {
    const view = this.model;
    try {
      view.claimRole(role); // local one-role rule, checked before the wire
      const ack = await this.client.takeover(view.sessionId, role);
      view.claimRole(ack.trainee_role);
      return true;
    } catch (err) {
      this.surface(err);
      return false;
    }
  }

  async sendTurn(text: string): Promise<boolean> {
    const view = this.model;
    try {
      await this.client.submitInput(view.sessionId, text);
      view.markSubmitted(); // entry stays closed until the next turn
      return true;
    } catch (err) {
      this.surface(err);
      return false;
    }
  }

  async askCopilot(question: string): Promise<string | null> {
    const view = this.model;
    try {
      const reply = await this.client.copilotQuery(view.sessionId, question);
      return reply.answer;
    } catch (err) {
      this.surface(err);
      return null;
    }
  }

  showDebrief(): string {
    return renderDebrief(this.model.debrief);
  }

  private surface(err: unknown): void {
    const view = this.model;
    if (err instanceof ApiError) {
      view.pushError(err.code, err.detail);
    } else if (err instanceof Error) {
      view.pushError("client", err.message);
    } else {
      view.pushError("client", String(err));
    }
  }
}
