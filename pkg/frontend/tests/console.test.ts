import { describe, expect, test } from "vitest";

import { TraineeConsole } from "../src/console.js";
import { jsonResponse, queueFetch, snapshot, utteranceData } from "./helpers.js";

const CONFIG = { baseUrl: "http://svc.test" };

describe("joinSession", () => {
  test("snapshots the session and primes the view", async () => {
    const { impl, calls } = queueFetch([jsonResponse(200, snapshot())]);
    const console_ = new TraineeConsole(CONFIG, impl);
    const view = await console_.joinSession("sess-test");
    expect(calls[0]).toMatchObject({
      method: "GET",
      url: "http://svc.test/sessions/sess-test",
    });
    expect(view.sessionId).toBe("sess-test");
    expect(view.myRole).toBeNull();
  });
});

describe("requestTakeover", () => {
  test("claims the role on acknowledgment", async () => {
    const { impl, calls } = queueFetch([
      jsonResponse(200, snapshot()),
      jsonResponse(200, { trainee_role: "chief_surgeon" }),
    ]);
    const console_ = new TraineeConsole(CONFIG, impl);
    await console_.joinSession("sess-test");
    expect(await console_.requestTakeover("chief_surgeon")).toBe(true);
    expect(console_.view?.myRole).toBe("chief_surgeon");
    expect(calls[1]).toMatchObject({
      method: "POST",
      url: "http://svc.test/sessions/sess-test/takeover",
      body: { role: "chief_surgeon" },
    });
  });

  test("second role stays local: inline error, no request", async () => {
    const { impl, calls } = queueFetch([
      jsonResponse(200, snapshot()),
      jsonResponse(200, { trainee_role: "chief_surgeon" }),
    ]);
    const console_ = new TraineeConsole(CONFIG, impl);
    await console_.joinSession("sess-test");
    await console_.requestTakeover("chief_surgeon");
    expect(await console_.requestTakeover("ward_nurse")).toBe(false);
    expect(calls).toHaveLength(2); // no second takeover call went out
    expect(console_.view?.myRole).toBe("chief_surgeon");
    expect(console_.view?.errors.at(-1)?.detail).toMatch(/already controlling/);
  });
});

describe("sendTurn", () => {
  test("out of turn: inline NotYourTurn, transcript untouched", async () => {
    const { impl } = queueFetch([
      jsonResponse(200, snapshot()),
      jsonResponse(409, {
        error: "NotYourTurn",
        detail: "no human turn is pending",
      }),
    ]);
    const console_ = new TraineeConsole(CONFIG, impl);
    const view = await console_.joinSession("sess-test");
    const before = view.transcript.length;
    expect(await console_.sendTurn("hello")).toBe(false);
    expect(view.transcript).toHaveLength(before);
    expect(view.errors).toEqual([
      { code: "NotYourTurn", detail: "no human turn is pending" },
    ]);
  });

  test("acknowledged turn closes the entry controls", async () => {
    const { impl, calls } = queueFetch([
      jsonResponse(200, snapshot()),
      jsonResponse(200, { accepted: true }),
    ]);
    const console_ = new TraineeConsole(CONFIG, impl);
    const view = await console_.joinSession("sess-test");
    view.claimRole("chief_surgeon");
    view.applyFrame({
      eventSeq: 0,
      kind: "awaiting_input",
      data: { role: "chief_surgeon" },
    });
    expect(view.turnControlsEnabled).toBe(true);
    expect(await console_.sendTurn("[[ACTION: noop]]")).toBe(true);
    expect(view.turnControlsEnabled).toBe(false);
    expect(calls[1]).toMatchObject({
      url: "http://svc.test/sessions/sess-test/input",
      body: { text: "[[ACTION: noop]]" },
    });
  });
});

describe("askCopilot", () => {
  test("returns the answer text", async () => {
    const { impl, calls } = queueFetch([
      jsonResponse(200, snapshot()),
      jsonResponse(200, { answer: "Plan holds. [cites: src#1]" }),
    ]);
    const console_ = new TraineeConsole(CONFIG, impl);
    await console_.joinSession("sess-test");
    expect(await console_.askCopilot("how is the plan?")).toBe(
      "Plan holds. [cites: src#1]",
    );
    expect(calls[1]?.body).toEqual({ question: "how is the plan?" });
  });

  test("RoleUnavailable renders inline and returns null", async () => {
    const { impl } = queueFetch([
      jsonResponse(200, snapshot()),
      jsonResponse(409, {
        error: "RoleUnavailable",
        detail: "this session runs without the copilot",
      }),
    ]);
    const console_ = new TraineeConsole(CONFIG, impl);
    await console_.joinSession("sess-test");
    expect(await console_.askCopilot("anyone there?")).toBeNull();
    expect(console_.view?.errors.at(-1)?.code).toBe("RoleUnavailable");
  });
});

describe("showDebrief", () => {
  test("pending before finalize, verbatim values after", async () => {
    const { impl } = queueFetch([jsonResponse(200, snapshot())]);
    const console_ = new TraineeConsole(CONFIG, impl);
    const view = await console_.joinSession("sess-test");
    expect(console_.showDebrief()).toMatch(/pending/);

    view.applyFrame({
      eventSeq: 0,
      kind: "session_done",
      data: {
        route_score: 1.0,
        plan_score: 0.6667,
        failure: null,
        final_completeness: 94.12,
        utterances: 28,
        events_fired: 2,
      },
    });
    const rendered = console_.showDebrief();
    expect(rendered).toContain("route score: 1");
    expect(rendered).toContain("plan score: 0.6667"); // no rescaling client-side
    expect(rendered).toContain("failure: none");
    expect(rendered).toContain("final completeness: 94.12");
  });
});

describe("follow", () => {
  test("pumps stream frames through the view model", async () => {
    const wire = (seq: number, kind: string, data: Record<string, unknown>) =>
      `id: ${seq}\nevent: ${kind}\ndata: ${JSON.stringify(data)}\n\n`;
    const body =
      wire(0, "utterance", utteranceData(0)) +
      wire(1, "utterance", utteranceData(1, { origin: "human" })) +
      wire(2, "session_done", {
        route_score: 1.0,
        plan_score: 1.0,
        failure: null,
        final_completeness: 100.0,
        utterances: 2,
        events_fired: 0,
      });
    const { impl } = queueFetch([
      jsonResponse(200, snapshot()),
      new Response(body, { status: 200 }),
    ]);
    const console_ = new TraineeConsole(CONFIG, impl);
    const view = await console_.joinSession("sess-test");
    const states: string[] = [];
    await console_.follow({ onFrame: (v) => void states.push(v.state) });
    expect(view.transcript.map((r) => r.origin)).toEqual(["agent", "human"]);
    expect(view.state).toBe("done");
    expect(states.at(-1)).toBe("done");
  });
});
