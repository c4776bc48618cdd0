/** Shared fakes: wire-format frame builders and canned fetch transports. */

import type { SessionSnapshot } from "../src/api.js";

export function wireFrame(
  seq: number,
  kind: string,
  data: Record<string, unknown>,
): string {
  return `id: ${seq}\nevent: ${kind}\ndata: ${JSON.stringify(data)}\n\n`;
}

export function utteranceData(
  seq: number,
  overrides: Partial<{
    tick: number;
    phase: string;
    speaker: string;
    text: string;
    origin: string;
    action: string | null;
  }> = {},
): Record<string, unknown> {
  return {
    seq,
    tick: seq + 1,
    phase: "patient_transfer",
    speaker: "ward_nurse",
    text: `line ${seq}`,
    origin: "agent",
    action: null,
    ...overrides,
  };
}

/** Streamed response whose body arrives in the given chunks. */
export function sseResponse(chunks: string[]): Response {
  const encoder = new TextEncoder();
  const stream = new ReadableStream<Uint8Array>({
    start(controller) {
      for (const chunk of chunks) controller.enqueue(encoder.encode(chunk));
      controller.close();
    },
  });
  return new Response(stream, {
    status: 200,
    headers: { "content-type": "text/event-stream" },
  });
}

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function snapshot(
  overrides: Partial<SessionSnapshot> = {},
): SessionSnapshot {
  return {
    session_id: "sess-test",
    case_id: "demo-d1",
    mode: "training",
    state: "running",
    phase: "patient_transfer",
    tick: 0,
    utterances: 0,
    next_speaker: "ward_nurse",
    trainee_role: null,
    chosen_route: null,
    flags: {
      copilot_on: true,
      rag_on: true,
      long_memory_on: true,
      react_on: true,
    },
    result: null,
    ...overrides,
  };
}

export interface RecordedCall {
  url: string;
  method: string;
  headers: Record<string, string>;
  body: unknown;
}

/**
 * fetch fake that pops responses off a queue and records every call.
 * Responses may be Response objects or functions of the recorded call.
 */
export function queueFetch(
  responses: Array<Response | ((call: RecordedCall) => Response)>,
) {
  const calls: RecordedCall[] = [];
  const impl = async (url: string, init?: RequestInit): Promise<Response> => {
    const call: RecordedCall = {
      url,
      method: init?.method ?? "GET",
      headers: (init?.headers as Record<string, string>) ?? {},
      body:
        typeof init?.body === "string" ? JSON.parse(init.body) : undefined,
    };
    calls.push(call);
    const next = responses.shift();
    if (next === undefined) {
      throw new Error(`unexpected request: ${call.method} ${url}`);
    }
    return typeof next === "function" ? next(call) : next;
  };
  return { impl, calls };
}
