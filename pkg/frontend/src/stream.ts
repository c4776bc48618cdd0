/**
 * Server-push event subscription with resumable cursors.
 *
 * The service numbers every frame with a session-scoped event_seq starting
 * at 0. A reconnect asks for from_seq = last seen + 1, so a client that
 * applies frames in cursor order can never show duplicates or holes, no
 * matter how often the connection drops.
 */

import { ApiError, type ClientConfig, type FetchLike } from "./api.js";

export interface EventFrame {
  eventSeq: number;
  kind: string;
  data: Record<string, unknown>;
}

export const TERMINAL_KINDS = new Set(["session_done", "session_failed"]);

/** Thrown when the server skips ahead of the requested cursor. */
export class StreamGapError extends Error {
  constructor(expected: number, got: number) {
    super(`event gap: expected seq ${expected}, got ${got}`);
    this.name = "StreamGapError";
  }
}

/**
 * Incremental parser for the wire format:
 *
 *   id: <event_seq>\n
 *   event: <kind>\n
 *   data: <json>\n\n
 *
 * push() accepts arbitrary chunk boundaries and returns only the frames
 * completed so far.
 */
export class SseParser {
  private buffer = "";

  push(chunk: string): EventFrame[] {
    this.buffer += chunk;
    const frames: EventFrame[] = [];
    for (;;) {
      const split = this.buffer.indexOf("\n\n");
      if (split < 0) break;
      const block = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      if (block.trim() === "") continue;
      frames.push(parseBlock(block));
    }
    return frames;
  }
}

function parseBlock(block: string): EventFrame {
  let id: number | null = null;
  let kind = "";
  let data: Record<string, unknown> = {};
  for (const line of block.split("\n")) {
    if (line.startsWith("id: ")) {
      id = Number(line.slice(4));
    } else if (line.startsWith("event: ")) {
      kind = line.slice(7);
    } else if (line.startsWith("data: ")) {
      data = JSON.parse(line.slice(6)) as Record<string, unknown>;
    }
  }
  if (id === null || !Number.isInteger(id) || kind === "") {
    throw new Error(`malformed event frame: ${JSON.stringify(block)}`);
  }
  return { eventSeq: id, kind, data };
}

export interface StreamOptions {
  fromSeq?: number;
  signal?: AbortSignal;
  /** Reconnect budget for mid-run disconnects. */
  maxReconnects?: number;
}

export class EventStream {
  lastSeq = -1;
  terminal = false;

  constructor(
    private readonly config: ClientConfig,
    private readonly sessionId: string,
    private readonly fetchImpl: FetchLike = (input, init) =>
      fetch(input, init),
  ) {}

  private url(fromSeq: number): string {
    const base = this.config.baseUrl.replace(/\/+$/, "");
    return `${base}/sessions/${this.sessionId}/events?from_seq=${fromSeq}`;
  }

  /**
   * Yield frames in strict cursor order until the session ends. Frames the
   * server re-sends after a reconnect are dropped; a frame past the cursor
   * raises StreamGapError rather than silently skipping history.
   */
  async *frames(options: StreamOptions = {}): AsyncGenerator<EventFrame> {
    let cursor = options.fromSeq ?? this.lastSeq + 1;
    let reconnects = 0;
    const maxReconnects = options.maxReconnects ?? 5;

    while (!this.terminal) {
      let res: Response;
      try {
        const headers: Record<string, string> = {};
        if (this.config.token) {
          headers.authorization = `Bearer ${this.config.token}`;
        }
        res = await this.fetchImpl(this.url(cursor), {
          headers,
          signal: options.signal,
        });
      } catch (err) {
        if (options.signal?.aborted) return;
        throw err;
      }
      if (!res.ok) {
        throw new ApiError(res.status, `http_${res.status}`, res.statusText);
      }
      if (!res.body) {
        throw new Error("event stream response has no body");
      }

      const reader = res.body.getReader();
      const decoder = new TextDecoder();
      const parser = new SseParser();
      try {
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const frame of parser.push(
            decoder.decode(value, { stream: true }),
          )) {
            if (frame.eventSeq < cursor) continue; // replayed after reconnect
            if (frame.eventSeq > cursor) {
              throw new StreamGapError(cursor, frame.eventSeq);
            }
            cursor = frame.eventSeq + 1;
            this.lastSeq = frame.eventSeq;
            if (TERMINAL_KINDS.has(frame.kind)) this.terminal = true;
            yield frame;
          }
        }
      } catch (err) {
        if (options.signal?.aborted) return;
        throw err;
      } finally {
        reader.releaseLock();
      }

      if (options.signal?.aborted) return;
      if (!this.terminal) {
        reconnects += 1;
        if (reconnects > maxReconnects) {
          throw new Error(
            `stream ended ${reconnects} times before the session finished`,
          );
        }
      }
    }
  }
}
