/**
 * Typed client for the sandbox service. Every method maps to exactly one
 * HTTP endpoint; the console holds no other channel to the simulation.
 */

export interface ClientConfig {
  baseUrl: string;
  token?: string;
}

export interface CaseInfo {
  case_id: string;
  disease: string;
  synthetic: boolean;
}

export interface CaseListing {
  corpus: string;
  cases: CaseInfo[];
}

/** Server-computed scores delivered at finalize; rendered verbatim. */
export interface SessionResult {
  route_score: number;
  plan_score: number;
  failure: string | null;
  final_completeness: number;
  utterances: number;
  events_fired: number;
}

export type SessionState = "running" | "awaiting_input" | "done" | "failed";

export interface SessionSnapshot {
  session_id: string;
  case_id: string;
  mode: string;
  state: SessionState;
  phase: string;
  tick: number;
  utterances: number;
  next_speaker: string | null;
  trainee_role: string | null;
  chosen_route: string | null;
  flags: Record<string, boolean>;
  result: SessionResult | null;
}

export interface SessionCreate {
  case_id: string;
  mode?: "autonomous" | "training";
  trainee_role?: string;
  pace?: number;
  takeover_timeout?: number;
  seed?: number;
  copilot_on?: boolean;
  rag_on?: boolean;
  long_memory_on?: boolean;
  react_on?: boolean;
  turn_budget?: number;
}

export interface EvalRequest {
  label?: string;
  seed?: number;
  count?: number;
  corpus_dir?: string;
}

export interface EvalStatus {
  run_id: string;
  status: "running" | "done" | "failed";
  [key: string]: unknown;
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

/** A structured error body surfaced by the service. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    public readonly detail: string,
  ) {
    super(`${code}: ${detail}`);
    this.name = "ApiError";
  }
}

async function raise(res: Response): Promise<never> {
  let code = `http_${res.status}`;
  let detail = res.statusText;
  try {
    const body = (await res.json()) as Record<string, unknown>;
    if (typeof body.error === "string") code = body.error;
    if (typeof body.detail === "string") detail = body.detail;
    else detail = JSON.stringify(body);
  } catch {
    // non-JSON body; keep the status text
  }
  throw new ApiError(res.status, code, detail);
}

export class Client {
  constructor(
    private readonly config: ClientConfig,
    private readonly fetchImpl: FetchLike = (input, init) =>
      fetch(input, init),
  ) {}

  headers(): Record<string, string> {
    const headers: Record<string, string> = {
      "content-type": "application/json",
    };
    if (this.config.token) {
      headers.authorization = `Bearer ${this.config.token}`;
    }
    return headers;
  }

  url(path: string): string {
    return this.config.baseUrl.replace(/\/+$/, "") + path;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const res = await this.fetchImpl(this.url(path), {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) await raise(res);
    return (await res.json()) as T;
  }

  listCases(): Promise<CaseListing> {
    return this.request("GET", "/cases");
  }

  createSession(body: SessionCreate): Promise<SessionSnapshot> {
    return this.request("POST", "/sessions", body);
  }

  getSession(sessionId: string): Promise<SessionSnapshot> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  takeover(sessionId: string, role: string): Promise<{ trainee_role: string }> {
    return this.request("POST", `/sessions/${sessionId}/takeover`, { role });
  }

  submitInput(sessionId: string, text: string): Promise<{ accepted: boolean }> {
    return this.request("POST", `/sessions/${sessionId}/input`, { text });
  }

  copilotQuery(sessionId: string, question: string): Promise<{ answer: string }> {
    return this.request("POST", `/sessions/${sessionId}/copilot/query`, {
      question,
    });
  }

  startEval(body: EvalRequest): Promise<EvalStatus> {
    return this.request("POST", "/eval/runs", body);
  }

  getEval(runId: string): Promise<EvalStatus> {
    return this.request("GET", `/eval/runs/${runId}`);
  }
}
