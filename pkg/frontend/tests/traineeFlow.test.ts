/**
 * End-to-end trainee flow against a real server process running the
 * scripted backend: join a training session, take over the chief surgeon,
 * commit the route on a live turn, finish, and check the debrief against
 * the server's own numbers. Skips when the python package is not
 * importable in this environment.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { createServer } from "node:net";
import { afterAll, beforeAll, describe, expect, test } from "vitest";

import { Client } from "../src/api.js";
import { TraineeConsole } from "../src/console.js";
import { EventStream } from "../src/stream.js";

const PYTHON = process.env.ORSIM_PYTHON ?? "python3";

function serverAvailable(): boolean {
  const probe = spawnSync(PYTHON, ["-c", "import orsim"], { timeout: 15000 });
  return probe.status === 0;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port assigned"));
        return;
      }
      probe.close(() => resolve(address.port));
    });
  });
}

const ROUTE_LINE = "[[ACTION: select_route=transsphenoidal approach]]";
const NOOP_LINE = "[[ACTION: noop]]";

describe.runIf(serverAvailable())("trainee flow (live server)", () => {
  let child: ChildProcess;
  let baseUrl: string;
  let stderr = "";

  beforeAll(async () => {
    const port = await freePort();
    baseUrl = `http://127.0.0.1:${port}`;
    child = spawn(
      PYTHON,
      ["-m", "orsim.cli", "serve", "--host", "127.0.0.1", "--port", String(port)],
      { stdio: ["ignore", "ignore", "pipe"] },
    );
    child.stderr?.on("data", (chunk: Buffer) => {
      stderr += chunk.toString();
    });

    const client = new Client({ baseUrl });
    const deadline = Date.now() + 20000;
    for (;;) {
      try {
        await client.listCases();
        return;
      } catch {
        if (Date.now() > deadline) {
          throw new Error(`server never came up\n${stderr}`);
        }
        await new Promise((r) => setTimeout(r, 200));
      }
    }
  });

  afterAll(() => {
    child?.kill("SIGTERM");
  });

  test("take over the chief surgeon and debrief from server numbers", async () => {
    const client = new Client({ baseUrl });

    // the copilot stays off so the human's directive is the only route call
    const created = await client.createSession({
      case_id: "demo-d1",
      mode: "training",
      seed: 7,
      copilot_on: false,
      pace: 40,
      turn_budget: 8,
      takeover_timeout: 30,
    });

    const console_ = new TraineeConsole({ baseUrl });
    const view = await console_.joinSession(created.session_id);
    expect(await console_.requestTakeover("chief_surgeon")).toBe(true);

    let routeSent = false;
    let sawControlsClose = false;
    await console_.follow({
      onFrame: async (v) => {
        if (!v.turnControlsEnabled) return;
        const text = routeSent
          ? `Carrying on with the agreed plan.\n${NOOP_LINE}`
          : `The imaging matches the documented diagnosis.\n${ROUTE_LINE}`;
        const ok = await console_.sendTurn(text);
        expect(ok).toBe(true);
        routeSent = true;
        // entry must close the moment the turn is on the wire
        expect(v.turnControlsEnabled).toBe(false);
        sawControlsClose = true;
      },
    });

    expect(view.state).toBe("done");
    expect(routeSent).toBe(true);
    expect(sawControlsClose).toBe(true);
    expect(view.errors).toEqual([]);

    // the committed turn is in the transcript, flagged as human
    const humanRows = view.transcript.filter((r) => r.origin === "human");
    expect(humanRows.length).toBeGreaterThan(0);
    const routeRow = humanRows.find((r) => r.action === "select_route");
    expect(routeRow?.speaker).toBe("chief_surgeon");
    expect(routeRow?.text).toContain(ROUTE_LINE);

    // the view never skipped or duplicated a frame
    expect(view.events.map((e) => e.eventSeq)).toEqual(
      view.events.map((_e, i) => i),
    );
    expect(view.subtasksCompleted.size).toBeGreaterThan(0);
    expect(view.guidance).toBeNull(); // no copilot in this session

    // debrief values are exactly what the server computed
    const snapshot = await client.getSession(created.session_id);
    expect(view.debrief).not.toBeNull();
    expect(view.debrief).toEqual(snapshot.result);
    expect(view.debrief?.route_score).toBe(1.0); // the human's route held
    const rendered = console_.showDebrief();
    expect(rendered).toContain(`route score: ${snapshot.result?.route_score}`);
    expect(rendered).toContain(`plan score: ${snapshot.result?.plan_score}`);

    // copilot-off session: the query endpoint rejects, rendered inline
    expect(await console_.askCopilot("status?")).toBeNull();
    expect(view.errors.at(-1)?.code).toBe("RoleUnavailable");

    // a new subscriber can drop mid-backfill and resume with no gap
    const first = new EventStream({ baseUrl }, created.session_id);
    const head: number[] = [];
    for await (const f of first.frames()) {
      head.push(f.eventSeq);
      if (head.length === 5) break;
    }
    const second = new EventStream({ baseUrl }, created.session_id);
    const tail: number[] = [];
    let lastKind = "";
    for await (const f of second.frames({ fromSeq: first.lastSeq + 1 })) {
      tail.push(f.eventSeq);
      lastKind = f.kind;
    }
    const replayed = [...head, ...tail];
    expect(replayed).toEqual(view.events.map((e) => e.eventSeq));
    expect(lastKind).toBe("session_done");
  });
});
