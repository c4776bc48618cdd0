/**
 * Browser entry point. Reads the service location from query parameters
 * (?base=http://host:port&token=...), wires the DOM to a TraineeConsole,
 * and re-renders after every stream frame. All state lives in the view
 * model; this file only paints it.
 */

import { renderDebrief } from "./debrief.js";
import { TraineeConsole } from "./console.js";
import type { ConsoleViewModel } from "./viewModel.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

const params = new URLSearchParams(window.location.search);
const config = {
  baseUrl: params.get("base") ?? "http://127.0.0.1:8000",
  token: params.get("token") ?? undefined,
};
const console_ = new TraineeConsole(config);

const transcriptEl = el<HTMLOListElement>("transcript");
const statusEl = el<HTMLParagraphElement>("status");
const guidanceEl = el<HTMLPreElement>("guidance");
const errorsEl = el<HTMLUListElement>("errors");
const debriefEl = el<HTMLPreElement>("debrief");
const progressEl = el<HTMLParagraphElement>("progress");
const turnText = el<HTMLTextAreaElement>("turn-text");
const turnSend = el<HTMLButtonElement>("turn-send");

function render(view: ConsoleViewModel): void {
  statusEl.textContent =
    `${view.caseId} | phase ${view.phase} | ${view.state}` +
    (view.myRole ? ` | you are ${view.myRole}` : "") +
    (view.pendingTurn ? ` | waiting on ${view.pendingTurn}` : "");

  transcriptEl.replaceChildren(
    ...view.transcript.map((row) => {
      const li = document.createElement("li");
      li.textContent = `[${row.phase}] ${row.speaker}: ${row.text}`;
      if (row.origin === "human") li.classList.add("human");
      if (row.origin === "system") li.classList.add("system");
      return li;
    }),
  );

  const done = [...view.subtasksCompleted.entries()]
    .map(([phase, n]) => `${phase}: ${n}`)
    .join("  ");
  progressEl.textContent = done || "no subtasks completed yet";

  guidanceEl.textContent = view.guidance
    ? view.guidance.text
    : "no guidance yet";

  errorsEl.replaceChildren(
    ...view.errors.map((e) => {
      const li = document.createElement("li");
      li.textContent = `${e.code}: ${e.detail}`;
      return li;
    }),
  );

  turnSend.disabled = !view.turnControlsEnabled;
  turnText.disabled = !view.turnControlsEnabled;

  debriefEl.textContent = renderDebrief(view.debrief);
}

async function join(sessionId: string): Promise<void> {
  const view = await console_.joinSession(sessionId);
  render(view);
  await console_.follow({ onFrame: render });
  render(view);
}

el<HTMLFormElement>("join-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  const sessionId = el<HTMLInputElement>("session-id").value.trim();
  if (sessionId) void join(sessionId);
});

el<HTMLFormElement>("takeover-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  const role = el<HTMLSelectElement>("takeover-role").value;
  void console_.requestTakeover(role).then(() => {
    if (console_.view) render(console_.view);
  });
});

el<HTMLFormElement>("turn-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  const text = turnText.value;
  if (!text.trim()) return;
  void console_.sendTurn(text).then((ok) => {
    if (ok) turnText.value = "";
    if (console_.view) render(console_.view);
  });
});

el<HTMLFormElement>("copilot-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  const question = el<HTMLInputElement>("copilot-question").value;
  void console_.askCopilot(question).then((answer) => {
    if (answer !== null) guidanceEl.textContent = answer;
    if (console_.view) render(console_.view);
  });
});
