/**
 * Debrief rendering. Strictly presentational: every number is the server's
 * value stringified, never recomputed or rescaled here.
 */

import type { SessionResult } from "./api.js";

export interface DebriefLine {
  label: string;
  value: string;
}

export function debriefLines(result: SessionResult): DebriefLine[] {
  return [
    { label: "route score", value: String(result.route_score) },
    { label: "plan score", value: String(result.plan_score) },
    { label: "failure", value: result.failure ?? "none" },
    { label: "final completeness", value: String(result.final_completeness) },
    { label: "utterances", value: String(result.utterances) },
    { label: "events fired", value: String(result.events_fired) },
  ];
}

export function renderDebrief(result: SessionResult | null): string {
  if (result === null) return "debrief pending: session still running";
  return debriefLines(result)
    .map((line) => `${line.label}: ${line.value}`)
    .join("\n");
}
