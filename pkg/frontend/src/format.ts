/** Pure rendering helpers, kept DOM-free so they test (and reuse) easily. */

import type { Exchange, RetrievedChunk } from "./types.js";

/** Scores are always shown with exactly four decimals. */
export function formatScore(score: number): string {
  return score.toFixed(4);
}

/**
 * One line per retrieved chunk, in the order the server returned them
 * (already best-first). The panel must never reorder them.
 */
export function traceLines(retrieved: RetrievedChunk[]): string[] {
  return retrieved.map((chunk) => `${chunk.chunk_id} · ${formatScore(chunk.score)}`);
}

/** Plain-text transcript: one user and one assistant line per exchange. */
export function transcriptLines(roleName: string, turns: Exchange[]): string[] {
  const lines: string[] = [];
  for (const turn of turns) {
    lines.push(`you: ${turn.user}`);
    lines.push(`${roleName}: ${turn.assistant}`);
  }
  return lines;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}
