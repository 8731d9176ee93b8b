/**
 * Pure HTML renderers over exchange state.
 *
 * Rendering is a function of (state, options) with no hidden inputs, so a
 * replayed stream produces byte-identical markup. Text content is always
 * the raw delta concatenation — whitespace between opener and continuation
 * is the model's own; the client inserts only markup, never characters of
 * answer text.
 */

import type { ExchangeState } from "./session.js";

export interface RenderOptions {
  /** Show the handoff seam marker (default true; the page has a toggle). */
  readonly showSeam: boolean;
  /**
   * When set, only this many characters of answer text (opener first, then
   * continuation) are visible — the paced-rendering window. null shows all.
   */
  readonly visibleChars: number | null;
}

export const DEFAULT_RENDER_OPTIONS: RenderOptions = {
  showSeam: true,
  visibleChars: null,
};

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function formatMs(value: number | null): string {
  if (value === null) {
    return "—";
  }
  return `${Math.round(value * 10) / 10} ms`;
}

/**
 * Render one exchange as an HTML string: query line, answer line with an
 * opener span, optional seam marker, continuation span, correction badge
 * and inline error state, then the timing strip.
 */
export function renderExchange(
  state: ExchangeState,
  options: RenderOptions = DEFAULT_RENDER_OPTIONS,
): string {
  const budget = options.visibleChars;
  let opener = state.openerText;
  let continuation = state.continuationText;
  if (budget !== null) {
    opener = opener.slice(0, budget);
    continuation = continuation.slice(0, Math.max(0, budget - state.openerText.length));
  }

  const parts: string[] = [];
  parts.push(`<div class="query">${escapeHtml(state.query)}</div>`);

  const answer: string[] = [];
  answer.push(`<span class="opener">${escapeHtml(opener)}</span>`);
  if (state.openerFinalized && options.showSeam) {
    answer.push('<span class="seam" title="handoff">∥</span>');
  }
  answer.push(`<span class="continuation">${escapeHtml(continuation)}</span>`);
  if (state.correctionSeen) {
    answer.push('<span class="badge badge-correction">Correction</span>');
  }
  if (state.duplicationWarning) {
    answer.push('<span class="badge badge-duplication">duplicated opener</span>');
  }
  if (state.errorMessage !== null) {
    answer.push(
      `<span class="error">stream error: ${escapeHtml(state.errorMessage)}</span>`,
    );
  }
  parts.push(`<div class="answer">${answer.join("")}</div>`);

  const timing = state.timing;
  const cells = [
    `TTFT ${formatMs(timing.ttftMs)}`,
    `opener done ${formatMs(timing.timeToBudgetMs)}`,
    `cloud TTFB ${formatMs(timing.cloudTtfbMs)}`,
  ];
  if (state.wordCount !== null && state.stopReason !== null) {
    cells.push(`${state.wordCount} words (${escapeHtml(state.stopReason)})`);
  }
  parts.push(`<div class="timing">${cells.join(" · ")}</div>`);

  for (const warning of state.protocolWarnings) {
    parts.push(`<div class="protocol-warning">${escapeHtml(warning)}</div>`);
  }

  return `<article class="exchange">${parts.join("")}</article>`;
}

/** Render a whole session transcript, oldest exchange first. */
export function renderTranscript(
  exchanges: readonly ExchangeState[],
  options: RenderOptions = DEFAULT_RENDER_OPTIONS,
): string {
  return exchanges.map((e) => renderExchange(e, options)).join("");
}
