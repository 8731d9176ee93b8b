/**
 * Exchange state as a pure fold over service events.
 *
 * The view never edits model output: opener and continuation text are the
 * exact concatenation of received deltas, and once the handoff event lands
 * the opener is frozen — later events can only extend the continuation.
 * Because applyEvent is pure, replaying a recorded stream reproduces the
 * identical state (and therefore the identical rendering).
 */

import type { ServiceEvent } from "./events.js";

export interface TimingInfo {
  /** Request receipt to first committed token, from the handoff event. */
  readonly ttftMs: number | null;
  /** Timestamp of the last opener increment — when the budget was filled. */
  readonly timeToBudgetMs: number | null;
  /** Continuation time to first byte, from the done event. */
  readonly cloudTtfbMs: number | null;
}

export interface ExchangeState {
  readonly query: string;
  readonly sessionId: string | null;
  readonly openerText: string;
  /** True once the handoff event has been seen; the opener is then frozen. */
  readonly openerFinalized: boolean;
  readonly continuationText: string;
  readonly correctionSeen: boolean;
  readonly correctionProvenance: string | null;
  readonly wordCount: number | null;
  readonly stopReason: string | null;
  readonly done: boolean;
  readonly stitchedText: string | null;
  readonly duplicationWarning: boolean;
  readonly errorMessage: string | null;
  readonly errorKind: string | null;
  readonly timing: TimingInfo;
  /** Grammar deviations observed in the stream (none on a healthy session). */
  readonly protocolWarnings: readonly string[];
}

export function initialExchange(query: string): ExchangeState {
  return {
    query,
    sessionId: null,
    openerText: "",
    openerFinalized: false,
    continuationText: "",
    correctionSeen: false,
    correctionProvenance: null,
    wordCount: null,
    stopReason: null,
    done: false,
    stitchedText: null,
    duplicationWarning: false,
    errorMessage: null,
    errorKind: null,
    timing: { ttftMs: null, timeToBudgetMs: null, cloudTtfbMs: null },
    protocolWarnings: [],
  };
}

function warn(state: ExchangeState, message: string): ExchangeState {
  return { ...state, protocolWarnings: [...state.protocolWarnings, message] };
}

/**
 * Pure fold step: returns the next state, never mutates the input.
 */
export function applyEvent(state: ExchangeState, event: ServiceEvent): ExchangeState {
  const sessionId = state.sessionId ?? event.session_id;
  switch (event.type) {
    case "opener_token": {
      if (state.openerFinalized) {
        // The grammar forbids opener tokens after handoff; never let a
        // misbehaving stream mutate text the user has already read.
        return warn(state, "opener_token after handoff ignored");
      }
      return {
        ...state,
        sessionId,
        openerText: state.openerText + event.text_delta,
        timing: { ...state.timing, timeToBudgetMs: event.t_ms },
      };
    }
    case "handoff": {
      let next: ExchangeState = {
        ...state,
        sessionId,
        openerFinalized: true,
        wordCount: event.word_count,
        stopReason: event.stop_reason,
        timing: { ...state.timing, ttftMs: event.ttft_ms },
      };
      if (event.opener_text !== state.openerText) {
        // Keep rendering the delta concatenation (the no-edit contract);
        // just surface the mismatch.
        next = warn(next, "handoff opener_text does not match streamed deltas");
      }
      return next;
    }
    case "continuation_token": {
      let next: ExchangeState = {
        ...state,
        sessionId,
        continuationText: state.continuationText + event.text_delta,
      };
      if (!state.openerFinalized) {
        next = warn(next, "continuation_token before handoff");
      }
      return next;
    }
    case "correction": {
      return {
        ...state,
        sessionId,
        correctionSeen: true,
        correctionProvenance: event.provenance,
      };
    }
    case "done": {
      return {
        ...state,
        sessionId,
        done: true,
        stitchedText: event.stitched_text,
        duplicationWarning: event.duplication_warning,
        timing: { ...state.timing, cloudTtfbMs: event.cloud_ttfb_ms },
      };
    }
    case "error": {
      // Inline error state; everything already rendered stands.
      return {
        ...state,
        sessionId,
        errorMessage: event.message,
        errorKind: event.kind,
      };
    }
  }
}

/**
 * Fold a whole recorded stream. foldEvents(q, events) run twice on the
 * same input yields deep-equal states — the replay-determinism contract.
 */
export function foldEvents(query: string, events: readonly ServiceEvent[]): ExchangeState {
  return events.reduce(applyEvent, initialExchange(query));
}
