/**
 * Typed view of the service's SSE wire protocol.
 *
 * One exchange is a stream of events in this order:
 *
 *   opener_token+  handoff  (continuation_token | correction)*  (done | error)
 *
 * Every event carries the session id and a t_ms timestamp in milliseconds
 * since the service received the request (null only on error events raised
 * outside the session clock).
 */

import type { SseFrame } from "./sse.js";

export interface OpenerTokenEvent {
  type: "opener_token";
  session_id: string;
  t_ms: number;
  /** Committed opener increment; may be empty when the model produced nothing. */
  text_delta: string;
  token_id: number;
}

export interface HandoffEvent {
  type: "handoff";
  session_id: string;
  t_ms: number;
  /** The finalized opener; equals the concatenation of all opener deltas. */
  opener_text: string;
  word_count: number;
  stop_reason: string;
  ttft_ms: number;
}

export interface ContinuationTokenEvent {
  type: "continuation_token";
  session_id: string;
  t_ms: number;
  text_delta: string;
}

export interface CorrectionEvent {
  type: "correction";
  session_id: string;
  t_ms: number;
  provenance: string;
}

export interface DoneEvent {
  type: "done";
  session_id: string;
  t_ms: number;
  /** Opener and continuation joined server-side by the stitching rule. */
  stitched_text: string;
  corrected: boolean;
  correction_provenance: string;
  cloud_ttfb_ms: number | null;
  duplication_warning: boolean;
}

export interface ErrorEvent {
  type: "error";
  session_id: string;
  t_ms: number | null;
  message: string;
  kind: string;
}

export type ServiceEvent =
  | OpenerTokenEvent
  | HandoffEvent
  | ContinuationTokenEvent
  | CorrectionEvent
  | DoneEvent
  | ErrorEvent;

export const EVENT_TYPES = [
  "opener_token",
  "handoff",
  "continuation_token",
  "correction",
  "done",
  "error",
] as const;

export class ProtocolError extends Error {}

function requireString(data: Record<string, unknown>, key: string): string {
  const v = data[key];
  if (typeof v !== "string") {
    throw new ProtocolError(`event field ${key} must be a string, got ${typeof v}`);
  }
  return v;
}

function requireNumber(data: Record<string, unknown>, key: string): number {
  const v = data[key];
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new ProtocolError(`event field ${key} must be a finite number`);
  }
  return v;
}

/**
 * Validate one parsed SSE frame into a typed service event.
 * Throws ProtocolError on unknown event names or malformed payloads.
 */
export function toServiceEvent(frame: SseFrame): ServiceEvent {
  let data: unknown;
  try {
    data = JSON.parse(frame.data);
  } catch (e) {
    throw new ProtocolError(`event data is not JSON: ${String(e)}`);
  }
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    throw new ProtocolError("event data must be a JSON object");
  }
  const d = data as Record<string, unknown>;
  switch (frame.event) {
    case "opener_token":
      return {
        type: "opener_token",
        session_id: requireString(d, "session_id"),
        t_ms: requireNumber(d, "t_ms"),
        text_delta: requireString(d, "text_delta"),
        token_id: requireNumber(d, "token_id"),
      };
    case "handoff":
      return {
        type: "handoff",
        session_id: requireString(d, "session_id"),
        t_ms: requireNumber(d, "t_ms"),
        opener_text: requireString(d, "opener_text"),
        word_count: requireNumber(d, "word_count"),
        stop_reason: requireString(d, "stop_reason"),
        ttft_ms: requireNumber(d, "ttft_ms"),
      };
    case "continuation_token":
      return {
        type: "continuation_token",
        session_id: requireString(d, "session_id"),
        t_ms: requireNumber(d, "t_ms"),
        text_delta: requireString(d, "text_delta"),
      };
    case "correction":
      return {
        type: "correction",
        session_id: requireString(d, "session_id"),
        t_ms: requireNumber(d, "t_ms"),
        provenance: requireString(d, "provenance"),
      };
    case "done":
      return {
        type: "done",
        session_id: requireString(d, "session_id"),
        t_ms: requireNumber(d, "t_ms"),
        stitched_text: requireString(d, "stitched_text"),
        corrected: Boolean(d["corrected"]),
        correction_provenance: requireString(d, "correction_provenance"),
        cloud_ttfb_ms: typeof d["cloud_ttfb_ms"] === "number" ? d["cloud_ttfb_ms"] : null,
        duplication_warning: Boolean(d["duplication_warning"]),
      };
    case "error":
      return {
        type: "error",
        session_id: requireString(d, "session_id"),
        t_ms: typeof d["t_ms"] === "number" ? d["t_ms"] : null,
        message: requireString(d, "message"),
        kind: typeof d["kind"] === "string" ? d["kind"] : "Error",
      };
    default:
      throw new ProtocolError(`unknown event type: ${frame.event}`);
  }
}
