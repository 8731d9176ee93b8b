/**
 * Replay: rebuild an exchange view from a recorded stream. Because parsing,
 * folding, and rendering are all pure, the same recording always yields the
 * same markup — the client-side determinism contract.
 */

import { toServiceEvent, type ServiceEvent } from "./events.js";
import { DEFAULT_RENDER_OPTIONS, renderExchange, type RenderOptions } from "./render.js";
import { foldEvents, type ExchangeState } from "./session.js";
import { SseFrameParser } from "./sse.js";

export interface ReplayResult {
  readonly events: readonly ServiceEvent[];
  readonly state: ExchangeState;
  readonly html: string;
}

/**
 * Replay raw stream text exactly as it arrived from the network (any chunk
 * boundaries), through parser, fold, and renderer.
 */
export function replayChunks(
  query: string,
  chunks: readonly string[],
  options: RenderOptions = DEFAULT_RENDER_OPTIONS,
): ReplayResult {
  const parser = new SseFrameParser();
  const events: ServiceEvent[] = [];
  for (const chunk of chunks) {
    for (const frame of parser.push(chunk)) {
      events.push(toServiceEvent(frame));
    }
  }
  return replayEvents(query, events, options);
}

/** Replay already-decoded events. */
export function replayEvents(
  query: string,
  events: readonly ServiceEvent[],
  options: RenderOptions = DEFAULT_RENDER_OPTIONS,
): ReplayResult {
  const state = foldEvents(query, events);
  return { events, state, html: renderExchange(state, options) };
}
