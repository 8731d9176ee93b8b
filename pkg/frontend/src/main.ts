/**
 * Browser wiring: form submit → POST /v1/respond → stream events through
 * one serialized queue into the pure fold, re-rendering after each event.
 * Raw stream chunks are recorded per exchange so any exchange can be
 * replayed offline and checked for identical output.
 */

import { defaultControls, isWordBudget, requestParams, UI_MODES, WORD_BUDGETS } from "./controls.js";
import { toServiceEvent, type ServiceEvent } from "./events.js";
import { visibleCharsAt } from "./pacing.js";
import { SerialEventQueue } from "./queue.js";
import { renderExchange } from "./render.js";
import { applyEvent, initialExchange, type ExchangeState } from "./session.js";
import { SseFrameParser } from "./sse.js";
import { replayChunks } from "./replay.js";

interface PageState {
  exchanges: ExchangeState[];
  recordings: string[][];
  streaming: boolean;
  showSeam: boolean;
  paced: boolean;
  paceStartMs: number | null;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function main(): void {
  const form = el<HTMLFormElement>("query-form");
  const input = el<HTMLInputElement>("query-input");
  const budgetSelect = el<HTMLSelectElement>("budget-select");
  const modeSelect = el<HTMLSelectElement>("mode-select");
  const seamToggle = el<HTMLInputElement>("seam-toggle");
  const paceToggle = el<HTMLInputElement>("pace-toggle");
  const transcript = el<HTMLDivElement>("transcript");
  const replayButton = el<HTMLButtonElement>("replay-last");
  const replayStatus = el<HTMLSpanElement>("replay-status");
  const submitButton = el<HTMLButtonElement>("send");

  for (const budget of WORD_BUDGETS) {
    const option = document.createElement("option");
    option.value = String(budget);
    option.textContent = `${budget} words`;
    budgetSelect.appendChild(option);
  }
  for (const mode of UI_MODES) {
    const option = document.createElement("option");
    option.value = mode.id;
    option.textContent = mode.label;
    modeSelect.appendChild(option);
  }
  const controls = defaultControls();
  budgetSelect.value = String(controls.budget);
  modeSelect.value = controls.modeId;
  seamToggle.checked = true;
  paceToggle.checked = false;

  const state: PageState = {
    exchanges: [],
    recordings: [],
    streaming: false,
    showSeam: true,
    paced: false,
    paceStartMs: null,
  };

  function render(): void {
    const parts: string[] = [];
    for (let i = 0; i < state.exchanges.length; i++) {
      const exchange = state.exchanges[i];
      const isLive = state.streaming && i === state.exchanges.length - 1;
      let visibleChars: number | null = null;
      if (isLive && state.paced && state.paceStartMs !== null) {
        const answer = exchange.openerText + exchange.continuationText;
        visibleChars = visibleCharsAt(answer, performance.now() - state.paceStartMs);
      }
      parts.push(renderExchange(exchange, { showSeam: state.showSeam, visibleChars }));
    }
    transcript.innerHTML = parts.join("");
    transcript.scrollTop = transcript.scrollHeight;
  }

  const queue = new SerialEventQueue<ServiceEvent>((event) => {
    const last = state.exchanges.length - 1;
    state.exchanges[last] = applyEvent(state.exchanges[last], event);
    render();
  });

  let paceTimer: number | null = null;

  function setStreaming(on: boolean): void {
    state.streaming = on;
    submitButton.disabled = on;
    replayButton.disabled = on || state.recordings.length === 0;
    if (on && state.paced) {
      state.paceStartMs = performance.now();
      paceTimer = window.setInterval(render, 60);
    } else if (paceTimer !== null) {
      window.clearInterval(paceTimer);
      paceTimer = null;
      state.paceStartMs = null;
      render();
    }
  }

  async function runExchange(query: string): Promise<void> {
    state.exchanges.push(initialExchange(query));
    const recording: string[] = [];
    state.recordings.push(recording);
    setStreaming(true);
    render();
    try {
      const body = { query, ...requestParams(controls) };
      const response = await fetch("/v1/respond", {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
      if (!response.ok || response.body === null) {
        const detail = await response.text();
        queue.push({
          type: "error",
          session_id: "",
          t_ms: null,
          message: `HTTP ${response.status}: ${detail.slice(0, 200)}`,
          kind: "HttpError",
        });
        return;
      }
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      const parser = new SseFrameParser();
      for (;;) {
        const { done, value } = await reader.read();
        if (done) {
          break;
        }
        const chunk = decoder.decode(value, { stream: true });
        recording.push(chunk);
        for (const frame of parser.push(chunk)) {
          queue.push(toServiceEvent(frame));
        }
      }
    } catch (e) {
      queue.push({
        type: "error",
        session_id: "",
        t_ms: null,
        message: String(e),
        kind: "TransportError",
      });
    } finally {
      setStreaming(false);
      render();
    }
  }

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const query = input.value.trim();
    if (query === "" || state.streaming) {
      return;
    }
    input.value = "";
    // Controls are snapshotted here: changes during the stream apply to
    // the next exchange only.
    const budget = Number(budgetSelect.value);
    if (isWordBudget(budget)) {
      (controls as { budget: number }).budget = budget;
    }
    (controls as { modeId: string }).modeId = modeSelect.value;
    void runExchange(query);
  });

  seamToggle.addEventListener("change", () => {
    state.showSeam = seamToggle.checked;
    render();
  });
  paceToggle.addEventListener("change", () => {
    state.paced = paceToggle.checked;
  });

  replayButton.addEventListener("click", () => {
    const last = state.exchanges.length - 1;
    if (last < 0) {
      return;
    }
    const replayed = replayChunks(state.exchanges[last].query, state.recordings[last], {
      showSeam: state.showSeam,
      visibleChars: null,
    });
    const live = renderExchange(state.exchanges[last], {
      showSeam: state.showSeam,
      visibleChars: null,
    });
    replayStatus.textContent =
      replayed.html === live
        ? "replay identical ✓"
        : "replay mismatch — see console";
    if (replayed.html !== live) {
      console.error("replay mismatch", { live, replayed: replayed.html });
    }
  });

  render();
}

main();
