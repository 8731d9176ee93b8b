/**
 * Generation controls: word budget and recovery mode. Both are enumerated
 * selectors; selections are read once when a query is submitted, so
 * changing them mid-stream affects only subsequent exchanges.
 */

export const WORD_BUDGETS = [4, 8, 16] as const;
export type WordBudget = (typeof WORD_BUDGETS)[number];
export const DEFAULT_BUDGET: WordBudget = 4;

export interface UiMode {
  readonly id: string;
  /** Value sent on the wire as the request's `mode` field. */
  readonly wire: string;
  readonly label: string;
}

export const UI_MODES: readonly UiMode[] = [
  { id: "explicit", wire: "explicit_correction", label: "Explicit correction" },
  { id: "natural", wire: "natural_recovery", label: "Natural recovery" },
  { id: "humor", wire: "humor_aware", label: "Humor-aware" },
];

export const DEFAULT_MODE_ID = "explicit";

export interface ControlsState {
  readonly budget: WordBudget;
  readonly modeId: string;
}

export function defaultControls(): ControlsState {
  return { budget: DEFAULT_BUDGET, modeId: DEFAULT_MODE_ID };
}

export function isWordBudget(value: number): value is WordBudget {
  return (WORD_BUDGETS as readonly number[]).includes(value);
}

/**
 * Snapshot the controls into the body of the next /v1/respond request.
 */
export function requestParams(controls: ControlsState): {
  word_budget: number;
  mode: string;
} {
  const mode = UI_MODES.find((m) => m.id === controls.modeId);
  if (mode === undefined) {
    throw new Error(`unknown mode id: ${controls.modeId}`);
  }
  return { word_budget: controls.budget, mode: mode.wire };
}
