// UI state machine, kept pure so the submit-gating rules are testable.
// One edit in flight per session: submit stays disabled from the moment a
// request leaves until its result or failure arrives.

export type Phase = "connecting" | "idle" | "inflight";

export interface UiState {
  phase: Phase;
  maskPixels: number;
  step: number;
  totalSteps: number;
  status: string;
}

export const initialState: UiState = {
  phase: "connecting",
  maskPixels: 0,
  step: 0,
  totalSteps: 0,
  status: "connecting...",
};

export type UiEvent =
  | { kind: "connected" }
  | { kind: "maskChanged"; pixels: number }
  | { kind: "submitted"; totalSteps: number }
  | { kind: "step"; step: number; total: number }
  | { kind: "finished"; summary: string }
  | { kind: "failed"; detail: string }
  | { kind: "busy" };

export function canSubmit(state: UiState): boolean {
  return state.phase === "idle" && state.maskPixels > 0;
}

export function reduce(state: UiState, event: UiEvent): UiState {
  switch (event.kind) {
    case "connected":
      return { ...state, phase: "idle", status: "ready" };
    case "maskChanged":
      return { ...state, maskPixels: event.pixels };
    case "submitted":
      if (state.phase !== "idle") return state;
      return { ...state, phase: "inflight", step: 0, totalSteps: event.totalSteps, status: "generating..." };
    case "step":
      return {
        ...state,
        step: event.step,
        totalSteps: event.total,
        status: `step ${event.step}/${event.total}`,
      };
    case "finished":
      return { ...state, phase: "idle", step: state.totalSteps, status: event.summary };
    case "failed":
      return { ...state, phase: "idle", step: 0, status: event.detail };
    case "busy":
      return { ...state, status: "session busy, edit already in flight" };
  }
}
