import { describe, expect, it } from "vitest";
import { canSubmit, initialState, reduce, type UiState } from "../src/ui";

function ready(pixels = 0): UiState {
  return reduce(reduce(initialState, { kind: "connected" }), { kind: "maskChanged", pixels });
}

describe("submit gating", () => {
  it("is disabled before the session connects", () => {
    expect(canSubmit(initialState)).toBe(false);
    expect(canSubmit(reduce(initialState, { kind: "maskChanged", pixels: 50 }))).toBe(false);
  });

  it("is disabled with an empty stroke set and enabled once pixels exist", () => {
    expect(canSubmit(ready(0))).toBe(false);
    expect(canSubmit(ready(1))).toBe(true);
  });

  it("is disabled while an edit is in flight and re-enabled on the result", () => {
    let s = ready(120);
    s = reduce(s, { kind: "submitted", totalSteps: 50 });
    expect(s.phase).toBe("inflight");
    expect(canSubmit(s)).toBe(false);
    s = reduce(s, { kind: "step", step: 25, total: 50 });
    expect(canSubmit(s)).toBe(false); // still streaming
    s = reduce(s, { kind: "finished", summary: "done" });
    expect(canSubmit(s)).toBe(true);
  });

  it("failures release the in-flight lock and surface the detail", () => {
    let s = reduce(ready(10), { kind: "submitted", totalSteps: 8 });
    s = reduce(s, { kind: "failed", detail: "label must be an integer in [0, 4)" });
    expect(s.phase).toBe("idle");
    expect(s.status).toMatch(/label must be/);
    expect(canSubmit(s)).toBe(true);
  });

  it("a busy rejection keeps the state usable with a status message", () => {
    const s = reduce(ready(10), { kind: "busy" });
    expect(s.phase).toBe("idle");
    expect(s.status).toMatch(/busy/);
    expect(canSubmit(s)).toBe(true); // user may retry once the session frees up
  });

  it("double submit does not restart progress", () => {
    let s = reduce(ready(10), { kind: "submitted", totalSteps: 8 });
    s = reduce(s, { kind: "step", step: 4, total: 8 });
    const again = reduce(s, { kind: "submitted", totalSteps: 8 });
    expect(again).toEqual(s); // ignored while inflight
  });
});

describe("progress bookkeeping", () => {
  it("tracks step ticks and completes on finish", () => {
    let s = reduce(ready(10), { kind: "submitted", totalSteps: 4 });
    expect(s.step).toBe(0);
    for (let i = 1; i <= 4; i++) {
      s = reduce(s, { kind: "step", step: i, total: 4 });
      expect(s.step).toBe(i);
      expect(s.status).toBe(`step ${i}/4`);
    }
    s = reduce(s, { kind: "finished", summary: "done in 4 steps" });
    expect(s.step).toBe(s.totalSteps);
    expect(s.status).toBe("done in 4 steps");
  });

  it("mask edits during flight update the count without enabling submit", () => {
    let s = reduce(ready(10), { kind: "submitted", totalSteps: 4 });
    s = reduce(s, { kind: "maskChanged", pixels: 99 });
    expect(s.maskPixels).toBe(99);
    expect(canSubmit(s)).toBe(false);
  });
});
