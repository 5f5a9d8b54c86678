// Typed client for the editing service. The server is authoritative for
// all canvas state; this module never post-processes what it returns.

import { SseParser } from "./sse";
import type { RleMask } from "./rle";

export interface ServerInfo {
  canvas_size: [number, number];
  n_tokens: number;
  num_classes: number;
  variant: string;
  codec: string;
  schedule_steps: number;
}

export interface EditParams {
  mask_png_b64?: string;
  mask_rle?: RleMask;
  label: number;
  seed: number;
  steps: number;
  guidance_scale: number;
  sdedit_strength: number;
  poisson: boolean;
}

export type TelemetryRecord = Record<string, unknown>;
export type SeriesRow = Record<string, number>;

export interface EditResult {
  session_id: string;
  edit_index: number;
  canvas_png_b64: string;
  patch_png_b64: string;
  telemetry: TelemetryRecord;
}

export interface SessionState {
  session_id: string;
  canvas_png_b64: string;
  history: (EditParams & { mask_rle: RleMask })[];
}

export interface TelemetryResponse {
  session_id: string;
  edits: TelemetryRecord[];
  series: SeriesRow[];
  csv: string;
}

export interface StepTick {
  step: number;
  total: number;
  t: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

async function fail(res: Response): Promise<never> {
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(res.status, detail);
}

export class ApiClient {
  constructor(private readonly base = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await fetch(this.base + path);
    if (!res.ok) await fail(res);
    return res.json();
  }

  info(): Promise<ServerInfo> {
    return this.getJson("/info");
  }

  async createSession(): Promise<{ session_id: string; canvas_png_b64: string }> {
    const res = await fetch(this.base + "/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: "{}",
    });
    if (!res.ok) await fail(res);
    return res.json();
  }

  session(id: string): Promise<SessionState> {
    return this.getJson(`/sessions/${id}`);
  }

  telemetry(id: string): Promise<TelemetryResponse> {
    return this.getJson(`/sessions/${id}/telemetry`);
  }

  async edit(id: string, params: EditParams): Promise<EditResult> {
    const res = await fetch(`${this.base}/sessions/${id}/edits`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(params),
    });
    if (!res.ok) await fail(res);
    return res.json();
  }

  // Streamed variant: resolves with the result event after forwarding
  // every per-denoise-step tick to onStep.
  async editStream(id: string, params: EditParams, onStep: (tick: StepTick) => void): Promise<EditResult> {
    const res = await fetch(`${this.base}/sessions/${id}/edits`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ ...params, stream: true }),
    });
    if (!res.ok) await fail(res);
    if (!res.body) throw new ApiError(0, "response has no body stream");

    const parser = new SseParser();
    const reader = res.body.getReader();
    const decoder = new TextDecoder();
    let result: EditResult | undefined;
    for (;;) {
      const { done, value } = await reader.read();
      const events = parser.push(done ? "" : decoder.decode(value, { stream: true }));
      for (const ev of events) {
        if (ev.event === "step") onStep(JSON.parse(ev.data) as StepTick);
        else if (ev.event === "result") result = JSON.parse(ev.data) as EditResult;
        else if (ev.event === "error") throw new ApiError(0, (JSON.parse(ev.data) as { detail: string }).detail);
      }
      if (done) break;
    }
    if (!result) throw new ApiError(0, "stream ended without a result event");
    return result;
  }
}

export function bytesToB64(bytes: Uint8Array): string {
  let binary = "";
  for (let i = 0; i < bytes.length; i += 0x8000) {
    binary += String.fromCharCode(...bytes.subarray(i, i + 0x8000));
  }
  return btoa(binary);
}

export function b64ToBytes(b64: string): Uint8Array {
  const binary = atob(b64);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}
