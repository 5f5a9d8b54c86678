import { afterEach, describe, expect, it, vi } from "vitest";
import { ApiClient, ApiError, b64ToBytes, bytesToB64, type EditParams } from "../src/api";

const PARAMS: EditParams = {
  mask_rle: { size: [2, 2], runs: [1, 2, 1] },
  label: 0,
  seed: 1,
  steps: 3,
  guidance_scale: 1.0,
  sdedit_strength: 0,
  poisson: true,
};

function sseResponse(body: string, chunkSize = 7): Response {
  const enc = new TextEncoder();
  const stream = new ReadableStream<Uint8Array>({
    start(controller) {
      for (let i = 0; i < body.length; i += chunkSize) {
        controller.enqueue(enc.encode(body.slice(i, i + chunkSize)));
      }
      controller.close();
    },
  });
  return new Response(stream, { status: 200, headers: { "content-type": "text/event-stream" } });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("editStream", () => {
  it("forwards step ticks in order and resolves with the result event", async () => {
    const body =
      ': keep-alive\n\n' +
      'event: step\ndata: {"step": 1, "total": 3, "t": 900}\n\n' +
      'event: step\ndata: {"step": 2, "total": 3, "t": 500}\n\n' +
      'event: step\ndata: {"step": 3, "total": 3, "t": 1}\n\n' +
      'event: result\ndata: {"session_id": "s1", "edit_index": 0, "canvas_png_b64": "QQ==", "patch_png_b64": "Qg==", "telemetry": {"k": 4}}\n\n';
    const fetchMock = vi.fn(async () => sseResponse(body));
    vi.stubGlobal("fetch", fetchMock);

    const ticks: number[] = [];
    const result = await new ApiClient().editStream("s1", PARAMS, (tick) => ticks.push(tick.step));
    expect(ticks).toEqual([1, 2, 3]);
    expect(result.edit_index).toBe(0);
    expect(result.telemetry).toEqual({ k: 4 });

    const [url, init] = fetchMock.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe("/sessions/s1/edits");
    expect(JSON.parse(init.body as string).stream).toBe(true);
  });

  it("rejects with the detail from an error event", async () => {
    const body = 'event: error\ndata: {"detail": "model exploded"}\n\n';
    vi.stubGlobal("fetch", vi.fn(async () => sseResponse(body)));
    await expect(new ApiClient().editStream("s1", PARAMS, () => {})).rejects.toThrow("model exploded");
  });

  it("rejects with status and detail on an HTTP error", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(
        async () =>
          new Response(JSON.stringify({ detail: "session busy: one edit at a time" }), {
            status: 409,
          }),
      ),
    );
    const err = await new ApiClient().editStream("s1", PARAMS, () => {}).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.message).toMatch(/session busy/);
  });

  it("rejects when the stream ends without a result", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => sseResponse("event: step\ndata: {}\n\n")));
    await expect(new ApiClient().editStream("s1", PARAMS, () => {})).rejects.toThrow(
      /without a result/,
    );
  });
});

describe("base64 helpers", () => {
  it("round trips binary data of awkward lengths", () => {
    for (const n of [0, 1, 2, 3, 70000]) {
      const bytes = new Uint8Array(n);
      for (let i = 0; i < n; i++) bytes[i] = (i * 131) & 0xff;
      expect([...b64ToBytes(bytesToB64(bytes))]).toEqual([...bytes]);
    }
  });

  it("agrees with the canonical encoding", () => {
    expect(bytesToB64(new Uint8Array([77, 97, 110]))).toBe("TWFu");
    expect([...b64ToBytes("TWFu")]).toEqual([77, 97, 110]);
  });
});
