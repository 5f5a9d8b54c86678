// Browser entry point: wires the brush canvas, sampler controls, SSE
// progress, and telemetry chart to the editing service. All canvas state
// shown here is whatever the server last returned; the only client-side
// compositing is the patch preview thumbnail.

import { ApiClient, ApiError, bytesToB64, type EditParams, type SeriesRow } from "./api";
import { BrushMask, overlayPixels } from "./brush";
import { maskToPng } from "./png";
import { masksEqual, rleToMask } from "./rle";
import { chartPoints, fitScale, polylineAttr } from "./telemetry";
import { canSubmit, initialState, reduce, type UiEvent, type UiState } from "./ui";

function el<T extends Element>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as unknown as T;
}

const paint = el<HTMLCanvasElement>("paint");
const overlay = el<HTMLCanvasElement>("overlay");
const patchPreview = el<HTMLCanvasElement>("patchPreview");
const labelSelect = el<HTMLSelectElement>("label");
const stepsInput = el<HTMLInputElement>("steps");
const guidanceInput = el<HTMLInputElement>("guidance");
const sdeditInput = el<HTMLInputElement>("sdedit");
const sdeditVal = el<HTMLSpanElement>("sdeditVal");
const seedInput = el<HTMLInputElement>("seed");
const poissonInput = el<HTMLInputElement>("poisson");
const radiusInput = el<HTMLInputElement>("radius");
const radiusVal = el<HTMLSpanElement>("radiusVal");
const submitBtn = el<HTMLButtonElement>("submit");
const clearBtn = el<HTMLButtonElement>("clearMask");
const resetBtn = el<HTMLButtonElement>("resetSession");
const statusSpan = el<HTMLSpanElement>("status");
const progressFill = el<HTMLDivElement>("progressFill");
const modelInfo = el<HTMLSpanElement>("modelInfo");
const kReadout = el<HTMLDivElement>("kReadout");
const chart = el<SVGSVGElement>("chart");

const client = new ApiClient("");
let ui: UiState = initialState;
let sessionId = "";
let brush: BrushMask;
let width = 0;
let height = 0;

function dispatch(event: UiEvent): void {
  ui = reduce(ui, event);
  submitBtn.disabled = !canSubmit(ui);
  statusSpan.textContent = ui.status;
  const frac = ui.totalSteps > 0 ? ui.step / ui.totalSteps : 0;
  progressFill.style.width = `${Math.round(frac * 100)}%`;
}

async function b64ToImage(b64: string): Promise<HTMLImageElement> {
  const img = new Image();
  img.src = "data:image/png;base64," + b64;
  await img.decode();
  return img;
}

function ctx2d(canvas: HTMLCanvasElement): CanvasRenderingContext2D {
  const c = canvas.getContext("2d");
  if (!c) throw new Error("2d canvas unsupported");
  return c;
}

async function showCanvas(b64: string): Promise<void> {
  const img = await b64ToImage(b64);
  ctx2d(paint).drawImage(img, 0, 0);
}

function renderOverlay(): void {
  const c = ctx2d(overlay);
  c.clearRect(0, 0, width, height);
  c.putImageData(new ImageData(overlayPixels(brush.data), width, height), 0, 0);
}

function pointerPos(e: PointerEvent): { x: number; y: number } {
  const rect = overlay.getBoundingClientRect();
  return {
    x: ((e.clientX - rect.left) * width) / rect.width,
    y: ((e.clientY - rect.top) * height) / rect.height,
  };
}

let drawing = false;
let last = { x: 0, y: 0 };

function attachBrush(): void {
  overlay.addEventListener("pointerdown", (e) => {
    drawing = true;
    overlay.setPointerCapture(e.pointerId);
    last = pointerPos(e);
    brush.stamp(last.x, last.y, Number(radiusInput.value));
    renderOverlay();
    dispatch({ kind: "maskChanged", pixels: brush.count() });
  });
  overlay.addEventListener("pointermove", (e) => {
    if (!drawing) return;
    const pos = pointerPos(e);
    brush.line(last.x, last.y, pos.x, pos.y, Number(radiusInput.value));
    last = pos;
    renderOverlay();
    dispatch({ kind: "maskChanged", pixels: brush.count() });
  });
  const stop = () => {
    drawing = false;
  };
  overlay.addEventListener("pointerup", stop);
  overlay.addEventListener("pointercancel", stop);
}

// Patch composited over the pre-edit canvas, preview only; the main view
// always shows the server's canvas.
function renderPatchPreview(before: ImageData, patch: HTMLImageElement, mask: Uint8Array): void {
  const c = ctx2d(patchPreview);
  c.putImageData(before, 0, 0);
  const scratch = document.createElement("canvas");
  scratch.width = width;
  scratch.height = height;
  const sc = ctx2d(scratch);
  sc.drawImage(patch, 0, 0);
  const patchPx = sc.getImageData(0, 0, width, height);
  const composed = c.getImageData(0, 0, width, height);
  for (let i = 0; i < mask.length; i++) {
    if (!mask[i]) continue;
    composed.data[i * 4] = patchPx.data[i * 4];
    composed.data[i * 4 + 1] = patchPx.data[i * 4 + 1];
    composed.data[i * 4 + 2] = patchPx.data[i * 4 + 2];
  }
  c.putImageData(composed, 0, 0);
}

const SERIES: { field: string; color: string; label: string }[] = [
  { field: "per_step_seconds", color: "#2563eb", label: "seconds per denoise step" },
  { field: "speedup_analytic", color: "#dc2626", label: "analytic speedup vs full regeneration" },
];

function renderChart(series: SeriesRow[]): void {
  while (chart.firstChild) chart.removeChild(chart.firstChild);
  const box = { left: 40, top: 10, width: 300, height: 150 };
  const ns = "http://www.w3.org/2000/svg";
  for (const [row, spec] of SERIES.map((s, i) => [i, s] as const)) {
    const points = chartPoints(series, "edit", spec.field);
    if (points.length === 0) continue;
    const scale = fitScale(points, box);
    const line = document.createElementNS(ns, "polyline");
    line.setAttribute("points", polylineAttr(points, scale));
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", spec.color);
    line.setAttribute("stroke-width", "2");
    chart.appendChild(line);
    for (const p of points) {
      const { sx, sy } = scale.toSvg(p);
      const dot = document.createElementNS(ns, "circle");
      dot.setAttribute("cx", sx.toFixed(1));
      dot.setAttribute("cy", sy.toFixed(1));
      dot.setAttribute("r", "3");
      dot.setAttribute("fill", spec.color);
      const tip = document.createElementNS(ns, "title");
      tip.textContent = `edit ${p.x}: ${spec.label} = ${p.y}`; // server value verbatim
      dot.appendChild(tip);
      chart.appendChild(dot);
    }
    const tag = document.createElementNS(ns, "text");
    tag.setAttribute("x", "40");
    tag.setAttribute("y", String(180 + row * 14));
    tag.setAttribute("fill", spec.color);
    tag.setAttribute("font-size", "11");
    tag.textContent = spec.label;
    chart.appendChild(tag);
  }
}

async function refreshTelemetry(): Promise<void> {
  const body = await client.telemetry(sessionId);
  renderChart(body.series);
  const lastRow = body.series[body.series.length - 1];
  if (lastRow) {
    kReadout.textContent =
      `k = ${lastRow.k} of ${lastRow.n_tokens} tokens ` +
      `(${(lastRow.mask_ratio_tokens * 100).toFixed(1)}% of the canvas), ` +
      `analytic speedup ${lastRow.speedup_analytic.toFixed(2)}x`;
  } else {
    kReadout.textContent = "";
  }
}

// Consistency check on the wire format: the mask the server stored in
// history must decode back to exactly the pixels that were drawn.
async function verifyMaskEcho(sent: Uint8Array, editIndex: number): Promise<void> {
  const state = await client.session(sessionId);
  const echoed = rleToMask(state.history[editIndex].mask_rle);
  if (!masksEqual(sent, echoed.mask)) {
    dispatch({ kind: "failed", detail: "mask echo mismatch, wire format bug" });
  }
}

async function submit(): Promise<void> {
  if (!canSubmit(ui)) return;
  const sentMask = new Uint8Array(brush.data);
  const params: EditParams = {
    mask_png_b64: bytesToB64(maskToPng(sentMask, width, height)),
    label: Number(labelSelect.value),
    seed: Number(seedInput.value),
    steps: Number(stepsInput.value),
    guidance_scale: Number(guidanceInput.value),
    sdedit_strength: Number(sdeditInput.value),
    poisson: poissonInput.checked,
  };
  const before = ctx2d(paint).getImageData(0, 0, width, height);
  dispatch({ kind: "submitted", totalSteps: params.steps });
  try {
    const result = await client.editStream(sessionId, params, (tick) =>
      dispatch({ kind: "step", step: tick.step, total: tick.total }),
    );
    await showCanvas(result.canvas_png_b64);
    renderPatchPreview(before, await b64ToImage(result.patch_png_b64), sentMask);
    brush.clear();
    renderOverlay();
    dispatch({ kind: "maskChanged", pixels: 0 });
    const tel = result.telemetry as { steps_run?: number };
    dispatch({ kind: "finished", summary: `done in ${tel.steps_run ?? "?"} steps` });
    await refreshTelemetry();
    await verifyMaskEcho(sentMask, result.edit_index);
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) dispatch({ kind: "busy" });
    else dispatch({ kind: "failed", detail: err instanceof Error ? err.message : String(err) });
  }
}

async function newSession(): Promise<void> {
  const created = await client.createSession();
  sessionId = created.session_id;
  await showCanvas(created.canvas_png_b64);
  brush.clear();
  renderOverlay();
  ctx2d(patchPreview).clearRect(0, 0, width, height);
  renderChart([]);
  kReadout.textContent = "";
  dispatch({ kind: "maskChanged", pixels: 0 });
  dispatch({ kind: "connected" });
}

async function start(): Promise<void> {
  const info = await client.info();
  [height, width] = info.canvas_size;
  for (const canvas of [paint, overlay, patchPreview]) {
    canvas.width = width;
    canvas.height = height;
  }
  brush = new BrushMask(width, height);
  for (let i = 0; i < info.num_classes; i++) {
    const opt = document.createElement("option");
    opt.value = String(i);
    opt.textContent = `class ${i}`;
    labelSelect.appendChild(opt);
  }
  stepsInput.max = String(info.schedule_steps);
  modelInfo.textContent =
    `${info.variant} on a ${width}x${height} canvas, ${info.n_tokens} tokens, ` +
    `${info.codec} codec, ${info.schedule_steps}-step schedule`;

  attachBrush();
  radiusInput.addEventListener("input", () => (radiusVal.textContent = radiusInput.value));
  sdeditInput.addEventListener("input", () => (sdeditVal.textContent = sdeditInput.value));
  el<HTMLButtonElement>("randomSeed").addEventListener("click", () => {
    seedInput.value = String(Math.floor(Math.random() * 2 ** 31));
  });
  clearBtn.addEventListener("click", () => {
    brush.clear();
    renderOverlay();
    dispatch({ kind: "maskChanged", pixels: 0 });
  });
  resetBtn.addEventListener("click", () => void newSession());
  submitBtn.addEventListener("click", () => void submit());

  await newSession();
}

start().catch((err) => {
  statusSpan.textContent = `failed to connect: ${err instanceof Error ? err.message : err}`;
});
