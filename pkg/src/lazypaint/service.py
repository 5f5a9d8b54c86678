"""Session HTTP service for incremental editing.

JSON in and out; canvases and masks travel as base64 PNG (masks also as
run-length pairs). One generation in flight per session: concurrent edit
requests on the same session get 409. Per-step progress streams as
server-sent events when the edit request asks for it.
"""

import base64
import io
import json
import queue
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import HTMLResponse, Response, StreamingResponse
from PIL import Image

from .costs import rows_to_csv
from .errors import ConfigurationError
from .pipeline import EditPipeline, EditRequest

# ------------------------------------------------------------- wire formats


def png_encode(canvas: np.ndarray) -> bytes:
    """(3, h, w) float [0,1] -> 8-bit RGB PNG bytes."""
    arr = np.clip(np.asarray(canvas), 0.0, 1.0)
    u8 = (arr * 255.0).round().astype(np.uint8).transpose(1, 2, 0)
    buf = io.BytesIO()
    Image.fromarray(u8, "RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_decode(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data)).convert("RGB")
    u8 = np.asarray(img, dtype=np.uint8)
    return (u8.astype(np.float32) / 255.0).transpose(2, 0, 1)


def mask_png_encode(mask: np.ndarray) -> bytes:
    u8 = (np.asarray(mask, dtype=np.uint8) * 255)
    buf = io.BytesIO()
    Image.fromarray(u8, "L").save(buf, format="PNG")
    return buf.getvalue()


def mask_png_decode(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data)).convert("L")
    return (np.asarray(img, dtype=np.uint8) >= 128).astype(np.uint8)


def mask_to_rle(mask: np.ndarray) -> dict:
    """Alternating run lengths starting with a 0-run (possibly length 0)."""
    mask = np.asarray(mask, dtype=np.uint8)
    flat = mask.reshape(-1)
    if flat.size == 0:
        raise ValueError("empty mask array")
    edges = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], edges, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "runs": runs}


def rle_to_mask(rle: dict) -> np.ndarray:
    try:
        h, w = (int(v) for v in rle["size"])
        runs = [int(r) for r in rle["runs"]]
    except (KeyError, TypeError, ValueError):
        raise ValueError("run-length mask needs integer 'size' [h, w] and 'runs'") from None
    if h < 1 or w < 1 or any(r < 0 for r in runs):
        raise ValueError("run-length values must be non-negative, dims positive")
    if sum(runs) != h * w:
        raise ValueError(f"runs sum to {sum(runs)}, canvas has {h * w} pixels")
    flat = np.zeros(h * w, dtype=np.uint8)
    pos = 0
    for i, r in enumerate(runs):
        if i % 2 == 1:
            flat[pos:pos + r] = 1
        pos += r
    return flat.reshape(h, w)


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str, what: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except Exception:
        raise HTTPException(400, f"{what} is not valid base64") from None


# ------------------------------------------------------------- sessions


@dataclass
class Session:
    id: str
    canvas: np.ndarray
    history: list = field(default_factory=list)
    telemetry: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


def _parse_edit(payload: dict, canvas_shape, num_classes: int) -> EditRequest:
    if "mask_rle" in payload:
        try:
            mask = rle_to_mask(payload["mask_rle"])
        except ValueError as e:
            raise HTTPException(400, str(e)) from None
    elif "mask_png_b64" in payload:
        try:
            mask = mask_png_decode(_unb64(payload["mask_png_b64"], "mask_png_b64"))
        except HTTPException:
            raise
        except Exception:
            raise HTTPException(400, "mask PNG could not be decoded") from None
    else:
        raise HTTPException(400, "edit needs mask_rle or mask_png_b64")
    if mask.shape != canvas_shape:
        raise HTTPException(400, f"mask {list(mask.shape)} does not match canvas "
                                 f"{list(canvas_shape)}")
    if not mask.any():
        raise HTTPException(400, "empty mask: nothing to edit")

    label = payload.get("label")
    if not isinstance(label, int) or not 0 <= label < num_classes:
        raise HTTPException(400, f"label must be an integer in [0, {num_classes})")
    try:
        req = EditRequest(
            mask=mask, label=label,
            seed=int(payload.get("seed", 0)),
            steps=int(payload.get("steps", 50)),
            guidance_scale=float(payload.get("guidance_scale", 4.5)),
            sdedit_strength=float(payload.get("sdedit_strength", 0.0)),
            poisson=bool(payload.get("poisson", True)),
        )
    except Exception as e:
        raise HTTPException(400, f"bad sampler options: {e}") from None
    if req.steps < 1:
        raise HTTPException(400, "steps must be at least 1")
    if not 0.0 <= req.sdedit_strength <= 1.0:
        raise HTTPException(400, "sdedit_strength must lie in [0, 1]")
    return req


def _history_entry(payload: dict, req: EditRequest) -> dict:
    return {
        "mask_rle": mask_to_rle(req.mask),
        "label": req.label, "seed": req.seed, "steps": req.steps,
        "guidance_scale": req.guidance_scale,
        "sdedit_strength": req.sdedit_strength, "poisson": req.poisson,
    }


def _series(telemetry: list) -> list:
    rows = []
    for i, tel in enumerate(telemetry):
        rows.append({
            "edit": i,
            "k": tel["k"],
            "n_tokens": tel["n_tokens"],
            "mask_ratio_tokens": tel["mask_ratio_tokens"],
            "steps_run": tel["steps_run"],
            "token_steps": tel["token_steps"],
            "encoder_seconds": tel["timings"]["encoder"],
            "decode_steps_seconds": tel["timings"]["decode_steps"],
            "per_step_seconds": tel["timings"]["decode_steps"] / tel["steps_run"],
            "flops_lazy_total": tel["flops_lazy_total"],
            "flops_regenerate_total": tel["flops_regenerate_total"],
            "speedup_analytic": tel["speedup_analytic"],
        })
    return rows


def _sse(event: str, data: dict) -> str:
    return f"event: {event}\ndata: {json.dumps(data)}\n\n"


def create_app(pipeline: EditPipeline, ui_html: str | None = None) -> FastAPI:
    app = FastAPI(title="lazypaint")
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions
    app.state.pipeline = pipeline

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return session

    @app.get("/info")
    def info():
        h, w = pipeline.canvas_size
        cfg = pipeline.decoder.cfg
        return {
            "canvas_size": [h, w],
            "n_tokens": pipeline.geometry.n_tokens,
            "num_classes": cfg.num_classes,
            "variant": cfg.variant,
            "codec": pipeline.codec.kind,
            "schedule_steps": pipeline.schedule.T,
        }

    @app.post("/sessions", status_code=201)
    def create_session(payload: dict = Body(default={})):
        h, w = pipeline.canvas_size
        if "canvas_png_b64" in payload:
            try:
                canvas = png_decode(_unb64(payload["canvas_png_b64"], "canvas_png_b64"))
            except HTTPException:
                raise
            except Exception:
                raise HTTPException(400, "canvas PNG could not be decoded") from None
            if canvas.shape != (3, h, w):
                raise HTTPException(400, f"canvas must be {w}x{h} RGB, got "
                                         f"{canvas.shape[2]}x{canvas.shape[1]}")
        else:
            size = payload.get("size", [h, w])
            if isinstance(size, int):
                size = [size, size]
            if list(size) != [h, w]:
                raise HTTPException(400, f"this model serves a {w}x{h} canvas")
            canvas = pipeline.blank_canvas()
        session = Session(id=uuid.uuid4().hex[:12], canvas=canvas)
        sessions[session.id] = session
        return {"session_id": session.id, "canvas_size": [h, w],
                "canvas_png_b64": _b64(png_encode(canvas))}

    @app.post("/sessions/{session_id}/edits")
    def apply_edit(session_id: str, payload: dict = Body(...)):
        session = get_session(session_id)
        req = _parse_edit(payload, session.canvas.shape[1:],
                          pipeline.decoder.cfg.num_classes)
        if not session.lock.acquire(blocking=False):
            raise HTTPException(409, "session busy: one edit at a time")

        def finish():
            result = pipeline.apply_edit(session.canvas, req)
            session.canvas = result.canvas
            session.history.append(_history_entry(payload, req))
            session.telemetry.append(result.telemetry)
            return {
                "session_id": session.id,
                "edit_index": len(session.history) - 1,
                "canvas_png_b64": _b64(png_encode(result.canvas)),
                "patch_png_b64": _b64(png_encode(result.patch)),
                "telemetry": result.telemetry,
            }

        if not payload.get("stream", False):
            try:
                return finish()
            except (ValueError, ConfigurationError) as e:
                raise HTTPException(400, str(e)) from None
            finally:
                session.lock.release()

        ticks: queue.Queue = queue.Queue()

        def on_step(step, total, t):
            ticks.put(("step", {"step": step, "total": total, "t": t}))

        def worker():
            try:
                body = pipeline.apply_edit(session.canvas, req, on_step=on_step)
                session.canvas = body.canvas
                session.history.append(_history_entry(payload, req))
                session.telemetry.append(body.telemetry)
                ticks.put(("result", {
                    "session_id": session.id,
                    "edit_index": len(session.history) - 1,
                    "canvas_png_b64": _b64(png_encode(body.canvas)),
                    "patch_png_b64": _b64(png_encode(body.patch)),
                    "telemetry": body.telemetry,
                }))
            except Exception as e:
                ticks.put(("error", {"detail": str(e)}))
            finally:
                ticks.put(None)

        def stream():
            thread = threading.Thread(target=worker, daemon=True)
            thread.start()
            try:
                while True:
                    item = ticks.get()
                    if item is None:
                        break
                    yield _sse(*item)
            finally:
                thread.join()
                session.lock.release()

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}")
    def get_state(session_id: str):
        session = get_session(session_id)
        return {
            "session_id": session.id,
            "canvas_png_b64": _b64(png_encode(session.canvas)),
            "history": session.history,
        }

    @app.get("/sessions/{session_id}/telemetry")
    def get_telemetry(session_id: str):
        session = get_session(session_id)
        rows = _series(session.telemetry)
        return {
            "session_id": session.id,
            "edits": session.telemetry,
            "series": rows,
            "csv": rows_to_csv(rows) if rows else "",
        }

    if ui_html is not None:
        @app.get("/", response_class=HTMLResponse)
        def index():
            return ui_html

    return app


def serve(pipeline: EditPipeline, host: str = "127.0.0.1", port: int = 8000,
          ui_html: str | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(pipeline, ui_html=ui_html), host=host, port=port,
                log_level="warning")
