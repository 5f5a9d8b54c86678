"""HTTP editing service: wire formats, session lifecycle, edit semantics
through the JSON/PNG boundary, concurrency guard, streaming, and replay."""

import base64
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from lazypaint.codec import LatentCodec
from lazypaint.decoder import DecoderConfig, LazyDecoder
from lazypaint.diffusion import make_schedule
from lazypaint.encoder import ContextEncoder, EncoderConfig
from lazypaint.patches import PatchGeometry
from lazypaint.pipeline import EditPipeline
from lazypaint.service import (create_app, mask_png_decode, mask_png_encode,
                               mask_to_rle, png_decode, png_encode, rle_to_mask)

GEOM = PatchGeometry(latent_h=16, latent_w=16)


def scatter_noise(module, seed):
    rng = np.random.default_rng(seed)
    for _, p in module.named_parameters():
        if not p.data.any():
            p.data[...] = 0.05 * rng.standard_normal(p.data.shape).astype(np.float32)


@pytest.fixture(scope="module")
def app():
    codec = LatentCodec("identity")
    rng = np.random.default_rng(0)
    dec_cfg = DecoderConfig("concat_hidden", GEOM, channels=codec.channels,
                            context_dim=32, dim=32, layers=2, heads=4, num_classes=4)
    enc_cfg = EncoderConfig(GEOM, channels=codec.channels, dim=32, layers=2,
                            heads=4, mask_factor=codec.factor)
    decoder = LazyDecoder(dec_cfg, rng)
    encoder = ContextEncoder(enc_cfg, rng)
    scatter_noise(decoder, 1)
    scatter_noise(encoder, 2)
    pipeline = EditPipeline(decoder, encoder, codec, make_schedule(50))
    return create_app(pipeline)


@pytest.fixture()
def client(app):
    return TestClient(app)


def u8_canvas(seed, h=16, w=16):
    """Float canvas already on the 8-bit grid, so it survives the wire exactly."""
    u8 = np.random.default_rng(seed).integers(0, 256, (3, h, w), dtype=np.uint8)
    return u8.astype(np.float32) / 255.0


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def rect_rle(h, w, y0, y1, x0, x1):
    m = np.zeros((h, w), np.uint8)
    m[y0:y1, x0:x1] = 1
    return mask_to_rle(m)


def edit_payload(**overrides):
    payload = {"mask_rle": rect_rle(16, 16, 2, 9, 3, 11), "label": 1,
               "seed": 5, "steps": 2, "guidance_scale": 1.0}
    payload.update(overrides)
    return payload


def parse_sse(text):
    events = []
    for block in text.strip().split("\n\n"):
        lines = block.split("\n")
        name = lines[0].removeprefix("event: ")
        data = json.loads(lines[1].removeprefix("data: "))
        events.append((name, data))
    return events


# ------------------------------------------------------------- wire helpers


def test_png_round_trip_exact_on_8bit_grid():
    canvas = u8_canvas(0)
    assert np.array_equal(png_decode(png_encode(canvas)), canvas)


def test_png_encode_quantizes_to_nearest_8bit():
    canvas = np.full((3, 4, 4), 0.5, np.float32)
    decoded = png_decode(png_encode(canvas))
    assert np.unique(decoded).size == 1
    assert abs(decoded.flat[0] * 255.0 - 127.5) <= 0.5


def test_mask_png_round_trip():
    mask = (np.random.default_rng(3).random((16, 16)) < 0.3).astype(np.uint8)
    assert np.array_equal(mask_png_decode(mask_png_encode(mask)), mask)


# Emitted by the browser client's own PNG encoder (stored-deflate zlib),
# frozen here so the server side of the wire contract is pinned: a 16x16
# mask with rows 2..9, cols 3..11 set.
BROWSER_MASK_PNG_B64 = (
    "iVBORw0KGgoAAAANSUhEUgAAABAAAAAQCAAAAAA6mKC9AAABG0lEQVR4AQEQAe/+AAAAAAAA"
    "AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAD//////////wAAAAAAAAAAAP//////"
    "////AAAAAAAAAAAA//////////8AAAAAAAAAAAD//////////wAAAAAAAAAAAP//////////"
    "AAAAAAAAAAAA//////////8AAAAAAAAAAAD//////////wAAAAAAAAAAAAAAAAAAAAAAAAAA"
    "AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAA"
    "AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAgFTfJ"
    "rXo7gQAAAABJRU5ErkJggg=="
)


def test_mask_png_from_browser_encoder_decodes(client):
    mask = np.zeros((16, 16), np.uint8)
    mask[2:9, 3:11] = 1
    decoded = mask_png_decode(base64.b64decode(BROWSER_MASK_PNG_B64))
    assert np.array_equal(decoded, mask)

    payload = edit_payload()
    payload.pop("mask_rle")
    payload["mask_png_b64"] = BROWSER_MASK_PNG_B64
    sid = client.post("/sessions", json={}).json()["session_id"]
    body = client.post(f"/sessions/{sid}/edits", json=payload).json()
    assert body["telemetry"]["k"] > 0
    # the history echo is what the client verifies after every edit
    history = client.get(f"/sessions/{sid}").json()["history"]
    assert np.array_equal(rle_to_mask(history[0]["mask_rle"]), mask)


@pytest.mark.parametrize("seed,fill", [(0, None), (1, 0), (2, 1)])
def test_rle_round_trip(seed, fill):
    if fill is None:
        mask = (np.random.default_rng(seed).random((11, 7)) < 0.4).astype(np.uint8)
    else:
        mask = np.full((11, 7), fill, np.uint8)
    rle = mask_to_rle(mask)
    assert sum(rle["runs"]) == 77
    assert rle["runs"][0] == 0 or mask.flat[0] == 0
    assert np.array_equal(rle_to_mask(rle), mask)


def test_rle_rejects_malformed():
    with pytest.raises(ValueError, match="sum"):
        rle_to_mask({"size": [4, 4], "runs": [3, 2]})
    with pytest.raises(ValueError, match="non-negative"):
        rle_to_mask({"size": [4, 4], "runs": [20, -4]})
    with pytest.raises(ValueError, match="size"):
        rle_to_mask({"runs": [16]})


# ------------------------------------------------------------- sessions


def test_info_describes_model(client):
    info = client.get("/info").json()
    assert info["canvas_size"] == [16, 16]
    assert info["n_tokens"] == 64
    assert info["num_classes"] == 4
    assert info["variant"] == "concat_hidden"
    assert info["schedule_steps"] == 50


def test_create_blank_session(client):
    r = client.post("/sessions", json={})
    assert r.status_code == 201
    body = r.json()
    assert body["canvas_size"] == [16, 16]
    canvas = png_decode(base64.b64decode(body["canvas_png_b64"]))
    assert canvas.shape == (3, 16, 16)
    assert np.unique(canvas).size == 1  # uniform mid-gray


def test_create_session_from_upload(client):
    canvas = u8_canvas(7)
    r = client.post("/sessions", json={"canvas_png_b64": b64(png_encode(canvas))})
    assert r.status_code == 201
    echoed = png_decode(base64.b64decode(r.json()["canvas_png_b64"]))
    assert np.array_equal(echoed, canvas)


def test_create_session_rejects_bad_input(client):
    assert client.post("/sessions", json={"size": [8, 8]}).status_code == 400
    assert client.post("/sessions", json={"canvas_png_b64": "!!!"}).status_code == 400
    wrong = png_encode(u8_canvas(0, h=8, w=8))
    r = client.post("/sessions", json={"canvas_png_b64": b64(wrong)})
    assert r.status_code == 400
    assert "16x16" in r.json()["detail"]


def test_sessions_are_independent(client):
    a = client.post("/sessions", json={}).json()["session_id"]
    b = client.post("/sessions", json={}).json()["session_id"]
    assert a != b
    client.post(f"/sessions/{a}/edits", json=edit_payload())
    canvas_b = client.get(f"/sessions/{b}").json()["canvas_png_b64"]
    blank = client.post("/sessions", json={}).json()["canvas_png_b64"]
    assert canvas_b == blank


def test_interleaved_sessions_match_serial(client):
    edits_a = [edit_payload(seed=1), edit_payload(mask_rle=rect_rle(16, 16, 9, 15, 9, 15),
                                                  label=2, seed=2)]
    edits_b = [edit_payload(seed=3, label=3), edit_payload(seed=4)]

    inter_a = client.post("/sessions", json={}).json()["session_id"]
    inter_b = client.post("/sessions", json={}).json()["session_id"]
    for ea, eb in zip(edits_a, edits_b):
        client.post(f"/sessions/{inter_a}/edits", json=ea)
        client.post(f"/sessions/{inter_b}/edits", json=eb)

    for sid, edits in ((inter_a, edits_a), (inter_b, edits_b)):
        serial = client.post("/sessions", json={}).json()["session_id"]
        for e in edits:
            client.post(f"/sessions/{serial}/edits", json=e)
        assert (client.get(f"/sessions/{serial}").json()["canvas_png_b64"]
                == client.get(f"/sessions/{sid}").json()["canvas_png_b64"])


def test_disjoint_second_edit_preserves_first(client):
    sid = client.post("/sessions", json={}).json()["session_id"]
    first = rect_rle(16, 16, 1, 6, 1, 6)
    r1 = client.post(f"/sessions/{sid}/edits", json=edit_payload(mask_rle=first))
    after_first = png_decode(base64.b64decode(r1.json()["canvas_png_b64"]))
    second = rect_rle(16, 16, 10, 15, 10, 15)
    r2 = client.post(f"/sessions/{sid}/edits",
                     json=edit_payload(mask_rle=second, label=2, seed=9))
    after_second = png_decode(base64.b64decode(r2.json()["canvas_png_b64"]))
    region_one = rle_to_mask(first).astype(bool)
    assert np.array_equal(after_second[:, region_one], after_first[:, region_one])


def test_unknown_session_is_404(client):
    assert client.get("/sessions/nope").status_code == 404
    assert client.get("/sessions/nope/telemetry").status_code == 404
    assert client.post("/sessions/nope/edits", json=edit_payload()).status_code == 404


# ------------------------------------------------------------- edits


def test_edit_response_shape_and_state(client):
    canvas = u8_canvas(11)
    r = client.post("/sessions", json={"canvas_png_b64": b64(png_encode(canvas))})
    sid = r.json()["session_id"]
    r = client.post(f"/sessions/{sid}/edits", json=edit_payload())
    assert r.status_code == 200
    body = r.json()
    assert body["edit_index"] == 0
    tel = body["telemetry"]
    assert tel["steps_run"] == 2 and tel["k"] >= 1
    assert tel["token_steps"] == tel["k"] * tel["steps_run"]

    after = png_decode(base64.b64decode(body["canvas_png_b64"]))
    mask = rle_to_mask(edit_payload()["mask_rle"]).astype(bool)
    assert np.array_equal(after[:, ~mask], canvas[:, ~mask])  # untouched outside
    assert not np.array_equal(after[:, mask], canvas[:, mask])
    stored = png_decode(base64.b64decode(
        client.get(f"/sessions/{sid}").json()["canvas_png_b64"]))
    assert np.array_equal(stored, after)

    patch = png_decode(base64.b64decode(body["patch_png_b64"]))
    assert np.array_equal(patch[:, ~mask], np.zeros_like(patch[:, ~mask]))


def test_same_seed_same_result_across_sessions(client):
    results = []
    for _ in range(2):
        sid = client.post("/sessions", json={}).json()["session_id"]
        r = client.post(f"/sessions/{sid}/edits", json=edit_payload(seed=42))
        results.append(r.json()["canvas_png_b64"])
    assert results[0] == results[1]


def test_full_mask_uses_every_token(client):
    sid = client.post("/sessions", json={}).json()["session_id"]
    full = mask_to_rle(np.ones((16, 16), np.uint8))
    r = client.post(f"/sessions/{sid}/edits", json=edit_payload(mask_rle=full))
    assert r.json()["telemetry"]["k"] == 64


def test_edit_validation_errors(client):
    sid = client.post("/sessions", json={}).json()["session_id"]
    url = f"/sessions/{sid}/edits"
    empty = {"size": [16, 16], "runs": [256]}
    assert client.post(url, json=edit_payload(mask_rle=empty)).status_code == 400
    small = {"size": [8, 8], "runs": [0, 64]}
    assert client.post(url, json=edit_payload(mask_rle=small)).status_code == 400
    assert client.post(url, json=edit_payload(label=99)).status_code == 400
    assert client.post(url, json=edit_payload(label="cat")).status_code == 400
    no_label = edit_payload()
    del no_label["label"]
    assert client.post(url, json=no_label).status_code == 400
    assert client.post(url, json=edit_payload(steps=0)).status_code == 400
    assert client.post(url, json=edit_payload(steps=999)).status_code == 400
    assert client.post(url, json=edit_payload(sdedit_strength=1.5)).status_code == 400
    assert client.post(url, json={"label": 1}).status_code == 400  # no mask at all
    bad_png = edit_payload(mask_png_b64="@@@")
    del bad_png["mask_rle"]
    assert client.post(url, json=bad_png).status_code == 400


def test_mask_as_png_matches_rle(client):
    mask = np.zeros((16, 16), np.uint8)
    mask[4:10, 5:12] = 1
    by_rle, by_png = [], []
    for out, payload in ((by_rle, {"mask_rle": mask_to_rle(mask)}),
                         (by_png, {"mask_png_b64": b64(mask_png_encode(mask))})):
        sid = client.post("/sessions", json={}).json()["session_id"]
        base = edit_payload()
        base.pop("mask_rle")
        base.update(payload)
        out.append(client.post(f"/sessions/{sid}/edits", json=base).json())
    assert by_rle[0]["canvas_png_b64"] == by_png[0]["canvas_png_b64"]


def test_busy_session_rejected(client, app):
    sid = client.post("/sessions", json={}).json()["session_id"]
    lock = app.state.sessions[sid].lock
    assert lock.acquire(blocking=False)
    try:
        r = client.post(f"/sessions/{sid}/edits", json=edit_payload())
        assert r.status_code == 409
        stream = client.post(f"/sessions/{sid}/edits",
                             json=edit_payload(stream=True))
        assert stream.status_code == 409
    finally:
        lock.release()
    assert client.post(f"/sessions/{sid}/edits", json=edit_payload()).status_code == 200
    # released again after the successful edit
    assert client.post(f"/sessions/{sid}/edits", json=edit_payload()).status_code == 200


# ------------------------------------------------------------- streaming


def test_stream_emits_steps_then_result(client):
    sid = client.post("/sessions", json={}).json()["session_id"]
    plain_sid = client.post("/sessions", json={}).json()["session_id"]
    plain = client.post(f"/sessions/{plain_sid}/edits",
                        json=edit_payload(steps=3)).json()

    r = client.post(f"/sessions/{sid}/edits", json=edit_payload(steps=3, stream=True))
    assert r.status_code == 200
    assert r.headers["content-type"].startswith("text/event-stream")
    events = parse_sse(r.text)
    steps = [d for name, d in events if name == "step"]
    results = [d for name, d in events if name == "result"]
    assert len(results) == 1
    assert len(steps) == results[0]["telemetry"]["steps_run"] == 3
    assert [s["step"] for s in steps] == [1, 2, 3]
    assert all(s["total"] == 3 for s in steps)
    assert results[0]["canvas_png_b64"] == plain["canvas_png_b64"]


def test_stream_surfaces_failure_as_error_event(client, app, monkeypatch):
    sid = client.post("/sessions", json={}).json()["session_id"]

    def boom(*a, **kw):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(app.state.pipeline, "apply_edit", boom)
    r = client.post(f"/sessions/{sid}/edits", json=edit_payload(stream=True))
    events = parse_sse(r.text)
    assert events == [("error", {"detail": "synthetic failure"})]
    monkeypatch.undo()
    assert client.post(f"/sessions/{sid}/edits", json=edit_payload()).status_code == 200


# ------------------------------------------------------------- history and telemetry


def test_history_replays_to_identical_canvas(client):
    canvas = u8_canvas(21)
    start = b64(png_encode(canvas))
    sid = client.post("/sessions", json={"canvas_png_b64": start}).json()["session_id"]
    client.post(f"/sessions/{sid}/edits", json=edit_payload(seed=1))
    client.post(f"/sessions/{sid}/edits",
                json=edit_payload(mask_rle=rect_rle(16, 16, 8, 15, 1, 7),
                                  label=3, seed=2, sdedit_strength=0.5))
    state = client.get(f"/sessions/{sid}").json()
    assert len(state["history"]) == 2

    replay_sid = client.post("/sessions",
                             json={"canvas_png_b64": start}).json()["session_id"]
    for entry in state["history"]:
        r = client.post(f"/sessions/{replay_sid}/edits", json=entry)
        assert r.status_code == 200
    replayed = client.get(f"/sessions/{replay_sid}").json()
    assert replayed["canvas_png_b64"] == state["canvas_png_b64"]


def test_telemetry_endpoint_aggregates_edits(client):
    sid = client.post("/sessions", json={}).json()["session_id"]
    tel = client.get(f"/sessions/{sid}/telemetry").json()
    assert tel["edits"] == [] and tel["series"] == [] and tel["csv"] == ""

    client.post(f"/sessions/{sid}/edits", json=edit_payload())
    client.post(f"/sessions/{sid}/edits",
                json=edit_payload(mask_rle=rect_rle(16, 16, 0, 16, 0, 16)))
    tel = client.get(f"/sessions/{sid}/telemetry").json()
    assert len(tel["edits"]) == len(tel["series"]) == 2
    assert [row["edit"] for row in tel["series"]] == [0, 1]
    for row, edit in zip(tel["series"], tel["edits"]):
        assert row["k"] == edit["k"]
        assert row["token_steps"] == edit["token_steps"]
        assert row["speedup_analytic"] == edit["speedup_analytic"]
    assert tel["series"][1]["k"] == 64
    header = tel["csv"].splitlines()[0]
    assert header.split(",")[:3] == ["edit", "k", "n_tokens"]
    assert len(tel["csv"].splitlines()) == 3
