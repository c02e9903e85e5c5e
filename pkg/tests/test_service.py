"""HTTP session service: contracts, idempotency, undo, slices, isolation."""

import base64
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from tis.config import load_config
from tis.evaluate import dice_per_class
from tis.service import make_app
from tis.volume_io import (LabelMask, Volume, labels_bytes, parse_labels,
                           volume_bytes)


def b64(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


def decode_mask(payload: str) -> LabelMask:
    return parse_labels(base64.b64decode(payload))


@pytest.fixture(scope="module")
def ctx(tiny_run):
    cfg_path, out = tiny_run
    cfg = load_config(cfg_path)
    app = make_app(out, cfg)
    client = TestClient(app)
    case = out / "data" / "eval" / "case_000"
    vol_bytes = case.with_suffix(".vol").read_bytes()
    gt_bytes = case.with_suffix(".lbl").read_bytes()
    return client, cfg, out, vol_bytes, gt_bytes


def new_session(ctx, with_gt=True):
    client, _, _, vol_bytes, gt_bytes = ctx
    body = {"volume_b64": b64(vol_bytes)}
    if with_gt:
        body["gt_b64"] = b64(gt_bytes)
    r = client.post("/api/sessions", json=body)
    assert r.status_code == 200
    return r.json()


def test_create_returns_automatic_mask_and_exact_dice(ctx):
    client, cfg, _, vol_bytes, gt_bytes = ctx
    out = new_session(ctx)
    assert out["step"] == 0
    assert out["extents"] == [16, 16, 16] and out["categories"] == 3
    mask = decode_mask(out["mask_b64"])
    gt = parse_labels(gt_bytes)
    assert out["dice"] == dice_per_class(mask, gt)


def test_create_without_gt_has_no_dice(ctx):
    out = new_session(ctx, with_gt=False)
    assert "dice" not in out


def test_malformed_volume_rejected(ctx):
    client = ctx[0]
    r = client.post("/api/sessions", json={"volume_b64": b64(b"JUNKJUNK1234")})
    assert r.status_code == 400
    r = client.post("/api/sessions", json={"volume_b64": "not^^base64"})
    assert r.status_code == 400


def test_gt_extent_mismatch_rejected(ctx):
    client, _, _, vol_bytes, _ = ctx
    other = LabelMask(np.zeros((8, 8, 8), dtype=np.uint8), 3)
    r = client.post("/api/sessions", json={"volume_b64": b64(vol_bytes),
                                           "gt_b64": b64(labels_bytes(other))})
    assert r.status_code == 400


def test_click_refines_and_is_idempotent(ctx):
    client = ctx[0]
    sid = new_session(ctx)["session_id"]
    body = {"position": [8, 8, 8], "category": 2, "step": 1}
    r1 = client.post(f"/api/sessions/{sid}/clicks", json=body)
    assert r1.status_code == 200 and r1.json()["step"] == 1
    # duplicate retry: identical response, no new history entry
    r2 = client.post(f"/api/sessions/{sid}/clicks", json=body)
    assert r2.status_code == 200 and r2.json() == r1.json()
    steps = client.get(f"/api/sessions/{sid}").json()["steps"]
    assert [s["step"] for s in steps] == [0, 1]
    # same step index, different click: conflict
    r3 = client.post(f"/api/sessions/{sid}/clicks",
                     json={"position": [1, 1, 1], "category": 0, "step": 1})
    assert r3.status_code == 409
    # skipping ahead: conflict
    r4 = client.post(f"/api/sessions/{sid}/clicks",
                     json={"position": [1, 1, 1], "category": 0, "step": 3})
    assert r4.status_code == 409


def test_click_validation(ctx):
    client = ctx[0]
    sid = new_session(ctx)["session_id"]
    r = client.post(f"/api/sessions/{sid}/clicks",
                    json={"position": [16, 0, 0], "category": 1, "step": 1})
    assert r.status_code == 400
    r = client.post(f"/api/sessions/{sid}/clicks",
                    json={"position": [0, 0, 0], "category": 3, "step": 1})
    assert r.status_code == 400
    assert client.get(f"/api/sessions/{sid}").json()["steps"][-1]["step"] == 0


def test_unknown_session_404(ctx):
    client = ctx[0]
    assert client.get("/api/sessions/doesnotexist").status_code == 404
    r = client.post("/api/sessions/doesnotexist/clicks",
                    json={"position": [0, 0, 0], "category": 1, "step": 1})
    assert r.status_code == 404


def test_undo_restores_prefix_masks_bitwise(ctx):
    client = ctx[0]
    created = new_session(ctx)
    sid = created["session_id"]
    auto = decode_mask(created["mask_b64"])
    m1 = decode_mask(client.post(f"/api/sessions/{sid}/clicks",
                                 json={"position": [8, 8, 8], "category": 2,
                                       "step": 1}).json()["mask_b64"])
    client.post(f"/api/sessions/{sid}/clicks",
                json={"position": [4, 12, 9], "category": 1, "step": 2})
    r = client.post(f"/api/sessions/{sid}/undo")
    assert r.status_code == 200 and r.json()["step"] == 1
    assert np.array_equal(decode_mask(r.json()["mask_b64"]).labels, m1.labels)
    r = client.post(f"/api/sessions/{sid}/undo")
    assert r.status_code == 200 and r.json()["step"] == 0
    assert np.array_equal(decode_mask(r.json()["mask_b64"]).labels, auto.labels)
    assert client.post(f"/api/sessions/{sid}/undo").status_code == 409


def test_slices_extract_stored_arrays_bitwise(ctx):
    client = ctx[0]
    created = new_session(ctx)
    sid = created["session_id"]
    m1 = decode_mask(client.post(f"/api/sessions/{sid}/clicks",
                                 json={"position": [8, 8, 8], "category": 2,
                                       "step": 1}).json()["mask_b64"])
    r = client.get(f"/api/sessions/{sid}/slice",
                   params={"axis": "z", "index": 5, "layer": "refined"})
    body = r.json()
    assert body["rows"] == 16 and body["cols"] == 16
    assert body["values"] == m1.labels[:, :, 5].T.tolist()
    r = client.get(f"/api/sessions/{sid}/slice",
                   params={"axis": "x", "index": 3, "layer": "auto"})
    auto = decode_mask(created["mask_b64"])
    assert r.json()["values"] == auto.labels[3, :, :].T.tolist()
    # error layer: elementwise refined != gt
    gt = parse_labels(ctx[4])
    r = client.get(f"/api/sessions/{sid}/slice",
                   params={"axis": "y", "index": 7, "layer": "error"})
    want = (m1.labels != gt.labels)[:, 7, :].astype(int).T.tolist()
    assert r.json()["values"] == want


def test_slice_of_constant_volume_is_constant(ctx):
    client = ctx[0]
    vol = Volume(np.zeros((8, 8, 8)))
    r = client.post("/api/sessions", json={"volume_b64": b64(volume_bytes(vol))})
    sid = r.json()["session_id"]
    r = client.get(f"/api/sessions/{sid}/slice",
                   params={"axis": "z", "index": 2, "layer": "image"})
    values = np.array(r.json()["values"])
    assert values.shape == (8, 8) and np.all(values == values[0, 0])


def test_slice_validation(ctx):
    client = ctx[0]
    sid = new_session(ctx)["session_id"]
    bad = [{"axis": "w", "index": 0, "layer": "auto"},
           {"axis": "z", "index": 16, "layer": "auto"},
           {"axis": "z", "index": 0, "layer": "nope"}]
    for params in bad:
        assert client.get(f"/api/sessions/{sid}/slice", params=params).status_code == 400
    no_gt = new_session(ctx, with_gt=False)["session_id"]
    r = client.get(f"/api/sessions/{no_gt}/slice",
                   params={"axis": "z", "index": 0, "layer": "error"})
    assert r.status_code == 400


def test_sessions_are_isolated(ctx):
    client = ctx[0]
    a = new_session(ctx)["session_id"]
    b = new_session(ctx)["session_id"]
    ra1 = client.post(f"/api/sessions/{a}/clicks",
                      json={"position": [8, 8, 8], "category": 2, "step": 1}).json()
    rb1 = client.post(f"/api/sessions/{b}/clicks",
                      json={"position": [4, 12, 9], "category": 1, "step": 1}).json()
    ra2 = client.post(f"/api/sessions/{a}/clicks",
                      json={"position": [2, 3, 4], "category": 0, "step": 2}).json()
    # serial rerun of session a's click list on a fresh session matches bitwise,
    # so b's interleaved click did not leak into a
    c = new_session(ctx)["session_id"]
    rc1 = client.post(f"/api/sessions/{c}/clicks",
                      json={"position": [8, 8, 8], "category": 2, "step": 1}).json()
    rc2 = client.post(f"/api/sessions/{c}/clicks",
                      json={"position": [2, 3, 4], "category": 0, "step": 2}).json()
    assert ra1["mask_sha256"] == rc1["mask_sha256"]
    assert ra2["mask_sha256"] == rc2["mask_sha256"]
    assert [s["step"] for s in client.get(f"/api/sessions/{b}").json()["steps"]] == [0, 1]
    assert rb1["step"] == 1


def test_sessions_survive_restart(ctx, tiny_run):
    client, cfg, out = ctx[0], ctx[1], ctx[2]
    sid = new_session(ctx)["session_id"]
    first = client.post(f"/api/sessions/{sid}/clicks",
                        json={"position": [8, 8, 8], "category": 2, "step": 1}).json()
    fresh = TestClient(make_app(out, cfg))
    state = fresh.get(f"/api/sessions/{sid}").json()
    assert [s["step"] for s in state["steps"]] == [0, 1]
    assert state["steps"][1]["mask_sha256"] == first["mask_sha256"]
    nxt = fresh.post(f"/api/sessions/{sid}/clicks",
                     json={"position": [4, 12, 9], "category": 1, "step": 2})
    assert nxt.status_code == 200 and nxt.json()["step"] == 2


def test_missing_checkpoints_are_503(tiny_run, tmp_path):
    cfg = load_config(tiny_run[0])
    client = TestClient(make_app(tmp_path / "empty", cfg))
    r = client.post("/api/sessions",
                    json={"volume_b64": b64(volume_bytes(Volume(np.zeros((8, 8, 8)))))})
    assert r.status_code == 503
