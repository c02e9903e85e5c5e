"""HTTP session service: load a volume, click, get refined masks back.

Each session lives in its own directory (volume, click log, one mask file
per step), so any session can be replayed offline and undo is a file
lookup.  Model parameters are loaded once and shared read-only; requests
for one session are serialized with a per-session lock.

All mask payloads are base64 of the label-mask file format; positions are
full-resolution voxel indices (x, y, z).
"""

from __future__ import annotations

import base64
import binascii
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .config import RunConfig
from .config import refiner_ckpt_name
from .encoder import EncoderOutput, automatic_mask, encode, init_encoder_params
from .errors import FormatError, PositionError, ShapeError
from .evaluate import dice_per_class
from .params import ParamStore, load_checkpoint
from .refiner import Click, RefinerConfig, init_refiner_params, refine_forward
from .rng import Rng
from .tensor import no_grad
from .volume_io import (LabelMask, Volume, labels_bytes, parse_labels,
                        parse_volume, volume_bytes)


class CreateSessionRequest(BaseModel):
    volume_b64: str
    gt_b64: str | None = None


class AddClickRequest(BaseModel):
    position: tuple[int, int, int]
    category: int
    step: int


@dataclass
class _Session:
    id: str
    dir: Path
    volume: Volume
    gt: LabelMask | None
    clicks: list[Click]
    created: float
    enc_out: EncoderOutput | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def _mask_sha256(mask: LabelMask) -> str:
    import hashlib

    return hashlib.sha256(np.ascontiguousarray(mask.labels).tobytes()).hexdigest()


class _Service:
    def __init__(self, out_dir: Path, cfg: RunConfig, ablation: str):
        self.cfg = cfg
        self.ablation = ablation
        self.ref_cfg: RefinerConfig = cfg.refiner_config(ablation)
        self.ckpt_dir = Path(out_dir)
        self.session_root = Path(out_dir) / "sessions"
        self.enc_store: ParamStore | None = None
        self.ref_store: ParamStore | None = None
        self.sessions: dict[str, _Session] = {}
        self.registry_lock = threading.Lock()

    # -- models ------------------------------------------------------------

    def models(self) -> tuple[ParamStore, ParamStore]:
        with self.registry_lock:
            if self.enc_store is None:
                enc_path = self.ckpt_dir / "encoder.ckpt"
                ref_path = self.ckpt_dir / refiner_ckpt_name(self.ablation)
                for p in (enc_path, ref_path):
                    if not p.exists():
                        raise HTTPException(503, f"checkpoint not available: {p}")
                enc = init_encoder_params(self.cfg.encoder_config(), Rng(0))
                load_checkpoint(enc_path, enc)
                ref = init_refiner_params(self.ref_cfg, Rng(0))
                load_checkpoint(ref_path, ref)
                self.enc_store, self.ref_store = enc, ref
        return self.enc_store, self.ref_store

    # -- session store -----------------------------------------------------

    def create(self, volume: Volume, gt: LabelMask | None) -> _Session:
        sid = uuid.uuid4().hex[:16]
        sdir = self.session_root / sid
        (sdir / "masks").mkdir(parents=True)
        session = _Session(id=sid, dir=sdir, volume=volume, gt=gt,
                           clicks=[], created=time.time())
        (sdir / "volume.vol").write_bytes(volume_bytes(volume))
        if gt is not None:
            (sdir / "gt.lbl").write_bytes(labels_bytes(gt))
        self._write_meta(session)
        with self.registry_lock:
            self.sessions[sid] = session
        return session

    def _write_meta(self, s: _Session):
        meta = {"id": s.id, "created": s.created,
                "extents": list(s.volume.shape),
                "categories": self.ref_cfg.categories,
                "has_gt": s.gt is not None}
        (s.dir / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")

    def _write_clicks(self, s: _Session):
        lines = [json.dumps({"step": i + 1, "position": list(c.position),
                             "category": c.category}, separators=(",", ":"))
                 for i, c in enumerate(s.clicks)]
        (s.dir / "clicks.jsonl").write_text("".join(line + "\n" for line in lines))

    def get(self, sid: str) -> _Session:
        with self.registry_lock:
            session = self.sessions.get(sid)
            if session is None:
                session = self._load_from_disk(sid)
                if session is None:
                    raise HTTPException(404, f"unknown session: {sid}")
                self.sessions[sid] = session
        return session

    def _load_from_disk(self, sid: str) -> _Session | None:
        sdir = self.session_root / sid
        if not (sdir / "meta.json").exists():
            return None
        meta = json.loads((sdir / "meta.json").read_text())
        volume = parse_volume((sdir / "volume.vol").read_bytes(), str(sdir / "volume.vol"))
        gt = None
        if meta.get("has_gt"):
            gt = parse_labels((sdir / "gt.lbl").read_bytes(), str(sdir / "gt.lbl"))
        clicks = []
        clicks_path = sdir / "clicks.jsonl"
        if clicks_path.exists():
            for line in clicks_path.read_text().splitlines():
                item = json.loads(line)
                clicks.append(Click(position=tuple(item["position"]),
                                    category=int(item["category"])))
        return _Session(id=sid, dir=sdir, volume=volume, gt=gt,
                        clicks=clicks, created=meta["created"])

    # -- computation -------------------------------------------------------

    def encoded(self, s: _Session) -> EncoderOutput:
        if s.enc_out is None:
            enc, _ = self.models()
            with no_grad():
                s.enc_out = encode(s.volume, enc, self.cfg.encoder_config())
        return s.enc_out

    def mask_path(self, s: _Session, step: int) -> Path:
        return s.dir / "masks" / f"step_{step:03d}.lbl"

    def stored_mask(self, s: _Session, step: int) -> LabelMask:
        return parse_labels(self.mask_path(s, step).read_bytes())

    def compute_step(self, s: _Session, step: int) -> LabelMask:
        """Mask for the click prefix of length `step`, computed and stored."""
        _, ref = self.models()
        enc_out = self.encoded(s)
        if step == 0:
            mask = automatic_mask(enc_out, self.ref_cfg.categories)
        else:
            with no_grad():
                res = refine_forward(enc_out, s.clicks[:step], ref, self.ref_cfg)
            mask = LabelMask(np.argmax(res.logits.data, axis=3).astype(np.uint8),
                             self.ref_cfg.categories)
        self.mask_path(s, step).write_bytes(labels_bytes(mask))
        return mask

    def mask_response(self, s: _Session, step: int, mask: LabelMask) -> dict:
        out = {"session_id": s.id, "step": step,
               "mask_b64": base64.b64encode(labels_bytes(mask)).decode("ascii"),
               "mask_sha256": _mask_sha256(mask)}
        if s.gt is not None:
            out["dice"] = dice_per_class(mask, s.gt)
        return out


def make_app(out_dir, cfg: RunConfig, ablation: str = "none") -> FastAPI:
    svc = _Service(Path(out_dir), cfg, ablation)
    app = FastAPI(title="interactive segmentation service")
    app.state.service = svc

    def bad_request(exc: Exception) -> HTTPException:
        return HTTPException(400, str(exc))

    @app.post("/api/sessions")
    def create_session(req: CreateSessionRequest):
        try:
            volume = parse_volume(base64.b64decode(req.volume_b64, validate=True),
                                  "<upload>")
            gt = None
            if req.gt_b64 is not None:
                gt = parse_labels(base64.b64decode(req.gt_b64, validate=True),
                                  "<upload>")
                if gt.labels.shape != volume.voxels.shape:
                    raise ValueError(
                        f"label extents {gt.labels.shape} do not match "
                        f"volume extents {volume.voxels.shape}")
                if gt.num_categories != svc.ref_cfg.categories:
                    raise ValueError(
                        f"label file has {gt.num_categories} categories, "
                        f"model expects {svc.ref_cfg.categories}")
        except (FormatError, ValueError, binascii.Error) as exc:
            raise bad_request(exc) from None
        svc.models()  # fail 503 before persisting anything
        try:
            session = svc.create(volume, gt)
            with session.lock:
                mask = svc.compute_step(session, 0)
        except ShapeError as exc:
            raise bad_request(exc) from None
        out = svc.mask_response(session, 0, mask)
        out["extents"] = list(volume.voxels.shape)
        out["categories"] = svc.ref_cfg.categories
        out["created"] = session.created
        return out

    @app.post("/api/sessions/{sid}/clicks")
    def add_click(sid: str, req: AddClickRequest):
        session = svc.get(sid)
        with session.lock:
            n = len(session.clicks)
            click = Click(position=tuple(int(v) for v in req.position),
                          category=int(req.category))
            if req.step == n and n >= 1 and click == session.clicks[-1]:
                return svc.mask_response(session, n, svc.stored_mask(session, n))
            if req.step != n + 1:
                raise HTTPException(
                    409, f"stale step index {req.step}; next step is {n + 1}")
            shape = session.volume.shape
            if not all(0 <= p < e for p, e in zip(click.position, shape)):
                raise bad_request(PositionError(
                    f"position {click.position} outside extents {shape}"))
            if not 0 <= click.category < svc.ref_cfg.categories:
                raise bad_request(ValueError(
                    f"category {click.category} not in [0, {svc.ref_cfg.categories})"))
            session.clicks.append(click)
            try:
                mask = svc.compute_step(session, n + 1)
            except Exception:
                session.clicks.pop()
                raise
            svc._write_clicks(session)
            return svc.mask_response(session, n + 1, mask)

    @app.post("/api/sessions/{sid}/undo")
    def undo(sid: str):
        session = svc.get(sid)
        with session.lock:
            if not session.clicks:
                raise HTTPException(409, "no clicks to undo")
            step = len(session.clicks) - 1
            svc.mask_path(session, step + 1).unlink(missing_ok=True)
            session.clicks.pop()
            svc._write_clicks(session)
            return svc.mask_response(session, step, svc.stored_mask(session, step))

    @app.get("/api/sessions/{sid}")
    def state(sid: str):
        session = svc.get(sid)
        with session.lock:
            steps = []
            for t in range(len(session.clicks) + 1):
                mask = svc.stored_mask(session, t)
                entry = {"step": t,
                         "click": None if t == 0 else {
                             "position": list(session.clicks[t - 1].position),
                             "category": session.clicks[t - 1].category},
                         "mask_sha256": _mask_sha256(mask)}
                if session.gt is not None:
                    entry["dice"] = dice_per_class(mask, session.gt)
                steps.append(entry)
            return {"session_id": session.id, "created": session.created,
                    "extents": list(session.volume.shape),
                    "categories": svc.ref_cfg.categories, "steps": steps}

    @app.get("/api/sessions/{sid}/slice")
    def get_slice(sid: str, axis: str, index: int, layer: str):
        session = svc.get(sid)
        with session.lock:
            axes = {"x": 0, "y": 1, "z": 2}
            if axis not in axes:
                raise bad_request(ValueError(f"axis must be x, y or z, got '{axis}'"))
            shape = session.volume.shape
            if not 0 <= index < shape[axes[axis]]:
                raise bad_request(ValueError(
                    f"index {index} outside axis extent {shape[axes[axis]]}"))
            last = len(session.clicks)
            if layer == "image":
                arr = session.volume.voxels
            elif layer == "auto":
                arr = svc.stored_mask(session, 0).labels
            elif layer == "refined":
                arr = svc.stored_mask(session, last).labels
            elif layer == "error":
                if session.gt is None:
                    raise bad_request(ValueError("error layer needs ground truth"))
                arr = (svc.stored_mask(session, last).labels
                       != session.gt.labels).astype(np.uint8)
            else:
                raise bad_request(ValueError(
                    f"layer must be image, auto, refined or error, got '{layer}'"))
            # rows = slower remaining axis, columns = faster (x-fastest order)
            slab = np.take(arr, index, axis=axes[axis]).T
            return {"axis": axis, "index": index, "layer": layer,
                    "rows": slab.shape[0], "cols": slab.shape[1],
                    "values": slab.tolist()}

    return app
