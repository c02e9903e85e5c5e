"""Automatic segmentation network: volume in, mask logits and dense features out.

A deliberately small stand-in for a full segmentation backbone: two 3x3x3
conv blocks at full resolution, a stride-2 average-pool downsample, two conv
blocks at half resolution producing the feature grid, and a per-voxel linear
head whose logits are nearest-neighbor upsampled back to full resolution.
The refiner consumes the half-res features; the head logits double as the
automatic prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .nn_ops import avgpool2, conv3d, upsample_nn2
from .params import ParamStore
from .rng import Rng
from .tensor import Tensor
from .volume_io import LabelMask, Volume


@dataclass(frozen=True)
class EncoderConfig:
    feature_width: int = 32   # channels of the half-res feature grid
    categories: int = 3
    stem_width: int = 8       # channels of the full-res conv blocks


@dataclass
class EncoderOutput:
    mask_logits: Tensor       # (H, W, D, C)
    features: Tensor          # (H/2, W/2, D/2, m)


@dataclass(frozen=True)
class Roi:
    """Axis-aligned box, inclusive lower / exclusive upper, even-aligned."""

    lo: tuple[int, int, int]
    hi: tuple[int, int, int]

    def extents(self):
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    def contains(self, pos) -> bool:
        return all(l <= p < h for p, l, h in zip(pos, self.lo, self.hi))


def init_encoder_params(cfg: EncoderConfig, rng: Rng) -> ParamStore:
    store = ParamStore()
    s, m, c = cfg.stem_width, cfg.feature_width, cfg.categories

    def conv(name, cin, cout):
        std = np.sqrt(2.0 / (27 * cin))
        store.add(f"enc.{name}.w", rng.derive("enc", name, "w").normal((27 * cin, cout)) * std)
        store.add(f"enc.{name}.b", np.zeros(cout))

    conv("conv1", 1, s)
    conv("conv2", s, s)
    conv("conv3", s, m)
    conv("conv4", m, m)
    std = np.sqrt(1.0 / m)
    store.add("enc.head.w", rng.derive("enc", "head", "w").normal((m, c)) * std)
    store.add("enc.head.b", np.zeros(c))
    return store


def encode(vol: Volume, store: ParamStore, cfg: EncoderConfig) -> EncoderOutput:
    h, w, d = vol.shape
    if min(h, w, d) < 8:
        raise ShapeError(f"volume extents must be at least 8, got {vol.shape}")
    x = Tensor(vol.voxels.reshape(h, w, d, 1))
    x = T.relu(conv3d(x, store["enc.conv1.w"], store["enc.conv1.b"]))
    x = T.relu(conv3d(x, store["enc.conv2.w"], store["enc.conv2.b"]))
    x = avgpool2(x)
    x = T.relu(conv3d(x, store["enc.conv3.w"], store["enc.conv3.b"]))
    features = T.relu(conv3d(x, store["enc.conv4.w"], store["enc.conv4.b"]))
    half_logits = head_logits(features, store, cfg)
    return EncoderOutput(mask_logits=upsample_nn2(half_logits), features=features)


def head_logits(features: Tensor, store: ParamStore, cfg: EncoderConfig) -> Tensor:
    """Per-voxel linear head at half resolution."""
    hx, hy, hz, m = features.data.shape
    flat = T.reshape(features, (hx * hy * hz, m))
    out = T.linear(flat, store["enc.head.w"], store["enc.head.b"])
    return T.reshape(out, (hx, hy, hz, cfg.categories))


def automatic_mask(out: EncoderOutput, categories: int) -> LabelMask:
    # np.argmax picks the first maximum, i.e. ties go to the smaller class
    labels = np.argmax(out.mask_logits.data, axis=3).astype(np.uint8)
    return LabelMask(labels, categories)


def crop_roi(out: EncoderOutput, auto: LabelMask, click_positions, margin: int):
    """Bounding box of predicted foreground and clicks, dilated and even-aligned.

    Falls back to the full volume when there is nothing to bound.  Returns
    the Roi plus the EncoderOutput restricted to it (features cut at half
    coordinates).
    """
    if margin < 0:
        raise ValueError(f"margin must be nonnegative, got {margin}")
    box, empty = _tight_box(auto, click_positions, margin, auto.shape)
    roi = Roi(tuple(a for a, _ in box), tuple(b for _, b in box))
    if empty:
        return roi, out
    return roi, crop_output(out, roi)


def crop_output(out: EncoderOutput, roi: Roi) -> EncoderOutput:
    (x0, y0, z0), (x1, y1, z1) = roi.lo, roi.hi
    logits = Tensor(np.ascontiguousarray(
        out.mask_logits.data[x0:x1, y0:y1, z0:z1, :]))
    feats = Tensor(np.ascontiguousarray(
        out.features.data[x0 // 2 : x1 // 2, y0 // 2 : y1 // 2, z0 // 2 : z1 // 2, :]))
    return EncoderOutput(mask_logits=logits, features=feats)


def fit_window(out: EncoderOutput, auto: LabelMask, click_positions,
               window: tuple[int, int, int], margin: int):
    """A Roi of exactly `window` extents covering foreground and clicks.

    The tight even-aligned box from crop_roi is grown to the fixed window
    (which the positional table is sized for), centered when there is slack
    and clamped at the volume edge.  Clicks that cannot fit inside any such
    window are a configuration error, not a geometry puzzle.
    """
    shape = auto.shape
    if any(w % 2 or w <= 0 for w in window):
        raise ValueError(f"window extents must be positive and even, got {window}")
    if any(w > s for w, s in zip(window, shape)):
        raise ContractError(f"window {window} exceeds volume extents {shape}")
    tight, _ = _tight_box(auto, click_positions, margin, shape)
    lo = []
    for axis in range(3):
        a, b = tight[axis]
        if b - a > window[axis]:
            raise ContractError(
                f"region of interest spans {b - a} voxels on axis {axis}, "
                f"window allows {window[axis]}; increase crop size")
        center = (a + b) // 2
        start = center - window[axis] // 2
        start = max(0, min(start, shape[axis] - window[axis]))
        start -= start % 2
        start = max(0, min(start, shape[axis] - window[axis]))
        lo.append(start)
    roi = Roi(tuple(lo), tuple(l + w for l, w in zip(lo, window)))
    return roi, crop_output(out, roi)


def _tight_box(auto: LabelMask, click_positions, margin: int, shape):
    points = [tuple(int(v) for v in p) for p in click_positions]
    fg = np.argwhere(auto.labels != 0)
    box = []
    if fg.size == 0 and not points:
        return [(0, s) for s in shape], True
    for axis in range(3):
        vals = [p[axis] for p in points]
        if fg.size:
            vals.extend((int(fg[:, axis].min()), int(fg[:, axis].max())))
        a = max(0, min(vals) - margin)
        b = min(shape[axis], max(vals) + 1 + margin)
        a -= a % 2
        b += b % 2
        box.append((a, min(shape[axis], b)))
    return box, False
