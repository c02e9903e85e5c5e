"""Simulated user clicks and the iterative refinement session.

The simulator mimics the review loop of an annotator: look at where the
current prediction disagrees with ground truth, find the largest connected
wrong region, and click near its center with a bounded amount of hand
jitter.  The click's category is whatever ground truth says at the clicked
voxel, so one mechanism serves corrections of every class.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .encoder import EncoderOutput, automatic_mask
from .refiner import Click, RefinerConfig, refine_forward
from .params import ParamStore
from .rng import Rng
from .tensor import no_grad
from .volume_io import LabelMask


@dataclass(frozen=True)
class SimulatorConfig:
    disturbance: int = 10         # max per-axis click jitter, voxels
    connectivity: int = 6         # 6 or 26, for error components

    def __post_init__(self):
        if self.disturbance < 0:
            raise ValueError(f"disturbance must be nonnegative, got {self.disturbance}")
        if self.connectivity not in (6, 26):
            raise ValueError(f"connectivity must be 6 or 26, got {self.connectivity}")


@dataclass
class StepRecord:
    step: int                     # 0 = automatic prediction, then 1..n
    click: Click | None           # None for step 0 and for the converged row
    dice: list[float]             # per class, length C
    converged: bool
    labels: np.ndarray = field(repr=False)       # predicted mask after the step
    mask_sha256: str = ""

    def __post_init__(self):
        if not self.mask_sha256:
            self.mask_sha256 = hashlib.sha256(
                np.ascontiguousarray(self.labels).tobytes()).hexdigest()


def components(err: np.ndarray, connectivity: int = 6):
    """Connected components of a boolean error map: (labels int32, sizes).

    Component ids are 1..n in order of each component's first voxel in
    first-axis-fastest scan order; sizes[i] is the voxel count of id i+1.
    """
    labels, n = kernels.label_components(np.ascontiguousarray(err, dtype=bool),
                                         connectivity)
    sizes = np.bincount(labels.reshape(-1), minlength=n + 1)[1:]
    return labels, sizes


def _interior(mask: np.ndarray) -> np.ndarray:
    """Voxels whose full 3x3x3 neighborhood lies inside the mask.

    The volume border counts as outside, matching an erosion that pads
    with background.
    """
    pad = np.pad(mask, 1, constant_values=False)
    out = np.ones_like(mask)
    x, y, z = mask.shape
    for dx in (0, 1, 2):
        for dy in (0, 1, 2):
            for dz in (0, 1, 2):
                out &= pad[dx : dx + x, dy : dy + y, dz : dz + z]
    return out


def _scan_order_voxels(mask: np.ndarray) -> np.ndarray:
    """Coordinates of true voxels as (n, 3), first-axis-fastest order."""
    zyx = np.argwhere(mask.transpose(2, 1, 0))
    return zyx[:, ::-1]


def _click_component(comp: np.ndarray, gt: LabelMask, cfg: SimulatorConfig,
                     rng: Rng) -> Click:
    """Click near the centroid of one error component, jitter bounded by cfg."""
    voxels = _scan_order_voxels(comp)
    centroid = np.floor(voxels.mean(axis=0) + 0.5).astype(np.int64)
    offset = rng.integers(-cfg.disturbance, cfg.disturbance + 1, shape=(3,))
    cand = np.clip(centroid + offset, 0, np.array(comp.shape) - 1)

    if comp[tuple(cand)]:
        pos = tuple(int(v) for v in cand)
    else:
        inner = _interior(comp)
        pool = _scan_order_voxels(inner) if inner.any() else voxels
        pick = pool[rng.integers(0, len(pool))]
        pos = tuple(int(v) for v in pick)
    return Click(position=pos, category=int(gt.labels[pos]))


def simulate_click(pred: LabelMask, gt: LabelMask, cfg: SimulatorConfig,
                   rng: Rng) -> Click | None:
    """One simulated corrective click, or None when pred matches gt."""
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    err = pred.labels != gt.labels
    if not err.any():
        return None
    labels, sizes = components(err, cfg.connectivity)
    comp_id = int(np.argmax(sizes)) + 1   # ties go to the smallest id
    return _click_component(labels == comp_id, gt, cfg, rng)


def simulate_clicks(pred: LabelMask, gt: LabelMask, n: int, cfg: SimulatorConfig,
                    rng: Rng, spread: int | None = None) -> list[Click]:
    """Up to n clicks over the `spread` largest error components.

    With the default spread (= n) each distinct wrong region gets one
    click, biggest problems first, so one call can carry corrections of
    several categories.  A smaller spread concentrates the budget: the n
    clicks cycle over that many regions, so spread=1 spends them all as
    jittered draws inside the single largest region, the way a reviewer
    hammers on one stubborn spot.  Returns fewer than n clicks only when
    there are fewer wrong regions than the spread requires, empty when the
    masks agree.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    if spread is None:
        spread = n
    if not 1 <= spread <= n:
        raise ValueError(f"spread {spread} outside [1, {n}]")
    err = pred.labels != gt.labels
    if not err.any():
        return []
    labels, sizes = components(err, cfg.connectivity)
    order = np.argsort(-sizes, kind="stable")  # size desc, ties by smaller id
    comps = [labels == idx + 1 for idx in order[:spread]]
    count = n if len(comps) == spread else len(comps)
    return [_click_component(comps[i % len(comps)], gt, cfg, rng)
            for i in range(count)]


def session_run(enc_out: EncoderOutput, gt: LabelMask, store: ParamStore,
                cfg: RefinerConfig, n_clicks: int, sim: SimulatorConfig,
                rng: Rng) -> list[StepRecord]:
    """Iterate simulate-click / refine for up to n_clicks rounds.

    Step 0 records the automatic prediction.  The loop stops early once the
    prediction matches ground truth exactly; the last record carries
    converged=True in that case.
    """
    from .evaluate import dice_per_class

    if n_clicks < 1:
        raise ValueError(f"n_clicks must be at least 1, got {n_clicks}")
    auto = automatic_mask(enc_out, cfg.categories)
    records = [StepRecord(step=0, click=None,
                          dice=dice_per_class(auto, gt),
                          converged=bool(np.array_equal(auto.labels, gt.labels)),
                          labels=auto.labels)]
    if records[0].converged:
        return records

    clicks: list[Click] = []
    current = auto
    for step in range(1, n_clicks + 1):
        click = simulate_click(current, gt, sim, rng)
        if click is None:
            records[-1].converged = True
            break
        clicks.append(click)
        with no_grad():
            res = refine_forward(enc_out, clicks, store, cfg)
        refined = np.argmax(res.logits.data, axis=3).astype(np.uint8)
        current = LabelMask(refined, cfg.categories)
        records.append(StepRecord(
            step=step, click=click, dice=dice_per_class(current, gt),
            converged=bool(np.array_equal(refined, gt.labels)),
            labels=refined))
        if records[-1].converged:
            break
    return records


def write_trace(path, records: list[StepRecord]):
    """One JSON object per line: step, click, per-class Dice, mask hash."""
    lines = []
    for r in records:
        click = None if r.click is None else {
            "position": list(r.click.position), "category": r.click.category}
        lines.append(json.dumps({
            "step": r.step, "click": click,
            "dice": [round(d, 12) for d in r.dice],
            "converged": r.converged, "mask_sha256": r.mask_sha256,
        }, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n")
