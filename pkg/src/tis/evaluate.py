"""Dice metric and the Dice-vs-clicks evaluation curve."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .encoder import EncoderConfig, encode
from .params import ParamStore
from .refiner import RefinerConfig
from .rng import Rng
from .tensor import no_grad
from .volume_io import LabelMask, Volume


def dsc(pred_region: np.ndarray, gt_region: np.ndarray) -> float:
    """Dice similarity of two voxel sets; both-empty counts as perfect."""
    pred_region = np.asarray(pred_region, dtype=bool)
    gt_region = np.asarray(gt_region, dtype=bool)
    total = int(pred_region.sum()) + int(gt_region.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pred_region, gt_region).sum()) / total


def dice_per_class(pred: LabelMask, gt: LabelMask) -> list[float]:
    c = max(pred.num_categories, gt.num_categories)
    return [dsc(pred.labels == k, gt.labels == k) for k in range(c)]


@dataclass
class MetricsReport:
    clicks: list[int]            # 0..K
    categories: int
    mean: np.ndarray             # (K+1, C)
    std: np.ndarray              # (K+1, C)
    values: np.ndarray           # (cases, K+1, C) raw per-case Dice

    def table(self) -> str:
        """Plot-ready text table: click_count, class, mean, std."""
        lines = ["click_count\tclass\tmean\tstd"]
        for i, k in enumerate(self.clicks):
            for c in range(self.categories):
                lines.append(f"{k}\t{c}\t{self.mean[i, c]:.6f}\t{self.std[i, c]:.6f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({
            "clicks": self.clicks,
            "categories": self.categories,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "values": self.values.tolist(),
        }, indent=2, sort_keys=True) + "\n"


def eval_curve(dataset: list[tuple[Volume, LabelMask]], enc_store: ParamStore,
               enc_cfg: EncoderConfig, ref_store: ParamStore, ref_cfg: RefinerConfig,
               n_clicks: int, sim, rng: Rng) -> MetricsReport:
    """Run a click session per case and aggregate per-class Dice by click count.

    Sessions that converge early keep their final Dice for the remaining
    click counts, mirroring an annotator who stops when satisfied.
    """
    from .interaction import session_run

    cases = len(dataset)
    c = ref_cfg.categories
    values = np.zeros((cases, n_clicks + 1, c))
    for i, (vol, gt) in enumerate(dataset):
        with no_grad():
            enc_out = encode(vol, enc_store, enc_cfg)
        records = session_run(enc_out, gt, ref_store, ref_cfg, n_clicks, sim,
                              rng.derive("eval-case", i))
        row = np.zeros((n_clicks + 1, c))
        last = None
        for rec in records:
            row[rec.step] = rec.dice
            last = rec.step
        for step in range(last + 1, n_clicks + 1):
            row[step] = row[last]
        values[i] = row
    return MetricsReport(
        clicks=list(range(n_clicks + 1)), categories=c,
        mean=values.mean(axis=0), std=values.std(axis=0), values=values)
