"""Encoder and refiner training loops over the synthetic dataset.

The encoder learns plain per-voxel classification.  The refiner then
trains against simulated interactions: for every sample and step, a
handful of clicks is drawn from the disagreement between the frozen
encoder's automatic prediction and ground truth, and the refined logits
are penalized with the same pixelwise cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig, encode, automatic_mask, init_encoder_params
from .errors import DivergenceError
from .interaction import SimulatorConfig, simulate_clicks
from .params import AdamW, ParamStore
from .refiner import (RefinerConfig, init_refiner_params, refine_forward,
                      warm_start_refiner)
from .rng import Rng
from .tensor import Tensor, backward, no_grad
from .volume_io import LabelMask, Volume


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr: float = 1e-3
    decay_factor: float = 0.9
    decay_every: int = 10          # epochs between decays
    batch_size: int = 1            # samples per optimizer step
    clicks_min: int = 1            # refiner training only
    clicks_max: int = 10
    weight_decay: float = 0.01

    def __post_init__(self):
        if min(self.epochs, self.decay_every, self.batch_size,
               self.clicks_min) < 1 or self.clicks_max < self.clicks_min:
            raise ValueError("training config values must be positive and ordered")
        if self.lr < 0 or not 0 < self.decay_factor <= 1:
            raise ValueError("learning rate must be nonnegative, decay factor positive")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.decay_factor ** (epoch // self.decay_every)


def segmentation_loss(logits: Tensor, gt: LabelMask) -> Tensor:
    h, w, d, c = logits.data.shape
    flat = T.reshape(logits, (h * w * d, c))
    return T.cross_entropy(flat, gt.labels.reshape(-1).astype(np.int64))


def _check_finite(loss_value: float, where: str):
    if not np.isfinite(loss_value):
        raise DivergenceError(f"non-finite loss during {where}: {loss_value}")


def train_encoder(dataset: list[tuple[Volume, LabelMask]], cfg: TrainConfig,
                  enc_cfg: EncoderConfig, rng: Rng):
    """Returns (params, per-epoch mean loss)."""
    if not dataset:
        raise ValueError("training dataset is empty")
    store = init_encoder_params(enc_cfg, rng.derive("enc-init"))
    opt = AdamW(store, lr=cfg.lr, weight_decay=cfg.weight_decay)
    curve = []
    for epoch in range(cfg.epochs):
        opt.lr = cfg.lr_at(epoch)
        order = rng.derive("enc-order", epoch).shuffled(len(dataset))
        losses = []
        pending = 0
        for idx in order:
            vol, gt = dataset[int(idx)]
            loss = segmentation_loss(encode(vol, store, enc_cfg).mask_logits, gt)
            value = float(loss.data)
            _check_finite(value, "encoder training")
            losses.append(value)
            backward(loss)
            pending += 1
            if pending == cfg.batch_size:
                opt.step()
                store.zero_grad()
                pending = 0
        if pending:
            opt.step()
            store.zero_grad()
        curve.append(float(np.mean(losses)))
    return store, curve


def train_refiner(dataset: list[tuple[Volume, LabelMask]], enc_store: ParamStore,
                  enc_cfg: EncoderConfig, cfg: TrainConfig, ref_cfg: RefinerConfig,
                  sim: SimulatorConfig, rng: Rng):
    """Returns (refiner params, per-epoch mean loss).  The encoder stays frozen.

    Each step draws a click budget uniform in [clicks_min, clicks_max] and
    spends it on the automatic prediction's error components, largest
    first, over a random coverage from all-in-the-biggest-region up to
    one-per-region.  Interactive use presents both extremes: early clicks
    hammer one wrong region (same category every time), later ones land
    across regions and mix categories, and the model must behave under
    both.  Samples whose automatic prediction is already perfect
    contribute no refinement signal and are skipped.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    frozen = []
    with no_grad():
        for vol, gt in dataset:
            enc_out = encode(vol, enc_store, enc_cfg)
            frozen.append((enc_out, automatic_mask(enc_out, enc_cfg.categories), gt))

    store = init_refiner_params(ref_cfg, rng.derive("ref-init"))
    warm_start_refiner(store, enc_store, ref_cfg)
    opt = AdamW(store, lr=cfg.lr, weight_decay=cfg.weight_decay)
    click_rng = rng.derive("ref-clicks")
    curve = []
    for epoch in range(cfg.epochs):
        opt.lr = cfg.lr_at(epoch)
        order = rng.derive("ref-order", epoch).shuffled(len(dataset))
        losses = []
        pending = 0
        for idx in order:
            enc_out, auto, gt = frozen[int(idx)]
            k = click_rng.integers(cfg.clicks_min, cfg.clicks_max + 1)
            spread = click_rng.integers(1, k + 1)
            clicks = simulate_clicks(auto, gt, k, sim, click_rng, spread)
            if not clicks:
                continue
            loss = segmentation_loss(
                refine_forward(enc_out, clicks, store, ref_cfg).logits, gt)
            value = float(loss.data)
            _check_finite(value, "refiner training")
            losses.append(value)
            backward(loss)
            pending += 1
            if pending == cfg.batch_size:
                opt.step()
                store.zero_grad()
                pending = 0
        if pending:
            opt.step()
            store.zero_grad()
        curve.append(float(np.mean(losses)) if losses else 0.0)
    return store, curve
