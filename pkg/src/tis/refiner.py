"""Click-driven mask refinement: tokens, click embeddings, and the layer stack.

The refiner turns the half-res feature grid into a token sequence, reads
click embeddings out of that grid, and alternates two modules for a fixed
number of layers:

* click encoding - a standard transformer decoder block over the k click
  rows (cross-attention into the tokens, self-attention among clicks, FFN,
  residuals and layer norms);
* label assignment - bare cross-attention from every token to the clicks
  whose values are label embeddings, blended with the label embedding of
  the automatic prediction by a learned scalar.  No FFN and no
  self-attention over the dense tokens: the module's own output is exactly
  the stated convex combination.  The stack adds that output onto the
  running token stream, so each layer deposits a category "vote" on top of
  the feature content instead of erasing it; the head reads features and
  accumulated votes together, which is what lets a click flip exactly the
  voxels whose features sit near a class boundary.

Two config flags ablate the modules: `click_encoding=False` leaves click
rows as raw indexed features, and `label_copy=False` swaps label-embedding
values for a learned projection of the click rows, classifying voxels at
the head by similarity to each click instead of a linear map.

Token order everywhere is first-axis-fastest: token i sits at grid
coordinate (x, y, z) with i = x + X*(y + Y*z).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import EncoderOutput, Roi, automatic_mask, fit_window
from .errors import ContractError, PositionError, ShapeError
from .nn_ops import paste_window, upsample_nn2
from .params import ParamStore
from .rng import Rng
from .tensor import Tensor

_NO_CLICK_LOGIT = -30.0  # classes with no clicks are effectively ruled out


@dataclass(frozen=True)
class RefinerConfig:
    feature_width: int = 32            # m, must match the encoder
    categories: int = 3
    layers: int = 6
    heads: int = 2
    ffn_width: int = 64
    ce_hidden: int = 32                # hidden width of the label-embedding MLP
    window: tuple[int, int, int] = (32, 32, 32)
    margin: int = 2
    click_encoding: bool = True
    label_copy: bool = True

    @property
    def tokens(self) -> int:
        wx, wy, wz = self.window
        return (wx // 2) * (wy // 2) * (wz // 2)


@dataclass(frozen=True)
class Click:
    position: tuple[int, int, int]     # full-resolution voxel coordinate
    category: int


@dataclass
class RefineResult:
    logits: Tensor                     # (H, W, D, C) full resolution
    roi: Roi
    attention: list                    # every attention matrix, np arrays


def warm_start_refiner(store: ParamStore, encoder: ParamStore,
                       cfg: RefinerConfig, vote_scale: float = 0.5) -> None:
    """Align the head and label tables with the frozen encoder's classifier.

    The head copies the encoder's own linear classifier, each layer's label
    table maps category c to vote_scale * H (H^T H)^-1 e_c (which the head
    reads back as vote_scale * onehot(c)), and the positional table loses its
    component in the head's column space.  With the blend weight at its 0.5
    init, a click vote and the automatic-label vote then shift the two rival
    logits by the same amount, so the refined argmax starts out exactly equal
    to the automatic one for any click set.  Training begins at the encoder's
    loss floor and only has to learn where attention should concentrate, not
    how to classify.
    """
    if not cfg.label_copy:
        return
    h = encoder["enc.head.w"].data                    # (m, C)
    pinv = h @ np.linalg.inv(h.T @ h)                 # head(pinv[:, c]) = e_c
    store["ref.head.w"].data[:] = h
    store["ref.head.b"].data[:] = encoder["enc.head.b"].data
    pe = store["ref.pe"].data
    pe -= (pe @ pinv) @ h.T
    c = cfg.categories
    for layer in range(1, cfg.layers + 1):
        p = f"ref.l{layer}."
        w1 = store[f"{p}ce.w1"].data
        w1[:] = 0.0
        w1[np.arange(c), np.arange(c)] = 1.0
        store[f"{p}ce.b1"].data[:] = 0.0
        w2 = store[f"{p}ce.w2"].data
        w2[:] = 0.0
        w2[:c] = vote_scale * pinv.T
        store[f"{p}ce.b2"].data[:] = 0.0


def init_refiner_params(cfg: RefinerConfig, rng: Rng) -> ParamStore:
    store = ParamStore()
    m, c = cfg.feature_width, cfg.categories
    if cfg.click_encoding and m % cfg.heads:
        raise ValueError(f"feature width {m} not divisible by {cfg.heads} heads")
    proj_std = 1.0 / np.sqrt(m)

    def mat(name, rows, cols, std):
        store.add(name, rng.derive("ref", name).normal((rows, cols)) * std)

    def eye_mat(name, rows, cols, scale):
        # identity block plus noise: wires label-copy semantics in from the
        # start, so training spends its budget on attention, not on
        # rediscovering "category c means logit c"
        w = rng.derive("ref", name).normal((rows, cols)) * 0.02
        d = min(rows, cols)
        w[np.arange(d), np.arange(d)] += scale
        store.add(name, w)

    # unit-scale positions: encoder features are O(1)..O(10), so a tiny
    # table would leave attention blind to where a token sits
    store.add("ref.pe", rng.derive("ref", "pe").normal((cfg.tokens, m)))
    for layer in range(1, cfg.layers + 1):
        p = f"ref.l{layer}."
        if cfg.click_encoding:
            for block in ("mhca", "mhsa"):
                for w in ("wq", "wk", "wv", "wo"):
                    mat(f"{p}{block}.{w}", m, m, proj_std)
                store.add(f"{p}{block}.bo", np.zeros(m))
            for ln in ("ln1", "ln2", "ln3"):
                store.add(f"{p}{ln}.g", np.ones(m))
                store.add(f"{p}{ln}.b", np.zeros(m))
            mat(f"{p}ffn.w1", m, cfg.ffn_width, np.sqrt(2.0 / m))
            store.add(f"{p}ffn.b1", np.zeros(cfg.ffn_width))
            mat(f"{p}ffn.w2", cfg.ffn_width, m, 1.0 / np.sqrt(cfg.ffn_width))
            store.add(f"{p}ffn.b2", np.zeros(m))
        mat(f"{p}la.wq", m, m, proj_std)
        mat(f"{p}la.wk", m, m, proj_std)
        if cfg.label_copy:
            eye_mat(f"{p}ce.w1", c, cfg.ce_hidden, 1.0)
            store.add(f"{p}ce.b1", np.zeros(cfg.ce_hidden))
            eye_mat(f"{p}ce.w2", cfg.ce_hidden, m, 1.0)
            store.add(f"{p}ce.b2", np.zeros(m))
            store.add(f"{p}la.alpha", np.zeros(1))
        else:
            mat(f"{p}la.wv", m, m, proj_std)
    if cfg.label_copy:
        eye_mat("ref.head.w", m, c, 4.0)
        store.add("ref.head.b", np.zeros(c))
    else:
        store.add("ref.head_alpha", np.zeros(1))
    return store


# ---------------------------------------------------------------------------
# components


def flatten_grid(x: Tensor) -> Tensor:
    """(X, Y, Z, F) grid to (N, F) rows in first-axis-fastest order."""
    gx, gy, gz, f = x.data.shape
    return T.reshape(T.permute(x, (2, 1, 0, 3)), (gx * gy * gz, f))


def unflatten_grid(rows: Tensor, extents) -> Tensor:
    gx, gy, gz = extents
    f = rows.data.shape[1]
    return T.permute(T.reshape(rows, (gz, gy, gx, f)), (2, 1, 0, 3))


def tokenize(features: Tensor, pe: Tensor) -> Tensor:
    """Flattened feature rows plus the positional table."""
    gx, gy, gz, m = features.data.shape
    n = gx * gy * gz
    if pe.data.shape != (n, m):
        raise ShapeError(
            f"positional table {pe.data.shape} does not fit {n} tokens of width {m}")
    return T.add(flatten_grid(features), pe)


def index_clicks(features: Tensor, positions) -> Tensor:
    """Feature rows at floor(p/2) for each full-resolution click position."""
    if len(positions) == 0:
        raise ContractError("refinement requires at least one click")
    gx, gy, gz, _ = features.data.shape
    rows = []
    for pos in positions:
        x, y, z = (int(v) for v in pos)
        fx, fy, fz = x // 2, y // 2, z // 2
        if not (0 <= fx < gx and 0 <= fy < gy and 0 <= fz < gz
                and x >= 0 and y >= 0 and z >= 0):
            raise PositionError(
                f"click {pos} outside feature grid {(2 * gx, 2 * gy, 2 * gz)}")
        rows.append(fx + gx * (fy + gy * fz))
    return T.take_rows(flatten_grid(features), np.array(rows, dtype=np.int64))


def _attention(q: Tensor, k: Tensor, v: Tensor, heads: int, attn_sink: list):
    """Multi-head scaled dot-product attention; appends weights to attn_sink."""
    m = q.data.shape[1]
    dh = m // heads
    outs = []
    for i in range(heads):
        qi = T.slice_cols(q, i * dh, (i + 1) * dh)
        ki = T.slice_cols(k, i * dh, (i + 1) * dh)
        vi = T.slice_cols(v, i * dh, (i + 1) * dh)
        attn = T.softmax_rows(T.scale(T.matmul(qi, ki.T), 1.0 / np.sqrt(dh)))
        attn_sink.append(attn.data)
        outs.append(T.matmul(attn, vi))
    return T.concat_cols(outs) if heads > 1 else outs[0]


def click_encode(clicks: Tensor, tokens: Tensor, store: ParamStore, prefix: str,
                 cfg: RefinerConfig, attn_sink: list) -> Tensor:
    """One decoder block over the click rows; identity under the ablation."""
    if not cfg.click_encoding:
        return clicks
    p = prefix

    def block(x, name, keys):
        q = T.matmul(x, store[f"{p}{name}.wq"])
        k = T.matmul(keys, store[f"{p}{name}.wk"])
        v = T.matmul(keys, store[f"{p}{name}.wv"])
        att = _attention(q, k, v, cfg.heads, attn_sink)
        return T.linear(att, store[f"{p}{name}.wo"], store[f"{p}{name}.bo"])

    x = T.layer_norm(clicks + block(clicks, "mhca", tokens),
                     store[f"{p}ln1.g"], store[f"{p}ln1.b"])
    x = T.layer_norm(x + block(x, "mhsa", x),
                     store[f"{p}ln2.g"], store[f"{p}ln2.b"])
    ffn = T.linear(T.relu(T.linear(x, store[f"{p}ffn.w1"], store[f"{p}ffn.b1"])),
                   store[f"{p}ffn.w2"], store[f"{p}ffn.b2"])
    return T.layer_norm(x + ffn, store[f"{p}ln3.g"], store[f"{p}ln3.b"])


def _ce_table(store: ParamStore, prefix: str, cfg: RefinerConfig) -> Tensor:
    """Label-embedding MLP evaluated on all one-hot categories: (C, m)."""
    eye = Tensor(np.eye(cfg.categories))
    hidden = T.relu(T.linear(eye, store[f"{prefix}ce.w1"], store[f"{prefix}ce.b1"]))
    return T.linear(hidden, store[f"{prefix}ce.w2"], store[f"{prefix}ce.b2"])


def label_assign(tokens: Tensor, clicks: Tensor, click_labels, auto_labels,
                 store: ParamStore, prefix: str, cfg: RefinerConfig,
                 attn_sink: list) -> Tensor:
    """Cross-attention copy of click labels onto tokens, blended with the
    automatic labels.  `auto_labels` is the flat half-res automatic mask."""
    p = prefix
    m = cfg.feature_width
    q = T.matmul(tokens, store[f"{p}la.wq"])
    k = T.matmul(clicks, store[f"{p}la.wk"])
    attn = T.softmax_rows(T.scale(T.matmul(q, k.T), 1.0 / np.sqrt(m)))
    attn_sink.append(attn.data)
    if cfg.label_copy:
        alpha = T.reshape(T.sigmoid(store[f"{p}la.alpha"]), (1, 1))
        table = _ce_table(store, p, cfg)
        click_vals = T.take_rows(table, np.asarray(click_labels, dtype=np.int64))
        auto_vals = T.take_rows(table, np.asarray(auto_labels, dtype=np.int64))
        copied = T.matmul(attn, click_vals)
        return T.add(T.mul(alpha, copied), T.mul(1.0 - alpha, auto_vals))
    # ablation: plain projected values, no label vocabulary on this path
    return T.matmul(attn, T.matmul(clicks, store[f"{p}la.wv"]))


def _similarity_head(tokens: Tensor, clicks: Tensor, click_labels,
                     cfg: RefinerConfig) -> Tensor:
    """Per-class evidence: best dot-product against that class's clicks."""
    m = cfg.feature_width
    n = tokens.data.shape[0]
    sims = T.scale(T.matmul(tokens, clicks.T), 1.0 / np.sqrt(m))  # (N, k)
    labels = np.asarray(click_labels, dtype=np.int64)
    cols = []
    for cat in range(cfg.categories):
        picks = np.flatnonzero(labels == cat)
        if picks.size == 0:
            cols.append(Tensor(np.full((n, 1), _NO_CLICK_LOGIT)))
        else:
            per_click = T.take_rows(T.transpose2d(sims), picks)  # (n_cat, N)
            cols.append(T.rowmax(T.transpose2d(per_click)))
    return T.concat_cols(cols)


def refine_forward(enc_out: EncoderOutput, clicks: list[Click], store: ParamStore,
                   cfg: RefinerConfig) -> RefineResult:
    """Full refinement pass; returns full-resolution logits.

    Voxels outside the crop window keep the automatic logits; inside, the
    refined head output replaces them.
    """
    if not clicks:
        raise ContractError("refine_forward requires at least one click; "
                            "use the automatic mask when there are none")
    auto = automatic_mask(enc_out, cfg.categories)
    shape = auto.shape
    for c in clicks:
        if not all(0 <= v < s for v, s in zip(c.position, shape)):
            raise PositionError(f"click {c.position} outside volume {shape}")
        if not 0 <= c.category < cfg.categories:
            raise ContractError(
                f"click category {c.category} outside [0, {cfg.categories})")

    positions = [c.position for c in clicks]
    roi, cropped = fit_window(enc_out, auto, positions, cfg.window, cfg.margin)
    local = [tuple(p[i] - roi.lo[i] for i in range(3)) for p in positions]
    labels = [c.category for c in clicks]
    (x0, y0, z0), (x1, y1, z1) = roi.lo, roi.hi
    auto_half = auto.labels[x0:x1:2, y0:y1:2, z0:z1:2].flatten(order="F")

    attn_sink: list = []
    tokens = tokenize(cropped.features, store["ref.pe"])
    click_rows = index_clicks(cropped.features, local)
    for layer in range(1, cfg.layers + 1):
        p = f"ref.l{layer}."
        click_rows = click_encode(click_rows, tokens, store, p, cfg, attn_sink)
        tokens = T.add(tokens, label_assign(tokens, click_rows, labels, auto_half,
                                            store, p, cfg, attn_sink))

    if cfg.label_copy:
        half_flat = T.linear(tokens, store["ref.head.w"], store["ref.head.b"])
    else:
        evidence = _similarity_head(tokens, click_rows, labels, cfg)
        auto_flat = flatten_grid(Tensor(_half_logits_window(enc_out, roi)))
        ha = T.reshape(T.sigmoid(store["ref.head_alpha"]), (1, 1))
        half_flat = T.add(T.mul(ha, evidence), T.mul(1.0 - ha, auto_flat))

    half_extents = tuple(e // 2 for e in roi.extents())
    window_logits = upsample_nn2(unflatten_grid(half_flat, half_extents))
    logits = paste_window(enc_out.mask_logits.data, window_logits, roi.lo)
    return RefineResult(logits=logits, roi=roi, attention=attn_sink)


def _half_logits_window(enc_out: EncoderOutput, roi: Roi) -> np.ndarray:
    """Automatic head logits at half resolution inside the window."""
    (x0, y0, z0), (x1, y1, z1) = roi.lo, roi.hi
    return np.ascontiguousarray(
        enc_out.mask_logits.data[x0:x1:2, y0:y1:2, z0:z1:2, :])
