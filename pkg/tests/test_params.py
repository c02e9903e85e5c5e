import struct

import numpy as np
import pytest

from tis import tensor as T
from tis.errors import DivergenceError, FormatError, ShapeError
from tis.params import AdamW, ParamStore, load_checkpoint, save_checkpoint
from tis.tensor import backward


def make_store(seed=0):
    r = np.random.default_rng(seed)
    store = ParamStore()
    store.add("enc.w", r.normal(size=(3, 4)))
    store.add("enc.b", r.normal(size=(4,)))
    store.add("head.w", r.normal(size=(4, 2, 2)))
    return store


def test_duplicate_name_rejected():
    store = make_store()
    with pytest.raises(ValueError):
        store.add("enc.w", np.zeros(2))


def test_grad_zero_when_unreachable():
    store = make_store()
    used = store["enc.w"]
    backward(T.tsum(T.mul(used, used)))
    assert np.allclose(used.grad_or_zeros(), 2.0 * used.data)
    assert np.array_equal(store["enc.b"].grad_or_zeros(), np.zeros(4))


def test_zero_grad_clears():
    store = make_store()
    p = store["enc.w"]
    backward(T.tsum(T.mul(p, p)))
    assert p.grad is not None
    store.zero_grad()
    assert p.grad is None


def test_adamw_zero_grad_zero_decay_is_identity():
    store = make_store()
    before = {n: store[n].data.copy() for n in store.names()}
    opt = AdamW(store, lr=0.1, weight_decay=0.0)
    opt.step()
    for n in store.names():
        assert np.array_equal(store[n].data, before[n])


def test_adamw_first_step_moves_by_lr_sign():
    store = ParamStore()
    p = store.add("w", np.array([2.0]))
    opt = AdamW(store, lr=1e-2, weight_decay=0.0)
    p.grad = np.array([0.37])
    opt.step()
    # bias-corrected first step: m_hat/sqrt(v_hat) = sign(g) up to eps
    assert abs(float(p.data[0]) - (2.0 - 1e-2)) < 1e-6


def test_adamw_decoupled_decay():
    store = ParamStore()
    p = store.add("w", np.array([4.0]))
    opt = AdamW(store, lr=0.1, weight_decay=0.5)
    p.grad = np.zeros(1)
    opt.step()
    assert abs(float(p.data[0]) - 4.0 * (1.0 - 0.1 * 0.5)) < 1e-12


def test_adamw_nonfinite_grad_aborts():
    store = ParamStore()
    p = store.add("w", np.ones(2))
    opt = AdamW(store, lr=0.1)
    p.grad = np.array([1.0, float("nan")])
    with pytest.raises(DivergenceError):
        opt.step()


def test_adamw_moments_persist_across_steps():
    store = ParamStore()
    p = store.add("w", np.array([0.0]))
    opt = AdamW(store, lr=0.1, weight_decay=0.0)
    positions = []
    for _ in range(5):
        p.grad = np.array([1.0])
        opt.step()
        positions.append(float(p.data[0]))
    # constant positive gradient keeps pushing the value down
    assert all(b < a for a, b in zip(positions, positions[1:]))
    assert opt.t == 5


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    store = make_store(seed=7)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, store)

    other = make_store(seed=99)
    load_checkpoint(path, other)
    for n in store.names():
        assert store[n].data.tobytes() == other[n].data.tobytes()

    # a second save of the restored store is byte-identical
    path2 = tmp_path / "model2.ckpt"
    save_checkpoint(path2, other)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_exact_layout(tmp_path):
    store = ParamStore()
    store.add("a", np.array([1.5, -2.0]))
    path = tmp_path / "tiny.ckpt"
    save_checkpoint(path, store)
    expected = (
        b"TISCKPT1"
        + struct.pack("<I", 1)
        + struct.pack("<I", 1) + b"a"
        + struct.pack("<I", 1) + struct.pack("<I", 2)
        + np.array([1.5, -2.0]).astype("<f8").tobytes()
    )
    assert path.read_bytes() == expected


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTCKPT0" + b"\x00" * 16)
    with pytest.raises(FormatError):
        load_checkpoint(path, make_store())


def test_checkpoint_truncated(tmp_path):
    store = make_store()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, store)
    (tmp_path / "cut.ckpt").write_bytes(path.read_bytes()[:-5])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "cut.ckpt", make_store())


def test_checkpoint_name_and_shape_mismatch(tmp_path):
    store = make_store()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, store)

    renamed = ParamStore()
    renamed.add("enc.w", np.zeros((3, 4)))
    renamed.add("enc.b", np.zeros(4))
    renamed.add("other.w", np.zeros((4, 2, 2)))
    with pytest.raises(FormatError):
        load_checkpoint(path, renamed)

    reshaped = ParamStore()
    reshaped.add("enc.w", np.zeros((4, 3)))
    reshaped.add("enc.b", np.zeros(4))
    reshaped.add("head.w", np.zeros((4, 2, 2)))
    with pytest.raises(ShapeError):
        load_checkpoint(path, reshaped)
