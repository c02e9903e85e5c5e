import math

import numpy as np
import pytest

from fdcheck import fdcheck

from tis import tensor as T
from tis.errors import GradientError, ShapeError
from tis.tensor import Tensor, backward, no_grad

N_SEEDS = 100
TOL = 1e-4


def weighted_sum(out: Tensor, w: np.ndarray) -> Tensor:
    # distinct weights per output element catch transposed/misplaced grads
    return T.tsum(T.mul(out, Tensor(w)))


def rng_for(seed):
    return np.random.default_rng(seed)


# --- pinned examples -------------------------------------------------------


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(T.matmul(a, b).data, b.data)


def test_matmul_hand_value():
    out = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
    assert np.array_equal(out.data, [[1 * 5 + 2 * 6], [3 * 5 + 4 * 6]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError) as exc:
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    assert "(2, 3)" in str(exc.value)
    assert str(exc.value).count("(2, 3)") == 2


def test_softmax_symmetry_and_shift():
    out = T.softmax_rows(Tensor([[0.0, 0.0]]))
    assert np.allclose(out.data, [[0.5, 0.5]], atol=1e-15)
    big = T.softmax_rows(Tensor([[1000.0, 1000.0]]))
    assert np.all(np.isfinite(big.data))
    assert np.allclose(big.data, [[0.5, 0.5]], atol=1e-15)


def test_softmax_hand_value():
    out = T.softmax_rows(Tensor([[math.log(2.0), 0.0]]))
    assert np.allclose(out.data, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-15)


def test_softmax_rows_sum_to_one_and_shift_invariant():
    for seed in range(N_SEEDS):
        x = rng_for(seed).normal(size=(5, 7)) * 10.0
        s = T.softmax_rows(Tensor(x)).data
        assert np.all(s >= 0)
        assert np.abs(s.sum(axis=1) - 1.0).max() <= 1e-12
        shifted = T.softmax_rows(Tensor(x + 3.7)).data
        assert np.abs(s - shifted).max() <= 1e-12


def test_cross_entropy_uniform():
    loss = T.cross_entropy(Tensor(np.zeros((3, 4))), [0, 1, 3])
    assert abs(float(loss.data) - math.log(4.0)) < 1e-12


def test_cross_entropy_saturated():
    logits = np.zeros((2, 5))
    logits[0, 2] = 30.0
    logits[1, 0] = 30.0
    loss = T.cross_entropy(Tensor(logits), [2, 0])
    assert float(loss.data) < 1e-9


def test_cross_entropy_hand_value():
    loss = T.cross_entropy(Tensor([[1.0, 0.0]]), [0])
    # -ln(e/(e+1)) = ln(1 + e^-1)
    assert abs(float(loss.data) - math.log(1.0 + math.exp(-1.0))) < 1e-12


def test_cross_entropy_bad_target():
    with pytest.raises(IndexError):
        T.cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])


def test_backward_quadratic():
    w = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    backward(T.tsum(T.mul(w, w)))
    assert np.allclose(w.grad, 2.0 * w.data, atol=1e-15)


def test_backward_twice_raises():
    w = Tensor(np.array([1.0]), requires_grad=True)
    loss = T.tsum(T.mul(w, w))
    backward(loss)
    with pytest.raises(GradientError):
        backward(loss)


def test_backward_shared_subgraph_raises():
    w = Tensor(np.array([1.0]), requires_grad=True)
    mid = T.mul(w, w)
    backward(T.tsum(mid))
    with pytest.raises(GradientError):
        backward(T.tsum(T.mul(mid, mid)))


def test_backward_requires_scalar():
    w = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        backward(T.mul(w, w))


def test_no_grad_builds_no_graph():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    with no_grad():
        out = T.tsum(T.matmul(w, w))
    assert not out.requires_grad
    assert out._parents == ()


def test_constructor_rejects_nonfinite():
    with pytest.raises(ValueError):
        Tensor([1.0, float("nan")])
    with pytest.raises(ValueError):
        Tensor([float("inf")])


def test_ops_deterministic():
    x = rng_for(0).normal(size=(4, 4))
    a = T.softmax_rows(T.gelu(Tensor(x))).data
    b = T.softmax_rows(T.gelu(Tensor(x))).data
    assert np.array_equal(a, b)


# --- finite-difference property checks, one op per test --------------------


def test_grad_add_broadcast():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        a, b, w = r.normal(size=(3, 4)), r.normal(size=(1, 4)), r.normal(size=(3, 4))
        assert fdcheck(lambda t: weighted_sum(T.add(t[0], t[1]), w), [a, b]) < TOL


def test_grad_mul_broadcast():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        a, b, w = r.normal(size=(3, 4)), r.normal(size=(3, 1)), r.normal(size=(3, 4))
        assert fdcheck(lambda t: weighted_sum(T.mul(t[0], t[1]), w), [a, b]) < TOL


def test_grad_matmul():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        a, b, w = r.normal(size=(3, 4)), r.normal(size=(4, 2)), r.normal(size=(3, 2))
        assert fdcheck(lambda t: weighted_sum(T.matmul(t[0], t[1]), w), [a, b]) < TOL


def test_grad_relu():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        x = r.normal(size=(3, 4))
        x += np.sign(x) * 0.1  # keep clear of the kink
        w = r.normal(size=(3, 4))
        assert fdcheck(lambda t: weighted_sum(T.relu(t[0]), w), [x]) < TOL


def test_grad_gelu():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        x, w = r.normal(size=(3, 4)), r.normal(size=(3, 4))
        assert fdcheck(lambda t: weighted_sum(T.gelu(t[0]), w), [x]) < TOL


def test_grad_sigmoid():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        x, w = r.normal(size=(3, 4)) * 3.0, r.normal(size=(3, 4))
        assert fdcheck(lambda t: weighted_sum(T.sigmoid(t[0]), w), [x]) < TOL


def test_grad_exp_log():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        x = r.uniform(0.5, 3.0, size=(3, 4))
        w = r.normal(size=(3, 4))
        assert fdcheck(lambda t: weighted_sum(T.exp(t[0]), w), [x.copy()]) < TOL
        assert fdcheck(lambda t: weighted_sum(T.log(t[0]), w), [x.copy()]) < TOL


def test_grad_sum_mean_axes():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        x = r.normal(size=(3, 4))
        w0, w1 = r.normal(size=(4,)), r.normal(size=(3,))
        assert fdcheck(lambda t: T.tsum(T.mul(t[0], t[0])), [x.copy()]) < TOL
        assert fdcheck(lambda t: weighted_sum(T.tsum(t[0], axis=0), w0), [x.copy()]) < TOL
        assert fdcheck(lambda t: weighted_sum(T.tmean(t[0], axis=1), w1), [x.copy()]) < TOL


def test_grad_reshape_transpose():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        x, w = r.normal(size=(3, 4)), r.normal(size=(4, 3))
        assert fdcheck(
            lambda t: weighted_sum(T.reshape(t[0], (4, 3)), w), [x.copy()]) < TOL
        assert fdcheck(lambda t: weighted_sum(t[0].T, w), [x.copy()]) < TOL


def test_grad_permute():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        x, w = r.normal(size=(2, 3, 4)), r.normal(size=(4, 2, 3))
        assert fdcheck(
            lambda t: weighted_sum(T.permute(t[0], (2, 0, 1)), w), [x.copy()]) < TOL


def test_grad_take_rows_with_duplicates():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        x = r.normal(size=(5, 3))
        idx = r.integers(0, 5, size=6)
        w = r.normal(size=(6, 3))
        assert fdcheck(lambda t: weighted_sum(T.take_rows(t[0], idx), w), [x]) < TOL


def test_grad_concat_slice():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        a, b = r.normal(size=(2, 3)), r.normal(size=(4, 3))
        wr = r.normal(size=(6, 3))
        assert fdcheck(
            lambda t: weighted_sum(T.concat_rows([t[0], t[1]]), wr), [a, b]) < TOL
        c, d = r.normal(size=(3, 2)), r.normal(size=(3, 4))
        wc = r.normal(size=(3, 3))
        assert fdcheck(
            lambda t: weighted_sum(
                T.slice_cols(T.concat_cols([t[0], t[1]]), 1, 4), wc), [c, d]) < TOL


def test_grad_softmax_rows():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        x, w = r.normal(size=(3, 5)) * 2.0, r.normal(size=(3, 5))
        assert fdcheck(lambda t: weighted_sum(T.softmax_rows(t[0]), w), [x]) < TOL


def test_grad_layer_norm():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        x = r.normal(size=(4, 6))
        gamma = r.uniform(0.5, 1.5, size=(6,))
        beta = r.normal(size=(6,))
        w = r.normal(size=(4, 6))
        assert fdcheck(
            lambda t: weighted_sum(T.layer_norm(t[0], t[1], t[2]), w),
            [x, gamma, beta]) < TOL


def test_grad_linear():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        x, wmat, b = r.normal(size=(3, 4)), r.normal(size=(4, 2)), r.normal(size=(2,))
        w = r.normal(size=(3, 2))
        assert fdcheck(
            lambda t: weighted_sum(T.linear(t[0], t[1], t[2]), w), [x, wmat, b]) < TOL


def test_grad_rowmax():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        # well-separated entries keep finite differences clear of the kink
        x = r.permutation(12).astype(np.float64).reshape(3, 4) * 0.5
        w = r.normal(size=(3, 1))
        assert fdcheck(lambda t: weighted_sum(T.rowmax(t[0]), w), [x]) < TOL


def test_grad_cross_entropy():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        logits = r.normal(size=(4, 3)) * 2.0
        targets = r.integers(0, 3, size=4)
        assert fdcheck(lambda t: T.cross_entropy(t[0], targets), [logits]) < TOL


def test_grad_scale_neg_sub():
    for seed in range(N_SEEDS):
        r = rng_for(seed)
        a, b, w = r.normal(size=(3, 3)), r.normal(size=(3, 3)), r.normal(size=(3, 3))
        assert fdcheck(
            lambda t: weighted_sum(T.scale(t[0], 2.5) - t[1], w), [a, b]) < TOL
