"""Central finite-difference gradient oracle shared by the test suite."""

import numpy as np

from tis.tensor import Tensor, backward, no_grad


def rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a) + abs(n), 1e-6)


def fdcheck(f, arrays, step: float = 1e-5) -> float:
    """Worst relative error between analytic and numeric gradients.

    `f` maps a list of Tensors to a scalar Tensor and must be pure; `arrays`
    are float64 and are restored to their original values on return.
    """
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    backward(f(tensors))
    grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def loss_now() -> float:
        return float(f([Tensor(a) for a in arrays]).data)

    worst = 0.0
    for a, g in zip(arrays, grads):
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            lp = loss_now()
            flat[j] = orig - step
            lm = loss_now()
            flat[j] = orig
            worst = max(worst, rel_err(float(gflat[j]), (lp - lm) / (2.0 * step)))
    return worst


def fdcheck_store(loss_fn, store, step: float = 1e-5) -> float:
    """fdcheck against every parameter of a ParamStore.

    `loss_fn` rebuilds the computation from the store's current values each
    call; parameters are perturbed in place and restored.
    """
    store.zero_grad()
    backward(loss_fn())
    grads = {n: store[n].grad_or_zeros().copy() for n in store.names()}

    worst = 0.0
    for name in store.names():
        flat = store[name].data.reshape(-1)
        gflat = grads[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            with no_grad():
                flat[j] = orig + step
                lp = float(loss_fn().data)
                flat[j] = orig - step
                lm = float(loss_fn().data)
            flat[j] = orig
            worst = max(worst, rel_err(float(gflat[j]), (lp - lm) / (2.0 * step)))
    return worst
