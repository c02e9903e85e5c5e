"""Time the twin kernel builds (numba vs numpy) on benchmark-sized grids.

Run:  python3 benchmarks/bench_kernels.py [--extent 32] [--repeats 5]

Reports per-kernel medians plus an end-to-end encoder forward pass under
each backend.  The numba build pays a one-time JIT cost that is excluded
by a warmup call.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from tis.backend import get_kernels


def _time(fn, repeats: int) -> float:
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench_backend(name: str, extent: int, repeats: int) -> dict[str, float]:
    impl = get_kernels(name)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((extent, extent, extent, 8))
    cols = impl.im2col3(x)  # warmup / JIT
    mask = rng.random((extent, extent, extent)) < 0.2
    impl.col2im3(cols, *x.shape)
    impl.label_components(mask, 6)

    return {
        "im2col3": _time(lambda: impl.im2col3(x), repeats),
        "col2im3": _time(lambda: impl.col2im3(cols, *x.shape), repeats),
        "label_components": _time(lambda: impl.label_components(mask, 6), repeats),
    }


def bench_encode(extent: int, repeats: int) -> float:
    from tis.encoder import EncoderConfig, encode, init_encoder_params
    from tis.rng import Rng
    from tis.tensor import no_grad
    from tis.volume_io import Volume

    cfg = EncoderConfig()
    store = init_encoder_params(cfg, Rng(0))
    vol = Volume(np.random.default_rng(1).standard_normal((extent,) * 3)
                 .astype(np.float32).astype(np.float64))
    with no_grad():
        encode(vol, store, cfg)  # warmup

        def run():
            encode(vol, store, cfg)

        return _time(run, repeats)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--extent", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    backends = ["numpy"]
    try:
        import numba  # noqa: F401

        backends.append("numba")
    except ImportError:
        print("numba not importable; timing numpy only")

    results = {b: bench_backend(b, args.extent, args.repeats) for b in backends}
    kernels = sorted(next(iter(results.values())))
    print(f"\ngrid {args.extent}^3, median of {args.repeats} runs (ms)")
    header = "kernel".ljust(20) + "".join(b.rjust(12) for b in backends)
    print(header)
    print("-" * len(header))
    for k in kernels:
        row = k.ljust(20)
        for b in backends:
            row += f"{results[b][k] * 1e3:12.3f}"
        print(row)

    print("\nencoder forward (active backend):"
          f" {bench_encode(args.extent, args.repeats) * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
