"""Benchmark the compiled LSTM cell kernels against the numpy fallback.

Times a full BiLSTM forward+backward over padded batches at training-like
sizes, swapping the kernel backend in place.

    python benchmarks/bench_kernels.py [--batch 32] [--tokens 25] [--hidden 300]
"""

import argparse
import time

import numpy as np

import kgan._kernels as kernels
from kgan._kernels import fallback
from kgan.network.lstm import bilstm_backward, bilstm_forward


def run_case(B, T, d_w, hidden, dtype, repeats):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(B, T, d_w)).astype(dtype)
    mask = np.ones((B, T), dtype=dtype)
    lengths = rng.integers(max(1, T // 2), T + 1, size=B)
    for i, m in enumerate(lengths):
        mask[i, m:] = 0.0
    params = {}
    for d in ("fwd", "bwd"):
        params[f"lstm_s_{d}_Wx"] = rng.normal(scale=0.1, size=(d_w, 4 * hidden)).astype(dtype)
        params[f"lstm_s_{d}_Wh"] = rng.normal(scale=0.1, size=(hidden, 4 * hidden)).astype(dtype)
        params[f"lstm_s_{d}_b"] = np.zeros(4 * hidden, dtype=dtype)
    dH = rng.normal(size=(B, T, 2 * hidden)).astype(dtype)

    def step():
        H, cache = bilstm_forward(X, mask, params, "lstm_s")
        grads = {k: np.zeros_like(v) for k, v in params.items()}
        bilstm_backward(dH, cache, grads)
        return H

    step()  # warm up
    tic = time.perf_counter()
    for _ in range(repeats):
        out = step()
    elapsed = (time.perf_counter() - tic) / repeats
    return elapsed, out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--tokens", type=int, default=25)
    ap.add_argument("--d-w", type=int, default=300)
    ap.add_argument("--hidden", type=int, default=300)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    if kernels.BACKEND != "ext":
        print("compiled extension not available; benchmarking fallback against itself")
    ext_fwd, ext_bwd = kernels.cell_forward, kernels.cell_backward

    results = {}
    for name, fwd, bwd in (
        ("ext", ext_fwd, ext_bwd),
        ("fallback", fallback.cell_forward, fallback.cell_backward),
    ):
        kernels.cell_forward, kernels.cell_backward = fwd, bwd
        for dtype in (np.float32, np.float64):
            elapsed, out = run_case(args.batch, args.tokens, args.d_w, args.hidden,
                                    dtype, args.repeats)
            results[(name, np.dtype(dtype).name)] = (elapsed, out)
            print(f"{name:9s} {np.dtype(dtype).name}: {1e3 * elapsed:8.2f} ms / fwd+bwd "
                  f"(B={args.batch}, T={args.tokens}, hidden={args.hidden})")
    kernels.cell_forward, kernels.cell_backward = ext_fwd, ext_bwd

    for dtype in ("float32", "float64"):
        a = results[("ext", dtype)]
        b = results[("fallback", dtype)]
        diff = np.abs(a[1] - b[1]).max()
        print(f"{dtype}: speedup x{b[0] / a[0]:.2f}, max |H_ext - H_fallback| = {diff:.3g}")


if __name__ == "__main__":
    main()
