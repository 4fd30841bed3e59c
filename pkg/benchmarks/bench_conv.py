"""Benchmark the dilated causal convolution kernels: compiled vs numpy.

Times a full dilation stack (1, 2, 4, ...) forward + backward at a few
realistic batch shapes and prints the per-backend medians. Run:

    python3 benchmarks/bench_conv.py [--repeats N]
"""

import argparse
import statistics
import time

import numpy as np

from groupdecode.nn import backend


def _stack_once(fwd, bwd, x, weights, biases, dilations):
    """One forward + backward pass through the whole layer stack."""
    acts = [x]
    for w, b, d in zip(weights, biases, dilations):
        acts.append(fwd(acts[-1], w, b, d))
    dy = np.ones_like(acts[-1])
    for w, d, a in zip(reversed(weights), reversed(dilations), reversed(acts[:-1])):
        dy, _, _ = bwd(a, w, d, dy)
    return dy


def bench(name, n, cin, hidden, t, n_layers, repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((n, cin, t)).astype(np.float32)
    dilations = [2**i for i in range(n_layers)]
    weights, biases = [], []
    for i, _ in enumerate(dilations):
        ci = cin if i == 0 else hidden
        weights.append(rng.standard_normal((hidden, ci, 2)).astype(np.float32) * 0.1)
        biases.append(np.zeros(hidden, dtype=np.float32))

    def run(fwd, bwd):
        times = []
        _stack_once(fwd, bwd, x, weights, biases, dilations)  # warm-up
        for _ in range(repeats):
            t0 = time.perf_counter()
            _stack_once(fwd, bwd, x, weights, biases, dilations)
            times.append(time.perf_counter() - t0)
        return statistics.median(times)

    t_np = run(backend._np_forward, backend._np_backward)
    row = f"{name:<22} {n:>5} x {cin:>3} x {t:>4}  L={n_layers}  numpy {t_np*1e3:8.2f} ms"
    if backend.compiled_available():
        ext = backend._ext
        t_c = run(
            lambda a, w, b, d: ext.conv1d_forward(a, w, b, d),
            lambda a, w, d, dy: ext.conv1d_backward(a, w, d, dy),
        )
        row += f"  compiled {t_c*1e3:8.2f} ms  speedup {t_np / t_c:5.2f}x"
    else:
        row += "  (compiled extension not built)"
    print(row)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()
    print(f"active backend: {backend.backend_name()}; "
          f"compiled available: {backend.compiled_available()}")
    print("timings are one full conv stack, forward + backward, median of "
          f"{args.repeats} runs\n")
    bench("tiny (unit tests)", 16, 6, 8, 64, 3, args.repeats)
    bench("desk training step", 96, 32, 16, 256, 6, args.repeats)
    bench("wide evaluation", 240, 32, 64, 256, 6, args.repeats)


if __name__ == "__main__":
    main()
