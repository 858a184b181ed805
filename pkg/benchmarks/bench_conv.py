"""Time the compiled and numpy conv1d kernels, plus one full training step.

    python3 benchmarks/bench_conv.py [--repeat 3] [--batch 32]
"""
import argparse
import time

import numpy as np

from n2ndenoise.nn import ArchConfig, init_model, kernels, loss_and_grads

SHAPES = [
    # (label, in_ch, out_ch, kernel)
    ("first layer 1->55 k30", 1, 55, 30),
    ("body 55->55 k30", 55, 55, 30),
    ("head 55->1 k1", 55, 1, 1),
    ("small body 16->16 k15", 16, 16, 15),
]


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_layers(batch, frame, repeat, dtype):
    rng = np.random.default_rng(0)
    rows = []
    for label, c, o, k in SHAPES:
        x = rng.standard_normal((batch, frame, c)).astype(dtype)
        w = rng.standard_normal((k, c, o)).astype(dtype)
        b = np.zeros(o, dtype)
        g = rng.standard_normal((batch, frame, o)).astype(dtype)
        row = [label]
        for name in ("python", "compiled"):
            if name not in kernels.BACKENDS:
                row += [float("nan")] * 2
                continue
            mod = kernels.BACKENDS[name]
            row.append(best_of(lambda: mod.conv1d_forward(x, w, b), repeat))
            row.append(best_of(lambda: mod.conv1d_backward(x, w, g), repeat))
        rows.append(row)
    return rows


def bench_step(batch, frame, repeat, arch):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((batch, frame, 1)).astype(np.float32) * 0.1
    y = rng.standard_normal((batch, frame, 1)).astype(np.float32) * 0.1
    out = {}
    for name in kernels.BACKENDS:
        kernels.set_backend(name)
        model = init_model(0, arch)
        out[name] = best_of(lambda: loss_and_grads(model, x, y, update_stats=False), repeat)
    kernels.set_backend("compiled" if "compiled" in kernels.BACKENDS else "python")
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--frame", type=int, default=960)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--float64", action="store_true")
    args = p.parse_args()
    dtype = np.float64 if args.float64 else np.float32

    print(f"backends: {sorted(kernels.BACKENDS)}  batch={args.batch} frame={args.frame} "
          f"dtype={np.dtype(dtype).name}")
    print(f"{'layer':<24}{'py fwd':>9}{'py bwd':>9}{'ext fwd':>9}{'ext bwd':>9}{'speedup':>9}")
    for label, pf, pb, cf, cb in bench_layers(args.batch, args.frame, args.repeat, dtype):
        print(f"{label:<24}{pf:9.4f}{pb:9.4f}{cf:9.4f}{cb:9.4f}{(pf + pb) / (cf + cb):8.2f}x")

    for arch in (ArchConfig(), ArchConfig(3, 16, 15)):
        t = bench_step(args.batch, args.frame, args.repeat, arch)
        parts = "  ".join(f"{k} {v:.3f}s" for k, v in sorted(t.items()))
        print(f"forward+backward, {arch.n_conv}x{arch.channels}ch k{arch.kernel}: {parts}")


if __name__ == "__main__":
    main()
