"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on inputs sized like the desk-scale workload: the pose
correlation (10 classes, 33x33 map, 8 headings, 11x11 window), a ConvLSTM
gate convolution over a clipped ROI, its two gradients, and one camera sweep
of ray casting. Timings are for the raw kernels; the package routes the two
gradients to numpy on both backends.
"""
import argparse
import math
import timeit

import numpy as np

from semslam import kernels


def workloads(rng):
    L, H, W, R, h = 10, 33, 33, 8, 11
    corr_x = rng.random((L, H + h - 1, W + h - 1))
    corr_w = rng.random((R, L, h, h))
    gate_x = rng.standard_normal((2 * L, 13, 13))
    gate_w = rng.standard_normal((4 * L, 2 * L, 3, 3))
    gate_d = rng.standard_normal((4 * L, 11, 11))
    ids = np.full((H, W), -1, dtype=np.int64)
    ids[0, :] = ids[-1, :] = ids[:, 0] = ids[:, -1] = -2
    cells = rng.integers(1, H - 1, size=(150, 2))
    ids[cells[:, 0], cells[:, 1]] = np.arange(150)
    ids[16, 16] = -1
    angles = np.linspace(-math.pi / 4, math.pi / 4, 720)
    return {
        "correlate (conv_valid 10x43x43 * 8x10x11x11)": ("conv_valid", (corr_x, corr_w)),
        "ConvLSTM gates (conv_valid 20x13x13 * 40x20x3x3)": ("conv_valid", (gate_x, gate_w)),
        "gate grad input": ("conv_valid_grad_input", (gate_d, gate_w)),
        "gate grad weight": ("conv_valid_grad_weight", (gate_x, gate_d, 3, 3)),
        "trace_rays (720 rays)": ("trace_rays", (ids, 16.0, 16.0, angles, 7.5)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':52s}" + "".join(f"{b:>14s}" for b in backends) + "     speedup")
    for label, (fn, fargs) in workloads(rng).items():
        times = []
        for b in backends:
            f = getattr(kernels.raw_backend(b), fn)
            n = max(1, int(0.2 / max(timeit.timeit(lambda: f(*fargs), number=1), 1e-6)))
            best = min(timeit.repeat(lambda: f(*fargs), number=n, repeat=args.repeat)) / n
            times.append(best)
        cols = "".join(f"{t * 1e3:11.3f} ms" for t in times)
        speed = f"{times[-1] / times[0]:9.1f}x" if len(times) > 1 else ""
        used = "  (package uses numpy)" if fn in kernels.BLAS_ROUTED else ""
        print(f"{label:52s}{cols}{speed}{used}")


if __name__ == "__main__":
    main()
