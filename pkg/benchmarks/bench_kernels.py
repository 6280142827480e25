"""Compare the compiled and the numpy kernel backends on the hot paths.

Run as: python3 benchmarks/bench_kernels.py [--repeats N]

Shapes mirror the defaults of the vector-field net (hidden channels over a
cropped mel segment) and of codebook search during quantization.
"""

import argparse
import time

import numpy as np

from flowvc.kernels import available_backends, get_backend

CASES = [
    # (label, builder) -> (fn_name, args)
    ("conv1d fwd 128x128 k3 T96",
     lambda rng: ("conv1d_forward",
                  (rng.standard_normal((128, 98)),
                   rng.standard_normal((128, 128, 3)), 1))),
    ("conv1d fwd 256x256 k3 T48",
     lambda rng: ("conv1d_forward",
                  (rng.standard_normal((256, 50)),
                   rng.standard_normal((256, 256, 3)), 1))),
    ("conv1d bwd_w 128x128 k3 T96",
     lambda rng: ("conv1d_backward_w",
                  (rng.standard_normal((128, 98)),
                   rng.standard_normal((128, 96)), 3, 1))),
    ("conv1d bwd_x 128x128 k3 T96",
     lambda rng: ("conv1d_backward_x",
                  (rng.standard_normal((128, 128, 3)),
                   rng.standard_normal((128, 96)), 98, 1))),
    ("nearest_codebook 1024x64 V256",
     lambda rng: ("nearest_codebook",
                  (rng.standard_normal((1024, 64)),
                   rng.standard_normal((256, 64))))),
]


def time_call(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    header = f"{'case':36s}" + "".join(f"{b:>12s}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10s}"
    print(header)

    rng = np.random.default_rng(0)
    for label, build in CASES:
        fn_name, call_args = build(rng)
        times = []
        for b in backends:
            fn = getattr(get_backend(b), fn_name)
            fn(*call_args)  # warm up, and fail fast on drift
            times.append(time_call(fn, call_args, args.repeats))
        row = f"{label:36s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[-1]:9.1f}x"
        print(row)

    # the two backends must agree bit-for-bit on integer outputs and to
    # rounding error on float ones; spot-check while we are here
    if len(backends) > 1:
        np_b, cy_b = get_backend("numpy"), get_backend("cython")
        xp = rng.standard_normal((64, 50))
        w = rng.standard_normal((32, 64, 3))
        a = np_b.conv1d_forward(xp, w, 1)
        b = cy_b.conv1d_forward(xp, w, 1)
        assert np.allclose(a, b, atol=1e-12), "backend drift in conv1d_forward"
        x = rng.standard_normal((200, 16))
        e = rng.standard_normal((40, 16))
        assert np.array_equal(np_b.nearest_codebook(x, e),
                              cy_b.nearest_codebook(x, e)), \
            "backend drift in nearest_codebook"
        print("cross-backend agreement: ok")


if __name__ == "__main__":
    main()
