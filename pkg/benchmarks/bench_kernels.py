"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--frames 500]

Covers the two hot loops: the 842 -> 64 bicubic resample of native
scanline frames and the separable valid-window filter behind SSIM and
CW-SSIM. Each row reports the best of ``--repeat`` runs after one warm-up
call (which also triggers numba compilation) and the largest absolute
difference between the two backends.
"""

import argparse
import time

import numpy as np

from ultratongue import _kernels
from ultratongue.imaging import resample_taps
from ultratongue.metrics import SsimParams


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(n_frames, rng):
    frames = rng.uniform(0, 255, (n_frames, 64, 842))
    idx, wts = resample_taps(842, 64)
    yield ("taps 842->64", n_frames, _kernels.taps_apply_numpy, _kernels.taps_apply_numba, (frames, idx, wts))

    stack = rng.uniform(0, 255, (4 * n_frames, 64, 64))
    g = SsimParams().kernel_1d()
    yield ("gauss 11x11 valid", 4 * n_frames, _kernels.valid_filter2d_numpy, _kernels.valid_filter2d_numba,
           (stack, g, g))

    box = np.ones(7)
    yield ("box 7x7 valid", 4 * n_frames, _kernels.valid_filter2d_numpy, _kernels.valid_filter2d_numba,
           (stack, box, box))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--frames", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20} {'images':>7} {'numpy s':>9} {'numba s':>9} {'speedup':>8} {'max |diff|':>11}")
    for name, n, np_fn, nb_fn, fn_args in cases(args.frames, rng):
        t_np = best_of(lambda: np_fn(*fn_args), args.repeat)
        t_nb = best_of(lambda: nb_fn(*fn_args), args.repeat)
        diff = float(np.max(np.abs(np_fn(*fn_args) - nb_fn(*fn_args))))
        print(f"{name:<20} {n:>7} {t_np:>9.4f} {t_nb:>9.4f} {t_np / t_nb:>7.2f}x {diff:>11.2e}")


if __name__ == "__main__":
    main()
