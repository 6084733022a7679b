"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --size 128 --repeat 5
"""

import argparse
import timeit

import numpy as np

from vfiadapt import _pykernels

try:
    from vfiadapt import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(size, rng):
    src = rng.random((size, size, 3))
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    sx = np.ascontiguousarray(xs + rng.uniform(-4, 4, xs.shape))
    sy = np.ascontiguousarray(ys + rng.uniform(-4, 4, ys.shape))
    _, x0, y0, fx, fy, *_ = _pykernels.sample_bilinear(src, sx, sy, True)
    g = rng.normal(size=src.shape)
    ix, iy, it = (rng.normal(size=(size, size)) * 20 for _ in range(3))
    denom = 225.0 + ix * ix + iy * iy
    u0 = np.zeros((size, size))
    return {
        "sample_bilinear": lambda k: k.sample_bilinear(src, sx, sy, False),
        "sample_bilinear+grad": lambda k: k.sample_bilinear(src, sx, sy, True),
        "scatter_bilinear": lambda k: k.scatter_bilinear(g, x0, y0, fx, fy, size, size),
        "hs_relax x40": lambda k: k.hs_relax(ix, iy, it, denom, u0, u0, u0, u0, 40),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128, help="square frame side in pixels")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':<22}" + "".join(f"{n:>12}" for n, _ in backends) + "   speedup")
    for name, fn in cases(args.size, np.random.default_rng(0)).items():
        best = [min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)) * 1e3
                for _, k in backends]
        speed = f"{best[0] / best[1]:8.1f}x" if len(best) == 2 else "       -"
        print(f"{name:<22}" + "".join(f"{t:10.2f}ms" for t in best) + "  " + speed)


if __name__ == "__main__":
    main()
