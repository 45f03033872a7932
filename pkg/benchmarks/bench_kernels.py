"""Time the hot kernels under the numba and pure-numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

The first numba call of each kernel compiles (or loads the on-disk cache), so
each kernel runs once untimed before the timed repeats.
"""
import argparse
import time

import numpy as np

from specgloss._accel import HAVE_NUMBA, backend
from specgloss.brdf.lut import compute_brdf_lut
from specgloss.envlight import CubeMap, cube_sample, diffuse_irradiance, prefilter_pmrem
from specgloss.surfels import rasterize
from specgloss.synth import make_cameras, make_scene


def cases(quick):
    rng = np.random.default_rng(0)
    res = 64 if quick else 128
    scene, _ = make_scene("two-material", 900 if quick else 1800)
    cam = make_cameras(1, res)[0]
    base = CubeMap(rng.uniform(0.0, 2.0, (6, 32, 32, 3)))
    dirs = rng.normal(size=(200_000, 3))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return {
        f"rasterize {len(scene)} surfels {res}^2": lambda: rasterize(scene, cam),
        "cube_sample 200k dirs, 32^2 faces": lambda: cube_sample(base.data, dirs),
        "irradiance 32^2 -> 8^2": lambda: diffuse_irradiance(base, 8),
        "prefilter ggx 32^2, 64 samples": lambda: prefilter_pmrem(base, res_min=4, samples=64),
        "brdf lut 32^2, 256 samples": lambda: compute_brdf_lut(32, 256),
    }


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    names = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    print(f"{'kernel':40s} " + " ".join(f"{n:>10s}" for n in names) + "   speedup")
    for label, fn in cases(args.quick).items():
        t = {}
        for name in names:
            with backend(name):
                t[name] = best_of(fn, args.repeat)
        row = f"{label:40s} " + " ".join(f"{t[n] * 1e3:8.1f}ms" for n in names)
        if "numba" in t:
            row += f"   {t['numpy'] / t['numba']:6.1f}x"
        print(row, flush=True)


if __name__ == "__main__":
    main()
