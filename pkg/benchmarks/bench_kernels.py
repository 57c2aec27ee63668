"""Compare the compiled and pure-Python pair-integral backends.

Usage: ``python3 benchmarks/bench_kernels.py [--side 1.0] [--repeats 3]``

Times triangle-pair moments split by integration class (regular, near,
touching) and a whole near-field block fill, then checks both backends
agree.
"""
import argparse
import json
import time

import numpy as np

from efiepc import _backend
from efiepc.kernel import EfieKernel, PhysicsParams
from efiepc.mesh import mesh_plate


def best_of(fn, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def pair_sets(kernel, rng, size=4000):
    T = kernel.mesh.num_triangles
    ta = rng.integers(0, T, size * 8)
    tb = rng.integers(0, T, size * 8)
    near, touching = kernel.classify_pairs(ta, tb)
    masks = {"regular": ~near, "near": near & ~touching, "touching": touching}
    sets = {}
    for name, mask in masks.items():
        idx = np.flatnonzero(mask)[:size]
        sets[name] = (ta[idx], tb[idx])
    # touching pairs are rare among random draws; add edge neighbors
    et = kernel.mesh.edge_triangles
    sets["touching"] = (np.concatenate([sets["touching"][0], et[:size, 0]]),
                        np.concatenate([sets["touching"][1], et[:size, 1]]))
    return sets


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--side", type=float, default=1.0, help="plate side in wavelengths")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)
    if _backend.compiled_backend is None:
        raise SystemExit("compiled backend not built; run pip install -e . first")
    physics = PhysicsParams.from_wavelength(1.0)
    mesh = mesh_plate(args.side, args.side, 0.1)
    kernels = {name: EfieKernel(mesh, physics, backend=name)
               for name in ("python", "compiled")}
    rng = np.random.default_rng(0)
    sets = pair_sets(kernels["python"], rng)
    results = {"N": mesh.num_unknowns, "pairs": {}, "fill_block": {}}
    for cls, (ta, tb) in sets.items():
        row = {"count": int(len(ta))}
        outs = {}
        for name, k in kernels.items():
            t, outs[name] = best_of(lambda: k.local_matrices(ta, tb), args.repeats)
            row[f"{name}_us_per_pair"] = 1e6 * t / max(len(ta), 1)
        a, b = outs["python"], outs["compiled"]
        row["max_rel_diff"] = float(np.abs(a - b).max() / np.abs(a).max())
        row["speedup"] = row["python_us_per_pair"] / row["compiled_us_per_pair"]
        results["pairs"][cls] = row
    n = mesh.num_unknowns
    rows = np.arange(0, min(n, 200))
    cols = np.arange(0, min(n, 200))
    outs = {}
    for name, k in kernels.items():
        t, outs[name] = best_of(lambda: k.fill_block(rows, cols), args.repeats)
        results["fill_block"][f"{name}_seconds"] = t
    results["fill_block"]["max_rel_diff"] = float(
        np.abs(outs["python"] - outs["compiled"]).max() / np.abs(outs["python"]).max())
    results["fill_block"]["speedup"] = (results["fill_block"]["python_seconds"]
                                        / results["fill_block"]["compiled_seconds"])
    print(json.dumps(results, indent=2))


if __name__ == "__main__":
    main()
