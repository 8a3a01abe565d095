"""Compare the compiled and numpy pair kernels.

For each particle count, times one force evaluation and one per-particle
potential evaluation on each available backend, checks that the backends
agree, and prints a table (optionally also as JSON).

    python3 benchmarks/bench_kernels.py [--nu 256 1024 4096] [--repeat 5] [--json FILE]
"""

import argparse
import json
import timeit

import numpy as np

from trps_lab.theta import kernels


def state(nu, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (nu, 3))
    s = rng.standard_normal((nu, 3))
    s /= np.linalg.norm(s, axis=1, keepdims=True)
    return x, s, 1.0 / nu, 0.1**2


def best_of(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.2 and number < 1000:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--nu", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args()

    backends = kernels.available()
    start_backend = kernels.backend()
    rows = []
    for nu in args.nu:
        x, s, g, a2 = state(nu)
        results = {}
        for name in backends:
            kernels.use(name)
            f = kernels.forces(x, s, g, a2)
            phi = kernels.potentials(x, s, g, a2)
            results[name] = {
                "forces_s": best_of(lambda: kernels.forces(x, s, g, a2), args.repeat),
                "potentials_s": best_of(lambda: kernels.potentials(x, s, g, a2), args.repeat),
                "f": f, "phi": phi,
            }
        row = {"nu": nu}
        for name, r in results.items():
            row[f"{name}_forces_ms"] = 1e3 * r["forces_s"]
            row[f"{name}_potentials_ms"] = 1e3 * r["potentials_s"]
        if len(results) == 2:
            c, p = results["compiled"], results["python"]
            row["forces_speedup"] = p["forces_s"] / c["forces_s"]
            row["potentials_speedup"] = p["potentials_s"] / c["potentials_s"]
            scale = np.abs(p["f"]).max()
            row["max_force_rel_diff"] = float(np.abs(c["f"] - p["f"]).max() / scale)
        rows.append(row)
    kernels.use(start_backend)

    keys = list(rows[0])
    print("  ".join(f"{k:>22}" for k in keys))
    for row in rows:
        print("  ".join(f"{row[k]:>22.4g}" if isinstance(row[k], float) else f"{row[k]:>22}"
                        for k in keys))
    if len(backends) < 2:
        print(f"only the {backends[0]} backend is available; build the extension to compare")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
