"""Compare the compiled and numpy kernel backends.

Times residual and Jacobian assembly on the CI mesh for every strain and
plasticity mode, and one short lithiation run per backend::

    python3 benchmarks/bench_kernels.py --repeat 5
"""
import argparse
import time
from dataclasses import replace

import numpy as np

from sisei import kernels
from sisei.constitutive import MaterialParams, OcvCurve
from sisei.driver import ScenarioConfig, run_scenario
from sisei.radial_fem import RadialProblem, build_mesh

MODES = [("gsv", "elastic"), ("log", "elastic"), ("log", "plastic"), ("log", "viscoplastic")]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def assembly(backend, strain, plastic, repeat):
    mesh, dofmap = build_mesh(120, 12, 0.1, 4)
    prob = RadialProblem(mesh, dofmap, MaterialParams(), OcvCurve.silicon(), strain, plastic,
                         backend=backend)
    y = prob.swelling_state(0.5)
    y[dofmap.u] *= 1.01
    return (best_of(lambda: prob.residual(y, 1e-3), repeat),
            best_of(lambda: prob.jacobian(y, 1e-3), repeat))


def short_run(backend):
    cfg = replace(ScenarioConfig(), name=f"bench-{backend}", plasticity_mode="viscoplastic",
                  half_cycles=1, half_cycle_duration_h=0.1, backend=backend)
    start = time.perf_counter()
    out = run_scenario(cfg)
    return time.perf_counter() - start, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'mode':22s}" + "".join(f"{b + ' res':>14s}{b + ' jac':>14s}" for b in backends))
    for strain, plastic in MODES:
        cells = []
        for b in backends:
            cells += [f"{1e3 * v:12.2f}ms" for v in assembly(b, strain, plastic, args.repeat)]
        print(f"{strain + '/' + plastic:22s}" + "".join(f"{c:>14s}" for c in cells))
    runs = {b: short_run(b) for b in backends}
    for b, (seconds, out) in runs.items():
        print(f"0.1 h viscoplastic run, {b:7s}: {seconds:7.2f} s, {out.n_accepted} steps")
    if len(runs) == 2:
        rows = [np.array(out.rows, dtype=float) for _, out in runs.values()]
        same = rows[0].shape == rows[1].shape and np.allclose(rows[0], rows[1], rtol=1e-8)
        speedup = runs["python"][0] / runs["cython"][0]
        print(f"speed-up {speedup:.1f}x; trajectories agree: {same}")


if __name__ == "__main__":
    main()
