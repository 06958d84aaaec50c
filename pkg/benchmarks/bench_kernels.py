"""Time the numba kernels against their numpy fallbacks.

Usage: ``python benchmarks/bench_kernels.py [--repeat 3] [--quick]``.  Each row
reports the best wall time of ``--repeat`` calls per backend after one warm-up
call (which absorbs numba compilation) and the resulting speed-up.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from pauliqcnn.circuits import build_qcnn, readout_observables
from pauliqcnn.kernels import HAVE_NUMBA, using_backend
from pauliqcnn.propagation import TruncationPolicy, propagate
from pauliqcnn.shadows import build_feature_table, sample_shadows
from pauliqcnn.surrogate import SurrogateEvaluator, surrogate_build


def best_time(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(quick: bool):
    rng = np.random.default_rng(0)
    n_prop, k_prop = (10, 3) if quick else (16, 3)
    circuit, layout = build_qcnn(n_prop)
    obs = readout_observables(layout)[0]
    theta = rng.uniform(-math.pi, math.pi, circuit.n_params)
    pol = TruncationPolicy(max_weight=k_prop)
    yield f"propagate n={n_prop} k={k_prop}", lambda: propagate(circuit, obs, theta, pol)

    n_sur = 10 if quick else 12
    c2, l2 = build_qcnn(n_sur)
    o2 = readout_observables(l2)[0]
    yield f"surrogate build n={n_sur} k=4", lambda: surrogate_build(c2, o2, TruncationPolicy(max_weight=4))
    graph = surrogate_build(c2, o2, TruncationPolicy(max_weight=4))
    ev = SurrogateEvaluator(graph)
    th2 = rng.uniform(-math.pi, math.pi, c2.n_params)
    dc = rng.normal(size=graph.n_leaves)

    def forward_backward():
        _, vjp = ev.coefficients_and_vjp(th2)
        vjp(dc)

    yield f"surrogate forward+backward ({graph.n_edges} edges)", forward_backward

    n_sh = 10
    psi = rng.normal(size=1 << n_sh) + 1j * rng.normal(size=1 << n_sh)
    psi /= np.linalg.norm(psi)
    shots = 2000 if quick else 20000
    yield f"sample shadows n={n_sh} S={shots}", lambda: sample_shadows(psi, shots, 1)
    sets = [sample_shadows(psi, shots, s) for s in range(4)]
    ops = sorted({"".join(rng.choice(list("IXYZ"), n_sh, p=[0.7, 0.1, 0.1, 0.1])) for _ in range(600)} - {"I" * n_sh})[:500]
    yield f"shadow estimates 4 sets x {len(ops)} ops", lambda: build_feature_table(sets, ops)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'case':48s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speed-up':>9s}")
    for name, fn in cases(args.quick):
        with using_backend("numba"):
            t_nb = best_time(fn, args.repeat)
        with using_backend("numpy"):
            t_np = best_time(fn, args.repeat)
        print(f"{name:48s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f}x", flush=True)


if __name__ == "__main__":
    main()
