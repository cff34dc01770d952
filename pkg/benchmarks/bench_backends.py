"""Time the compiled kernels against the pure-python fallback.

Run as: python3 benchmarks/bench_backends.py [--steps N] [--repeats R]
"""

import argparse
import statistics
import time

import numpy as np

import crdw.kernels as kernels
from crdw.detect import accumulate_window, solve_crdw
from crdw.kernels import pykernels
from crdw.plant import AttackSpec, SystemModel, _noise_blocks, simulate
from crdw.uncertainty import build_polytope

try:
    from crdw.kernels import _native
except ImportError:
    _native = None

A = np.array([
    [1.0, 0.0, 0.0, 0.1, 0.0],
    [0.5, 1.0, 0.0, 0.025, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.5],
    [0.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0],
])
B = np.array([
    [0.0025, 0.0],
    [1.0 / 2400, 0.0],
    [0.0, 0.00125],
    [0.05, 0.0],
    [0.0, 0.05],
])
C = np.hstack([np.eye(3), np.zeros((3, 2))])
K = np.array([
    [-6.7820408228662545, -0.8697885313103302, 0.0, -5.201212019396008, 0.0],
    [0.0, 0.0, -0.8916878558001003, 0.0, -4.5214070878774395],
])
L = np.array([
    [-0.6955721518256334, -0.07279247712596366, 0.0],
    [-0.39144199424246773, -0.6774341914641548, 0.0],
    [0.0, 0.0, -1.0],
    [-0.5461291756778532, -0.1548332940436634, 0.0],
    [0.0, 0.0, -0.5],
])
VERTICES = [
    1e-6 * np.diag([300.0, 1.8, 1.8]),
    1e-6 * np.diag([1.8, 300.0, 1.8]),
    1e-6 * np.diag([9.0, 9.0, 12.0]),
    1e-6 * np.diag([9.0, 9.0, 9.0]),
]
TRUE_COV = 1e-6 * np.diag([1.8, 300.0, 1.8])


def make_model():
    return SystemModel(A=A, B=B, C=C, K=K, L=L,
                       process_noise_cov=1e-8 * np.eye(5),
                       watermark_cov=0.5 * np.eye(2))


def timed(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_sim(n_steps, repeats):
    model = make_model()
    attack = AttackSpec(alpha=-1.0, state_noise_cov=1e-8 * np.eye(5),
                        output_noise_cov=1e-8 * np.eye(3), eta0=np.zeros(5))
    W, Z, E, Zeta, Omega = _noise_blocks(model, TRUE_COV, n_steps, 11, attack)
    args = (model.A, model.B, model.C, model.K, model.L,
            W, Z, E, Zeta, Omega, -1.0, np.zeros(5))
    rows = [("sim_loop python", timed(lambda: pykernels.sim_loop(*args),
                                      repeats))]
    if _native is not None:
        rows.append(("sim_loop native", timed(
            lambda: _native.sim_loop(*args), repeats)))
    return rows


def bench_barrier(repeats):
    model = make_model()
    poly = build_polytope(VERTICES, model)
    records = simulate(model, None, TRUE_COV, 400, 11)
    window = accumulate_window(records, 149, 50)

    captured = {}
    original = kernels.crdw_barrier

    def recorder(*args, **kw):
        captured["args"] = args
        captured["kw"] = kw
        return original(*args, **kw)

    kernels.crdw_barrier = recorder
    try:
        solve_crdw(window, poly, 0.0)
    finally:
        kernels.crdw_barrier = original
    args, kw = captured["args"], captured["kw"]

    rows = [("crdw_barrier python", timed(
        lambda: pykernels.crdw_barrier(*args, **kw), repeats))]
    if _native is not None:
        rows.append(("crdw_barrier native", timed(
            lambda: _native.crdw_barrier(*args, **kw), repeats)))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--repeats", type=int, default=5)
    opts = ap.parse_args()
    if _native is None:
        print("compiled extension not built; timing the fallback only")
    rows = bench_sim(opts.steps, opts.repeats) + bench_barrier(opts.repeats)
    width = max(len(name) for name, _ in rows)
    base = {}
    for name, t in rows:
        kind = name.split()[0]
        if kind not in base:
            base[kind] = t
        speed = base[kind] / t
        print(f"{name:<{width}}  {t * 1e3:9.3f} ms   x{speed:5.2f}")


if __name__ == "__main__":
    main()
