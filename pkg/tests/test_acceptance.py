"""End-to-end acceptance checks for the toolkit's advertised guarantees.

One test per guarantee. Each test measures the relevant quantities,
records a single pass/fail summary line (shown in the terminal summary
and under -s), and enforces its stated runtime budget where one exists.
"""

import math
import time
from types import SimpleNamespace

import numpy as np

from conftest import (
    DECLARED_XI,
    TRUE_FIXED_COV,
    VEHICLE_C,
    VEHICLE_EPSILON,
    VEHICLE_K,
    make_attack,
)
from crdw.detect import WindowStat, accumulate_window, calibrate_threshold, \
    solve_crdw, window_statistic
from crdw.numerics import solve_discrete_lyapunov, spectral_radius
from crdw.plant import SystemModel, simulate
from crdw.uncertainty import NoisePolytope, Theta, epsilon_bound, \
    sigma_bar_drift_bound, sigma_bar_of_theta, sigma_delta_of_theta, \
    sigma_z_of_theta, steady_residual_cov

from _oracles import grid_oracle, scalar_crdw_oracle

# collected by the pytest_terminal_summary hook in conftest
acceptance_lines = []


def _report(name, ok, detail):
    line = f"acceptance[{name}]: {'PASS' if ok else 'FAIL'} ({detail})"
    acceptance_lines.append(line)
    print(line, flush=True)
    assert ok, line


def _dirichlet(rng, d):
    g = rng.gamma(1.0, size=d)
    return g / g.sum()


def _auroc(positives, negatives):
    """Probability that a positive sample outranks a negative one."""
    pos = np.asarray(positives, dtype=float)
    neg = np.asarray(negatives, dtype=float)
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def _binom_region(n, p, conf=0.95):
    """Equal-tailed exact acceptance region [lo, hi] for Binomial(n, p)."""
    lp, lq = math.log(p), math.log1p(-p)
    lgn = math.lgamma(n + 1)
    pmf = [math.exp(lgn - math.lgamma(k + 1) - math.lgamma(n - k + 1)
                    + k * lp + (n - k) * lq) for k in range(n + 1)]
    tail = (1.0 - conf) / 2.0
    cum, lo = 0.0, 0
    for k in range(n + 1):
        if cum + pmf[k] > tail:
            lo = k
            break
        cum += pmf[k]
    cum, hi = 0.0, n
    for k in range(n, -1, -1):
        if cum + pmf[k] > tail:
            hi = k
            break
        cum += pmf[k]
    return lo, hi


def _stat_ns(kind, model, polytope=None, epsilon=0.0, assumed=None,
             seed=11, burn_in=100):
    return SimpleNamespace(statistic=kind, model=model, polytope=polytope,
                           epsilon=epsilon, dw_assumed_meas_cov=assumed,
                           seed=seed, burn_in=burn_in)


def _window_values(records, burn_in, ell, ns):
    vals = []
    start = burn_in - 1
    last = records[-1].step
    while start + ell <= last:
        w = accumulate_window(records, start, ell)
        vals.append(window_statistic(w, ns)[0])
        start += ell
    return vals


def test_lyapunov_residual_bound(vehicle):
    t0 = time.perf_counter()
    cases = [
        (vehicle.A + vehicle.B @ VEHICLE_K, np.eye(5)),
        (vehicle.A + vehicle.L @ VEHICLE_C, vehicle.process_noise_cov),
    ]
    rng = np.random.default_rng(2026)
    for _ in range(50):
        p = int(rng.integers(1, 9))
        F = rng.normal(size=(p, p))
        F *= rng.uniform(0.2, 0.95) / max(spectral_radius(F), 1e-12)
        R = rng.normal(size=(p, p))
        cases.append((F, R @ R.T))
    worst = 0.0
    for F, Q in cases:
        P = solve_discrete_lyapunov(F, Q)
        res = np.linalg.norm(P - F @ P @ F.T - Q, "fro")
        worst = max(worst, res / max(1.0, np.linalg.norm(Q, "fro")))
    el = time.perf_counter() - t0
    _report("lyapunov-residual", worst <= 1e-10 and el < 5.0,
            f"worst={worst:.2e} bound=1e-10 n={len(cases)} elapsed={el:.2f}s")


def test_steady_covariance_mixture_linearity(vehicle, vehicle_polytope):
    t0 = time.perf_counter()
    poly = vehicle_polytope
    F = vehicle.A + vehicle.L @ vehicle.C
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        th = Theta(_dirichlet(rng, poly.d))
        sz = sigma_z_of_theta(poly, th)
        # estimation-error covariance: weighted vertex solves vs one
        # direct solve at the mixed measurement covariance
        Q = vehicle.process_noise_cov + vehicle.L @ sz @ vehicle.L.T
        direct_delta = solve_discrete_lyapunov(F, Q)
        worst = max(worst, np.linalg.norm(
            sigma_delta_of_theta(poly, th) - direct_delta, "fro"))
        # same comparison for the full stacked block covariance
        bar = sigma_bar_of_theta(poly, th)
        direct_top = steady_residual_cov(vehicle, sz)
        m = poly.m
        worst = max(worst, np.linalg.norm(bar[:m, :m] - direct_top, "fro"))
        worst = max(worst, np.linalg.norm(
            bar[m:, m:] - vehicle.watermark_cov, "fro"))
        worst = max(worst, np.linalg.norm(bar[:m, m:], "fro"))
    el = time.perf_counter() - t0
    _report("mixture-linearity", worst <= 1e-9 and el < 10.0,
            f"worst={worst:.2e} bound=1e-9 trials=100 elapsed={el:.2f}s")


def test_mixture_inverse_candidate_feasibility(vehicle_polytope):
    poly = vehicle_polytope
    G = [np.linalg.inv(b) for b in poly.sigma_bars]
    nn = poly.m + poly.q
    eye = np.eye(nn)
    rng = np.random.default_rng(13)
    min_upper = np.inf      # slack of the inverse-combination bound
    min_bordered = np.inf   # slack of the bordered coupling condition
    min_prec = np.inf
    worst_sum = 0.0
    for _ in range(100):
        w = _dirichlet(rng, poly.d)
        th = Theta(w)
        mix = sigma_bar_of_theta(poly, th)
        V = np.linalg.inv(mix)
        upper = sum(wk * g for wk, g in zip(w, G)) - V
        bordered = np.block([[V, eye], [eye, mix]])
        min_upper = min(min_upper, float(np.linalg.eigvalsh(upper).min()))
        min_bordered = min(min_bordered,
                           float(np.linalg.eigvalsh(bordered).min()))
        min_prec = min(min_prec, float(np.linalg.eigvalsh(V).min()))
        worst_sum = max(worst_sum, abs(float(w.sum()) - 1.0))
    ok = (min_upper >= -1e-10 and min_bordered >= -1e-9
          and min_prec > 0.0 and worst_sum <= 1e-12)
    _report("mixture-inverse-feasibility", ok,
            f"min_eig_upper={min_upper:.2e} min_eig_bordered={min_bordered:.2e}"
            f" trials=100")


def test_solver_matches_independent_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(17)
    worst_scalar = 0.0
    statuses = []
    for i in range(50):
        sbar = float(rng.uniform(0.2, 5.0))
        ell = int(rng.integers(6, 40))
        s_val = float(rng.uniform(0.05, 8.0))
        eps = 0.0 if i % 4 == 0 else float(rng.uniform(0.02, 0.3)) * sbar
        b = np.array([[sbar]])
        poly = NoisePolytope(vertices=(b,), sigma_delta_bars=(b,),
                             sigma_bars=(b,), watermark_cov=np.zeros((0, 0)))
        w = WindowStat(S=np.array([[s_val]]), ell=ell, start_step=0)
        res = solve_crdw(w, poly, eps)
        statuses.append(res.status)
        _, core = scalar_crdw_oracle(s_val, ell, sbar, eps)
        want = (2 - ell) * math.log(s_val) + core
        worst_scalar = max(worst_scalar, abs(res.objective - want))

    worst_planar = 0.0
    for i in range(20):
        A = rng.normal(size=(2, 2))
        S = A @ A.T + 0.5 * np.eye(2)
        b1 = (lambda M: M @ M.T + 0.8 * np.eye(2))(rng.normal(size=(2, 2)))
        b2 = (lambda M: M @ M.T + 0.8 * np.eye(2))(rng.normal(size=(2, 2)))
        ell = int(rng.integers(8, 30))
        eps = 0.0 if i % 4 == 0 else float(rng.uniform(0.02, 0.15))
        poly = NoisePolytope(vertices=(b1, b2), sigma_delta_bars=(b1, b2),
                             sigma_bars=(b1, b2),
                             watermark_cov=np.zeros((0, 0)))
        w = WindowStat(S=S, ell=ell, start_step=0)
        res = solve_crdw(w, poly, eps)
        statuses.append(res.status)
        G = np.stack([np.linalg.inv(b - eps * np.eye(2)) for b in (b1, b2)])
        core, _ = grid_oracle(S, ell, np.stack([b1, b2]), G, eps)
        want = (3 - ell) * np.linalg.slogdet(S)[1] + core
        worst_planar = max(worst_planar, abs(res.objective - want))

    el = time.perf_counter() - t0
    n_opt = statuses.count("Optimal")
    ok = (worst_scalar <= 1e-4 and worst_planar <= 1e-4
          and n_opt == len(statuses) and el < 120.0)
    _report("solver-vs-oracle", ok,
            f"worst_scalar={worst_scalar:.2e} worst_planar={worst_planar:.2e}"
            f" bound=1e-4 optimal={n_opt}/{len(statuses)} elapsed={el:.1f}s")


def _separation_medians(model, polytope, covs, robust_ns, seeds):
    dw_ns = _stat_ns("DW", model, assumed=1e-5 * np.eye(3))
    attack = make_attack(noisy=True)
    robust_auc, dw_auc = [], []
    for seed in seeds:
        clean = simulate(model, None, covs, 1000, seed)
        attacked = simulate(model, attack, covs, 1000, seed)
        r_clean = _window_values(clean, 100, 50, robust_ns)
        r_att = _window_values(attacked, 100, 50, robust_ns)
        d_clean = _window_values(clean, 100, 50, dw_ns)
        d_att = _window_values(attacked, 100, 50, dw_ns)
        robust_auc.append(_auroc(r_att, r_clean))
        dw_auc.append(_auroc(d_att, d_clean))
    return float(np.median(robust_auc)), float(np.median(dw_auc))


def test_fixed_covariance_separation(vehicle, vehicle_polytope):
    t0 = time.perf_counter()
    ns = _stat_ns("CRDW", vehicle, polytope=vehicle_polytope)
    med_r, med_d = _separation_medians(
        vehicle, vehicle_polytope, TRUE_FIXED_COV, ns, range(500, 520))
    el = time.perf_counter() - t0
    ok = med_r >= 0.95 and med_d <= med_r - 0.15 and el < 600.0
    _report("fixed-covariance-separation", ok,
            f"median_auroc robust={med_r:.3f} fixed_reference={med_d:.3f}"
            f" replicates=20 elapsed={el:.0f}s")


def test_varying_covariance_separation(vehicle, vehicle_polytope,
                                       vehicle_schedule):
    t0 = time.perf_counter()
    ns = _stat_ns("CRDW*", vehicle, polytope=vehicle_polytope,
                  epsilon=VEHICLE_EPSILON)
    med_r, med_d = _separation_medians(
        vehicle, vehicle_polytope, vehicle_schedule, ns, range(700, 720))
    el = time.perf_counter() - t0
    ok = med_r >= 0.95 and med_d <= med_r - 0.15 and el < 600.0
    _report("varying-covariance-separation", ok,
            f"median_auroc robust={med_r:.3f} fixed_reference={med_d:.3f}"
            f" replicates=20 elapsed={el:.0f}s")


def test_false_alarm_rate_invariance(vehicle, vehicle_polytope):
    t0 = time.perf_counter()
    poly = vehicle_polytope
    ns = _stat_ns("CRDW", vehicle, polytope=poly, seed=11, burn_in=100)
    theta_ref = Theta(np.full(poly.d, 1.0 / poly.d))
    ell, n_windows, a = 200, 500, 0.05
    nu = calibrate_threshold(ns, theta_ref, ell, n_windows, a)
    lo, hi = _binom_region(n_windows, a)
    rng = np.random.default_rng(29)
    counts = []
    for i in range(5):
        # strictly interior draw: blend toward the centroid
        w = 0.8 * _dirichlet(rng, poly.d) + 0.2 / poly.d
        sz = sigma_z_of_theta(poly, Theta(w))
        n_steps = 100 + n_windows * ell
        records = simulate(vehicle, None, sz, n_steps, 40_000 + i)
        vals = _window_values(records, 100, ell, ns)
        counts.append(int(sum(v > nu for v in vals)))
    el = time.perf_counter() - t0
    ok = all(lo <= c <= hi for c in counts) and el < 900.0
    _report("false-alarm-invariance", ok,
            f"reject_counts={counts} region=[{lo},{hi}] of {n_windows}"
            f" elapsed={el:.0f}s")


def test_drift_slack_formula(vehicle):
    # contraction-based bound on a hand-checkable single-state observer:
    # 0.1 * 1 * 1 * 0.25 / 0.75^2 = 1/22.5
    scalar = SystemModel(A=[[-0.5]], B=[[1.0]], C=[[1.0]], K=[[0.0]],
                         L=[[1.0]], process_noise_cov=[[0.0]],
                         watermark_cov=[[1.0]])
    hand_err = abs(epsilon_bound(0.1, scalar) - 1.0 / 22.5)

    rng = np.random.default_rng(41)
    exact_linear = True
    for _ in range(20):
        xi = float(10.0 ** rng.uniform(-6, 0))
        exact_linear &= epsilon_bound(2 * xi, scalar) == 2 * epsilon_bound(xi, scalar)
        exact_linear &= (sigma_bar_drift_bound(2 * xi, vehicle)
                         == 2 * sigma_bar_drift_bound(xi, vehicle))

    # the slack at the declared drift rate depends on the pinned observer
    # gain, so the value is a regression constant rather than a derivation
    pinned = sigma_bar_drift_bound(DECLARED_XI, vehicle)
    pin_err = abs(pinned - VEHICLE_EPSILON) / VEHICLE_EPSILON
    ok = hand_err <= 1e-12 and exact_linear and pin_err <= 1e-12
    _report("drift-slack-formula", ok,
            f"hand_err={hand_err:.1e} linear_exact={exact_linear}"
            f" pinned={pinned:.6e}")


def test_muting_cancels_output(vehicle, silent_attack):
    worst = 0.0
    exact = True
    for seed in range(10):
        records = simulate(vehicle, silent_attack, TRUE_FIXED_COV, 300, seed)
        for r in records:
            exact &= bool(np.all(r.y == 0.0))
            worst = max(worst, float(np.abs(r.y).max()))
    _report("muting-identity", exact,
            f"max_abs_output={worst:.1e} seeds=10 steps=300")
