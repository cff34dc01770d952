"""Sliding-window test statistics and the robust detector.

Three statistics share the same windowed second-moment input: a fixed
reference statistic that trusts one assumed noise covariance, a robust
statistic that minimizes the windowed Wishart negative log-likelihood
over an uncertainty polytope, and a drift-robust variant that inflates
the polytope by a spectral slack. The embedded solver is a primal
path-following interior-point method on the shared kernel.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InsufficientData, NonConvergence, NotPositiveDefinite
from .numerics import logdet_chol, symmetrize
from .plant import compute_kprime, simulate
from .uncertainty import Theta, sigma_z_of_theta, steady_residual_cov


@dataclass
class WindowStat:
    S: np.ndarray
    ell: int
    start_step: int

    def __post_init__(self):
        self.S = symmetrize(self.S)
        self.ell = int(self.ell)
        self.start_step = int(self.start_step)
        if self.ell <= self.S.shape[0]:
            raise ValueError("window length must exceed the psi dimension")


@dataclass
class SolverResult:
    """Outcome of one covariance-robust fit.

    kkt_residual is the stationarity residual in the solver's local
    curvature metric (the final Newton decrement for barrier solves,
    exactly zero for the closed-form single-vertex path). Status Optimal
    requires it below 1e-6 with strict constraint feasibility.
    """

    objective: float
    V_opt: np.ndarray
    theta_opt: Theta
    kkt_residual: float
    iterations: int
    status: str  # Optimal | MaxIter | Infeasible


@dataclass
class DetectionResult:
    statistic: float
    threshold: float
    reject: bool
    solver: SolverResult = None


def accumulate_window(records, start, ell):
    """Sum of psi outer products over steps start+1 .. start+ell."""
    if not records:
        raise InsufficientData("no records")
    offset = records[0].step
    lo = start + 1 - offset
    hi = start + ell - offset
    if lo < 0 or hi >= len(records):
        raise InsufficientData(
            f"window [{start + 1}, {start + ell}] outside recorded steps")
    rows = []
    for rec in records[lo:hi + 1]:
        if rec.psi is None:
            raise InsufficientData(f"step {rec.step} has no psi yet")
        rows.append(rec.psi)
    P = np.stack(rows)
    return WindowStat(S=P.T @ P, ell=ell, start_step=start)


def wishart_nll(window, V, m=None, q=None):
    """Windowed Wishart negative log-likelihood at precision V:
    (m+q+1-ell) logdet S + tr(V S) - ell logdet V."""
    S = window.S
    dim = S.shape[0]
    if m is not None and q is not None and m + q != dim:
        raise ValueError("m+q does not match the window dimension")
    V = symmetrize(V)
    return float((dim + 1 - window.ell) * logdet_chol(S)
                 + np.sum(V * S) - window.ell * logdet_chol(V))


def dw_statistic(window, err_cov, meas_cov, watermark_cov, m, q):
    """Fixed-reference statistic: the trusted covariance pair replaces the
    optimization. err_cov is the output-space estimation-error covariance,
    meas_cov the assumed measurement-noise covariance. The logdet of the
    fixed precision is an additive constant and is omitted."""
    S = window.S
    if S.shape[0] != m + q:
        raise ValueError("window dimension does not match m+q")
    top = symmetrize(err_cov) + symmetrize(meas_cov)
    logdet_chol(top)            # PD gate
    logdet_chol(watermark_cov)
    V = np.zeros((m + q, m + q))
    V[:m, :m] = np.linalg.inv(top)
    V[m:, m:] = np.linalg.inv(symmetrize(watermark_cov))
    return float((m + q + 1 - window.ell) * logdet_chol(S) + np.sum(V * S))


def _chol_or_none(M):
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None


def _pd_inv(M):
    c = _chol_or_none(symmetrize(M))
    if c is None:
        return None
    w = np.linalg.solve(c, np.eye(M.shape[0]))
    return w.T @ w


def _scaled_barrier(S, bars, G, eps, ell, mu_min, max_newton):
    """Diagonal equilibration wrapper around the kernel solve.

    The congruence V -> D V D maps the problem onto O(1) data; the KKT
    residual and duality gap are certified in the scaled space.
    """
    bars = np.asarray(bars, dtype=float)
    dscale = np.sqrt(np.mean([np.diag(b) for b in bars], axis=0))
    dscale = np.maximum(dscale, 1e-150)
    outer = np.outer(dscale, dscale)
    Ss = S / outer
    bars_s = bars / outer[None, :, :]
    G_s = None if G is None else np.asarray(G, dtype=float) * outer[None, :, :]
    eps_diag = eps / dscale**2
    V_s, th, iters, conv, kkt, gap = kernels.crdw_barrier(
        Ss, bars_s, G_s, eps_diag, ell, mu_min=mu_min, max_newton=max_newton)
    return V_s / outer, th, iters, conv, kkt, gap


def solve_crdw(window, poly, epsilon, mu_min=1e-10, max_newton=5000):
    """Minimize the windowed Wishart negative log-likelihood over the
    precision V and hull weights theta.

    Constraints: sum_k theta_k G_k - V PSD with G_k the inflated vertex
    inverses (or their documented fallbacks), and the bordered PSD
    condition tying V to the slack-inflated mixture covariance. With no
    slack the watermark block of V is pinned analytically and only the
    residual block is optimized; a one-vertex polytope with no slack is
    fully closed-form.
    """
    epsilon = float(epsilon)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    S = window.S
    m, q = poly.m, poly.q
    if S.shape[0] != m + q:
        raise ValueError("window dimension does not match the polytope")
    if _chol_or_none(S) is None:
        raise NotPositiveDefinite("window second-moment matrix is singular")
    ell = window.ell
    d = poly.d
    bars = [np.asarray(b) for b in poly.sigma_bars]

    def finish(V, th, iters, conv, kkt):
        status = "Optimal" if conv and kkt <= 1e-6 else "MaxIter"
        return SolverResult(
            objective=wishart_nll(window, V),
            V_opt=symmetrize(V),
            theta_opt=Theta(th),
            kkt_residual=float(kkt),
            iterations=int(iters),
            status=status,
        )

    if epsilon == 0.0:
        Einv = _pd_inv(poly.watermark_cov)
        tops = [b[:m, :m] for b in bars]
        if Einv is None:
            # bordered condition needs a nonsingular mixture; unreachable
            # for a positive-definite watermark
            return SolverResult(np.inf, None, None, np.inf, 0, "Infeasible")
        if d == 1:
            Tinv = _pd_inv(tops[0])
            if Tinv is None:
                return SolverResult(np.inf, None, None, np.inf, 0, "Infeasible")
            V = np.zeros((m + q, m + q))
            V[:m, :m] = Tinv
            V[m:, m:] = Einv
            # both covariance bounds coincide, so V is forced; the
            # stationarity defect splits exactly into the two PSD duals
            res = SolverResult(
                objective=wishart_nll(window, V),
                V_opt=V,
                theta_opt=Theta([1.0]),
                kkt_residual=0.0,
                iterations=0,
                status="Optimal",
            )
            return res
        G_m = [_pd_inv(t) for t in tops]
        if any(g is None for g in G_m):
            G_m = [_pd_inv(v) for v in poly.vertices]
            if any(g is None for g in G_m):
                warnings.warn("upper covariance constraint dropped: "
                              "singular vertex covariance")
                G_m = None
        try:
            Vm, th, iters, conv, kkt = _scaled_barrier(
                S[:m, :m], tops, G_m, 0.0, ell, mu_min, max_newton)[:5]
        except NonConvergence:
            return SolverResult(np.inf, None, None, np.inf, 0, "Infeasible")
        V = np.zeros((m + q, m + q))
        V[:m, :m] = Vm
        V[m:, m:] = Einv
        return finish(V, th, iters, conv, kkt)

    G = [_pd_inv(b - epsilon * np.eye(m + q)) for b in bars]
    if any(g is None for g in G):
        zinv = [_pd_inv(v) for v in poly.vertices]
        Einv = _pd_inv(poly.watermark_cov)
        if Einv is not None and all(z is not None for z in zinv):
            G = []
            for z in zinv:
                g = np.zeros((m + q, m + q))
                g[:m, :m] = z
                g[m:, m:] = Einv
                G.append(g)
        else:
            warnings.warn("upper covariance constraint dropped: "
                          "singular vertex covariance")
            G = None
    try:
        V, th, iters, conv, kkt = _scaled_barrier(
            S, bars, G, epsilon, ell, mu_min, max_newton)[:5]
    except NonConvergence:
        return SolverResult(np.inf, None, None, np.inf, 0, "Infeasible")
    return finish(V, th, iters, conv, kkt)


def decide(statistic, nu, solver=None):
    """Reject when the statistic strictly exceeds the threshold."""
    return DetectionResult(
        statistic=float(statistic),
        threshold=float(nu),
        reject=bool(statistic > nu),
        solver=solver,
    )


def moment_diagnostics(records, burn_in):
    """Post-burn-in averages of residual outer products and of
    residual/lagged-watermark cross products, for convergence monitoring
    against the steady covariance and zero respectively."""
    if len(records) < 2 * burn_in:
        raise InsufficientData("need at least 2*burn_in records")
    rr = None
    re = None
    n_rr = 0
    n_re = 0
    for rec in records:
        if rec.step < burn_in:
            continue
        r = rec.residual
        rr = np.outer(r, r) if rr is None else rr + np.outer(r, r)
        n_rr += 1
        if rec.watermark_lagged is not None:
            cross = np.outer(r, rec.watermark_lagged)
            re = cross if re is None else re + cross
            n_re += 1
    if n_rr == 0 or n_re == 0:
        raise InsufficientData("no usable post-burn-in records")
    return rr / n_rr, re / n_re


def window_statistic(window, scenario):
    """Evaluate the scenario's configured statistic on one window."""
    kind = scenario.statistic
    model = scenario.model
    m, q = model.dims[1], model.dims[2]
    if kind == "DW":
        assumed = scenario.dw_assumed_meas_cov
        err = steady_residual_cov(model, assumed) - assumed
        return dw_statistic(window, err, assumed, model.watermark_cov, m, q), None
    if kind == "CRDW":
        res = solve_crdw(window, scenario.polytope, 0.0)
        return res.objective, res
    if kind == "CRDW*":
        res = solve_crdw(window, scenario.polytope, scenario.epsilon)
        return res.objective, res
    raise ValueError(f"unknown statistic kind {kind!r}")


CALIBRATION_SEED_OFFSET = 7919


def calibrate_threshold(scenario, theta_ref, ell, n_windows, a):
    """Empirical (1-a)-quantile of the statistic over disjoint unattacked
    windows at the reference mixture; the simulation runs on a seed offset
    from the scenario's so evaluation runs never reuse its draws."""
    if not 0.0 < a < 1.0:
        raise ValueError("quantile level must be in (0, 1)")
    if n_windows < 50:
        raise ValueError("need at least 50 calibration windows")
    model = scenario.model
    burn_in = max(int(getattr(scenario, "burn_in", 100)),
                  compute_kprime(model) + 2)
    sz = sigma_z_of_theta(scenario.polytope, theta_ref)
    n_steps = burn_in + n_windows * ell
    records = simulate(model, None, sz, n_steps,
                       scenario.seed + CALIBRATION_SEED_OFFSET)
    stats = []
    for j in range(n_windows):
        w = accumulate_window(records, burn_in - 1 + j * ell, ell)
        stats.append(window_statistic(w, scenario)[0])
    return float(np.quantile(np.array(stats), 1.0 - a))
