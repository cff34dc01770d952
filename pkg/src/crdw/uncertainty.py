"""Measurement-noise uncertainty sets, drift schedules, and slack bounds.

Admissible measurement-noise covariances form the convex hull of a small
set of vertex matrices. Each vertex induces a steady-state estimation
error covariance through a Lyapunov equation, and those images mix
linearly in the hull weights; the robust detector statistic is built on
that linearity.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AffineDependence,
    NonConvergence,
    NormNotContractive,
    NotPSDAtStep,
    NotSchurStable,
)
from .numerics import (
    check_symmetric,
    project_simplex,
    solve_discrete_lyapunov,
    spectral_norm,
    spectral_radius,
    symmetrize,
)


@dataclass
class Theta:
    """Convex weights over polytope vertices."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size < 1:
            raise ValueError("theta needs at least one entry")
        if float(w.min()) < -1e-12:
            raise ValueError(f"theta has negative entry {w.min():.3e}")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError(f"theta sums to {w.sum()!r}, not 1")
        self.weights = w

    @property
    def d(self):
        return self.weights.size


@dataclass
class NoisePolytope:
    """Vertex covariances with their precomputed steady-state images.

    Immutable after construction; the arrays are marked read-only so the
    object is safe to share across threads.
    """

    vertices: tuple
    sigma_delta_bars: tuple   # p x p steady estimation-error cov per vertex
    sigma_bars: tuple         # (m+q) x (m+q) block covariance per vertex
    watermark_cov: np.ndarray

    @property
    def d(self):
        return len(self.vertices)

    @property
    def m(self):
        return self.vertices[0].shape[0]

    @property
    def q(self):
        return self.watermark_cov.shape[0]


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def steady_residual_cov(model, meas_cov):
    """Stationary covariance of the observer residual under a fixed
    measurement-noise covariance: C S C' + meas_cov with S solving the
    closed observer Lyapunov equation."""
    F = model.A + model.L @ model.C
    Q = model.process_noise_cov + model.L @ symmetrize(meas_cov) @ model.L.T
    S = solve_discrete_lyapunov(F, Q)
    return model.C @ S @ model.C.T + symmetrize(meas_cov)


def build_polytope(vertices, model, tol=1e-10):
    p, m, q = model.dims
    if len(vertices) < 1:
        raise ValueError("polytope needs at least one vertex")
    verts = []
    for i, v in enumerate(vertices):
        v = symmetrize(np.asarray(v, dtype=float))
        if v.shape != (m, m):
            raise ValueError(f"vertex {i} has shape {v.shape}, expected {(m, m)}")
        scale = max(1.0, float(np.abs(v).max()))
        if float(np.linalg.eigvalsh(v).min()) < -tol * scale:
            raise ValueError(f"vertex {i} is not PSD")
        verts.append(v)

    d = len(verts)
    if d > 1:
        diffs = np.stack([(v - verts[0]).ravel() for v in verts[1:]])
        sv = np.linalg.svd(diffs, compute_uv=False)
        if sv.size < d - 1 or sv[-1] <= 1e-10 * max(sv[0], 1e-300):
            raise AffineDependence(
                f"{d} vertices span an affine set of dimension < {d - 1}")

    F = model.A + model.L @ model.C
    delta_bars = []
    bars = []
    for v in verts:
        Q = model.process_noise_cov + model.L @ v @ model.L.T
        Sd = solve_discrete_lyapunov(F, Q)
        top = model.C @ Sd @ model.C.T + v
        full = np.zeros((m + q, m + q))
        full[:m, :m] = top
        full[m:, m:] = model.watermark_cov
        delta_bars.append(_freeze(Sd))
        bars.append(_freeze(full))

    return NoisePolytope(
        vertices=tuple(_freeze(v) for v in verts),
        sigma_delta_bars=tuple(delta_bars),
        sigma_bars=tuple(bars),
        watermark_cov=_freeze(model.watermark_cov),
    )


def sigma_delta_of_theta(poly, theta):
    """Mixed steady estimation-error covariance sum_k theta_k S_k.

    Because the per-vertex Lyapunov equations are affine in the vertex,
    this equals the direct Lyapunov solution at the mixed measurement
    covariance; tests hold it to 1e-9.
    """
    w = theta.weights if isinstance(theta, Theta) else Theta(theta).weights
    if w.size != len(poly.sigma_delta_bars):
        raise ValueError("theta length does not match polytope")
    out = np.zeros_like(poly.sigma_delta_bars[0])
    for wk, Sk in zip(w, poly.sigma_delta_bars):
        out = out + wk * Sk
    return out


def sigma_bar_of_theta(poly, theta):
    w = theta.weights if isinstance(theta, Theta) else Theta(theta).weights
    if w.size != len(poly.sigma_bars):
        raise ValueError("theta length does not match polytope")
    out = np.zeros_like(poly.sigma_bars[0])
    for wk, Sk in zip(w, poly.sigma_bars):
        out = out + wk * Sk
    return out


def sigma_z_of_theta(poly, theta):
    w = theta.weights if isinstance(theta, Theta) else Theta(theta).weights
    out = np.zeros_like(poly.vertices[0])
    for wk, vk in zip(w, poly.vertices):
        out = out + wk * vk
    return out


def epsilon_bound(xi, model, norm="two_norm"):
    """Closed-form slack for a drifting measurement covariance when the
    observer map A+LC is a 2-norm contraction."""
    if norm != "two_norm":
        raise ValueError(f"unsupported norm {norm!r}")
    xi = float(xi)
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    s = spectral_norm(model.A + model.L @ model.C)
    if s >= 1.0:
        raise NormNotContractive(f"||A+LC||_2 = {s:.6f} >= 1")
    cn = spectral_norm(model.C)
    ln = spectral_norm(model.L)
    factor = (cn * cn) * (ln * ln) * (s * s) / (1.0 - s * s) ** 2
    # single multiply so the bound is exactly homogeneous in xi
    return xi * factor


def sigma_bar_drift_bound(xi, model, max_terms=100_000):
    """Slack valid for any Schur-stable observer, contractive or not.

    Bounds the spectral change of the steady block covariance per unit of
    measurement-covariance drift: the drift enters once directly and once
    filtered through the observer error dynamics, giving the factor
    1 + sum_k ||C M^k L||^2 with M = A+LC. The series is summed with a
    certified geometric tail (powers of M shrink by ||M^k0|| <= 1/2 every
    k0 steps), and the tail is added to keep the result an upper bound.
    """
    xi = float(xi)
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    M = model.A + model.L @ model.C
    if spectral_radius(M) >= 1.0:
        raise NotSchurStable("observer map A+LC is not Schur stable")

    k0 = 1
    P = M.copy()
    while spectral_norm(P) > 0.5:
        k0 += 1
        P = P @ M
        if k0 > max_terms:
            raise NonConvergence("no power of A+LC reached norm 1/2")
    c = spectral_norm(P)
    R = 1.0
    Mr = np.eye(M.shape[0])
    for _ in range(k0):
        R = max(R, spectral_norm(Mr))
        Mr = Mr @ M
    geom = R * R * k0 / (1.0 - c * c)   # >= sum_i ||M^i||^2

    partial = 0.0
    CM = model.C.copy()
    for _ in range(max_terms):
        t = spectral_norm(CM @ model.L) ** 2
        partial += t
        CM = CM @ M
        tail = spectral_norm(CM) ** 2 * spectral_norm(model.L) ** 2 * geom
        if tail <= 1e-16 * partial:
            break
    else:
        raise NonConvergence("drift-bound series did not converge")

    factor = 1.0 + (partial + tail)
    return xi * factor


@dataclass
class CovarianceSchedule:
    """Piecewise-linear measurement-covariance path, held constant past
    the last keyframe. Immutable after construction."""

    keyframes: tuple
    xi_declared: float = 0.0
    xi_realized: float = field(init=False, default=0.0)

    def __post_init__(self):
        if len(self.keyframes) < 1:
            raise ValueError("schedule needs at least one keyframe")
        frames = []
        last_step = -1
        m = None
        for stepno, cov in self.keyframes:
            stepno = int(stepno)
            if stepno <= last_step:
                raise ValueError("keyframe steps must be strictly increasing")
            last_step = stepno
            cov = symmetrize(np.asarray(cov, dtype=float))
            if m is None:
                m = cov.shape[0]
            if cov.shape != (m, m):
                raise ValueError("keyframe covariance shapes differ")
            frames.append((stepno, _freeze(cov)))
        self.keyframes = tuple(frames)
        self.xi_declared = float(self.xi_declared)

        xi = 0.0
        for (s0, c0), (s1, c1) in zip(frames, frames[1:]):
            xi = max(xi, spectral_norm((c1 - c0) / (s1 - s0)))
        self.xi_realized = xi

        for n in range(frames[-1][0] + 1):
            cov = self.cov_at(n)
            scale = max(1.0, float(np.abs(cov).max()))
            if float(np.linalg.eigvalsh(cov).min()) < -1e-10 * scale:
                raise NotPSDAtStep(f"interpolated covariance at step {n} is not PSD")

    @property
    def xi(self):
        """Effective drift bound: the larger of declared and realized."""
        return max(self.xi_declared, self.xi_realized)

    @property
    def horizon(self):
        return self.keyframes[-1][0]

    def cov_at(self, n):
        frames = self.keyframes
        if n <= frames[0][0]:
            return frames[0][1]
        if n >= frames[-1][0]:
            return frames[-1][1]
        for (s0, c0), (s1, c1) in zip(frames, frames[1:]):
            if s0 <= n <= s1:
                t = (n - s0) / (s1 - s0)
                return (1.0 - t) * c0 + t * c1
        raise AssertionError("unreachable")

    def stack(self, n_steps):
        return np.stack([self.cov_at(n) for n in range(n_steps)])


def schedule_from_keyframes(keyframes, xi=0.0):
    return CovarianceSchedule(keyframes=tuple(keyframes), xi_declared=xi)


def distance_to_polytope(poly, cov):
    """Nearest hull point to cov in Frobenius norm.

    Returns (theta, spectral distance of the residual). Solved exactly by
    enumerating support faces when d is small, projected gradient
    otherwise; membership tests treat distance <= 1e-8 as inside.
    """
    cov = symmetrize(np.asarray(cov, dtype=float))
    d = poly.d
    A = np.stack([v.ravel() for v in poly.vertices], axis=1)
    b = cov.ravel()

    if d <= 16:
        best = None
        for mask in range(1, 1 << d):
            idx = [k for k in range(d) if mask >> k & 1]
            As = A[:, idx]
            n_s = len(idx)
            # equality-constrained least squares on the support
            kkt = np.zeros((n_s + 1, n_s + 1))
            kkt[:n_s, :n_s] = 2.0 * As.T @ As
            kkt[:n_s, n_s] = 1.0
            kkt[n_s, :n_s] = 1.0
            rhs = np.concatenate([2.0 * As.T @ b, [1.0]])
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            ts = sol[:n_s]
            if float(ts.min()) < -1e-12:
                continue
            obj = float(np.sum((As @ ts - b) ** 2))
            if best is None or obj < best[0] - 1e-18:
                full = np.zeros(d)
                full[idx] = np.clip(ts, 0.0, None)
                full = full / full.sum()
                best = (obj, full)
        theta = best[1]
    else:
        theta = np.full(d, 1.0 / d)
        G = A.T @ A
        step = 1.0 / max(np.linalg.eigvalsh(G).max(), 1e-300)
        Ab = A.T @ b
        for _ in range(200_000):
            nxt = project_simplex(theta - step * (G @ theta - Ab))
            if float(np.abs(nxt - theta).max()) <= 1e-14:
                theta = nxt
                break
            theta = nxt

    resid = (A @ theta - b).reshape(cov.shape)
    return Theta(theta), spectral_norm(resid)
