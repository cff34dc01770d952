"""Watermarked closed-loop LTI simulation.

The plant runs x' = Ax + Bu + w with output y = Cx + z, a Luenberger
observer driven by the same input, feedback u = K xhat + e where e is the
private watermark, and an optional sensor attack that replaces the
measurement channel. Per-step measurement-noise covariance comes from a
schedule so slowly drifting noise is representable.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NoInputCoupling, NotSchurStable
from .numerics import RngStream, check_symmetric, psd_sqrt, spectral_radius, symmetrize


@dataclass
class SystemModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    K: np.ndarray
    L: np.ndarray
    process_noise_cov: np.ndarray
    watermark_cov: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.K = np.atleast_2d(np.asarray(self.K, dtype=float))
        self.L = np.atleast_2d(np.asarray(self.L, dtype=float))
        self.process_noise_cov = symmetrize(self.process_noise_cov)
        self.watermark_cov = symmetrize(self.watermark_cov)
        p, m, q = self.dims
        if self.A.shape != (p, p) or self.B.shape != (p, q) or self.C.shape != (m, p):
            raise ValueError("inconsistent A/B/C dimensions")
        if self.K.shape != (q, p) or self.L.shape != (p, m):
            raise ValueError("gain dimensions do not match A/B/C")
        if self.process_noise_cov.shape != (p, p) or self.watermark_cov.shape != (q, q):
            raise ValueError("noise covariance dimensions do not match")
        for covname in ("process_noise_cov", "watermark_cov"):
            cov = getattr(self, covname)
            if not check_symmetric(cov) or np.min(np.linalg.eigvalsh(cov)) < -1e-10:
                raise ValueError(f"{covname} must be symmetric PSD")
        rho_ctrl = spectral_radius(self.A + self.B @ self.K)
        if rho_ctrl >= 1.0:
            raise NotSchurStable(f"rho(A+BK) = {rho_ctrl:.6f} >= 1")
        rho_obs = spectral_radius(self.A + self.L @ self.C)
        if rho_obs >= 1.0:
            raise NotSchurStable(f"rho(A+LC) = {rho_obs:.6f} >= 1")

    @property
    def dims(self):
        p = self.A.shape[0]
        m = self.C.shape[0]
        q = self.B.shape[1]
        return p, m, q


@dataclass
class AttackSpec:
    alpha: float
    state_noise_cov: np.ndarray   # covariance of the attacker recursion noise
    output_noise_cov: np.ndarray  # covariance of the additive channel noise
    eta0: np.ndarray

    def __post_init__(self):
        self.alpha = float(self.alpha)
        self.state_noise_cov = symmetrize(self.state_noise_cov)
        self.output_noise_cov = symmetrize(self.output_noise_cov)
        self.eta0 = np.asarray(self.eta0, dtype=float).ravel()
        for covname in ("state_noise_cov", "output_noise_cov"):
            cov = getattr(self, covname)
            if np.min(np.linalg.eigvalsh(cov)) < -1e-10:
                raise ValueError(f"{covname} must be PSD")


@dataclass
class SimState:
    x: np.ndarray
    xhat: np.ndarray
    eta: np.ndarray
    step: int
    watermark_history: deque = field(default_factory=deque)


@dataclass
class StepRecord:
    step: int
    y: np.ndarray
    u: np.ndarray
    residual: np.ndarray
    watermark_lagged: np.ndarray  # None before step kprime+1
    psi: np.ndarray               # None before step kprime+1


def compute_kprime(model, tol=1e-10):
    """Smallest k >= 1 with C (A+BK)^k B nonzero; the watermark's output lag.

    The search stops at k = p: by Cayley-Hamilton a coupling that has not
    appeared by then never will.
    """
    p = model.dims[0]
    Acl = model.A + model.B @ model.K
    G = model.C @ Acl
    for k in range(1, p + 1):
        if float(np.abs(G @ model.B).max()) > tol:
            return k
        G = G @ Acl
    raise NoInputCoupling(f"C (A+BK)^k B vanishes for every k <= {p}")


def initial_state(model, attack=None, kprime=None):
    p, m, q = model.dims
    if kprime is None:
        kprime = compute_kprime(model)
    eta = np.zeros(p) if attack is None else np.array(attack.eta0, dtype=float)
    return SimState(
        x=np.zeros(p),
        xhat=np.zeros(p),
        eta=eta,
        step=0,
        watermark_history=deque(maxlen=kprime + 2),
    )


def step(state, model, attack, meas_cov_now, rng, attack_rng=None, kprime=None):
    """Advance one step, drawing w, z, e (and attacker noise) from the streams.

    Draw order is fixed: w, z, e on the plant stream, then zeta, omega on
    the attack stream. The lagged watermark and psi appear once enough
    history exists (step >= kprime+1).
    """
    p, m, q = model.dims
    if kprime is None:
        kprime = state.watermark_history.maxlen - 2
    w = psd_sqrt(model.process_noise_cov) @ rng.standard_normal(p)
    z = psd_sqrt(meas_cov_now) @ rng.standard_normal(m)
    e = psd_sqrt(model.watermark_cov) @ rng.standard_normal(q)
    state.watermark_history.append(e)

    if attack is not None:
        if attack_rng is None:
            raise ValueError("attacked step needs its own noise stream")
        zeta = psd_sqrt(attack.output_noise_cov) @ attack_rng.standard_normal(m)
        omega = psd_sqrt(attack.state_noise_cov) @ attack_rng.standard_normal(p)
        v = attack.alpha * (model.C @ state.x + z) + model.C @ state.eta + zeta
        eta_next = (model.A + model.B @ model.K) @ state.eta + omega
    else:
        v = np.zeros(m)
        eta_next = state.eta

    y = model.C @ state.x + z + v
    u = model.K @ state.xhat + e
    residual = model.C @ state.xhat - y

    x_next = model.A @ state.x + model.B @ u + w
    xhat_next = model.A @ state.xhat + model.B @ u + model.L @ residual

    if len(state.watermark_history) == kprime + 2:
        lagged = state.watermark_history[0]
        psi = np.concatenate([residual, lagged])
    else:
        lagged = None
        psi = None

    record = StepRecord(step=state.step, y=y, u=u, residual=residual,
                        watermark_lagged=lagged, psi=psi)
    next_state = SimState(x=x_next, xhat=xhat_next, eta=eta_next,
                          step=state.step + 1,
                          watermark_history=state.watermark_history)
    return next_state, record


def _noise_blocks(model, schedule_covs, n_steps, seed, attack):
    """Pre-draw and pre-scale every noise sequence for a whole trajectory.

    One batched standard-normal call per stream consumes the generator
    exactly like per-step sequential draws would, so the per-step API and
    this batched path see the same underlying variates.
    """
    p, m, q = model.dims
    main = RngStream(seed, 0)
    std = main.standard_normal((n_steps, p + m + q))
    Fw = psd_sqrt(model.process_noise_cov)
    Fe = psd_sqrt(model.watermark_cov)
    W = std[:, :p] @ Fw.T
    E = std[:, p + m:] @ Fe.T
    zstd = std[:, p:p + m]
    if schedule_covs.ndim == 2:
        Z = zstd @ psd_sqrt(schedule_covs).T
    else:
        # eigh over the stacked per-step covariances, clip, batch-scale
        wv, Uv = np.linalg.eigh(schedule_covs)
        roots = np.einsum("nij,nj,nkj->nik", Uv, np.sqrt(np.clip(wv, 0.0, None)), Uv)
        Z = np.einsum("nij,nj->ni", roots, zstd)
    if attack is not None:
        atk = RngStream(seed, 1)
        astd = atk.standard_normal((n_steps, m + p))
        Zeta = astd[:, :m] @ psd_sqrt(attack.output_noise_cov).T
        Omega = astd[:, m:] @ psd_sqrt(attack.state_noise_cov).T
    else:
        Zeta = Omega = None
    return W, Z, E, Zeta, Omega


def simulate(model, attack, schedule_covs, n_steps, seed):
    """Run a full trajectory and return one StepRecord per step.

    schedule_covs: a single m x m covariance (held constant), an
    (n_steps, m, m) stack, or any object with a .stack(n_steps) method
    giving the measurement-noise covariance at each step. Deterministic
    given the seed; attacked and unattacked runs with
    the same seed share identical plant-noise and watermark draws because
    attacker noise lives on its own stream.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    p, m, q = model.dims
    kprime = compute_kprime(model)
    if hasattr(schedule_covs, "stack"):
        schedule_covs = schedule_covs.stack(n_steps)
    schedule_covs = np.asarray(schedule_covs, dtype=float)
    W, Z, E, Zeta, Omega = _noise_blocks(model, schedule_covs, n_steps, seed, attack)
    alpha = attack.alpha if attack is not None else 0.0
    eta0 = attack.eta0 if attack is not None else np.zeros(p)
    Y, U, RES = kernels.sim_loop(
        model.A, model.B, model.C, model.K, model.L,
        W, Z, E, Zeta, Omega, float(alpha), np.asarray(eta0, dtype=float),
    )
    records = []
    for n in range(n_steps):
        if n >= kprime + 1:
            lagged = E[n - kprime - 1]
            psi = np.concatenate([RES[n], lagged])
        else:
            lagged = None
            psi = None
        records.append(StepRecord(step=n, y=Y[n], u=U[n], residual=RES[n],
                                  watermark_lagged=lagged, psi=psi))
    return records
