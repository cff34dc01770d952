"""Dense symmetric-matrix utilities used by every other module.

Covers the discrete Lyapunov solve, cone projections, norms and
determinants, and seeded Gaussian sampling. Dimensions in this package
stay small (at most a few tens), so everything works on dense arrays and
favors robustness over asymptotic speed.
"""

import numpy as np

from .errors import NonConvergence, NotPositiveDefinite, NotPSD, NotSchurStable

SYM_TOL = 1e-12


def symmetrize(M):
    """Return the symmetric part of M.

    Public operations route their matrix outputs through here so results
    are symmetric to working precision regardless of BLAS kernel quirks.
    """
    M = np.asarray(M, dtype=float)
    return (M + M.T) / 2.0


def check_symmetric(M, tol=SYM_TOL):
    M = np.asarray(M, dtype=float)
    scale = max(1.0, float(np.abs(M).max()))
    return float(np.abs(M - M.T).max()) <= tol * scale


def spectral_radius(F):
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(F, dtype=float)))))


def spectral_norm(M):
    """Largest singular value of M."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.linalg.svd(M, compute_uv=False)[0])


def solve_discrete_lyapunov(F, Q, tol=1e-10, max_iter=10_000):
    """Solve P = F P F^T + Q for Schur-stable F and symmetric PSD Q.

    Fixed-point iteration with doubling: after j rounds the iterate equals
    the partial sum of F^k Q F^kT over k < 2^j, so convergence is
    geometric in the squared spectral radius. Terminates when the residual
    ||P - F P F^T - Q||_F drops below tol * max(1, ||Q||_F).

    Raises NotSchurStable when rho(F) >= 1 - 1e-9 and NonConvergence if
    the residual target is unmet after max_iter doubling rounds.
    """
    F = np.asarray(F, dtype=float)
    Q = symmetrize(Q)
    if spectral_radius(F) >= 1.0 - 1e-9:
        raise NotSchurStable(f"spectral radius {spectral_radius(F):.6f} >= 1 - 1e-9")
    target = tol * max(1.0, float(np.linalg.norm(Q)))
    P = Q.copy()
    Fk = F.copy()
    for _ in range(max_iter):
        P = P + Fk @ P @ Fk.T
        Fk = Fk @ Fk
        R = P - F @ P @ F.T - Q
        if float(np.linalg.norm(R)) <= target:
            return symmetrize(P)
    raise NonConvergence(f"Lyapunov residual above {target:.3e} after {max_iter} rounds")


def sym_eig(M):
    """Eigendecomposition of a symmetric matrix, ascending eigenvalues."""
    w, U = np.linalg.eigh(symmetrize(M))
    return w, U


def project_psd(M):
    """Nearest (Frobenius) positive semidefinite matrix: clip eigenvalues at 0."""
    w, U = sym_eig(M)
    w = np.clip(w, 0.0, None)
    return symmetrize((U * w) @ U.T)


def psd_sqrt(cov, tol=1e-10):
    """Symmetric PSD square root, tolerating round-off negative eigenvalues.

    Raises NotPSD when the smallest eigenvalue is below -tol * ||cov||_2.
    """
    cov = symmetrize(cov)
    w, U = sym_eig(cov)
    floor = -tol * max(float(np.max(np.abs(w))), 0.0)
    if float(np.min(w)) < floor:
        raise NotPSD(f"min eigenvalue {np.min(w):.3e} below {floor:.3e}")
    w = np.clip(w, 0.0, None)
    return symmetrize((U * np.sqrt(w)) @ U.T)


def logdet_chol(M):
    """log det of a symmetric positive definite matrix via Cholesky."""
    M = symmetrize(M)
    try:
        Lc = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    return 2.0 * float(np.sum(np.log(np.diag(Lc))))


def project_simplex(v):
    """Euclidean projection of v onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = int(np.nonzero(cond)[0][-1])
    tau = css[rho] / (rho + 1.0)
    return np.clip(v - tau, 0.0, None)


class RngStream:
    """Counter-based seeded Gaussian stream.

    Same (seed, stream) and the same call sequence reproduce the same
    samples bit-for-bit on one platform. Single-owner mutable state; give
    each concurrent trajectory its own stream.
    """

    def __init__(self, seed, stream=0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.count = 0
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def standard_normal(self, shape):
        out = self._gen.standard_normal(shape)
        self.count += int(np.prod(np.atleast_1d(shape)))
        return out


def sample_gaussian(rng, cov):
    """One draw from N(0, cov); cov may be PSD-singular."""
    cov = np.asarray(cov, dtype=float)
    root = psd_sqrt(cov)
    return root @ rng.standard_normal(cov.shape[0])
