"""Pure-python reference kernels.

Same contracts as the compiled extension: a trajectory loop over
pre-drawn noise and the interior-point solve for the robust statistic.
The solver is a primal path-following method with log-det barriers; all
inputs are expected pre-scaled to O(1) by the caller.
"""

import numpy as np

from ..errors import NonConvergence


def sim_loop(A, B, C, K, L, W, Z, E, Zeta, Omega, alpha, eta0):
    n = W.shape[0]
    p = A.shape[0]
    m = C.shape[0]
    q = B.shape[1]
    Acl = A + B @ K
    attacked = Zeta is not None
    x = np.zeros(p)
    xh = np.zeros(p)
    eta = eta0.copy()
    Y = np.empty((n, m))
    U = np.empty((n, q))
    RES = np.empty((n, m))
    for i in range(n):
        z = Z[i]
        if attacked:
            v = alpha * (C @ x + z) + C @ eta + Zeta[i]
            eta = Acl @ eta + Omega[i]
            y = C @ x + z + v
        else:
            y = C @ x + z
        u = K @ xh + E[i]
        r = C @ xh - y
        Y[i] = y
        U[i] = u
        RES[i] = r
        xnew = A @ x + B @ u + W[i]
        xh = A @ xh + B @ u + L @ r
        x = xnew
    return Y, U, RES


def _svec_isometry(nn):
    """Columns map an orthonormal basis of Sym(nn) into vec space."""
    nv = nn * (nn + 1) // 2
    Qiso = np.zeros((nn * nn, nv))
    col = 0
    for i in range(nn):
        Eij = np.zeros((nn, nn))
        Eij[i, i] = 1.0
        Qiso[:, col] = Eij.ravel()
        col += 1
    s = 1.0 / np.sqrt(2.0)
    for i in range(nn):
        for j in range(i + 1, nn):
            Eij = np.zeros((nn, nn))
            Eij[i, j] = s
            Eij[j, i] = s
            Qiso[:, col] = Eij.ravel()
            col += 1
    return Qiso


def _chol_ok(M):
    try:
        np.linalg.cholesky(M)
        return True
    except np.linalg.LinAlgError:
        return False


def crdw_barrier(S, bars, G, eps_diag, ell, mu_min=1e-10, max_newton=5000):
    """Minimize tr(V S) - ell*logdet(V) over symmetric V and simplex theta.

    Constraints: sum_k theta_k G[k] - V PSD (skipped when G is None) and
    the block LMI [[V, I], [I, sum_k theta_k bars[k] + diag(eps_diag)]]
    PSD. Returns (V, theta, newton_steps, converged, kkt_residual,
    duality_gap) where kkt_residual is the final Newton decrement (the
    stationarity residual in the barrier's curvature metric) and the gap
    is mu_min times the total barrier complexity.
    """
    bars = np.asarray(bars, dtype=float)
    d, nn, _ = bars.shape
    has_G = G is not None
    if has_G:
        G = np.asarray(G, dtype=float)
    Epsd = np.diag(eps_diag)
    In = np.eye(nn)
    Qiso = _svec_isometry(nn)
    nv = Qiso.shape[1]
    ntot = nv + d
    nu_total = nn * (3 if has_G else 2) + d

    def lmi_blocks(V, th):
        Hth = np.einsum("k,kij->ij", th, bars) + Epsd
        A1 = (np.einsum("k,kij->ij", th, G) - V) if has_G else None
        A2 = np.block([[V, In], [In, Hth]])
        return A1, A2

    def feasible(V, th):
        if np.any(th <= 0.0):
            return False
        A1, A2 = lmi_blocks(V, th)
        if has_G and not _chol_ok(A1):
            return False
        return _chol_ok(A2) and _chol_ok(V)

    # strictly feasible start: midpoint of the constraint interval at the
    # centroid, backing off toward the lower end if the midpoint fails
    th = np.ones(d) / d
    Hth0 = np.einsum("k,kij->ij", th, bars) + Epsd
    Lo = np.linalg.inv(Hth0)
    if has_G:
        Up = np.einsum("k,kij->ij", th, G)
        V = None
        for t in (0.5, 0.25, 0.1, 0.02, 0.75):
            cand = Lo + t * (Up - Lo)
            if feasible(cand, th):
                V = cand
                break
        if V is None:
            raise NonConvergence("no strictly feasible interior start")
    else:
        V = 1.5 * Lo
        if not feasible(V, th):
            raise NonConvergence("no strictly feasible interior start")

    def phi(V, th, mu):
        if np.any(th <= 0.0):
            return np.inf
        A1, A2 = lmi_blocks(V, th)
        sv, lv = np.linalg.slogdet(V)
        s2, l2 = np.linalg.slogdet(A2)
        if sv <= 0 or s2 <= 0:
            return np.inf
        val = float(np.sum(V * S)) - ell * lv - mu * (l2 + float(np.sum(np.log(th))))
        if has_G:
            s1, l1 = np.linalg.slogdet(A1)
            if s1 <= 0:
                return np.inf
            val -= mu * l1
        return val

    mu = 10.0
    total = 0
    lam2 = np.inf
    a_eq = np.concatenate([np.zeros(nv), np.ones(d)])
    lam_eq = 0.0
    while True:
        for _ in range(100):
            if total >= max_newton:
                break
            A1, A2 = lmi_blocks(V, th)
            Vi = np.linalg.inv(V)
            Wf = np.linalg.inv(A2)
            W11 = Wf[:nn, :nn]
            W12 = Wf[:nn, nn:]
            W22 = Wf[nn:, nn:]
            gV = S - ell * Vi - mu * W11
            gth = np.array([-mu * float(np.sum(W22 * bars[k])) - mu / th[k]
                            for k in range(d)])
            # Hessian blocks via the symmetric-Kronecker isometry
            HVV = ell * (Qiso.T @ np.kron(Vi, Vi) @ Qiso) \
                + mu * (Qiso.T @ np.kron(W11, W11) @ Qiso)
            HVt = np.empty((nv, d))
            for k in range(d):
                M12 = W12 @ bars[k] @ W12.T
                HVt[:, k] = mu * (Qiso.T @ M12.ravel())
            Htt = np.empty((d, d))
            for k in range(d):
                WB = W22 @ bars[k] @ W22
                for kk in range(k, d):
                    Htt[k, kk] = Htt[kk, k] = mu * float(np.sum(WB * bars[kk]))
            if has_G:
                A1i = np.linalg.inv(A1)
                gV = gV + mu * A1i
                HVV += mu * (Qiso.T @ np.kron(A1i, A1i) @ Qiso)
                AGA = [A1i @ G[k] @ A1i for k in range(d)]
                for k in range(d):
                    gth[k] -= mu * float(np.sum(A1i * G[k]))
                    HVt[:, k] -= mu * (Qiso.T @ AGA[k].ravel())
                for k in range(d):
                    for kk in range(k, d):
                        add = mu * float(np.sum(AGA[k] * G[kk]))
                        Htt[k, kk] += add
                        if kk != k:
                            Htt[kk, k] += add
            Htt[np.diag_indices(d)] += mu / th**2
            grad = np.concatenate([Qiso.T @ gV.ravel(), gth])
            Hm = np.zeros((ntot, ntot))
            Hm[:nv, :nv] = HVV
            Hm[:nv, nv:] = HVt
            Hm[nv:, :nv] = HVt.T
            Hm[nv:, nv:] = Htt
            KKT = np.zeros((ntot + 1, ntot + 1))
            KKT[:ntot, :ntot] = Hm
            KKT[:ntot, ntot] = a_eq
            KKT[ntot, :ntot] = a_eq
            rhs = np.concatenate([-grad, [0.0]])
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(KKT, rhs, rcond=None)[0]
            dx = sol[:ntot]
            lam_eq = float(sol[ntot])
            lam2 = float(-grad @ dx)
            dV = (Qiso @ dx[:nv]).reshape(nn, nn)
            dth = dx[nv:]
            t = 1.0
            accepted = False
            # inside the quadratic-convergence region the full step is safe
            # by self-concordance, and the sufficient-decrease test below
            # can stall against float64 resolution when the objective is
            # large, so skip the test there
            if lam2 < 0.01 and feasible(V + dV, th + dth):
                accepted = True
            else:
                ph0 = phi(V, th, mu)
                for _ in range(60):
                    Vn = V + t * dV
                    thn = th + t * dth
                    if feasible(Vn, thn) and phi(Vn, thn, mu) <= ph0 - 0.25 * t * max(lam2, 0.0):
                        accepted = True
                        break
                    t *= 0.5
            if not accepted:
                break
            V = V + t * dV
            th = th + t * dth
            total += 1
            if lam2 / 2.0 < 1e-13 + mu * 1e-7:
                break
        if mu <= mu_min or total >= max_newton:
            break
        mu = max(mu * 0.12, mu_min)

    converged = bool(mu <= mu_min and lam2 / 2.0 < 1e-13 + mu * 1e-7)
    # Certificate: the Newton decrement at the final barrier stage is the
    # KKT stationarity residual measured in the local curvature metric.
    # Active-constraint curvature grows like 1/mu, so a raw Frobenius
    # gradient norm is meaningless here; the decrement bounds suboptimality
    # through self-concordance (gap <= mu*(nu + lam*sqrt(nu)) for lam < 1).
    kkt_stat = float(np.sqrt(max(lam2, 0.0))) if np.isfinite(lam2) else np.inf
    gap = mu * nu_total
    # linear-solve roundoff lets theta drift off the simplex by ~1e-9
    th = np.clip(th, 0.0, None)
    th = th / th.sum()
    return V, th, total, converged, kkt_stat, gap
