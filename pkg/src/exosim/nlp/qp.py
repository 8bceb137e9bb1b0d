"""Dense convex QP subproblems solved with the Goldfarb-Idnani dual active-set
method (``quadprog``).

Problem::

    min 1/2 d'Hd + g'd   s.t.  A_eq d = b_eq,  in_lo <= A_in d <= in_hi,  lo <= d <= hi

Multipliers follow ``H d + g = A_eq' lam + A_in' mu + nu``: a positive
``mu``/``nu`` entry marks an active lower side, a negative one an active
upper side.
"""
from dataclasses import dataclass

import numpy as np
import quadprog

MIN_EIG = 1e-8
ELASTIC_PENALTY = 1e4
SLACK_REG = 1e-8


class QpError(RuntimeError):
    """QP could not be solved even in elastic mode."""


@dataclass
class QpResult:
    step: np.ndarray
    lam_eq: np.ndarray
    mu_in: np.ndarray
    nu_bounds: np.ndarray
    elastic: bool = False


def regularize(H, min_eig=MIN_EIG):
    """Symmetrized ``H`` shifted so its smallest eigenvalue is at least ``min_eig``."""
    H = 0.5 * (np.asarray(H, dtype=float) + np.asarray(H, dtype=float).T)
    if H.shape[0] == 0:
        return H
    lo = np.linalg.eigvalsh(H)[0]
    if lo < min_eig:
        H = H + (min_eig - lo) * np.eye(H.shape[0])
    return H


def _dense(A, n):
    if A is None:
        return np.zeros((0, n))
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    return A.reshape(-1, n)


def _stack(n, A_eq, b_eq, A_in, in_lo, in_hi, lo, hi):
    """quadprog form ``C' x >= b`` with the first ``meq`` rows equalities.

    Returns ``C, b, meq`` and a list mapping each inequality column to
    ``(kind, index, side)``.
    """
    cols, rhs, tags = [], [], []
    for k in range(A_eq.shape[0]):
        cols.append(A_eq[k])
        rhs.append(b_eq[k])
    meq = len(cols)
    for k in range(A_in.shape[0]):
        if np.isfinite(in_lo[k]):
            cols.append(A_in[k]); rhs.append(in_lo[k]); tags.append(("in", k, 1.0))
        if np.isfinite(in_hi[k]):
            cols.append(-A_in[k]); rhs.append(-in_hi[k]); tags.append(("in", k, -1.0))
    eye = np.eye(n)
    for k in range(n):
        if np.isfinite(lo[k]):
            cols.append(eye[k]); rhs.append(lo[k]); tags.append(("b", k, 1.0))
        if np.isfinite(hi[k]):
            cols.append(-eye[k]); rhs.append(-hi[k]); tags.append(("b", k, -1.0))
    C = np.array(cols, dtype=float).reshape(-1, n).T
    return C, np.array(rhs, dtype=float), meq, tags


def _solve_qp_core(H, g, A_eq, b_eq, A_in, in_lo, in_hi, lo, hi):
    n = H.shape[0]
    C, b, meq, tags = _stack(n, A_eq, b_eq, A_in, in_lo, in_hi, lo, hi)
    if C.shape[1] == 0:
        x = np.linalg.solve(H, -g)
        return x, np.zeros(0), np.zeros(A_in.shape[0]), np.zeros(n)
    x, _, _, _, lag, _ = quadprog.solve_qp(H, -g, C, b, meq)
    lam = lag[:meq].copy()
    mu = np.zeros(A_in.shape[0])
    nu = np.zeros(n)
    for (kind, k, side), val in zip(tags, lag[meq:]):
        if kind == "in":
            mu[k] += side * val
        else:
            nu[k] += side * val
    return x, lam, mu, nu


def _drop_zero_rows(A, *vecs):
    keep = np.any(A != 0.0, axis=1)
    return keep, A[keep], [v[keep] for v in vecs]


def qp_solve(H, g, A_eq=None, b_eq=None, A_in=None, in_lo=None, in_hi=None, bounds=None,
             elastic=True):
    """Solve the QP; on an inconsistent linearization retry in elastic mode.

    ``bounds`` is ``(lo, hi)`` on the step; entries with ``lo == hi`` are
    eliminated before the solve.
    """
    g = np.asarray(g, dtype=float).ravel()
    n = g.size
    H = regularize(np.asarray(H, dtype=float).reshape(n, n))
    A_eq = _dense(A_eq, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    A_in = _dense(A_in, n)
    m_in = A_in.shape[0]
    in_lo = np.full(m_in, -np.inf) if in_lo is None else np.asarray(in_lo, dtype=float).ravel()
    in_hi = np.full(m_in, np.inf) if in_hi is None else np.asarray(in_hi, dtype=float).ravel()
    if bounds is None:
        lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
    else:
        lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), (n,)).copy()
    if np.any(lo > hi) or np.any(in_lo > in_hi):
        raise QpError("QP has crossing bounds")

    fixed = lo == hi
    free = ~fixed
    d_fixed = np.where(fixed, lo, 0.0)
    # eliminate fixed components
    Hf = H[np.ix_(free, free)]
    gf = g[free] + H[np.ix_(free, fixed)] @ d_fixed[fixed]
    beq = b_eq - A_eq[:, fixed] @ d_fixed[fixed]
    shift_in = A_in[:, fixed] @ d_fixed[fixed]
    keep_eq, Aeq_f, (beq_f,) = _drop_zero_rows(A_eq[:, free], beq)
    keep_in, Ain_f, (ilo_f, ihi_f) = _drop_zero_rows(A_in[:, free], in_lo - shift_in,
                                                     in_hi - shift_in)
    dropped_eq = ~keep_eq
    dropped_in = ~keep_in
    elastic_used = False
    if (np.any(np.abs(beq[dropped_eq]) > 0) or np.any(in_lo[dropped_in] - shift_in[dropped_in] > 0)
            or np.any(in_hi[dropped_in] - shift_in[dropped_in] < 0)):
        inconsistent = True
    else:
        inconsistent = False
    try:
        if inconsistent:
            raise ValueError("constraint rows without free variables are violated")
        x, lam_f, mu_f, nu_f = _solve_qp_core(Hf, gf, Aeq_f, beq_f, Ain_f, ilo_f, ihi_f,
                                              lo[free], hi[free])
    except ValueError:
        if not elastic:
            raise QpError("inconsistent QP constraints")
        elastic_used = True
        x, lam_f, mu_f, nu_f = _elastic(Hf, gf, Aeq_f, beq_f, Ain_f, ilo_f, ihi_f,
                                        lo[free], hi[free])

    d = d_fixed.copy()
    d[free] = x
    lam = np.zeros(A_eq.shape[0])
    lam[keep_eq] = lam_f
    mu = np.zeros(m_in)
    mu[keep_in] = mu_f
    nu = np.zeros(n)
    nu[free] = nu_f
    # multipliers of fixed components from stationarity
    r = H @ d + g - A_eq.T @ lam - A_in.T @ mu
    nu[fixed] = r[fixed]
    return QpResult(d, lam, mu, nu, elastic_used)


def _elastic(H, g, A_eq, b_eq, A_in, in_lo, in_hi, lo, hi):
    """Slack-relaxed QP: every linearized constraint may be violated at an
    L1 price of ``ELASTIC_PENALTY``; variable bounds stay hard."""
    n = H.shape[0]
    me = A_eq.shape[0]
    mi = A_in.shape[0]
    ns = 2 * me + 2 * mi
    N = n + ns
    HH = np.zeros((N, N))
    HH[:n, :n] = H
    HH[n:, n:] = SLACK_REG * np.eye(ns)
    gg = np.concatenate([g, np.full(ns, ELASTIC_PENALTY)])
    # A d + s+ - s- = b
    Ae = np.zeros((me, N))
    Ae[:, :n] = A_eq
    Ae[:, n:n + me] = np.eye(me)
    Ae[:, n + me:n + 2 * me] = -np.eye(me)
    # lo <= A d + t_lo ;  A d - t_hi <= hi
    o = n + 2 * me
    Ai = np.zeros((2 * mi, N))
    Ai[:mi, :n] = A_in
    Ai[:mi, o:o + mi] = np.eye(mi)
    Ai[mi:, :n] = A_in
    Ai[mi:, o + mi:o + 2 * mi] = -np.eye(mi)
    ilo = np.concatenate([in_lo, np.full(mi, -np.inf)])
    ihi = np.concatenate([np.full(mi, np.inf), in_hi])
    blo = np.concatenate([lo, np.zeros(ns)])
    bhi = np.concatenate([hi, np.full(ns, np.inf)])
    try:
        x, lam, mu2, nu = _solve_qp_core(HH, gg, Ae, b_eq, Ai, ilo, ihi, blo, bhi)
    except ValueError as exc:
        raise QpError(f"elastic QP failed: {exc}") from exc
    return x[:n], lam, mu2[:mi] + mu2[mi:], nu[:n]
