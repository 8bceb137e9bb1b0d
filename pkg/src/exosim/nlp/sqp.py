"""Line-search SQP with damped BFGS and an L1 exact-penalty merit function.

An NLP is any object exposing ``n``, ``lower``/``upper`` variable bounds,
``n_eq``, ``n_in``, ``in_lower``/``in_upper``, ``objective(z)``,
``constraints(z) -> (c_eq, c_in)`` and ``derivatives(z) -> (grad, J_eq,
J_in)``. :class:`FunctionNlp` wraps plain callables in that interface.
"""
import sys
from dataclasses import dataclass, field

import numpy as np

from .qp import QpError, qp_solve

ARMIJO = 1e-4
BACKTRACK = 0.5
MIN_STEP = 1e-10
PENALTY_FACTOR = 1.1
DAMPING = 0.2
STEP_FLOOR = 1e-10
COND_FLOOR = 1e-6
INIT_RIDGE = 1e-2
EVAL_ERRORS = (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class SolverSettings:
    kkt_tol: float = 1e-6
    constraint_tol: float = 1e-8
    max_iterations: int = 200
    hessian: str = "bfgs"  # "bfgs" | "gauss-newton"
    backtrack: float = BACKTRACK
    min_step: float = MIN_STEP
    second_order_correction: bool = True
    verbose: bool = False

    def __post_init__(self):
        if not (self.kkt_tol > 0 and self.constraint_tol > 0):
            raise ValueError("solver tolerances must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if self.hessian not in ("bfgs", "gauss-newton"):
            raise ValueError(f"unknown Hessian approximation {self.hessian!r}")
        if not (0 < self.backtrack < 1 and self.min_step > 0):
            raise ValueError("line search needs 0 < backtrack < 1 and min_step > 0")


@dataclass
class NlpSolution:
    point: np.ndarray
    multipliers: dict
    kkt_residual: float
    iterations: int
    status: str  # converged | max_iter | line_search_failure | qp_failure
    cost: float = np.nan
    constraint_violation: float = np.nan
    clipped_start: bool = False
    merit_history: list = field(default_factory=list)  # (before, after) per accepted step

    @property
    def converged(self):
        return self.status == "converged"


class FunctionNlp:
    """NLP from callables; derivatives default to forward differences."""

    def __init__(self, n, objective, eq=None, ineq=None, lower=None, upper=None,
                 in_lower=None, in_upper=None, gradient=None, eq_jacobian=None,
                 ineq_jacobian=None, n_eq=0, n_in=0):
        self.n = int(n)
        self._f = objective
        self._ceq = eq or (lambda z: np.zeros(0))
        self._cin = ineq or (lambda z: np.zeros(0))
        self.n_eq = int(n_eq)
        self.n_in = int(n_in)
        self.lower = np.full(self.n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
        self.upper = np.full(self.n, np.inf) if upper is None else np.asarray(upper, dtype=float)
        self.in_lower = (np.full(self.n_in, -np.inf) if in_lower is None
                         else np.asarray(in_lower, dtype=float))
        self.in_upper = (np.full(self.n_in, np.inf) if in_upper is None
                         else np.asarray(in_upper, dtype=float))
        self._grad = gradient
        self._jeq = eq_jacobian
        self._jin = ineq_jacobian

    def objective(self, z):
        return float(self._f(z))

    def constraints(self, z):
        return (np.asarray(self._ceq(z), dtype=float).reshape(self.n_eq),
                np.asarray(self._cin(z), dtype=float).reshape(self.n_in))

    def _fd(self, fn, z):
        base = np.atleast_1d(np.asarray(fn(z), dtype=float))
        out = np.empty((base.size, self.n))
        for k in range(self.n):
            h = max(1e-6, 1e-6 * abs(z[k]))
            zp = z.copy()
            zp[k] += h
            out[:, k] = (np.atleast_1d(fn(zp)) - base) / h
        return out

    def derivatives(self, z):
        z = np.asarray(z, dtype=float)
        g = self._grad(z) if self._grad else self._fd(self._f, z)[0]
        Jeq = self._jeq(z) if self._jeq else self._fd(lambda v: self.constraints(v)[0], z)
        Jin = self._jin(z) if self._jin else self._fd(lambda v: self.constraints(v)[1], z)
        return (np.asarray(g, dtype=float).ravel(), np.asarray(Jeq, dtype=float).reshape(self.n_eq, self.n),
                np.asarray(Jin, dtype=float).reshape(self.n_in, self.n))


# -- residual measures -------------------------------------------------------

def _dense(A, n):
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    return A.reshape(-1, n)


def _side_terms(val, lo, hi, mult):
    """Bound violation and complementarity for ``lo <= val <= hi`` with the
    signed multiplier convention (positive = lower side)."""
    viol = np.maximum(lo - val, 0.0) + np.maximum(val - hi, 0.0)
    plus = np.maximum(mult, 0.0)
    minus = np.maximum(-mult, 0.0)
    with np.errstate(invalid="ignore"):
        gap_lo = np.where(np.isfinite(lo), val - lo, np.inf)
        gap_hi = np.where(np.isfinite(hi), hi - val, np.inf)
    comp = np.maximum(np.abs(np.minimum(plus, gap_lo)), np.abs(np.minimum(minus, gap_hi)))
    return viol, comp


def constraint_violation(nlp, z, ceq=None, cin=None):
    """Max violation of equalities, inequalities and variable bounds."""
    if ceq is None:
        ceq, cin = nlp.constraints(z)
    parts = [np.abs(ceq),
             np.maximum(nlp.in_lower - cin, 0.0), np.maximum(cin - nlp.in_upper, 0.0),
             np.maximum(nlp.lower - z, 0.0), np.maximum(z - nlp.upper, 0.0)]
    return max((float(np.max(p)) for p in parts if p.size), default=0.0)


def kkt_residual(nlp, point, multipliers, derivs=None, values=None):
    """Infinity norm of stationarity, equality violation, complementarity and
    bound violation.

    ``multipliers`` is a dict with ``eq``, ``ineq`` and ``bounds`` arrays
    for ``L = f - lam'c_eq - mu'c_in - nu'z``.
    """
    z = np.asarray(point, dtype=float)
    g, Jeq, Jin = derivs if derivs is not None else nlp.derivatives(z)
    ceq, cin = values if values is not None else nlp.constraints(z)
    lam = np.asarray(multipliers.get("eq", np.zeros(nlp.n_eq)), dtype=float)
    mu = np.asarray(multipliers.get("ineq", np.zeros(nlp.n_in)), dtype=float)
    nu = np.asarray(multipliers.get("bounds", np.zeros(nlp.n)), dtype=float)
    grad_l = np.asarray(g, dtype=float) - Jeq.T @ lam - Jin.T @ mu - nu
    v_in, c_in = _side_terms(cin, nlp.in_lower, nlp.in_upper, mu)
    v_b, c_b = _side_terms(z, nlp.lower, nlp.upper, nu)
    parts = [np.abs(grad_l), np.abs(ceq), v_in, c_in, v_b, c_b]
    return max((float(np.max(p)) for p in parts if np.size(p)), default=0.0)


# -- solver --------------------------------------------------------------------

class _Evaluator:
    """Function values with failures mapped to an infinite merit."""

    def __init__(self, nlp):
        self.nlp = nlp

    def values(self, z):
        try:
            f = self.nlp.objective(z)
            ceq, cin = self.nlp.constraints(z)
        except EVAL_ERRORS:
            return None
        if not (np.isfinite(f) and np.all(np.isfinite(ceq)) and np.all(np.isfinite(cin))):
            return None
        return f, ceq, cin


def _l1_infeasibility(nlp, ceq, cin):
    return float(np.sum(np.abs(ceq)) + np.sum(np.maximum(nlp.in_lower - cin, 0.0))
                 + np.sum(np.maximum(cin - nlp.in_upper, 0.0)))


def _bfgs_update(B, s, y):
    """Powell-damped BFGS update; keeps ``B`` positive definite."""
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 1e-300 or not np.all(np.isfinite(y)):
        return B
    sy = float(s @ y)
    if sy < DAMPING * sBs:
        theta = (1.0 - DAMPING) * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
    w, V = np.linalg.eigh(0.5 * (B + B.T))
    floor = COND_FLOOR * w[-1]
    if w[0] < floor:
        B = (V * np.maximum(w, floor)) @ V.T
    return B


def _initial_hessian(nlp, x):
    """Identity, or the objective's Gauss-Newton model plus a small ridge
    when the problem provides one."""
    gn = getattr(nlp, "gauss_newton_hessian", None)
    if gn is None:
        return np.eye(nlp.n)
    H = gn(x)
    return H + INIT_RIDGE * np.eye(nlp.n)


def _hessian_blocks(nlp):
    """Index blocks updated independently; one block unless the problem
    declares a partially separable Lagrangian through ``hessian_blocks``."""
    blocks = getattr(nlp, "hessian_blocks", None)
    if not blocks:
        return [np.arange(nlp.n)]
    return [np.asarray(b, dtype=np.int64) for b in blocks]


def _log(settings, it, f, kkt, viol, step, alpha=0.0):
    if settings.verbose:
        print(f"{it:4d} {f: .10e} {kkt:.3e} {viol:.3e} {step:.3e} {alpha:.2e}", file=sys.stderr)


def solve_sqp(nlp, x0, settings=None):
    """Minimize ``nlp`` from ``x0``; returns an :class:`NlpSolution`."""
    settings = settings or SolverSettings()
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != (nlp.n,):
        raise ValueError(f"starting point must have {nlp.n} entries, got {x0.shape}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("starting point must be finite")
    x = np.clip(x0, nlp.lower, nlp.upper)
    clipped = bool(np.any(x != x0))
    ev = _Evaluator(nlp)
    vals = ev.values(x)
    if vals is None:
        raise RuntimeError("problem functions cannot be evaluated at the starting point")
    f, ceq, cin = vals
    derivs = nlp.derivatives(x)
    g, Jeq, Jin = derivs
    Jeq_d, Jin_d = _dense(Jeq, nlp.n), _dense(Jin, nlp.n)
    mult = {"eq": np.zeros(nlp.n_eq), "ineq": np.zeros(nlp.n_in), "bounds": np.zeros(nlp.n)}
    B = _initial_hessian(nlp, x)
    blocks = _hessian_blocks(nlp)
    reset_at = -1
    rho = 0.0
    merits = []

    def finish(status, it):
        viol = constraint_violation(nlp, x, ceq, cin)
        kkt = kkt_residual(nlp, x, mult, (g, Jeq_d, Jin_d), (ceq, cin))
        return NlpSolution(x.copy(), {k: v.copy() for k, v in mult.items()}, kkt, it, status,
                           float(f), viol, clipped, merits)

    def converged():
        kkt = kkt_residual(nlp, x, mult, (g, Jeq_d, Jin_d), (ceq, cin))
        viol = constraint_violation(nlp, x, ceq, cin)
        return kkt, viol, kkt <= settings.kkt_tol and viol <= settings.constraint_tol

    kkt, viol, ok = converged()
    _log(settings, 0, f, kkt, viol, 0.0)
    if ok:
        return finish("converged", 0)

    for it in range(1, settings.max_iterations + 1):
        H = nlp.gauss_newton_hessian(x) if settings.hessian == "gauss-newton" else B
        try:
            qp = qp_solve(H, g, Jeq_d, -ceq, Jin_d, nlp.in_lower - cin, nlp.in_upper - cin,
                          (nlp.lower - x, nlp.upper - x))
        except (QpError, ValueError, np.linalg.LinAlgError) as exc:
            if settings.verbose:
                print(f"QP failure: {exc}", file=sys.stderr)
            return finish("qp_failure", it - 1)
        d = qp.step
        qp_mult = {"eq": qp.lam_eq, "ineq": qp.mu_in, "bounds": qp.nu_bounds}
        mmax = max((float(np.max(np.abs(v))) for v in (qp.lam_eq, qp.mu_in) if v.size), default=0.0)
        rho = max(PENALTY_FACTOR * mmax, rho)

        infeas = _l1_infeasibility(nlp, ceq, cin)
        phi = f + rho * infeas
        dderiv = float(g @ d) - rho * infeas
        if qp.elastic:
            dderiv = min(dderiv, 0.0)

        alpha = 1.0
        accepted = None
        trial_d = d
        while alpha >= settings.min_step:
            xt = np.clip(x + alpha * trial_d, nlp.lower, nlp.upper)
            tv = ev.values(xt)
            if tv is not None:
                phit = tv[0] + rho * _l1_infeasibility(nlp, tv[1], tv[2])
                if phit <= phi + ARMIJO * alpha * min(dderiv, 0.0):
                    accepted = (xt, tv, phit)
                    break
                if alpha == 1.0 and trial_d is d and settings.second_order_correction:
                    soc = _second_order_correction(nlp, x, d, H, g, Jeq_d, Jin_d, tv[1], tv[2])
                    if soc is not None:
                        xs = np.clip(x + soc, nlp.lower, nlp.upper)
                        sv = ev.values(xs)
                        if sv is not None:
                            phis = sv[0] + rho * _l1_infeasibility(nlp, sv[1], sv[2])
                            if phis <= phi + ARMIJO * min(dderiv, 0.0):
                                accepted = (xs, sv, phis)
                                break
            alpha *= settings.backtrack
        if accepted is None:
            if settings.hessian == "bfgs" and reset_at != it - 1:
                # retry once from a fresh initial model before giving up
                B = _initial_hessian(nlp, x)
                reset_at = it
                continue
            return finish("line_search_failure", it - 1)

        x_new, (f, ceq, cin), phi_new = accepted
        s = x_new - x
        step_norm = float(np.max(np.abs(s))) if s.size else 0.0
        new_mult = {k: mult[k] + alpha * (qp_mult[k] - mult[k]) for k in mult}
        derivs_new = nlp.derivatives(x_new)
        g_new, Jeq_new, Jin_new = derivs_new
        Jeq_new, Jin_new = _dense(Jeq_new, nlp.n), _dense(Jin_new, nlp.n)
        if settings.hessian == "bfgs" and step_norm > 0:
            lam, mu = new_mult["eq"], new_mult["ineq"]
            grad_new = g_new - Jeq_new.T @ lam - Jin_new.T @ mu
            grad_old = g - Jeq_d.T @ lam - Jin_d.T @ mu
            y = grad_new - grad_old
            for idx in blocks:
                # roundoff-sized block steps carry no curvature information
                if np.linalg.norm(s[idx]) <= STEP_FLOOR * (1.0 + np.linalg.norm(x[idx])):
                    continue
                B[np.ix_(idx, idx)] = _bfgs_update(B[np.ix_(idx, idx)], s[idx], y[idx])
        x, g, Jeq_d, Jin_d, mult = x_new, g_new, Jeq_new, Jin_new, new_mult
        merits.append((phi, phi_new))
        kkt, viol, ok = converged()
        _log(settings, it, f, kkt, viol, step_norm, alpha)
        if ok:
            return finish("converged", it)
    return finish("max_iter", settings.max_iterations)


def _second_order_correction(nlp, x, d, H, g, Jeq, Jin, ceq_trial, cin_trial):
    """Step from the QP whose linearized constraints are shifted by the
    residual observed at ``x + d``; counters the Maratos effect."""
    beq = Jeq @ d - ceq_trial
    shift = cin_trial - Jin @ d
    try:
        qp = qp_solve(H, g, Jeq, beq, Jin, nlp.in_lower - shift, nlp.in_upper - shift,
                      (nlp.lower - x, nlp.upper - x), elastic=False)
    except (QpError, ValueError, np.linalg.LinAlgError):
        return None
    return qp.step if np.all(np.isfinite(qp.step)) else None
