"""Direct multiple shooting transcription of a :class:`ShootingProblem`.

Variables, stage by stage and node by node::

    [s_00, u_00, s_01, u_01, ..., s_0N, u_0N, s_10, ...,  T_0..T_S-1,  p]

Equalities are the shooting defects, stage transitions, control continuity
across stage boundaries and nonlinear boundary equalities. Plain
state/control constraints are folded into variable bounds. Derivatives are
forward differences restricted to each block's own variables.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import sparse

from .problem import ProblemError

FD_REL = 1e-6
FD_ABS = 1e-6


def fd_step(v):
    return max(FD_ABS, FD_REL * abs(v))


def _thread_count(threads):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("EXOSIM_THREADS", "").strip()
    return max(1, int(env)) if env else 1


class NlpProblem:
    """Sparse NLP produced by :func:`transcribe`."""

    def __init__(self, problem, grids=None, threads=None):
        self.problem = problem
        stages = problem.stages
        if grids is None:
            grids = [(st.n_intervals, st.steps_per_interval) for st in stages]
        grids = [tuple(g) if np.ndim(g) else (int(g), st.steps_per_interval)
                 for g, st in zip(grids, stages)]
        if len(grids) != len(stages) or any(n < 1 or k < 1 for n, k in grids):
            raise ProblemError("grid must give >= 1 interval and step per stage")
        self.n_intervals = [int(n) for n, _ in grids]
        self.n_steps = [int(k) for _, k in grids]
        self.threads = _thread_count(threads)
        nx, nu = problem.nx, problem.nu
        self.nx, self.nu = nx, nu
        self.n_stages = len(stages)
        p0, plo, phi, pnames = problem.parameter_vector()
        self.p_nominal = p0
        self.param_names = pnames
        self.np = len(p0)

        self.node_offset = []
        off = 0
        for N in self.n_intervals:
            self.node_offset.append(off)
            off += (N + 1) * (nx + nu)
        self.T_offset = off
        off += self.n_stages
        self.p_offset = off
        self.n = off + self.np

        lo = np.full(self.n, -np.inf)
        hi = np.full(self.n, np.inf)
        xlo, xhi = problem.state_bounds
        ulo, uhi = problem.control_bounds
        for i, N in enumerate(self.n_intervals):
            for j in range(N + 1):
                lo[self.xs(i, j)] = xlo
                hi[self.xs(i, j)] = xhi
                lo[self.us(i, j)] = ulo
                hi[self.us(i, j)] = uhi
            lo[self.T_offset + i], hi[self.T_offset + i] = stages[i].duration_bounds
        lo[self.p_offset:] = plo
        hi[self.p_offset:] = phi

        # blocks: (kind, stage, node, payload)
        self.eq_blocks = []
        self.in_blocks = []
        for i, st in enumerate(stages):
            N = self.n_intervals[i]
            for j in range(N):
                self.eq_blocks.append(("defect", i, j, None))
            if i > 0:
                self.eq_blocks.append(("transition", i, 0, None))
                if (st.control_interpolation == "linear"
                        and stages[i - 1].control_interpolation == "linear"):
                    self.eq_blocks.append(("continuity", i, 0, None))
            nodes_of = {"start": [0], "end": [N]}
            items = [(nodes_of[b.at], b.expr, b.lower, b.upper) for b in st.boundary_constraints]
            items += [(range(N + 1), c.expr, c.lower, c.upper) for c in st.path_constraints]
            for nodes, expr, el, eh in items:
                var = problem.variable_of(expr)
                for j in nodes:
                    if var is not None:
                        sl = self.xs(i, j) if var[0] == "x" else self.us(i, j)
                        k = sl.start + var[1]
                        lo[k] = max(lo[k], el)
                        hi[k] = min(hi[k], eh)
                    elif el == eh:
                        self.eq_blocks.append(("expr", i, j, (expr, el)))
                    else:
                        self.in_blocks.append(("expr", i, j, (expr, el, eh)))
        bad = np.nonzero(lo > hi)[0]
        if len(bad):
            raise ProblemError(f"empty bounds for variables {bad.tolist()[:10]}")
        self.lower, self.upper = lo, hi

        self._eq_rows = []
        r = 0
        for kind, i, j, _ in self.eq_blocks:
            self._eq_rows.append(r)
            r += {"defect": nx, "transition": nx, "continuity": nu}.get(kind, 1)
        self.n_eq = r
        self.n_in = len(self.in_blocks)
        self.in_lower = np.array([b[3][1] for b in self.in_blocks], dtype=float)
        self.in_upper = np.array([b[3][2] for b in self.in_blocks], dtype=float)
        self._cache_key = None
        self._cache_ends = None

    # -- layout helpers ------------------------------------------------------
    def xs(self, i, j):
        a = self.node_offset[i] + j * (self.nx + self.nu)
        return slice(a, a + self.nx)

    def us(self, i, j):
        a = self.node_offset[i] + j * (self.nx + self.nu) + self.nx
        return slice(a, a + self.nu)

    def params(self, z):
        return z[self.p_offset:self.p_offset + self.np]

    def durations(self, z):
        return z[self.T_offset:self.T_offset + self.n_stages]

    def stage_nodes(self, z, i):
        """``(S, U)`` node arrays of stage ``i``, shapes (N+1, nx) and (N+1, nu)."""
        N = self.n_intervals[i]
        block = z[self.node_offset[i]:self.node_offset[i] + (N + 1) * (self.nx + self.nu)]
        block = block.reshape(N + 1, self.nx + self.nu)
        return block[:, :self.nx], block[:, self.nx:]

    @property
    def variable_count_formula(self):
        nodes = sum(N + 1 for N in self.n_intervals)
        return nodes * self.nx + nodes * self.nu + self.n_stages + self.np

    @property
    def hessian_blocks(self):
        """One block per shooting node plus one for durations and parameters."""
        blocks = []
        for i, N in enumerate(self.n_intervals):
            for j in range(N + 1):
                a = self.node_offset[i] + j * (self.nx + self.nu)
                blocks.append(np.arange(a, a + self.nx + self.nu))
        blocks.append(np.arange(self.T_offset, self.n))
        return blocks

    @property
    def defect_count(self):
        return sum(self.n_intervals) * self.nx

    # -- segment integration -------------------------------------------------
    def _segment_from(self, z, i, j, s=None, u0=None, u1=None, T=None, p=None):
        s = z[self.xs(i, j)] if s is None else s
        u0 = z[self.us(i, j)] if u0 is None else u0
        u1 = z[self.us(i, j + 1)] if u1 is None else u1
        T = z[self.T_offset + i] if T is None else T
        p = self.params(z) if p is None else p
        N = self.n_intervals[i]
        return self.problem.segment(i, s, u0, u1, T / N, self.n_steps[i], p)

    def _map(self, fn, jobs):
        if self.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                return list(ex.map(fn, jobs))
        return [fn(job) for job in jobs]

    def segment_ends(self, z):
        z = np.asarray(z, dtype=float)
        key = z.tobytes()
        if key != self._cache_key:
            jobs = [(i, j) for i, N in enumerate(self.n_intervals) for j in range(N)]
            ends = self._map(lambda ij: self._segment_from(z, *ij), jobs)
            self._cache_ends = dict(zip(jobs, ends))
            self._cache_key = key
        return self._cache_ends

    # -- function values -----------------------------------------------------
    def objective(self, z):
        z = np.asarray(z, dtype=float)
        P = self.problem
        c = P.cost
        exc, act = P.excitation_slice(), P.actuator_slice()
        T = self.durations(z)
        total = 0.0
        for i in range(self.n_stages):
            _, U = self.stage_nodes(z, i)
            N = self.n_intervals[i]
            L = (c.excitation_weight * np.sum(U[:, exc] ** 2, axis=1)
                 + c.actuator_weight * np.sum(U[:, act] ** 2, axis=1))
            h = T[i] / N
            if P.stages[i].control_interpolation == "linear":
                total += h * (0.5 * L[0] + np.sum(L[1:-1]) + 0.5 * L[-1])
            else:
                total += h * np.sum(L[:-1])
        total += c.time_weight * np.sum(T)
        if c.terminal:
            i = self.n_stages - 1
            N = self.n_intervals[i]
            x, u, p = z[self.xs(i, N)], z[self.us(i, N)], self.params(z)
            for term in c.terminal:
                total += term.weight * (P.eval_expr(term.expr, i, x, u, p) - term.target) ** 2
        return float(total)

    def _eq_block_value(self, z, block, ends):
        kind, i, j, payload = block
        P = self.problem
        p = self.params(z)
        if kind == "defect":
            return ends[(i, j)] - z[self.xs(i, j + 1)]
        if kind == "transition":
            N = self.n_intervals[i - 1]
            return z[self.xs(i, 0)] - P.transition(i, z[self.xs(i - 1, N)], p)
        if kind == "continuity":
            N = self.n_intervals[i - 1]
            return z[self.us(i, 0)] - z[self.us(i - 1, N)]
        expr, value = payload
        return np.array([P.eval_expr(expr, i, z[self.xs(i, j)], z[self.us(i, j)], p) - value])

    def _in_block_value(self, z, block):
        _, i, j, (expr, _, _) = block
        return self.problem.eval_expr(expr, i, z[self.xs(i, j)], z[self.us(i, j)], self.params(z))

    def constraints(self, z):
        """``(c_eq, c_in)``; feasibility is ``c_eq = 0`` and ``in_lower <= c_in <= in_upper``."""
        z = np.asarray(z, dtype=float)
        ends = self.segment_ends(z)
        ceq = np.concatenate([self._eq_block_value(z, b, ends) for b in self.eq_blocks]) \
            if self.eq_blocks else np.zeros(0)
        cin = np.array([self._in_block_value(z, b) for b in self.in_blocks], dtype=float)
        return ceq, cin

    def defects(self, z):
        ends = self.segment_ends(z)
        return np.concatenate([ends[(i, j)] - z[self.xs(i, j + 1)]
                               for i, N in enumerate(self.n_intervals) for j in range(N)])

    # -- derivatives ---------------------------------------------------------
    def _p_cols(self):
        return np.arange(self.p_offset, self.p_offset + self.np)

    def _fd_block(self, f, z, cols, base):
        """Forward-difference columns of ``f(z)`` for the listed variables."""
        out = np.empty((len(base), len(cols)))
        for k, c in enumerate(cols):
            h = fd_step(z[c])
            zp = z.copy()
            zp[c] += h
            fp = f(zp)
            if not np.all(np.isfinite(fp)):
                raise ProblemError(f"non-finite finite-difference evaluation for variable {c}")
            out[:, k] = (fp - base) / h
        return out

    def _rng(self, sl):
        return np.arange(sl.start, sl.stop)

    def _defect_jacobian(self, z, i, j, base):
        st = self.problem.stages[i]
        cols = [self._rng(self.xs(i, j)), self._rng(self.us(i, j))]
        if st.control_interpolation == "linear":
            cols.append(self._rng(self.us(i, j + 1)))
        cols += [np.array([self.T_offset + i]), self._p_cols()]
        cols = np.concatenate(cols)
        D = self._fd_block(lambda zp: self._segment_from(zp, i, j), z, cols, base)
        return cols, D

    def _eq_block_jacobian(self, z, r0, block, ends):
        """Triplets (rows, cols, vals) of one equality block."""
        kind, i, j, payload = block
        nx, nu = self.nx, self.nu
        P = self.problem
        if kind == "defect":
            cols, D = self._defect_jacobian(z, i, j, ends[(i, j)])
            rows = np.repeat(np.arange(r0, r0 + nx), len(cols))
            ident = self._rng(self.xs(i, j + 1))
            return (np.concatenate([rows, np.arange(r0, r0 + nx)]),
                    np.concatenate([np.tile(cols, nx), ident]),
                    np.concatenate([D.ravel(), -np.ones(nx)]))
        if kind == "transition":
            N = self.n_intervals[i - 1]
            cols = np.concatenate([self._rng(self.xs(i - 1, N)), self._p_cols()])
            base = P.transition(i, z[self.xs(i - 1, N)], self.params(z))
            D = self._fd_block(lambda zp: P.transition(i, zp[self.xs(i - 1, N)], self.params(zp)),
                               z, cols, base)
            rows = np.repeat(np.arange(r0, r0 + nx), len(cols))
            return (np.concatenate([np.arange(r0, r0 + nx), rows]),
                    np.concatenate([self._rng(self.xs(i, 0)), np.tile(cols, nx)]),
                    np.concatenate([np.ones(nx), -D.ravel()]))
        if kind == "continuity":
            N = self.n_intervals[i - 1]
            rr = np.arange(r0, r0 + nu)
            return (np.concatenate([rr, rr]),
                    np.concatenate([self._rng(self.us(i, 0)), self._rng(self.us(i - 1, N))]),
                    np.concatenate([np.ones(nu), -np.ones(nu)]))
        expr = payload[0]
        return self._expr_jacobian(z, r0, i, j, expr)

    def _expr_jacobian(self, z, r0, i, j, expr):
        cols = np.concatenate([self._rng(self.xs(i, j)), self._rng(self.us(i, j)), self._p_cols()])
        P = self.problem

        def f(zp):
            return np.array([P.eval_expr(expr, i, zp[self.xs(i, j)], zp[self.us(i, j)],
                                         self.params(zp))])
        D = self._fd_block(f, z, cols, f(z))
        return np.full(len(cols), r0), cols, D.ravel()

    def objective_gradient(self, z):
        z = np.asarray(z, dtype=float)
        P = self.problem
        cols = []
        for i in range(self.n_stages):
            for j in range(self.n_intervals[i] + 1):
                us = self._rng(self.us(i, j))
                cols.append(us[P.excitation_slice()])
                cols.append(us[P.actuator_slice()])
        cols.append(np.arange(self.T_offset, self.T_offset + self.n_stages))
        if P.cost.terminal:
            i = self.n_stages - 1
            N = self.n_intervals[i]
            cols += [self._rng(self.xs(i, N)), self._rng(self.us(i, N)), self._p_cols()]
        cols = np.unique(np.concatenate(cols)).astype(np.int64)
        g = np.zeros(self.n)
        f0 = self.objective(z)
        g[cols] = self._fd_block(lambda zp: np.array([self.objective(zp)]), z, cols,
                                 np.array([f0]))[0]
        return g

    def derivatives(self, z):
        """``(grad f, J_eq, J_in)`` with the Jacobians as CSR matrices."""
        z = np.asarray(z, dtype=float)
        ends = self.segment_ends(z)
        jobs = list(zip(self._eq_rows, self.eq_blocks))
        trip = self._map(lambda job: self._eq_block_jacobian(z, job[0], job[1], ends), jobs)
        if trip:
            rows, cols, vals = (np.concatenate(t) for t in zip(*trip))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        Jeq = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_eq, self.n))
        trip = [self._expr_jacobian(z, r, b[1], b[2], b[3][0]) for r, b in enumerate(self.in_blocks)]
        if trip:
            rows, cols, vals = (np.concatenate(t) for t in zip(*trip))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        Jin = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_in, self.n))
        return self.objective_gradient(z), Jeq, Jin

    def gauss_newton_hessian(self, z):
        """Hessian of the objective with terminal terms linearized.

        Effort terms are quadratic in the node controls, so their block is
        exact; duration couplings are dropped.
        """
        z = np.asarray(z, dtype=float)
        P = self.problem
        c = P.cost
        H = np.zeros((self.n, self.n))
        T = self.durations(z)
        for i in range(self.n_stages):
            N = self.n_intervals[i]
            h = T[i] / N
            lin = P.stages[i].control_interpolation == "linear"
            for j in range(N + 1):
                w = (0.5 if j in (0, N) else 1.0) if lin else (0.0 if j == N else 1.0)
                us = self._rng(self.us(i, j))
                for sl, wt in ((P.excitation_slice(), c.excitation_weight),
                               (P.actuator_slice(), c.actuator_weight)):
                    idx = us[sl]
                    H[idx, idx] += 2.0 * h * w * wt
        if c.terminal:
            i = self.n_stages - 1
            N = self.n_intervals[i]
            for term in c.terminal:
                r, cols, vals = self._expr_jacobian(z, 0, i, N, term.expr)
                g = np.zeros(self.n)
                g[cols] = vals
                H += 2.0 * term.weight * np.outer(g, g)
        return H

    # -- starting point ------------------------------------------------------
    def initial_guess(self, controls=0.1, durations=None, anchors=None):
        """Cold start: states interpolated linearly between boundary anchors.

        Anchors are taken from equality bounds on state components at stage
        starts/ends, plus any explicit ``anchors`` given as
        ``{(stage, "start"|"end"): {state_index: value}}``.
        """
        P = self.problem
        z = np.zeros(self.n)
        starts = np.cumsum([0] + [N for N in self.n_intervals])
        anchor_pts = {k: [] for k in range(self.nx)}
        for i in range(self.n_stages):
            N = self.n_intervals[i]
            for j, g in ((0, starts[i]), (N, starts[i] + N)):
                sl = self.xs(i, j)
                for k in range(self.nx):
                    if self.lower[sl.start + k] == self.upper[sl.start + k]:
                        anchor_pts[k].append((g, self.lower[sl.start + k]))
        for (i, at), vals in (anchors or {}).items():
            g = starts[i] if at == "start" else starts[i] + self.n_intervals[i]
            for k, v in vals.items():
                anchor_pts[k].append((g, float(v)))
        neutral = P.neutral_state()
        for i in range(self.n_stages):
            N = self.n_intervals[i]
            for j in range(N + 1):
                g = starts[i] + j
                x = neutral.copy()
                for k, pts in anchor_pts.items():
                    if pts:
                        pts = sorted(pts)
                        x[k] = np.interp(g, [a for a, _ in pts], [b for _, b in pts])
                z[self.xs(i, j)] = x
                u = np.broadcast_to(np.asarray(controls, dtype=float), (self.nu,))
                z[self.us(i, j)] = u
        T = np.array([0.5 * sum(st.duration_bounds) for st in P.stages]) if durations is None \
            else np.asarray(durations, dtype=float)
        z[self.T_offset:self.T_offset + self.n_stages] = T
        z[self.p_offset:] = self.p_nominal
        return np.clip(z, self.lower, self.upper)


def transcribe(problem, grids=None, threads=None):
    """Multiple-shooting NLP for ``problem``; ``grids`` optionally overrides
    ``(n_intervals, steps_per_interval)`` per stage."""
    return NlpProblem(problem, grids, threads)


def evaluate_cost(nlp, point):
    return nlp.objective(point)


def fd_jacobians(nlp, point):
    """Sparse constraint Jacobians and the objective gradient at ``point``."""
    point = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(point)):
        raise ProblemError("finite-difference point must be finite")
    grad, Jeq, Jin = nlp.derivatives(point)
    return Jeq, Jin, grad
