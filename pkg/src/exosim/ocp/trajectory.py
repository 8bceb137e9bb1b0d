"""Dense re-integration of shooting solutions and CSV export."""
import csv
from dataclasses import dataclass, field

import numpy as np

from .problem import IntegrationError, OcProblem


@dataclass
class Trajectory:
    """Dense output through all stages plus the shooting-node values.

    Rows at a stage boundary belong to the entered stage and hold the state
    after the transition, so ``time`` is strictly increasing.
    """

    time: np.ndarray
    stage: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    muscle_torques: np.ndarray
    exo_torques: np.ndarray
    contact_forces: np.ndarray
    state_names: list
    control_names: list
    muscle_names: list = field(default_factory=list)
    exo_names: list = field(default_factory=list)
    contact_names: list = field(default_factory=list)
    nq: int = 0
    nv: int = 0
    node_time: np.ndarray = None
    node_stage: np.ndarray = None
    node_states: np.ndarray = None
    node_controls: np.ndarray = None
    stage_start_times: np.ndarray = None
    stage_end_states: list = field(default_factory=list)

    def __len__(self):
        return len(self.time)

    @property
    def n_muscles(self):
        return len(self.muscle_names)

    def column_names(self):
        m = self.muscle_names
        return (["t", "stage"] + [f"q_{i}" for i in range(self.nq)]
                + [f"qd_{i}" for i in range(self.nv)] + [f"e_{n}" for n in m]
                + [f"a_{n}" for n in m] + [f"tau_{n}" for n in m]
                + [f"tau_exo_{n}" for n in self.exo_names]
                + [f"lambda_{n}" for n in self.contact_names])

    def table(self):
        """Rows in CSV column order."""
        m = self.n_muscles
        nq, nv = self.nq, self.nv
        a = self.states[:, nq + nv:nq + nv + m]
        return np.column_stack([self.time, self.stage, self.states[:, :nq + nv],
                                self.controls[:, :m], a, self.muscle_torques,
                                self.exo_torques, self.contact_forces])


def _contact_columns(problem):
    """Ordered (stage-independent) names of rigid contact force components."""
    names, index = [], {}
    for st in problem.stages:
        for c in st.contacts:
            for k in range(c.n_directions):
                key = (c.name, k)
                if key not in index:
                    index[key] = len(names)
                    names.append(f"{c.name}_{k}")
    return names, index


def _stage_contact_map(problem, stage, index):
    cols = []
    for c in problem.stages[stage].contacts:
        for k in range(c.n_directions):
            cols.append(index[(c.name, k)])
    return np.array(cols, dtype=np.int64)


def extract_trajectory(nlp, solution):
    """Re-integrate ``solution`` (an NlpSolution or a variable vector) from
    its first node through every stage and record the model outputs."""
    z = np.asarray(getattr(solution, "point", solution), dtype=float)
    if z.shape != (nlp.n,):
        raise ValueError(f"solution must have {nlp.n} variables, got {z.shape}")
    P = nlp.problem
    p = nlp.params(z)
    T = nlp.durations(z)
    starts = np.concatenate([[0.0], np.cumsum(T)])
    is_oc = isinstance(P, OcProblem)
    m = P.n_muscles if is_oc else 0
    n_exo = len(P.exo_elements) if is_oc else 0
    cnames, cindex = _contact_columns(P) if is_oc else ([], {})

    rows_t, rows_s, rows_x, rows_u = [], [], [], []
    node_t, node_s, node_x, node_u = [], [], [], []
    end_states = []
    x = z[nlp.xs(0, 0)].copy()
    for i in range(nlp.n_stages):
        N, K = nlp.n_intervals[i], nlp.n_steps[i]
        if i > 0:
            x = P.transition(i, x, p)
        S, U = nlp.stage_nodes(z, i)
        constant = P.stages[i].control_interpolation == "constant"
        dt = T[i] / (N * K)
        for j in range(N):
            dense = P.dense_segment(i, x, U[j], U[j + 1], T[i] / N, K, p)
            if not np.all(np.isfinite(dense)):
                bad = int(np.argmax(~np.all(np.isfinite(dense), axis=1)))
                raise IntegrationError(bad - 1)
            first = 0 if j == 0 else 1
            for k in range(first, K + 1):
                s = k / K
                u = U[j] if constant else U[j] + s * (U[j + 1] - U[j])
                if j == N - 1 and k == K:
                    t = starts[i + 1]
                else:
                    t = starts[i] + (j * K + k) * dt
                rows_t.append(t)
                rows_s.append(i)
                rows_x.append(dense[k])
                rows_u.append(u)
            x = dense[-1].copy()
        end_states.append(x.copy())
        if i < nlp.n_stages - 1:
            # the boundary row belongs to the next stage
            for lst in (rows_t, rows_s, rows_x, rows_u):
                lst.pop()
        for j in range(N + 1):
            node_t.append(starts[i] + T[i] * j / N if j < N else starts[i + 1])
            node_s.append(i)
            node_x.append(S[j])
            node_u.append(U[j])

    states = np.array(rows_x)
    controls = np.array(rows_u)
    stage = np.array(rows_s, dtype=np.int64)
    n = len(rows_t)
    mt = np.zeros((n, m))
    xt = np.zeros((n, n_exo))
    lam = np.zeros((n, len(cnames)))
    if is_oc:
        cmaps = [_stage_contact_map(P, i, cindex) for i in range(nlp.n_stages)]
        for r in range(n):
            mt[r], xt[r], lr, _ = P.outputs(stage[r], states[r], controls[r], p)
            lam[r, cmaps[stage[r]]] = lr
    return Trajectory(
        time=np.array(rows_t), stage=stage, states=states, controls=controls,
        muscle_torques=mt, exo_torques=xt, contact_forces=lam,
        state_names=P.state_names(), control_names=P.control_names(),
        muscle_names=[mu.name for mu in P.muscles] if is_oc else [],
        exo_names=[e.name for e in P.exo_elements] if is_oc else [],
        contact_names=cnames,
        nq=P.nq if is_oc else P.nx, nv=P.nv if is_oc else 0,
        node_time=np.array(node_t), node_stage=np.array(node_s, dtype=np.int64),
        node_states=np.array(node_x), node_controls=np.array(node_u),
        stage_start_times=starts[:-1].copy(), stage_end_states=end_states)


def simulate(nlp, point):
    """Forward simulation with the controls and durations stored in ``point``."""
    return extract_trajectory(nlp, point)


def _fmt(v):
    return format(float(v), ".17g")


def write_trajectory_csv(trajectory, path):
    """Write one row per dense output step with 17 significant digits."""
    header = trajectory.column_names()
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc}") from exc
    with fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        if len(trajectory):
            table = trajectory.table()
            for row in table:
                out = [_fmt(row[0]), str(int(row[1]))] + [_fmt(v) for v in row[2:]]
                w.writerow(out)


def read_trajectory_csv(path):
    """``(header, data)`` with ``data`` as a float array (rows x columns)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    return header, data


def empty_trajectory(problem):
    """Trajectory with no rows, carrying the column layout of ``problem``."""
    is_oc = isinstance(problem, OcProblem)
    m = problem.n_muscles if is_oc else 0
    cnames = _contact_columns(problem)[0] if is_oc else []
    n_exo = len(problem.exo_elements) if is_oc else 0
    return Trajectory(
        time=np.zeros(0), stage=np.zeros(0, dtype=np.int64),
        states=np.zeros((0, problem.nx)), controls=np.zeros((0, problem.nu)),
        muscle_torques=np.zeros((0, m)), exo_torques=np.zeros((0, n_exo)),
        contact_forces=np.zeros((0, len(cnames))),
        state_names=problem.state_names(), control_names=problem.control_names(),
        muscle_names=[mu.name for mu in problem.muscles] if is_oc else [],
        exo_names=[e.name for e in problem.exo_elements] if is_oc else [],
        contact_names=cnames, nq=problem.nq if is_oc else problem.nx,
        nv=problem.nv if is_oc else 0)
