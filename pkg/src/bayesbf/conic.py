"""Semidefinite subproblems over ``(R_X, W_1..W_K)`` without rank constraints.

Complex Hermitian variables are handled through the real embedding

    X = A + jB  (Hermitian)   <->   Z = [[A, -B], [B, A]]  (real symmetric),

for which ``X >= 0`` iff ``Z >= 0`` and ``Re tr(C X) = tr(embed(C) Z) / 2``
for Hermitian ``C``.  Each complex variable is a ``2N x 2N`` symmetric cvxpy
variable with the block structure imposed by linear equalities, and the
resulting real SDP is handed to Clarabel.  That route is the ``"cvxpy"``
backend; it is used for the equal-antenna-power (omni) problems and as an
independent cross-check.

The default ``"ipm"`` backend works on the Hermitian blocks directly.  With
``S = R_X - sum_k W_k`` the problem has PSD blocks ``(S, W_1..W_K)`` and only
``K + 1`` scalar constraints, which :mod:`bayesbf.sdp_ipm` solves in a few
milliseconds per iteration.

Both backends rescale the data: covariances are divided by the power budget
and channel matrices are measured in units of the communication noise.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import cvxpy as cp
import numpy as np

from bayesbf import sdp_ipm
from bayesbf.metrics import epd_gradient, expected_pd, inner
from bayesbf.scene import SceneConfig
from bayesbf.specfun import DiscretizedPrior

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"

SOLVER_OPTIONS = {
    "tol_gap_abs": 1e-10,
    "tol_gap_rel": 1e-9,
    "tol_feas": 1e-10,
    "tol_ktratio": 1e-8,
    "max_iter": 400,
}


def embed(x: np.ndarray) -> np.ndarray:
    """Real symmetric ``2N x 2N`` embedding of a Hermitian ``N x N`` matrix."""
    x = np.asarray(x, dtype=complex)
    return np.block([[x.real, -x.imag], [x.imag, x.real]])


def de_embed(z: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed` (reads the left block column)."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0] // 2
    return z[:n, :n] + 1j * z[n:, :n]


def hermitian_part(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.conj().T)


def channel_matrices(channels: np.ndarray) -> np.ndarray:
    """``Q_k = g_k^H g_k`` for row channels ``g_k = h_k^H``; ``tr(Q_k w w^H) = |g_k w|^2``."""
    channels = np.atleast_2d(channels)
    return np.einsum("ki,kj->kij", channels.conj(), channels)


@dataclass
class Subproblem:
    """Linear SDP in ``(R_X, W_k)`` with SINR, power and ordering constraints.

    ``objective`` is ``"linear"`` (maximise ``<objective_matrix, R_X>``) or
    ``"max_min_slack"`` (maximise the smallest SINR-constraint slack).  With
    ``equal_antenna_power`` the diagonal of ``R_X`` is pinned to ``P/N_t``.
    """

    objective_matrix: np.ndarray
    q_matrices: np.ndarray
    gamma_th: float
    power_budget: float
    comm_noise: float
    constant_term: float = 0.0
    objective: str = "linear"
    equal_antenna_power: bool = False

    def __post_init__(self):
        self.objective_matrix = np.asarray(self.objective_matrix, dtype=complex)
        n = self.objective_matrix.shape[0]
        self.q_matrices = np.asarray(self.q_matrices, dtype=complex).reshape(-1, n, n)
        if self.objective not in ("linear", "max_min_slack"):
            raise ValueError(f"unknown objective {self.objective!r}")

    @property
    def dims(self) -> tuple[int, int]:
        return self.objective_matrix.shape[0], self.q_matrices.shape[0]


@dataclass
class SubproblemSolution:
    r_x_bar: np.ndarray
    w_bars: np.ndarray
    status: str
    objective_value: float = float("nan")
    solve_time: float = 0.0
    solver_status: str = ""
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def assemble(anchor: np.ndarray, priors: tuple[DiscretizedPrior, DiscretizedPrior], channels: np.ndarray, cfg: SceneConfig) -> Subproblem:
    """Linearise EP_d at ``anchor`` and collect the constraint data."""
    prior_theta, prior_alpha = priors
    g = epd_gradient(anchor, prior_theta, prior_alpha, cfg)
    constant = expected_pd(anchor, prior_theta, prior_alpha, cfg) - inner(g, anchor)
    return Subproblem(
        objective_matrix=g,
        q_matrices=channel_matrices(channels) if len(channels) else np.zeros((0, cfg.n_tx, cfg.n_tx)),
        gamma_th=cfg.sinr_threshold,
        power_budget=cfg.power_budget,
        comm_noise=cfg.comm_noise,
        constant_term=constant,
    )


def _hermitian_variable(n: int) -> tuple[cp.Variable, list]:
    z = cp.Variable((2 * n, 2 * n), symmetric=True)
    return z, [z[:n, :n] == z[n:, n:], z[:n, n:] == -z[n:, :n]]


def _trace_product(c: np.ndarray, z) -> cp.Expression:
    # Re tr(C X) for Hermitian C
    return 0.5 * cp.sum(cp.multiply(embed(hermitian_part(c)), z))


def solve(sp: Subproblem, backend: str = "auto") -> SubproblemSolution:
    """Solve the relaxed SDP; never raises on infeasibility, see ``status``.

    ``backend`` is ``"ipm"``, ``"cvxpy"`` or ``"auto"`` (the built-in method
    for linear objectives, cvxpy otherwise).
    """
    if backend == "auto":
        plain = sp.objective == "linear" and not sp.equal_antenna_power
        backend = "ipm" if plain else "cvxpy"
    if backend == "ipm":
        return _solve_ipm(sp)
    if backend == "cvxpy":
        return _solve_cvxpy(sp)
    raise ValueError(f"unknown backend {backend!r}")


def _objective_scale(sp: Subproblem) -> float:
    gmax = np.abs(sp.objective_matrix).max()
    return sp.power_budget * gmax if gmax > 0 else 1.0


def _solve_ipm(sp: Subproblem) -> SubproblemSolution:
    if sp.objective != "linear" or sp.equal_antenna_power:
        raise ValueError("the ipm backend handles plain linear objectives only")
    n, k = sp.dims
    p = sp.power_budget
    q = sp.q_matrices * (p / sp.comm_noise)
    gamma = sp.gamma_th
    g = hermitian_part(sp.objective_matrix) * (p / _objective_scale(sp))

    eye = np.eye(n)
    blocks_c = [g] * (k + 1)
    rows = [[eye] * (k + 1)]
    rhs = [1.0]
    for i in range(k):
        # gamma tr(Q (S + sum_{j != i} W_j)) - tr(Q W_i) <= -gamma
        rows.append([gamma * q[i]] + [-q[i] if j == i else gamma * q[i] for j in range(k)])
        rhs.append(-gamma)

    t0 = time.perf_counter()
    res = sdp_ipm.solve_sdp(blocks_c, rows, np.array(rhs))
    elapsed = time.perf_counter() - t0
    info = {"iterations": res.iterations, "gap": res.gap, "primal_residual": res.primal_residual, "dual_residual": res.dual_residual}
    if res.status == sdp_ipm.INFEASIBLE:
        return SubproblemSolution(
            np.zeros((n, n), complex), np.zeros((k, n, n), complex), INFEASIBLE,
            solve_time=elapsed, solver_status=res.status, info=info,
        )
    if res.status != sdp_ipm.OPTIMAL:
        return SubproblemSolution(
            np.zeros((n, n), complex), np.zeros((k, n, n), complex), NUMERICAL_FAILURE,
            solve_time=elapsed, solver_status=res.status, info=info,
        )
    s_block = p * hermitian_part(res.x[0])
    w_bars = np.array([p * hermitian_part(x) for x in res.x[1:]]).reshape(k, n, n)
    r_bar = s_block + w_bars.sum(axis=0)
    value = inner(sp.objective_matrix, r_bar) + sp.constant_term
    sol = SubproblemSolution(r_bar, w_bars, OPTIMAL, value, elapsed, res.status, info)
    sol.info["violations"] = constraint_violations(sol, sp)
    return sol


def _solve_cvxpy(sp: Subproblem, solver: str = "CLARABEL") -> SubproblemSolution:
    n, k = sp.dims
    p = sp.power_budget
    q = sp.q_matrices * (p / sp.comm_noise)
    gamma = sp.gamma_th

    z_r, cons = _hermitian_variable(n)
    z_w = []
    for _ in range(k):
        z, c = _hermitian_variable(n)
        z_w.append(z)
        cons += c + [z >> 0]
    cons.append(z_r - sum(z_w) >> 0 if k else z_r >> 0)
    cons.append(0.5 * cp.trace(z_r) <= 1.0)
    if sp.equal_antenna_power:
        cons.append(cp.diag(z_r)[:n] == 1.0 / n)

    slacks = []
    for i in range(k):
        row_scale = 1.0 / (max(gamma, 1.0) * max(np.trace(q[i]).real, 1e-300))
        lhs = (1.0 + gamma) * _trace_product(q[i], z_w[i]) - gamma * _trace_product(q[i], z_r) - gamma
        slacks.append(row_scale * lhs)

    if sp.objective == "linear":
        cons += [s >= 0 for s in slacks]
        obj_scale = _objective_scale(sp)
        objective = cp.Maximize(_trace_product(sp.objective_matrix * (p / obj_scale), z_r))
    else:
        t = cp.Variable()
        cons += [s >= t for s in slacks]
        objective = cp.Maximize(t if k else 0)

    prob = cp.Problem(objective, cons)
    opts = dict(SOLVER_OPTIONS) if solver == "CLARABEL" else {}
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="Solution may be inaccurate")
            prob.solve(solver=solver, **opts)
    except cp.SolverError as exc:
        return SubproblemSolution(
            np.zeros((n, n), complex), np.zeros((k, n, n), complex), NUMERICAL_FAILURE,
            solve_time=time.perf_counter() - t0, solver_status=str(exc),
        )
    elapsed = time.perf_counter() - t0

    if prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SubproblemSolution(
            np.zeros((n, n), complex), np.zeros((k, n, n), complex), INFEASIBLE,
            solve_time=elapsed, solver_status=prob.status,
        )
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or z_r.value is None:
        return SubproblemSolution(
            np.zeros((n, n), complex), np.zeros((k, n, n), complex), NUMERICAL_FAILURE,
            solve_time=elapsed, solver_status=prob.status,
        )

    r_bar = p * hermitian_part(de_embed(z_r.value))
    w_bars = np.array([p * hermitian_part(de_embed(z.value)) for z in z_w]).reshape(k, n, n)
    if sp.objective == "linear":
        value = inner(sp.objective_matrix, r_bar) + sp.constant_term
    else:
        value = float(t.value) if k else 0.0
    sol = SubproblemSolution(r_bar, w_bars, OPTIMAL, value, elapsed, prob.status)

    if sp.objective == "max_min_slack" and k and value < -1e-7:
        sol.status = INFEASIBLE
        return sol
    violations = constraint_violations(sol, sp)
    sol.info["violations"] = violations
    if prob.status == cp.OPTIMAL_INACCURATE and max(violations.values(), default=0.0) > 1e-6:
        sol.status = NUMERICAL_FAILURE
    return sol


def constraint_violations(sol: SubproblemSolution, sp: Subproblem) -> dict:
    """Relative constraint violations of a relaxed solution (0 means satisfied)."""
    p = sp.power_budget
    out = {
        "power": max(np.trace(sol.r_x_bar).real - p, 0.0) / p,
        "order": max(-np.linalg.eigvalsh(sol.r_x_bar - sol.w_bars.sum(axis=0)).min(), 0.0) / p,
    }
    for i, (q, w) in enumerate(zip(sp.q_matrices, sol.w_bars)):
        out[f"psd_{i}"] = max(-np.linalg.eigvalsh(w).min(), 0.0) / p
        signal = np.trace(q @ w).real
        interference = np.trace(q @ (sol.r_x_bar - w)).real + sp.comm_noise
        out[f"sinr_{i}"] = max(sp.gamma_th - signal / interference, 0.0) / sp.gamma_th
    if sp.equal_antenna_power:
        out["diag"] = np.abs(np.diag(sol.r_x_bar).real - p / sp.dims[0]).max() / p
    return out


def _write_matrix(fh, name: str, m: np.ndarray) -> None:
    m = np.atleast_2d(m)
    fh.write(f"{name} {m.shape[0]} {m.shape[1]}\n")
    for row in m:
        fh.write(" ".join(f"{v.real:.17g} {v.imag:.17g}" for v in row.astype(complex)) + "\n")


def dump_subproblem(sp: Subproblem, path: str | Path) -> None:
    """Write the assembled problem as plain text.

    Layout: a ``# bayesbf-subproblem v1`` line, scalar lines ``key value``,
    then matrix blocks, each a ``name rows cols`` header followed by ``rows``
    lines of ``re im`` pairs in row-major order.
    """
    n, k = sp.dims
    with open(path, "w") as fh:
        fh.write("# bayesbf-subproblem v1\n")
        fh.write(f"n_tx {n}\nn_users {k}\n")
        for key in ("gamma_th", "power_budget", "comm_noise", "constant_term"):
            fh.write(f"{key} {getattr(sp, key):.17g}\n")
        fh.write(f"objective {sp.objective}\nequal_antenna_power {int(sp.equal_antenna_power)}\n")
        _write_matrix(fh, "objective_matrix", sp.objective_matrix)
        for i, q in enumerate(sp.q_matrices):
            _write_matrix(fh, f"q_{i}", q)


def _read_matrix(lines, header: str) -> np.ndarray:
    _, rows, cols = header.split()
    rows, cols = int(rows), int(cols)
    data = np.array([[float(v) for v in next(lines).split()] for _ in range(rows)])
    data = data.reshape(rows, cols, 2)
    return data[..., 0] + 1j * data[..., 1]


def load_subproblem(path: str | Path) -> Subproblem:
    with open(path) as fh:
        lines = iter([ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")])
    scalars, mats = {}, {}
    for ln in lines:
        parts = ln.split()
        if len(parts) == 3:
            mats[parts[0]] = _read_matrix(lines, ln)
        else:
            scalars[parts[0]] = parts[1]
    k = int(scalars["n_users"])
    n = int(scalars["n_tx"])
    return Subproblem(
        objective_matrix=mats["objective_matrix"],
        q_matrices=np.array([mats[f"q_{i}"] for i in range(k)]).reshape(k, n, n),
        gamma_th=float(scalars["gamma_th"]),
        power_budget=float(scalars["power_budget"]),
        comm_noise=float(scalars["comm_noise"]),
        constant_term=float(scalars["constant_term"]),
        objective=scalars["objective"],
        equal_antenna_power=bool(int(scalars["equal_antenna_power"])),
    )
