"""Successive convex approximation over semidefinite relaxations, plus baselines.

Each outer iteration linearises the expected detection probability at the
current covariance, solves the relaxed SDP, maps its solution to rank-one
user covariances, factors it back into a beamformer and moves towards it
with an Armijo-backtracked step measured on the true objective.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from bayesbf import conic
from bayesbf.metrics import Beamformer, expected_pd, inner, sinr
from bayesbf.scene import SceneConfig, steering_tx, target_f_matrix
from bayesbf.specfun import DiscretizedPrior

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
STALLED = "stalled"

BASELINES = ("max_sinr_0deg", "max_esinr", "omni")


class InfeasibleError(RuntimeError):
    """No beamformer meets the SINR targets within the power budget."""


class SolverFailure(RuntimeError):
    pass


class DegenerateUserError(RuntimeError):
    pass


class RecoveryError(RuntimeError):
    pass


@dataclass
class OptimizerSettings:
    max_iters: int = 50
    tol: float = 1e-4
    armijo_beta: float = 0.5
    armijo_c1: float = 1e-4
    jitter: float = 0.0
    min_step: float = 2.0**-30

    def __post_init__(self):
        if self.max_iters < 1 or self.tol <= 0:
            raise ValueError("max_iters must be >= 1 and tol > 0")
        if not (0 < self.armijo_beta < 1 and 0 < self.armijo_c1 < 1):
            raise ValueError("Armijo parameters must lie in (0, 1)")


@dataclass
class IterationRecord:
    iter: int
    epd: float
    surrogate: float
    step: float
    residual: float
    status: str
    elapsed_s: float


@dataclass
class Rank1Data:
    """Per-iteration quantities kept for auditing the rank-one construction."""

    r_bar: np.ndarray
    w_bars: np.ndarray
    w_tildes: np.ndarray
    w_dagger: np.ndarray


@dataclass
class OptimizationTrace:
    records: list[IterationRecord] = field(default_factory=list)
    status: str = ""
    initial_epd: float = float("nan")
    audit: list[Rank1Data] = field(default_factory=list)

    FIELDS = ("iter", "epd", "surrogate", "step", "residual", "status", "elapsed_s")

    def __len__(self):
        return len(self.records)

    @property
    def epd(self) -> np.ndarray:
        return np.array([r.epd for r in self.records])

    @property
    def final_residual(self) -> float:
        return self.records[-1].residual if self.records else float("inf")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("# schema: bayesbf-trace v1\n")
            writer = csv.DictWriter(fh, fieldnames=self.FIELDS)
            writer.writeheader()
            for rec in self.records:
                writer.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in asdict(rec).items()})


# ---------------------------------------------------------------------------
# rank-one extraction and beamformer recovery


def extract_rank1(sol: conic.SubproblemSolution, q_matrices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``W_k <- W_k Q_k W_k^H / tr(Q_k W_k)``; the covariance is kept as is."""
    if sol.status != conic.OPTIMAL:
        raise ValueError(f"cannot extract from a {sol.status} solution")
    w_tildes = []
    for q, w in zip(q_matrices, sol.w_bars):
        power = np.trace(q @ w).real
        if power <= 1e-14 * max(np.abs(q).max(), 1e-300) * max(np.abs(w).max(), 1e-300) or power <= 0:
            raise DegenerateUserError("a user receives no signal power in the relaxed solution")
        wt = w @ q @ w.conj().T / power
        w_tildes.append(0.5 * (wt + wt.conj().T))
    n = sol.r_x_bar.shape[0]
    return sol.r_x_bar.copy(), np.array(w_tildes).reshape(-1, n, n)


def _psd_factor(m: np.ndarray) -> np.ndarray:
    """Cholesky factor, falling back to a clipped eigen square root."""
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(m)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def recover_beamformers(r_tilde: np.ndarray, w_tildes: np.ndarray, channels: np.ndarray) -> Beamformer:
    """User columns from the rank-one matrices, sensing block from the residual covariance."""
    n = r_tilde.shape[0]
    cols = []
    for h, wt in zip(np.atleast_2d(channels), w_tildes):
        g = wt @ h.conj()
        cols.append(g / np.sqrt((h @ g).real))
    w_comm = np.array(cols).T.reshape(n, len(cols))
    resid = r_tilde - w_tildes.sum(axis=0)
    resid = 0.5 * (resid + resid.conj().T)
    tr = max(np.trace(r_tilde).real, 1e-300)
    if np.linalg.eigvalsh(resid).min() < -1e-6 * tr:
        raise RecoveryError("residual sensing covariance is not PSD")
    return Beamformer(w_comm, _psd_factor(resid))


def _solve_checked(sp: conic.Subproblem) -> conic.SubproblemSolution:
    sol = conic.solve(sp)
    if sol.status == conic.INFEASIBLE:
        raise InfeasibleError("SINR targets cannot be met with the power budget")
    if sol.status != conic.OPTIMAL:
        raise SolverFailure(f"SDP solver failed ({sol.solver_status})")
    return sol


def beamformer_from_solution(sol: conic.SubproblemSolution, channels: np.ndarray) -> tuple[Beamformer, np.ndarray]:
    r_t, w_t = extract_rank1(sol, conic.channel_matrices(channels) if len(channels) else np.zeros((0,) + sol.r_x_bar.shape))
    return recover_beamformers(r_t, w_t, channels), w_t


def _q(channels: np.ndarray, n: int) -> np.ndarray:
    return conic.channel_matrices(channels) if len(channels) else np.zeros((0, n, n), complex)


def linear_design(objective_matrix: np.ndarray, channels: np.ndarray, cfg: SceneConfig) -> Beamformer:
    """Maximise ``<objective_matrix, R_X>`` under the SINR/power constraints."""
    sp = conic.Subproblem(
        objective_matrix, _q(channels, cfg.n_tx), cfg.sinr_threshold, cfg.power_budget, cfg.comm_noise
    )
    bf, _ = beamformer_from_solution(_solve_checked(sp), channels)
    return bf


def mean_f_matrix(prior_theta: DiscretizedPrior, cfg: SceneConfig) -> np.ndarray:
    """Prior-averaged target matrix ``sum_m w_m F(theta_m)``."""
    a = steering_tx(prior_theta.nodes, cfg.n_tx)
    return cfg.n_rx * (a.T * prior_theta.weights) @ a.conj()


# ---------------------------------------------------------------------------
# baselines


def baseline(kind: str, cfg: SceneConfig, channels: np.ndarray, priors) -> Beamformer:
    prior_theta, _ = priors
    if kind == "max_sinr_0deg":
        return linear_design(target_f_matrix(0.0, cfg), channels, cfg)
    if kind == "max_esinr":
        return linear_design(mean_f_matrix(prior_theta, cfg), channels, cfg)
    if kind == "omni":
        sp = conic.Subproblem(
            np.zeros((cfg.n_tx, cfg.n_tx)), _q(channels, cfg.n_tx), cfg.sinr_threshold,
            cfg.power_budget, cfg.comm_noise, objective="max_min_slack", equal_antenna_power=True,
        )
        bf, _ = beamformer_from_solution(_solve_checked(sp), channels)
        return bf
    raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINES}")


def initialize(cfg: SceneConfig, channels: np.ndarray, priors) -> Beamformer:
    """Feasible starting point: the expected-SINR design."""
    return baseline("max_esinr", cfg, channels, priors)


# ---------------------------------------------------------------------------
# SCA loop


def _lift(bf: Beamformer) -> tuple[np.ndarray, np.ndarray]:
    n = bf.w_comm.shape[0]
    w_k = np.einsum("ik,jk->kij", bf.w_comm, bf.w_comm.conj()).reshape(-1, n, n)
    return bf.covariance, w_k


def sca_sdr(
    cfg: SceneConfig,
    channels: np.ndarray,
    priors: tuple[DiscretizedPrior, DiscretizedPrior],
    settings: OptimizerSettings | None = None,
    init: Beamformer | None = None,
    audit: bool = False,
    dump_subproblem: str | None = None,
) -> tuple[Beamformer, OptimizationTrace]:
    """Maximise the expected detection probability from a feasible start.

    The step is taken on the lifted variables ``(R_X, W_1..W_K)``:
    ``(1 - delta) * current + delta * relaxed optimum``, which keeps every
    constraint satisfied.  The blend is mapped back to a beamformer with the
    same rank-one construction used on the relaxed optimum, so the new
    beamformer reproduces the blended covariance exactly.  The stopping
    residual is ``delta * ||W_dagger - W||_F``.

    With ``audit=True`` the relaxed solution, the rank-one matrices and the
    recovered beamformer of every iteration are stored on the trace.
    ``dump_subproblem`` writes the first assembled SDP to that path.
    """
    settings = settings or OptimizerSettings()
    prior_theta, prior_alpha = priors
    bf = init if init is not None else initialize(cfg, channels, priors)
    q = _q(channels, cfg.n_tx)
    r_cur, wk_cur = _lift(bf)

    trace = OptimizationTrace()
    f_cur = expected_pd(r_cur, prior_theta, prior_alpha, cfg)
    trace.initial_epd = f_cur
    t_start = time.perf_counter()
    status = MAX_ITERS

    for t in range(1, settings.max_iters + 1):
        sp = conic.assemble(r_cur, priors, channels, cfg)
        if dump_subproblem and t == 1:
            conic.dump_subproblem(sp, dump_subproblem)
        sol = _solve_checked(sp)
        r_t, w_t = extract_rank1(sol, q)
        w_dag = recover_beamformers(r_t, w_t, channels).matrix
        if audit:
            trace.audit.append(Rank1Data(sol.r_x_bar, sol.w_bars, w_t, w_dag))

        d_r = r_t - r_cur
        slope = inner(sp.objective_matrix, d_r)
        delta = 1.0
        accepted = False
        while delta >= settings.min_step:
            r_new = r_cur + delta * d_r
            f_new = expected_pd(r_new, prior_theta, prior_alpha, cfg)
            if f_new >= f_cur + settings.armijo_c1 * delta * max(slope, 0.0):
                accepted = True
                break
            delta *= settings.armijo_beta

        if not accepted:
            trace.records.append(
                IterationRecord(t, f_cur, sol.objective_value, 0.0, 0.0, STALLED, time.perf_counter() - t_start)
            )
            status = STALLED
            break

        residual = float(delta * np.linalg.norm(w_dag - bf.matrix))
        wk_new = wk_cur + delta * (w_t - wk_cur)
        blend = conic.SubproblemSolution(r_new, wk_new, conic.OPTIMAL)
        bf = recover_beamformers(*extract_rank1(blend, q), channels)
        r_cur, wk_cur = _lift(bf)
        f_cur = expected_pd(r_cur, prior_theta, prior_alpha, cfg)
        trace.records.append(
            IterationRecord(t, f_cur, sol.objective_value, delta, residual, sol.status, time.perf_counter() - t_start)
        )
        log.debug("iter %d epd=%.10f step=%.3g residual=%.3g", t, f_cur, delta, residual)
        if residual < settings.tol:
            status = CONVERGED
            break

    trace.status = status
    return bf, trace


# ---------------------------------------------------------------------------
# independent feasibility check


def verify_beamformer(bf: Beamformer, channels: np.ndarray, cfg: SceneConfig, rtol: float = 1e-6) -> dict:
    """Check power and SINR directly from the precoder columns.

    Returns a dict with the SINRs, the transmit power and an ``ok`` flag.
    """
    sinrs = [sinr(i, bf, channels, cfg) for i in range(len(channels))]
    power = bf.power
    ok = power <= cfg.power_budget + 1e-6 and all(s >= cfg.sinr_threshold * (1 - rtol) for s in sinrs)
    return {"ok": bool(ok), "sinr": sinrs, "power": power}
