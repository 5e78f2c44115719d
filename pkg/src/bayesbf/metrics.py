"""Detection, communication and beampattern functionals of a transmit design.

Conventions used throughout:

* ``R_X`` is the ``N_t x N_t`` Hermitian transmit covariance in watts.
* The target SNR term is ``|alpha|^2 tr(F(theta) R_X) / sigma_s^2`` with
  ``F(theta) = N_r a a^H``; the block length is absorbed (effective L = 1).
* Matrix gradients pair with the real inner product
  ``<G, D> = Re tr(G^H D)``.  Under this pairing the gradient of
  ``tr(F R)`` is ``F`` itself.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from bayesbf.scene import SceneConfig, steering_tx
from bayesbf.specfun import DiscretizedPrior, erfc, erfc_inv


class InvalidCovarianceError(ValueError):
    pass


class DegenerateGradientWarning(RuntimeWarning):
    pass


@dataclass
class Beamformer:
    """Joint precoder ``W = [W_c, W_s]``: K user columns then the sensing block."""

    w_comm: np.ndarray
    w_sense: np.ndarray

    def __post_init__(self):
        self.w_comm = np.asarray(self.w_comm, dtype=complex)
        self.w_sense = np.asarray(self.w_sense, dtype=complex)
        if self.w_comm.ndim != 2 or self.w_sense.ndim != 2:
            raise ValueError("beamformer blocks must be 2-D")
        if self.w_comm.shape[0] != self.w_sense.shape[0]:
            raise ValueError("communication and sensing blocks need the same row count")

    @classmethod
    def from_matrix(cls, w: np.ndarray, n_users: int) -> "Beamformer":
        w = np.asarray(w, dtype=complex)
        return cls(w[:, :n_users], w[:, n_users:])

    @property
    def n_users(self) -> int:
        return self.w_comm.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        return np.hstack([self.w_comm, self.w_sense])

    @property
    def covariance(self) -> np.ndarray:
        w = self.matrix
        return w @ w.conj().T

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.matrix) ** 2))


def check_covariance(r_x: np.ndarray, power_budget: float | None = None) -> None:
    """Raise :class:`InvalidCovarianceError` unless ``r_x`` is a valid covariance."""
    r_x = np.asarray(r_x)
    if r_x.ndim != 2 or r_x.shape[0] != r_x.shape[1]:
        raise InvalidCovarianceError("covariance must be square")
    scale = max(np.abs(r_x).max(), 1e-300)
    if np.abs(r_x - r_x.conj().T).max() > 1e-10 * scale:
        raise InvalidCovarianceError("covariance is not Hermitian")
    tr = np.trace(r_x).real
    if np.linalg.eigvalsh(0.5 * (r_x + r_x.conj().T)).min() < -1e-8 * max(tr, 0.0):
        raise InvalidCovarianceError("covariance is not PSD")
    if power_budget is not None and tr > power_budget + 1e-6:
        raise InvalidCovarianceError(f"trace {tr:.6g} exceeds power budget {power_budget:.6g}")


def _beam_gain(theta_rad, r_x: np.ndarray) -> np.ndarray:
    """``Re(a^H R a)`` for each angle (array in, array out)."""
    a = steering_tx(np.atleast_1d(theta_rad), r_x.shape[0])
    return np.einsum("mi,ij,mj->m", a.conj(), r_x, a).real


def sensing_trace(theta_rad, r_x: np.ndarray, cfg: SceneConfig) -> np.ndarray:
    """``tr(F(theta) R_X)`` for each angle."""
    return cfg.n_rx * _beam_gain(theta_rad, r_x)


def _pd_from_snr(snr, pf: float):
    t = np.sqrt(np.maximum(snr, 0.0))
    # zero SNR returns pf itself rather than erfc(erfcinv(.)) round-off
    return np.where(t > 0, np.clip(0.5 * erfc(erfc_inv(2 * pf) - t), 0.0, 1.0), pf)


def _check_trace(tr) -> None:
    if np.any(tr < -1e-8):
        raise InvalidCovarianceError("tr(F R_X) is negative; covariance is not PSD")


def detection_probability(alpha_abs, theta_rad, r_x: np.ndarray, cfg: SceneConfig, block_len: int = 1):
    """Coherent matched-filter detection probability at a known angle.

    ``block_len`` scales the SNR for comparison with signal-level simulation;
    the optimisation pipeline always uses the default of 1.
    """
    tr = sensing_trace(theta_rad, r_x, cfg)
    if np.ndim(theta_rad) == 0:
        tr = tr[0]
    _check_trace(tr)
    snr = np.asarray(alpha_abs, dtype=float) ** 2 * block_len * tr / cfg.sense_noise
    out = _pd_from_snr(snr, cfg.false_alarm)
    return float(out) if np.ndim(out) == 0 else out


def pd_table(r_x: np.ndarray, prior_theta: DiscretizedPrior, prior_alpha: DiscretizedPrior, cfg: SceneConfig) -> np.ndarray:
    """``P_d(alpha_n, theta_m)`` on the quadrature grid, shape ``(M, N)``."""
    tr = sensing_trace(prior_theta.nodes, r_x, cfg)
    _check_trace(tr)
    snr = np.outer(tr, prior_alpha.nodes**2) / cfg.sense_noise
    return _pd_from_snr(snr, cfg.false_alarm)


def expected_pd(r_x: np.ndarray, prior_theta: DiscretizedPrior, prior_alpha: DiscretizedPrior, cfg: SceneConfig) -> float:
    """Prior-averaged detection probability (double quadrature sum)."""
    table = pd_table(r_x, prior_theta, prior_alpha, cfg)
    # summing the excess over pf keeps EP_d(0) == pf independent of weight round-off
    return float(cfg.false_alarm + prior_theta.weights @ (table - cfg.false_alarm) @ prior_alpha.weights)


def _dpd_dtrace(alpha_abs, tr, cfg: SceneConfig):
    """Derivative of P_d with respect to ``tr(F R_X)``; zero where the trace vanishes."""
    a2 = np.asarray(alpha_abs, dtype=float) ** 2
    tr = np.asarray(tr, dtype=float)
    eps = 1e-15 * cfg.power_budget
    safe = tr > eps
    t = np.sqrt(a2 * np.where(safe, tr, 1.0) / cfg.sense_noise)
    c = erfc_inv(2 * cfg.false_alarm)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = a2 * np.exp(-((c - t) ** 2)) / (2.0 * np.sqrt(np.pi) * cfg.sense_noise * t)
    d = np.where(safe & (a2 > 0), d, 0.0)
    if not np.all(safe):
        warnings.warn("tr(F R_X) ~ 0 at some nodes; their gradient is set to zero", DegenerateGradientWarning, stacklevel=3)
    return d


def pd_gradient(alpha_abs: float, theta_rad: float, r_x: np.ndarray, cfg: SceneConfig) -> np.ndarray:
    """Gradient of P_d w.r.t. ``R_X``: a nonnegative multiple of ``F(theta)``."""
    tr = sensing_trace(theta_rad, r_x, cfg)[0]
    _check_trace(tr)
    scale = _dpd_dtrace(alpha_abs, tr, cfg)
    a = steering_tx(theta_rad, cfg.n_tx)
    return float(scale) * cfg.n_rx * np.outer(a, a.conj())


def epd_gradient(r_x: np.ndarray, prior_theta: DiscretizedPrior, prior_alpha: DiscretizedPrior, cfg: SceneConfig) -> np.ndarray:
    """Gradient of the quadrature EP_d, ``sum w_m w_n grad P_d(alpha_n, theta_m)``."""
    tr = sensing_trace(prior_theta.nodes, r_x, cfg)
    _check_trace(tr)
    d = _dpd_dtrace(prior_alpha.nodes[None, :], tr[:, None], cfg)
    per_angle = prior_theta.weights * (d @ prior_alpha.weights)
    a = steering_tx(prior_theta.nodes, cfg.n_tx)
    return cfg.n_rx * (a.T * per_angle) @ a.conj()


def inner(g: np.ndarray, d: np.ndarray) -> float:
    """Real matrix inner product ``Re tr(G^H D)``."""
    return float(np.vdot(g, d).real)


def surrogate_epd(r_x: np.ndarray, r_anchor: np.ndarray, prior_theta: DiscretizedPrior, prior_alpha: DiscretizedPrior, cfg: SceneConfig) -> float:
    """First-order expansion of EP_d around ``r_anchor`` evaluated at ``r_x``."""
    base = expected_pd(r_anchor, prior_theta, prior_alpha, cfg)
    g = epd_gradient(r_anchor, prior_theta, prior_alpha, cfg)
    return base + inner(g, np.asarray(r_x) - r_anchor)


def sinr(user_k: int, bf: Beamformer, channels: np.ndarray, cfg: SceneConfig) -> float:
    """SINR of user ``k`` given row channels ``channels[k] = h_k^H``."""
    h = channels[user_k]
    gains = np.abs(h @ bf.w_comm) ** 2
    interference = gains.sum() - gains[user_k] + np.sum(np.abs(h @ bf.w_sense) ** 2)
    return float(gains[user_k] / (interference + cfg.comm_noise))


def sinr_covariance_form(q_k: np.ndarray, w_k: np.ndarray, r_x: np.ndarray, noise: float) -> float:
    """``tr(Q W_k) / (tr(Q (R - W_k)) + noise)``."""
    num = np.trace(q_k @ w_k).real
    return float(num / (np.trace(q_k @ (r_x - w_k)).real + noise))


def beampattern(r_x: np.ndarray, angles_rad) -> np.ndarray:
    """Transmit beampattern ``a(theta)^H R_X a(theta)`` in watts."""
    return _beam_gain(angles_rad, np.asarray(r_x))


def half_power_beamwidth(pattern: np.ndarray, angles) -> float:
    """Width of the contiguous region around the peak where the pattern is >= half its peak."""
    pattern = np.asarray(pattern)
    angles = np.asarray(angles)
    i = int(np.argmax(pattern))
    half = pattern[i] / 2
    lo = i
    while lo > 0 and pattern[lo - 1] >= half:
        lo -= 1
    hi = i
    while hi < pattern.size - 1 and pattern[hi + 1] >= half:
        hi += 1
    return float(angles[hi] - angles[lo])
