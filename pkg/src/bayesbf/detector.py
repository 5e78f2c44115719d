"""Signal-level echo simulation and the coherent / GLRT detectors.

Everything is batched over trials: ``y`` is ``(trials, n_rx, L)`` and the
transmitted block ``x`` is ``(trials, n_tx, L)``.  The receive-transmit
operator ``kron(I_L, b a^H)`` is never formed; statistics are contracted one
snapshot at a time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from bayesbf.metrics import Beamformer, detection_probability
from bayesbf.scene import SceneConfig, steering_rx, steering_tx
from bayesbf.specfun import erfc_inv

H0 = "H0"
H1 = "H1"

CHUNK = 4096


@dataclass
class EchoBatch:
    y: np.ndarray
    x: np.ndarray
    hypothesis: str
    alpha: complex = 0.0
    theta: float = 0.0

    @property
    def trials(self) -> int:
        return self.y.shape[0]

    @property
    def block_len(self) -> int:
        return self.y.shape[2]


def qpsk(shape, rng: np.random.Generator) -> np.ndarray:
    bits = rng.integers(0, 4, size=shape)
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * bits))


def cn(shape, var: float, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian samples with variance ``var``."""
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def transmit_block(bf: Beamformer, block_len: int, rng: np.random.Generator, trials: int = 1) -> np.ndarray:
    """``X = W S``: QPSK rows for the users, Gaussian rows for the sensing streams."""
    k = bf.n_users
    n_s = bf.w_sense.shape[1]
    s = np.concatenate([qpsk((trials, k, block_len), rng), cn((trials, n_s, block_len), 1.0, rng)], axis=1)
    return bf.matrix @ s


def simulate_echo(
    bf: Beamformer,
    alpha: complex,
    theta_rad: float,
    block_len: int,
    cfg: SceneConfig,
    rng: np.random.Generator,
    trials: int = 1,
) -> EchoBatch:
    if block_len < 1:
        raise ValueError("block length must be >= 1")
    x = transmit_block(bf, block_len, rng, trials)
    z = cn((trials, cfg.n_rx, block_len), cfg.sense_noise, rng)
    if alpha == 0:
        return EchoBatch(z, x, H0)
    a = steering_tx(theta_rad, cfg.n_tx)
    b = steering_rx(theta_rad, cfg.n_rx)
    ax = np.einsum("i,til->tl", a.conj(), x)
    y = alpha * b[None, :, None] * ax[:, None, :] + z
    return EchoBatch(y, x, H1, complex(alpha), float(theta_rad))


def _projections(batch: EchoBatch, theta_rad, cfg: SceneConfig):
    # b^H y_l and a^H x_l for every trial, angle and snapshot: (trials, angles, L)
    theta = np.atleast_1d(np.asarray(theta_rad, dtype=float))
    a = steering_tx(theta, cfg.n_tx)
    b = steering_rx(theta, cfg.n_rx)
    by = np.einsum("gi,til->tgl", b.conj(), batch.y)
    ax = np.einsum("gi,til->tgl", a.conj(), batch.x)
    return by, ax


def correlation(batch: EchoBatch, theta_rad, cfg: SceneConfig) -> np.ndarray:
    """``y^H V(theta) x`` per trial and angle, shape ``(trials, angles)``."""
    by, ax = _projections(batch, theta_rad, cfg)
    return np.sum(by.conj() * ax, axis=2)


def echo_energy(batch: EchoBatch, theta_rad, cfg: SceneConfig) -> np.ndarray:
    """``||V(theta) x||^2 = n_rx * sum_l |a^H x_l|^2``, shape ``(trials, angles)``."""
    theta = np.atleast_1d(np.asarray(theta_rad, dtype=float))
    ax = np.einsum("gi,til->tgl", steering_tx(theta, cfg.n_tx).conj(), batch.x)
    return cfg.n_rx * np.sum(np.abs(ax) ** 2, axis=2)


def matched_filter_statistic(batch: EchoBatch, theta_probe: float, cfg: SceneConfig, phase: float = 0.0) -> np.ndarray:
    """Coherent statistic ``Re{exp(j*phase) y^H V x}`` per trial.

    ``phase`` is the target phase the filter is matched to; with the true
    phase the signal part is ``|alpha| ||Vx||^2``.
    """
    return np.real(np.exp(1j * phase) * correlation(batch, theta_probe, cfg)[:, 0])


def glrt_statistic(batch: EchoBatch, theta_grid, cfg: SceneConfig) -> tuple[np.ndarray, np.ndarray]:
    """Max over the grid of ``|y^H V x|^2 / ||V x||^2``; also returns the argmax angle."""
    grid = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty angle grid")
    by, ax = _projections(batch, grid, cfg)
    num = np.abs(np.sum(by.conj() * ax, axis=2)) ** 2
    energy = cfg.n_rx * np.sum(np.abs(ax) ** 2, axis=2)
    dead = energy <= 1e-20
    if dead.any():
        warnings.warn(f"{int(dead.sum())} grid evaluations with no transmit energy skipped", RuntimeWarning, stacklevel=2)
    stat = np.where(dead, -np.inf, num / np.where(dead, 1.0, energy))
    idx = np.argmax(stat, axis=1)
    return stat[np.arange(len(idx)), idx], grid[idx]


def expected_energy(bf: Beamformer, theta_probe: float, block_len: int, cfg: SceneConfig) -> float:
    a = steering_tx(theta_probe, cfg.n_tx)
    return float(block_len * cfg.n_rx * np.real(a.conj() @ bf.covariance @ a))


def threshold_for_pf(
    bf: Beamformer,
    theta_probe: float,
    pf: float,
    block_len: int,
    cfg: SceneConfig,
    energy=None,
):
    """Threshold of the coherent statistic for false-alarm rate ``pf``.

    Under H0 the statistic is ``N(0, sigma^2 E / 2)`` given the echo energy
    ``E``.  By default ``E`` is its expectation ``L n_rx a^H R a``; pass the
    realised per-trial energies to get an exactly calibrated threshold.
    """
    if not 0.0 < pf < 1.0:
        raise ValueError(f"false-alarm probability must lie in (0, 1), got {pf}")
    if energy is None:
        energy = expected_energy(bf, theta_probe, block_len, cfg)
    return np.sqrt(cfg.sense_noise * np.asarray(energy, dtype=float)) * erfc_inv(2.0 * pf)


def _chunks(trials: int, seed, chunk: int = CHUNK):
    # one child generator per chunk keeps results independent of how chunks are scheduled
    n = -(-trials // chunk)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(n)
    for i, ss in enumerate(children):
        yield min(chunk, trials - i * chunk), np.random.default_rng(ss)


def detection_rate(
    bf: Beamformer,
    alpha: complex,
    theta_rad: float,
    pf: float,
    trials: int,
    block_len: int,
    cfg: SceneConfig,
    seed=0,
    theta_probe: float | None = None,
    realized_energy: bool = False,
) -> float:
    """Fraction of trials where the coherent detector fires.

    ``alpha = 0`` measures the false-alarm rate.  ``realized_energy`` swaps
    the expected-energy threshold for the per-trial one.  The probe angle defaults to
    the true angle and the filter phase to the phase of ``alpha``.
    """
    probe = theta_rad if theta_probe is None else theta_probe
    phase = float(np.angle(alpha))
    hits = 0
    for n, rng in _chunks(trials, seed):
        batch = simulate_echo(bf, alpha, theta_rad, block_len, cfg, rng, n)
        energy = echo_energy(batch, probe, cfg)[:, 0] if realized_energy else None
        gamma = threshold_for_pf(bf, probe, pf, block_len, cfg, energy)
        hits += int(np.count_nonzero(matched_filter_statistic(batch, probe, cfg, phase) > gamma))
    return hits / trials


def glrt_detection_rate(
    bf: Beamformer,
    alpha: complex,
    theta_rad: float,
    theta_grid,
    threshold: float,
    trials: int,
    block_len: int,
    cfg: SceneConfig,
    seed=0,
) -> float:
    hits = 0
    for n, rng in _chunks(trials, seed):
        batch = simulate_echo(bf, alpha, theta_rad, block_len, cfg, rng, n)
        hits += int(np.count_nonzero(glrt_statistic(batch, theta_grid, cfg)[0] > threshold))
    return hits / trials


def wilson_interval(k: float, n: int, z: float = 1.96) -> tuple[float, float]:
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return float(mid - half), float(mid + half)


def validate_pd(
    bf: Beamformer,
    cells,
    pf: float,
    trials: int,
    block_len: int,
    cfg: SceneConfig,
    seed=0,
) -> list[dict]:
    """Empirical coherent detection rate against the closed form, per ``(|alpha|, theta)`` cell.

    The closed form is evaluated with the same block length as the simulation.
    """
    cfg_pf = cfg.replace(false_alarm=pf)
    seeds = np.random.SeedSequence(seed).spawn(len(cells))
    out = []
    for (alpha_abs, theta), ss in zip(cells, seeds):
        analytic = detection_probability(alpha_abs, theta, bf.covariance, cfg_pf, block_len=block_len)
        rate = detection_rate(bf, alpha_abs, theta, pf, trials, block_len, cfg, seed=ss)
        lo, hi = wilson_interval(rate * trials, trials)
        out.append(
            {
                "alpha_abs": float(alpha_abs),
                "theta_rad": float(theta),
                "analytic": float(analytic),
                "empirical": rate,
                "ci_low": lo,
                "ci_high": hi,
                "abs_error": abs(rate - analytic),
            }
        )
    return out


@dataclass(frozen=True)
class TargetSampler:
    """Continuous target prior: Gaussian angle, Rayleigh magnitude, uniform phase.

    ``alpha_fixed`` pins the magnitude (degenerate prior).
    """

    theta_mean: float
    theta_std: float
    alpha_sigma: float
    alpha_fixed: float | None = None

    @classmethod
    def from_config(cls, cfg: SceneConfig) -> TargetSampler:
        tp = cfg.target_prior
        return cls(np.deg2rad(tp.theta_mean_deg), np.deg2rad(tp.theta_std_deg), cfg.alpha_sigma)

    def draw(self, n: int, rng: np.random.Generator):
        theta = self.theta_mean + self.theta_std * rng.standard_normal(n)
        if self.alpha_fixed is None:
            mag = rng.rayleigh(self.alpha_sigma, n)
        else:
            mag = np.full(n, float(self.alpha_fixed))
        phase = rng.uniform(0.0, 2 * np.pi, n)
        return theta, mag, phase


@dataclass
class MonteCarloResult:
    samples: np.ndarray
    edges: np.ndarray
    counts: np.ndarray
    crosscheck: dict | None = None

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("# schema: bayesbf-histogram v1\n")
            fh.write("bin_left,bin_right,count\n")
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
                fh.write(f"{lo:.6f},{hi:.6f},{int(c)}\n")


def monte_carlo_pd(
    bf: Beamformer,
    sampler: TargetSampler,
    trials: int,
    cfg: SceneConfig,
    rng: np.random.Generator,
    bins: int = 20,
    crosscheck: int = 0,
    block_len: int = 64,
) -> MonteCarloResult:
    """Histogram of the closed-form detection probability over prior draws.

    The first ``crosscheck`` draws are also pushed through one signal-level
    coherent detection each (block length ``block_len``); the hit rate is
    reported next to the closed form evaluated at that block length.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    theta, mag, phase = sampler.draw(trials, rng)
    pd = np.array([detection_probability(m, t, bf.covariance, cfg) for m, t in zip(mag, theta)])
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(pd, bins=edges)
    check = None
    if crosscheck:
        n = min(crosscheck, trials)
        hits = 0
        analytic = 0.0
        for i in range(n):
            alpha = mag[i] * np.exp(1j * phase[i])
            batch = simulate_echo(bf, alpha, theta[i], block_len, cfg, rng)
            gamma = threshold_for_pf(bf, theta[i], cfg.false_alarm, block_len, cfg, echo_energy(batch, theta[i], cfg)[:, 0])
            hits += int(matched_filter_statistic(batch, theta[i], cfg, phase[i])[0] > gamma[0])
            analytic += detection_probability(mag[i], theta[i], bf.covariance, cfg, block_len=block_len)
        lo, hi = wilson_interval(hits, n)
        check = {"trials": n, "block_len": block_len, "analytic": analytic / n, "empirical": hits / n, "ci_low": lo, "ci_high": hi}
    return MonteCarloResult(pd, edges, counts, check)
