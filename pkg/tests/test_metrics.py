import warnings

import numpy as np
import pytest
from conftest import random_psd
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from bayesbf import metrics, scene
from bayesbf.metrics import Beamformer, DegenerateGradientWarning, InvalidCovarianceError
from bayesbf.specfun import DiscretizedPrior


def pd_oracle(alpha, theta, r, cfg, block_len=1):
    # Q-function form: P_d = Q(Q^{-1}(P_f) - sqrt(2 * SNR))
    a = scene.steering_tx(theta, cfg.n_tx)
    snr = alpha**2 * block_len * cfg.n_rx * np.real(a.conj() @ r @ a) / cfg.sense_noise
    return norm.sf(norm.isf(cfg.false_alarm) - np.sqrt(2 * snr))


def test_beamformer_roundtrip(rng):
    w = rng.standard_normal((6, 9)) + 1j * rng.standard_normal((6, 9))
    bf = Beamformer.from_matrix(w, 3)
    assert bf.n_users == 3 and bf.w_sense.shape == (6, 6)
    np.testing.assert_array_equal(bf.matrix, w)
    np.testing.assert_allclose(bf.covariance, w @ w.conj().T)
    assert bf.power == pytest.approx(np.trace(bf.covariance).real, rel=1e-12)


def test_check_covariance(rng):
    r = random_psd(rng, 4, 1.0)
    metrics.check_covariance(r, 1.0)
    with pytest.raises(InvalidCovarianceError):
        metrics.check_covariance(r[:3])
    with pytest.raises(InvalidCovarianceError):
        metrics.check_covariance(r + np.triu(np.ones((4, 4)), 1))
    with pytest.raises(InvalidCovarianceError):
        metrics.check_covariance(-r)
    with pytest.raises(InvalidCovarianceError):
        metrics.check_covariance(r, 0.5)


@pytest.mark.parametrize("theta", [-0.2, 0.0, 0.13])
def test_pd_matches_q_function_form(cfg, rng, theta):
    r = random_psd(rng, cfg.n_tx, cfg.power_budget)
    for alpha in np.array([0.05, 0.3, 1.0, 3.0]) * cfg.alpha_sigma * 1e-2:
        got = metrics.detection_probability(alpha, theta, r, cfg)
        assert got == pytest.approx(pd_oracle(alpha, theta, r, cfg), rel=1e-9, abs=1e-15)


def test_pd_anchors(cfg, rng):
    r = random_psd(rng, cfg.n_tx, cfg.power_budget)
    assert metrics.detection_probability(0.0, 0.1, r, cfg) == cfg.false_alarm
    assert metrics.detection_probability(1e-3, 0.1, np.zeros_like(r), cfg) == cfg.false_alarm
    assert metrics.detection_probability(1.0, 0.0, r, cfg) == pytest.approx(1.0, abs=1e-15)


@given(st.floats(0, 1e-5), st.floats(0, 1e-5))
@settings(max_examples=50)
def test_pd_monotone_in_alpha(a1, a2):
    cfg = scene.default_config()
    r = np.eye(cfg.n_tx) * cfg.power_budget / cfg.n_tx
    lo, hi = sorted((a1, a2))
    assert metrics.detection_probability(lo, 0.0, r, cfg) <= metrics.detection_probability(hi, 0.0, r, cfg)


def test_pd_block_length_scaling(cfg, rng):
    r = random_psd(rng, cfg.n_tx, cfg.power_budget)
    a = 2e-8
    assert metrics.detection_probability(a, 0.1, r, cfg, block_len=64) == pytest.approx(
        metrics.detection_probability(8 * a, 0.1, r, cfg), rel=1e-12
    )


def test_negative_trace_rejected(cfg):
    with pytest.raises(InvalidCovarianceError):
        metrics.detection_probability(1e-6, 0.0, -np.eye(cfg.n_tx), cfg)


def _hermitian(rng, n):
    d = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return d + d.conj().T


def test_pd_gradient_directional(cfg, rng):
    c = metrics.erfc_inv(2 * cfg.false_alarm)
    for _ in range(10):
        r = random_psd(rng, cfg.n_tx, cfg.power_budget)
        theta = rng.uniform(-0.3, 0.3)
        alpha = (c + 0.3) * np.sqrt(cfg.sense_noise / metrics.sensing_trace(theta, r, cfg)[0])
        g = metrics.pd_gradient(alpha, theta, r, cfg)
        d = _hermitian(rng, cfg.n_tx)
        h = 1e-6 * cfg.power_budget / np.linalg.norm(d)
        fd = (pd_oracle(alpha, theta, r + h * d, cfg) - pd_oracle(alpha, theta, r - h * d, cfg)) / (2 * h)
        assert metrics.inner(g, d) == pytest.approx(fd, rel=1e-6)
        # gradient is a nonnegative multiple of F
        f = scene.target_f_matrix(theta, cfg)
        assert np.linalg.matrix_rank(g, tol=1e-8 * np.abs(g).max()) == 1
        np.testing.assert_allclose(g * f[0, 0].real / g[0, 0].real, f, rtol=1e-9)


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_epd_gradient_directional(seed):
    cfg = scene.default_config()
    pt, pa = scene.build_priors(cfg)
    rng = np.random.default_rng(seed)
    r = random_psd(rng, cfg.n_tx, cfg.power_budget * rng.uniform(0.05, 1.0), rank=rng.integers(1, 4))
    g = metrics.epd_gradient(r, pt, pa, cfg)
    d = _hermitian(rng, cfg.n_tx)
    h = 1e-7 * cfg.power_budget / np.linalg.norm(d)
    fd = (metrics.expected_pd(r + h * d, pt, pa, cfg) - metrics.expected_pd(r - h * d, pt, pa, cfg)) / (2 * h)
    assert metrics.inner(g, d) == pytest.approx(fd, rel=1e-5, abs=1e-9 * np.linalg.norm(g))
    assert np.linalg.eigvalsh(g).min() >= -1e-10 * np.abs(g).max()


def test_degenerate_gradient_warns(cfg, priors):
    with pytest.warns(DegenerateGradientWarning):
        g = metrics.epd_gradient(np.zeros((cfg.n_tx, cfg.n_tx)), *priors, cfg)
    assert not g.any()


def test_surrogate_tangent(cfg, priors, rng):
    r0 = random_psd(rng, cfg.n_tx, cfg.power_budget)
    r1 = random_psd(rng, cfg.n_tx, cfg.power_budget)
    assert metrics.surrogate_epd(r0, r0, *priors, cfg) == pytest.approx(metrics.expected_pd(r0, *priors, cfg), rel=1e-14)
    mid = metrics.surrogate_epd(0.5 * (r0 + r1), r0, *priors, cfg)
    ends = 0.5 * (metrics.surrogate_epd(r0, r0, *priors, cfg) + metrics.surrogate_epd(r1, r0, *priors, cfg))
    assert mid == pytest.approx(ends, rel=1e-12)


def test_epd_bounds_and_power_monotonicity(cfg, priors, rng):
    r = random_psd(rng, cfg.n_tx, cfg.power_budget)
    vals = [metrics.expected_pd(s * r, *priors, cfg) for s in (0.0, 0.1, 0.5, 1.0, 2.0)]
    assert vals[0] == cfg.false_alarm
    assert np.all(np.diff(vals) >= 0) and vals[-1] <= 1.0


def test_epd_degenerate_priors_reduce_to_pd(cfg, rng):
    r = random_psd(rng, cfg.n_tx, cfg.power_budget)
    pt = DiscretizedPrior.point_mass(0.07)
    pa = DiscretizedPrior.point_mass(2e-8)
    assert metrics.expected_pd(r, pt, pa, cfg) == pytest.approx(metrics.detection_probability(2e-8, 0.07, r, cfg), rel=1e-12)


def test_epd_brute_force_sum(cfg, priors, rng):
    r = random_psd(rng, cfg.n_tx, cfg.power_budget, rank=2)
    pt, pa = priors
    total = sum(
        wt * wa * metrics.detection_probability(a, t, r, cfg)
        for t, wt in zip(pt.nodes[::6], pt.weights[::6] / pt.weights[::6].sum())
        for a, wa in zip(pa.nodes[::8], pa.weights[::8] / pa.weights[::8].sum())
    )
    sub = (
        DiscretizedPrior(pt.nodes[::6], pt.weights[::6] / pt.weights[::6].sum()),
        DiscretizedPrior(pa.nodes[::8], pa.weights[::8] / pa.weights[::8].sum()),
    )
    assert metrics.expected_pd(r, *sub, cfg) == pytest.approx(total, rel=1e-12)


def test_sinr_forms_agree(cfg, channels, rng):
    w = (rng.standard_normal((cfg.n_tx, cfg.n_tx + 2)) + 1j * rng.standard_normal((cfg.n_tx, cfg.n_tx + 2))) * 0.01
    bf = Beamformer.from_matrix(w, 2)
    for k, h in enumerate(channels):
        q = np.outer(h.conj(), h)
        wk = np.outer(bf.w_comm[:, k], bf.w_comm[:, k].conj())
        assert metrics.sinr(k, bf, channels, cfg) == pytest.approx(
            metrics.sinr_covariance_form(q, wk, bf.covariance, cfg.comm_noise), rel=1e-10
        )


def test_beampattern_single_beam(cfg):
    a0 = scene.steering_tx(0.0, cfg.n_tx)
    r = cfg.power_budget / cfg.n_tx * np.outer(a0, a0.conj())
    angles = np.deg2rad(np.arange(-90, 90.25, 0.5))
    pat = metrics.beampattern(r, angles)
    assert pat.max() == pytest.approx(cfg.power_budget * cfg.n_tx, rel=1e-12)
    assert angles[np.argmax(pat)] == 0.0
    # uniform linear array, half-wavelength: about 0.886 * 2 / N radians
    hpbw = metrics.half_power_beamwidth(pat, np.rad2deg(angles))
    assert hpbw == pytest.approx(np.rad2deg(0.886 * 2 / cfg.n_tx), abs=1.0)


def test_scalar_and_vector_angles(cfg, rng):
    r = random_psd(rng, cfg.n_tx, cfg.power_budget)
    thetas = np.array([-0.1, 0.0, 0.2])
    vec = metrics.detection_probability(1e-8, thetas, r, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert vec == pytest.approx([metrics.detection_probability(1e-8, t, r, cfg) for t in thetas], rel=1e-14)
