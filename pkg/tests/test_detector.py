import numpy as np
import pytest
from scipy import stats

from bayesbf import detector as det
from bayesbf import scene
from bayesbf.metrics import Beamformer, detection_probability, expected_pd
from bayesbf.optimizer import initialize


@pytest.fixture(scope="module")
def tiny():
    cfg = scene.default_config().replace(n_tx=4, n_rx=4)
    ch = scene.gen_channels(cfg)
    bf = initialize(cfg, ch, scene.build_priors(cfg))
    return cfg, bf


def _kron_oracle(y, x, theta, cfg):
    # explicit stacked vectors and kron(I_L, b a^H)
    a = scene.steering_tx(theta, cfg.n_tx)
    b = scene.steering_rx(theta, cfg.n_rx)
    block_len = y.shape[1]
    v = np.kron(np.eye(block_len), np.outer(b, a.conj()))
    yv = y.T.reshape(-1)
    xv = x.T.reshape(-1)
    return yv.conj() @ v @ xv, np.linalg.norm(v @ xv) ** 2


def test_kron_free_contraction_matches_explicit_operator(rng):
    cfg = scene.default_config().replace(n_tx=2, n_rx=2)
    bf = Beamformer(rng.standard_normal((2, 1)) + 1j * rng.standard_normal((2, 1)), rng.standard_normal((2, 2)) + 0j)
    batch = det.simulate_echo(bf, 0.3 + 0.2j, 0.4, 4, cfg, rng, trials=3)
    for t in range(3):
        corr, energy = _kron_oracle(batch.y[t], batch.x[t], -0.2, cfg)
        got = det.correlation(det.EchoBatch(batch.y[t : t + 1], batch.x[t : t + 1], det.H1), -0.2, cfg)[0, 0]
        assert abs(got - corr) < 1e-9 * max(1.0, abs(corr))
        e = det.echo_energy(det.EchoBatch(batch.y[t : t + 1], batch.x[t : t + 1], det.H1), -0.2, cfg)[0, 0]
        assert e == pytest.approx(energy, rel=1e-12)


def test_zero_alpha_is_noise_only(tiny):
    cfg, bf = tiny
    r1 = np.random.default_rng(5)
    r2 = np.random.default_rng(5)
    batch = det.simulate_echo(bf, 0.0, 0.1, 16, cfg, r1, trials=2)
    assert batch.hypothesis == det.H0
    det.transmit_block(bf, 16, r2, 2)
    z = det.cn((2, cfg.n_rx, 16), cfg.sense_noise, r2)
    np.testing.assert_array_equal(batch.y, z)


def test_noiseless_echo(tiny):
    cfg, bf = tiny
    quiet = cfg.replace(sense_noise_dbm=-400.0)
    alpha = 0.7 * np.exp(0.3j)
    batch = det.simulate_echo(bf, alpha, 0.2, 8, quiet, np.random.default_rng(0), trials=2)
    a = scene.steering_tx(0.2, cfg.n_tx)
    b = scene.steering_rx(0.2, cfg.n_rx)
    expect = alpha * np.einsum("i,l->il", b, a.conj() @ batch.x[0])
    np.testing.assert_allclose(batch.y[0], expect, atol=1e-15)
    # matched filter with the true phase collects |alpha| ||Vx||^2
    stat = det.matched_filter_statistic(batch, 0.2, quiet, np.angle(alpha))
    energy = det.echo_energy(batch, 0.2, quiet)[:, 0]
    np.testing.assert_allclose(stat, abs(alpha) * energy, rtol=1e-10)


def test_correlation_limits(tiny, rng):
    cfg, bf = tiny
    x = det.transmit_block(bf, 6, rng, 1)
    theta = -0.3
    a = scene.steering_tx(theta, cfg.n_tx)
    b = scene.steering_rx(theta, cfg.n_rx)
    y = b[None, :, None] * (a.conj() @ x[0])[None, None, :]
    batch = det.EchoBatch(y, x, det.H1)
    energy = det.echo_energy(batch, theta, cfg)[0, 0]
    assert det.correlation(batch, theta, cfg)[0, 0] == pytest.approx(energy, rel=1e-12)
    # a receive vector orthogonal to b gives nothing
    u = np.ones(cfg.n_rx, complex)
    u -= b * (b.conj() @ u) / cfg.n_rx
    y_orth = u[None, :, None] * np.ones((1, 1, 6))
    assert abs(det.correlation(det.EchoBatch(y_orth, x, det.H1), theta, cfg)[0, 0]) < 1e-12


def test_glrt_single_node_equals_normalised_correlation(tiny, rng):
    cfg, bf = tiny
    batch = det.simulate_echo(bf, 0.5, 0.1, 8, cfg, rng, trials=10)
    stat, arg = det.glrt_statistic(batch, [0.1], cfg)
    corr = det.correlation(batch, 0.1, cfg)[:, 0]
    energy = det.echo_energy(batch, 0.1, cfg)[:, 0]
    np.testing.assert_allclose(stat, np.abs(corr) ** 2 / energy, rtol=1e-12)
    assert np.all(arg == 0.1)


def test_glrt_noiseless_argmax(tiny):
    cfg, bf = tiny
    quiet = cfg.replace(sense_noise_dbm=-400.0)
    grid = np.deg2rad(np.arange(-60, 61, 5.0))
    theta = grid[15]
    batch = det.simulate_echo(bf, 1.0, theta, 32, quiet, np.random.default_rng(2), trials=4)
    _, arg = det.glrt_statistic(batch, grid, quiet)
    np.testing.assert_array_equal(arg, theta)


def test_glrt_empty_grid(tiny, rng):
    cfg, bf = tiny
    batch = det.simulate_echo(bf, 0.0, 0.0, 2, cfg, rng)
    with pytest.raises(ValueError):
        det.glrt_statistic(batch, [], cfg)


def test_h0_statistic_is_chi_square(tiny):
    cfg, bf = tiny
    batch = det.simulate_echo(bf, 0.0, 0.0, 16, cfg, np.random.default_rng(11), trials=4000)
    stat, _ = det.glrt_statistic(batch, [0.05], cfg)
    # |CN(0, sigma^2 E)|^2 / E  ->  sigma^2/2 * chi2(2)
    res = stats.kstest(2 * stat / cfg.sense_noise, stats.chi2(2).cdf)
    assert res.pvalue > 1e-3


def test_coherent_h0_statistic_is_gaussian(tiny):
    cfg, bf = tiny
    batch = det.simulate_echo(bf, 0.0, 0.0, 16, cfg, np.random.default_rng(12), trials=4000)
    stat = det.matched_filter_statistic(batch, 0.05, cfg)
    energy = det.echo_energy(batch, 0.05, cfg)[:, 0]
    res = stats.kstest(stat / np.sqrt(cfg.sense_noise * energy / 2), "norm")
    assert res.pvalue > 1e-3


def test_threshold_properties(tiny):
    cfg, bf = tiny
    assert det.threshold_for_pf(bf, 0.0, 0.5, 8, cfg) == pytest.approx(0.0, abs=1e-15)
    pfs = [1e-4, 1e-3, 1e-2, 0.1, 0.4]
    gam = [det.threshold_for_pf(bf, 0.0, p, 8, cfg) for p in pfs]
    assert np.all(np.diff(gam) < 0)
    for bad in (0.0, 1.0, -0.1, 2.0):
        with pytest.raises(ValueError):
            det.threshold_for_pf(bf, 0.0, bad, 8, cfg)


def test_false_alarm_rate(tiny):
    cfg, bf = tiny
    rate = det.detection_rate(bf, 0.0, 0.1, 0.05, 20000, 32, cfg, seed=3, realized_energy=True)
    lo, hi = det.wilson_interval(rate * 20000, 20000, z=4.0)
    assert lo <= 0.05 <= hi


@pytest.mark.parametrize("block_len", [64, 1024, 16384])
def test_sample_covariance_converges(tiny, block_len):
    cfg, bf = tiny
    x = det.transmit_block(bf, block_len, np.random.default_rng(block_len), 1)[0]
    sample = x @ x.conj().T / block_len
    err = np.linalg.norm(sample - bf.covariance) / np.linalg.norm(bf.covariance)
    assert err < 6.0 / np.sqrt(block_len)


def test_detection_rate_matches_closed_form(tiny):
    cfg, bf = tiny
    # long block so the echo energy is close to its expectation
    block_len, pf, theta = 1024, 1e-2, 0.1
    tr = np.real(scene.steering_tx(theta, cfg.n_tx).conj() @ bf.covariance @ scene.steering_tx(theta, cfg.n_tx))
    alpha = 2.0 * np.sqrt(cfg.sense_noise / (block_len * cfg.n_rx * tr))
    rows = det.validate_pd(bf, [(alpha, theta)], pf, 5000, block_len, cfg, seed=9)
    assert rows[0]["ci_low"] - 0.01 <= rows[0]["analytic"] <= rows[0]["ci_high"] + 0.01
    assert rows[0]["analytic"] == pytest.approx(
        detection_probability(alpha, theta, bf.covariance, cfg.replace(false_alarm=pf), block_len=block_len)
    )


def test_detection_rate_reproducible():
    cfg = scene.default_config().replace(n_tx=2, n_rx=2)
    bf = Beamformer(np.ones((2, 1)), np.eye(2) * 0.1)
    alpha = np.sqrt(cfg.sense_noise) / 4
    # spans two chunks
    a = det.detection_rate(bf, alpha, 0.0, 0.01, det.CHUNK + 10, 2, cfg, seed=4)
    b = det.detection_rate(bf, alpha, 0.0, 0.01, det.CHUNK + 10, 2, cfg, seed=4)
    c = det.detection_rate(bf, alpha, 0.0, 0.01, det.CHUNK + 10, 2, cfg, seed=5)
    assert a == b
    assert a != c


def test_glrt_beats_mismatched_matched_filter(tiny):
    cfg, bf = tiny
    block_len, trials = 16, 4000
    grid = np.deg2rad(np.arange(-30, 31, 1.0))
    theta_true = np.deg2rad(12.0)
    alpha = 3.0 * np.sqrt(cfg.sense_noise / (block_len * cfg.n_rx * cfg.power_budget))
    # thresholds for 1% false alarms from H0 simulations
    h0 = det.simulate_echo(bf, 0.0, 0.0, block_len, cfg, np.random.default_rng(21), trials)
    g_thr = np.quantile(det.glrt_statistic(h0, grid, cfg)[0], 0.99)
    glrt = det.glrt_detection_rate(bf, alpha, theta_true, grid, g_thr, trials, block_len, cfg, seed=22)
    mf = det.detection_rate(bf, alpha, theta_true, 0.01, trials, block_len, cfg, seed=22, theta_probe=0.0)
    assert glrt > mf


def test_monte_carlo_degenerate_prior_single_bin(tiny):
    cfg, bf = tiny
    sampler = det.TargetSampler(0.1, 0.0, cfg.alpha_sigma, alpha_fixed=cfg.alpha_sigma)
    res = det.monte_carlo_pd(bf, sampler, 50, cfg, np.random.default_rng(0), bins=20)
    assert np.count_nonzero(res.counts) == 1
    assert res.counts.sum() == 50
    assert res.mean == pytest.approx(detection_probability(cfg.alpha_sigma, 0.1, bf.covariance, cfg), rel=1e-12)


def test_monte_carlo_mean_matches_expected_pd(tiny):
    cfg, bf = tiny
    pr = scene.build_priors(cfg)
    res = det.monte_carlo_pd(bf, det.TargetSampler.from_config(cfg), 20000, cfg, np.random.default_rng(1))
    se = res.samples.std() / np.sqrt(res.samples.size)
    assert abs(res.mean - expected_pd(bf.covariance, *pr, cfg)) < 4 * se + 2e-3


def test_monte_carlo_deterministic_csv(tiny, tmp_path):
    cfg, bf = tiny
    sampler = det.TargetSampler.from_config(cfg)
    paths = []
    for i in range(2):
        res = det.monte_carlo_pd(bf, sampler, 200, cfg, np.random.default_rng(7), crosscheck=20)
        p = tmp_path / f"h{i}.csv"
        res.write_csv(p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert paths[0].read_text().startswith("# schema: bayesbf-histogram v1\nbin_left,bin_right,count\n")
    assert res.crosscheck["trials"] == 20


def test_monte_carlo_rejects_zero_trials(tiny):
    cfg, bf = tiny
    with pytest.raises(ValueError):
        det.monte_carlo_pd(bf, det.TargetSampler.from_config(cfg), 0, cfg, np.random.default_rng(0))


def test_wilson_interval_brackets():
    lo, hi = det.wilson_interval(50, 100)
    assert lo < 0.5 < hi
    lo, hi = det.wilson_interval(0, 100)
    assert lo == pytest.approx(0.0, abs=1e-12) and hi > 0
