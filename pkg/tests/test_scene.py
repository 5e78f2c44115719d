import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bayesbf import scene
from bayesbf.scene import ConfigError


@given(st.floats(-60, 60))
def test_dbm_roundtrip(p):
    assert scene.watts_to_dbm(scene.dbm_to_watts(p)) == pytest.approx(p, abs=1e-9)


def test_unit_anchors(cfg):
    assert scene.dbm_to_watts(30.0) == pytest.approx(1.0)
    assert cfg.power_budget == pytest.approx(0.1)
    assert cfg.sense_noise == pytest.approx(3.981e-13, rel=1e-3)
    assert cfg.comm_noise == pytest.approx(10 ** (-12.4), rel=1e-12)


@given(st.floats(-np.pi / 2, np.pi / 2), st.integers(1, 32))
def test_steering_unit_modulus(theta, n):
    a = scene.steering_vector(theta, n)
    assert a.shape == (n,)
    np.testing.assert_allclose(np.abs(a), 1.0)
    assert a[0] == 1.0


def test_steering_broadside_and_batch():
    np.testing.assert_allclose(scene.steering_vector(0.0, 8), np.ones(8))
    a = scene.steering_vector(np.array([0.1, -0.4]), 5)
    assert a.shape == (2, 5)
    np.testing.assert_allclose(a[1], scene.steering_vector(-0.4, 5))


def test_f_matrix_is_scaled_outer_product(cfg):
    f = scene.target_f_matrix(0.2, cfg)
    a = scene.steering_tx(0.2, cfg.n_tx)
    np.testing.assert_allclose(f, cfg.n_rx * np.outer(a, a.conj()))
    assert np.linalg.matrix_rank(f) == 1


def test_pathloss_value(cfg):
    lam = scene.SPEED_OF_LIGHT / 2.4e9
    expect = -20 * np.log10(lam / (4 * np.pi)) + 22 * np.log10(200.0)
    assert scene.pathloss_db(200.0, cfg) == pytest.approx(expect)
    assert scene.pathloss_db(200.0, cfg) == pytest.approx(90.67, abs=0.01)


def test_alpha_sigma_from_radar_equation(cfg):
    lam = cfg.wavelength_m
    expect = np.sqrt(2 / np.pi * lam**2 * 2.0 / ((4 * np.pi) ** 3 * 30.0**4))
    assert cfg.alpha_sigma == pytest.approx(expect, rel=1e-12)
    assert cfg.alpha_sigma == pytest.approx(3.5e-6, rel=0.01)
    assert scene.rayleigh_scale_from_rcs(2.0, 300.0, lam) == pytest.approx(cfg.alpha_sigma / 100, rel=1e-12)
    assert scene.rayleigh_scale_from_rcs(0.0, 30.0, lam) == 0.0


def test_channel_statistics(cfg):
    # mean power per entry equals the large-scale gain; LoS share kappa/(kappa+1)
    rng = np.random.default_rng(5)
    draws = np.array([scene.gen_channel(cfg, 0, rng) for _ in range(4000)])
    eta = 10 ** (-scene.pathloss_db(200.0, cfg) / 10)
    assert np.mean(np.abs(draws) ** 2) == pytest.approx(eta, rel=0.03)
    los = np.abs(draws.mean(axis=0)) ** 2
    assert np.mean(los) == pytest.approx(eta * 4 / 5, rel=0.05)


def test_channels_deterministic(cfg):
    np.testing.assert_array_equal(scene.gen_channels(cfg), scene.gen_channels(cfg))
    assert not np.allclose(scene.gen_channels(cfg), scene.gen_channels(cfg.replace(rng_seed=1)))


def test_priors_shape(cfg, priors):
    pt, pa = priors
    assert len(pt.nodes) == cfg.target_prior.grid_m
    assert len(pa.nodes) == cfg.target_prior.grid_n
    assert pt.expect(pt.nodes) == pytest.approx(0.0, abs=1e-12)


def test_toml_roundtrip(tmp_path, cfg):
    path = tmp_path / "c.toml"
    path.write_text(scene.dump_config(cfg, {"optimizer": {"max_iters": 7}}))
    loaded, extras = scene.load_config(path)
    assert loaded == cfg
    assert extras == {"optimizer": {"max_iters": 7}}


@pytest.mark.parametrize(
    "bad",
    [{"n_tx": 0}, {"false_alarm": 1.5}, {"bogus": 1}, {"target_prior": {"theta_std_deg": -1}}, {"rician_kappa": -1}],
)
def test_invalid_config(bad):
    with pytest.raises(ConfigError):
        scene.config_from_dict(bad)


def test_bad_toml(tmp_path):
    path = tmp_path / "x.toml"
    path.write_text("n_tx = [")
    with pytest.raises(ConfigError):
        scene.load_config(path)
