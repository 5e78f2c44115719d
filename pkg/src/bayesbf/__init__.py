"""Bayesian ISAC transmit beamforming: expected detection probability under
angle and reflectivity uncertainty, maximised with SINR guarantees."""

from bayesbf.metrics import Beamformer, detection_probability, expected_pd, epd_gradient, pd_gradient
from bayesbf.optimizer import OptimizerSettings, baseline, sca_sdr, verify_beamformer
from bayesbf.scene import SceneConfig, build_priors, default_config, gen_channels, load_config

__version__ = "0.1.0"

__all__ = [
    "Beamformer",
    "OptimizerSettings",
    "SceneConfig",
    "baseline",
    "build_priors",
    "default_config",
    "detection_probability",
    "epd_gradient",
    "expected_pd",
    "gen_channels",
    "load_config",
    "pd_gradient",
    "sca_sdr",
    "verify_beamformer",
]
