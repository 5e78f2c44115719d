"""Physical scenario: arrays, target response, user channels and configuration.

Arrays are half-wavelength uniform linear arrays with the phase reference at
element 0.  Angles are given in degrees at the configuration boundary and in
radians everywhere else; powers are stored in watts internally.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib as tomli
except ImportError:  # Python < 3.11
    import tomli

from bayesbf.specfun import DiscretizedPrior, discretize_gaussian, discretize_rayleigh

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised for malformed or out-of-range configuration values."""


def dbm_to_watts(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float)) + 30.0


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def rayleigh_scale_from_rcs(rcs: float, range_m: float, wavelength_m: float) -> float:
    """Rayleigh scale of ``|alpha|`` from the radar equation for a point target.

    ``sqrt((2/pi) * lambda^2 * rcs / ((4 pi)^3 * range^4))``
    """
    if rcs < 0 or range_m <= 0 or wavelength_m <= 0:
        raise ValueError("rcs must be >= 0, range and wavelength > 0")
    return float(np.sqrt((2.0 / np.pi) * wavelength_m**2 * rcs / ((4 * np.pi) ** 3 * range_m**4)))


def steering_vector(theta_rad, n: int) -> np.ndarray:
    """ULA response ``exp(j*pi*i*sin(theta))``, i = 0..n-1.

    A scalar angle gives a length-``n`` vector; an array of angles gives an
    ``(n_angles, n)`` matrix with one steering vector per row.
    """
    if n < 1:
        raise ValueError("array size must be >= 1")
    theta = np.asarray(theta_rad, dtype=float)
    phase = np.pi * np.multiply.outer(np.sin(theta), np.arange(n))
    return np.exp(1j * phase)


def steering_tx(theta_rad, n_tx: int) -> np.ndarray:
    return steering_vector(theta_rad, n_tx)


def steering_rx(theta_rad, n_rx: int) -> np.ndarray:
    return steering_vector(theta_rad, n_rx)


@dataclass
class UserConfig:
    angle_deg: float
    distance_m: float


@dataclass
class TargetPriorConfig:
    """Gaussian azimuth prior and Rayleigh amplitude prior.

    ``alpha_sigma`` overrides the radar-equation value derived from
    ``rcs``/``range_m``.  The default angle spread treats the "N(0, 10)"
    prior as a variance of 10 deg^2, i.e. a standard deviation of sqrt(10).
    """

    theta_mean_deg: float = 0.0
    theta_std_deg: float = float(np.sqrt(10.0))
    alpha_sigma: float | None = None
    rcs: float = 2.0
    range_m: float = 30.0
    grid_m: int = 61
    grid_n: int = 81
    theta_truncation: float = 4.0
    alpha_truncation: float = 6.0


@dataclass
class SceneConfig:
    n_tx: int = 16
    n_rx: int = 16
    carrier_hz: float = 2.4e9
    total_power_dbm: float = 20.0
    comm_noise_dbm: float = -94.0
    sense_noise_dbm: float = -94.0
    users: list[UserConfig] = field(
        default_factory=lambda: [UserConfig(-45.0, 200.0), UserConfig(45.0, 200.0)]
    )
    rician_kappa: float = 4.0
    pathloss_exponent: float = 2.2
    reference_distance_m: float = 1.0
    sinr_threshold_db: float = 24.0
    false_alarm: float = 1e-6
    target_prior: TargetPriorConfig = field(default_factory=TargetPriorConfig)
    rng_seed: int = 0

    def __post_init__(self):
        self.users = [u if isinstance(u, UserConfig) else UserConfig(**u) for u in self.users]
        if isinstance(self.target_prior, dict):
            self.target_prior = TargetPriorConfig(**self.target_prior)
        self.validate()

    def validate(self) -> None:
        tp = self.target_prior
        checks = [
            (self.n_tx >= 1 and self.n_rx >= 1, "n_tx and n_rx must be >= 1"),
            (self.carrier_hz > 0, "carrier_hz must be > 0"),
            (all(u.distance_m > 0 for u in self.users), "user distances must be > 0"),
            (self.reference_distance_m > 0, "reference_distance_m must be > 0"),
            (0 < self.false_alarm < 1, "false_alarm must lie in (0, 1)"),
            (self.rician_kappa >= 0, "rician_kappa must be >= 0"),
            (np.isfinite(self.sinr_threshold_db), "sinr_threshold_db must be finite"),
            (np.isfinite(self.total_power_dbm), "total_power_dbm must be finite"),
            (tp.grid_m >= 1 and tp.grid_n >= 1, "prior grid sizes must be >= 1"),
            (tp.theta_std_deg >= 0, "theta_std_deg must be >= 0"),
            (tp.range_m > 0, "target range_m must be > 0"),
            (tp.theta_truncation > 0 and tp.alpha_truncation > 0, "truncations must be > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        if self.alpha_sigma <= 0:
            raise ConfigError("alpha_sigma must be > 0")

    # derived quantities, all in linear units
    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def power_budget(self) -> float:
        return float(dbm_to_watts(self.total_power_dbm))

    @property
    def comm_noise(self) -> float:
        return float(dbm_to_watts(self.comm_noise_dbm))

    @property
    def sense_noise(self) -> float:
        return float(dbm_to_watts(self.sense_noise_dbm))

    @property
    def sinr_threshold(self) -> float:
        return float(db_to_linear(self.sinr_threshold_db))

    @property
    def alpha_sigma(self) -> float:
        tp = self.target_prior
        if tp.alpha_sigma is not None:
            return float(tp.alpha_sigma)
        return rayleigh_scale_from_rcs(tp.rcs, tp.range_m, self.wavelength_m)

    def replace(self, **changes) -> "SceneConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["target_prior"]["alpha_sigma"] is None:
            del d["target_prior"]["alpha_sigma"]
        return d


def default_config() -> SceneConfig:
    return SceneConfig()


def config_from_dict(data: dict) -> SceneConfig:
    known = {f.name for f in dataclasses.fields(SceneConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        users = [UserConfig(**u) for u in data.get("users", [])] if "users" in data else None
        prior = TargetPriorConfig(**data["target_prior"]) if "target_prior" in data else None
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    kwargs = {k: v for k, v in data.items() if k not in ("users", "target_prior")}
    if users is not None:
        kwargs["users"] = users
    if prior is not None:
        kwargs["target_prior"] = prior
    try:
        return SceneConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> tuple[SceneConfig, dict]:
    """Read a TOML config.  Returns the scene and any extra top-level tables.

    The extra tables (``[optimizer]``, ``[detector]``) are returned untouched
    so callers can build their own settings from them.
    """
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    extras = {k: data.pop(k) for k in ("optimizer", "detector") if k in data}
    return config_from_dict(data), extras


def dump_config(cfg: SceneConfig, extras: dict | None = None) -> str:
    d = cfg.to_dict()
    if extras:
        d.update(extras)
    return tomli_w.dumps(d)


def target_f_matrix(theta_rad: float, cfg: SceneConfig) -> np.ndarray:
    """``A(theta)^H A(theta) = N_r a(theta) a(theta)^H`` for ``A = b a^H``."""
    a = steering_tx(theta_rad, cfg.n_tx)
    return cfg.n_rx * np.outer(a, a.conj())


def pathloss_db(distance_m: float, cfg: SceneConfig) -> float:
    lam = cfg.wavelength_m
    d0 = cfg.reference_distance_m
    return float(
        -20.0 * np.log10(lam / (4 * np.pi * d0))
        + 10.0 * cfg.pathloss_exponent * np.log10(distance_m / d0)
    )


def gen_channel(cfg: SceneConfig, user_index: int, rng: np.random.Generator) -> np.ndarray:
    """Row channel ``h_k^H`` (length N_t) under log-distance path loss and Rician fading."""
    user = cfg.users[user_index]
    eta = 10.0 ** (-pathloss_db(user.distance_m, cfg) / 10.0)
    kappa = cfg.rician_kappa
    los = steering_tx(np.deg2rad(user.angle_deg), cfg.n_tx).conj()
    nlos = (rng.standard_normal(cfg.n_tx) + 1j * rng.standard_normal(cfg.n_tx)) / np.sqrt(2.0)
    if np.isinf(kappa):
        small = los
    else:
        small = np.sqrt(kappa / (kappa + 1.0)) * los + np.sqrt(1.0 / (kappa + 1.0)) * nlos
    return np.sqrt(eta) * small


def gen_channels(cfg: SceneConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """All user channels as a ``(K, N_t)`` matrix whose rows are ``h_k^H``.

    Without an explicit generator one is seeded from ``cfg.rng_seed``, so the
    same config always yields the same channels.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    rows = [gen_channel(cfg, k, rng) for k in range(cfg.n_users)]
    return np.array(rows, dtype=complex).reshape(cfg.n_users, cfg.n_tx)


def build_priors(cfg: SceneConfig) -> tuple[DiscretizedPrior, DiscretizedPrior]:
    """Discretized (theta in radians, |alpha|) priors for the configured target."""
    tp = cfg.target_prior
    theta = discretize_gaussian(
        np.deg2rad(tp.theta_mean_deg), np.deg2rad(tp.theta_std_deg), tp.grid_m, tp.theta_truncation
    )
    alpha = discretize_rayleigh(cfg.alpha_sigma, tp.grid_n, tp.alpha_truncation)
    return theta, alpha
