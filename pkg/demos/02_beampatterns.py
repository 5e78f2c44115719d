"""
Where does the power go?
========================

Transmit beampatterns ``a(theta)^H R a(theta)`` of every design.  The
proposed beamformer spreads its main lobe over the angle prior rather than
pointing only at the mean.  Saves ``beampatterns.png`` when matplotlib is
installed and prints a coarse table either way.
"""

import numpy as np

from bayesbf import scene
from bayesbf.metrics import beampattern, half_power_beamwidth
from bayesbf.optimizer import OptimizerSettings, baseline, sca_sdr

cfg = scene.default_config()
channels = scene.gen_channels(cfg)
priors = scene.build_priors(cfg)

designs = {kind: baseline(kind, cfg, channels, priors) for kind in ("max_sinr_0deg", "max_esinr", "omni")}
designs["proposed"], _ = sca_sdr(cfg, channels, priors, OptimizerSettings(max_iters=200))

angles = np.arange(-90, 90.25, 0.5)
patterns = {k: beampattern(d.covariance, np.deg2rad(angles)) for k, d in designs.items()}

print(f"{'angle':>6s} " + " ".join(f"{k:>14s}" for k in patterns))
for ang in (-60, -30, -10, -5, 0, 5, 10, 30, 60):
    i = int(np.argmin(np.abs(angles - ang)))
    print(f"{ang:6.0f} " + " ".join(f"{10 * np.log10(p[i] + 1e-30):14.2f}" for p in patterns.values()))
print("(10 log10 of a^H R a)")

for k, p in patterns.items():
    print(f"{k:>14s}: peak at {angles[np.argmax(p)]:5.1f} deg, half-power width {half_power_beamwidth(p, angles):5.1f} deg")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, ax = plt.subplots(figsize=(7, 4))
    for k, p in patterns.items():
        ax.plot(angles, 10 * np.log10(p + 1e-30), label=k)
    mu, sd = cfg.target_prior.theta_mean_deg, cfg.target_prior.theta_std_deg
    ax.axvspan(mu - 2 * sd, mu + 2 * sd, color="0.9", zorder=0)
    for u in cfg.users:
        ax.axvline(u.angle_deg, color="0.5", ls=":")
    ax.set_xlabel("angle (deg)")
    ax.set_ylabel("gain (dB)")
    ax.set_ylim(bottom=-40)
    ax.legend()
    fig.tight_layout()
    fig.savefig("beampatterns.png", dpi=120)
    print("wrote beampatterns.png")
