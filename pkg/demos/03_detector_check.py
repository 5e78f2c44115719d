"""
Closed form versus simulated detection
======================================

The detection probability used by the optimiser assumes a coherent
detector.  Here we simulate that detector on echoes from the expected-SINR
beamformer and compare hit rates with the formula.  Then we look at the
spread of ``P_d`` over random targets drawn from the prior.
"""

import numpy as np

from bayesbf import detector, scene
from bayesbf.metrics import detection_probability, expected_pd
from bayesbf.optimizer import baseline

cfg = scene.default_config()
channels = scene.gen_channels(cfg)
priors = scene.build_priors(cfg)
bf = baseline("max_esinr", cfg, channels, priors)

pf, block_len, trials = 1e-2, 256, 20000
theta = np.deg2rad(cfg.target_prior.theta_mean_deg)
a = scene.steering_tx(theta, cfg.n_tx)
unit = np.sqrt(cfg.sense_noise / (block_len * cfg.n_rx * np.real(a.conj() @ bf.covariance @ a)))

print(f"P_fa = {pf}, L = {block_len}, {trials} trials per point")
print(f"{'|alpha|/unit':>12s} {'formula':>8s} {'simulated':>9s}  95% interval")
for scale in (1.0, 2.0, 2.5, 3.0, 4.0):
    p = detection_probability(scale * unit, theta, bf.covariance, cfg.replace(false_alarm=pf), block_len=block_len)
    rate = detector.detection_rate(bf, scale * unit, theta, pf, trials, block_len, cfg, seed=int(scale * 10))
    lo, hi = detector.wilson_interval(rate * trials, trials)
    print(f"{scale:12.1f} {p:8.4f} {rate:9.4f}  [{lo:.4f}, {hi:.4f}]")

fa = detector.detection_rate(bf, 0.0, theta, pf, trials, block_len, cfg, seed=99)
print(f"noise only: simulated false-alarm rate {fa:.4f}")

# %%
# Prior spread
# ------------
# ``P_d`` for single-snapshot detection of targets drawn from the prior.  The
# histogram mean should sit close to the quadrature value of EP_d.

res = detector.monte_carlo_pd(bf, detector.TargetSampler.from_config(cfg), 5000, cfg, np.random.default_rng(0))
print(f"\nMonte Carlo mean {res.mean:.4f}  vs quadrature EP_d {expected_pd(bf.covariance, *priors, cfg):.4f}")
width = 40 / max(res.counts.max(), 1)
for lo, hi, c in zip(res.edges[:-1], res.edges[1:], res.counts):
    print(f"  [{lo:.2f}, {hi:.2f})  {'#' * int(round(c * width))}")
