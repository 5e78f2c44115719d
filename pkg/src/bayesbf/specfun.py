"""Special functions and discretized target priors.

The complementary error function and its inverse are thin wrappers over
``scipy.special`` with the domain checks the detection formulas rely on.
The discretizers turn the Gaussian angle prior and the Rayleigh amplitude
prior into equal-spacing, pdf-weighted quadrature rules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class DiscretizedPrior:
    """Quadrature rule for a scalar prior: ``E[f(X)] ~ sum(weights * f(nodes))``."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.atleast_1d(np.asarray(self.nodes, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-D arrays of equal length")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
        if nodes.size > 1 and np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.nodes.size

    def expect(self, values) -> float:
        return float(np.dot(self.weights, values))

    @classmethod
    def point_mass(cls, value: float) -> "DiscretizedPrior":
        return cls(np.array([float(value)]), np.array([1.0]))


def erfc(x):
    """Complementary error function, ``(2/sqrt(pi)) * int_x^inf exp(-t^2) dt``."""
    return special.erfc(x)


def erfc_inv(y):
    """Inverse of :func:`erfc` on the open interval (0, 2)."""
    arr = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 2.0):
        raise ValueError(f"erfc_inv is defined on (0, 2), got {y!r}")
    out = special.erfcinv(arr)
    return float(out) if out.ndim == 0 else out


def _normalize(pdf: np.ndarray) -> np.ndarray:
    w = pdf / pdf.sum()
    # renormalise once more so the sum is 1 to the last ulp
    return w / w.sum()


def discretize_gaussian(mean: float, std: float, m: int, trunc: float = 4.0) -> DiscretizedPrior:
    """Equally spaced nodes on ``mean +/- trunc*std`` weighted by the normal pdf.

    ``std == 0`` (or ``m == 1``) collapses to a point mass at ``mean``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if std < 0 or trunc <= 0:
        raise ValueError("std must be >= 0 and trunc > 0")
    if std == 0 or m == 1:
        return DiscretizedPrior.point_mass(mean)
    nodes = np.linspace(mean - trunc * std, mean + trunc * std, m)
    z = (nodes - mean) / std
    return DiscretizedPrior(nodes, _normalize(np.exp(-0.5 * z * z)))


def discretize_rayleigh(sigma: float, n: int, trunc: float = 6.0) -> DiscretizedPrior:
    """``n`` equally spaced nodes ending at ``trunc*sigma``, weighted by the Rayleigh pdf."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma <= 0 or trunc <= 0:
        raise ValueError("sigma and trunc must be > 0")
    nodes = np.arange(1, n + 1) * (trunc * sigma / n)
    pdf = nodes / sigma**2 * np.exp(-(nodes**2) / (2 * sigma**2))
    return DiscretizedPrior(nodes, _normalize(pdf))
