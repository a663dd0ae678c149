"""Deviation metrics and Monte Carlo summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


def rvd(W, W_dev) -> float:
    """Relative variation distance ``sum|W - W'| / sum|W|`` (complex modulus)."""
    W = np.asarray(W)
    W_dev = np.asarray(W_dev)
    if W.shape != W_dev.shape:
        raise ValueError(f"shape mismatch {W.shape} vs {W_dev.shape}")
    denom = np.abs(W).sum()
    if denom == 0:
        raise DomainError("RVD is undefined for an all-zero reference matrix")
    return float(np.abs(W - W_dev).sum() / denom)


@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    mean: float
    n: int

    @property
    def iqr(self):
        return self.q3 - self.q1


def box_stats(values) -> BoxStats:
    """Quartiles and Tukey whiskers (furthest points within 1.5 IQR of the box)."""
    v = np.asarray(values, float).ravel()
    if v.size == 0:
        raise ValueError("no values")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
    return BoxStats(float(med), float(q1), float(q3), float(inside.min()), float(inside.max()),
                    float(v.mean()), int(v.size))


def r_squared(x, y) -> float:
    """Coefficient of determination of the least-squares line ``y ~ a + b x``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least three (x, y) points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DomainError("R^2 is undefined for constant data")
    b, a = np.polyfit(x, y, 1)
    resid = y - (a + b * x)
    return float(1 - (resid @ resid) / ((y - y.mean()) @ (y - y.mean())))


def rvd_accuracy_correlation(points) -> float:
    """R^2 of accuracy against mean normalised RVD for ``(rvd, accuracy)`` pairs."""
    pts = np.asarray(points, float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected (rvd, accuracy) pairs")
    return r_squared(pts[:, 0], pts[:, 1])


@dataclass
class RvdReport:
    layer_rvd: list
    phase_shifters: int
    meta: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.layer_rvd))

    @property
    def normalized(self) -> float:
        """Mean per-layer RVD per phase shifter."""
        return self.mean / self.phase_shifters


def network_rvd(nominal, deviated, phase_shifters: int, **meta) -> RvdReport:
    return RvdReport([rvd(a, b) for a, b in zip(nominal, deviated)], phase_shifters, meta)
