"""Exact references for the standard symmetric stable process.

All references share the normalization E exp(i xi X_t) = exp(-t |xi|^alpha),
the same one pinned by :func:`stablelike.constants.stable_constant`.
"""

from dataclasses import dataclass
import math

import numpy as np

from .constants import SUPPORTED_DIMS
from .errors import DomainError, PreconditionError

MIN_KS_SAMPLES = 25


@dataclass(frozen=True)
class OracleReport:
    statistic: float
    critical_value: float
    passed: bool
    n_a: int
    n_b: int

    def to_dict(self):
        return {"statistic": self.statistic, "critical_value": self.critical_value,
                "pass": self.passed, "n_a": self.n_a, "n_b": self.n_b}


def getoor_constant(d, alpha):
    return math.gamma(d / 2) / (2.0 ** alpha * math.gamma(1 + alpha / 2)
                                * math.gamma((d + alpha) / 2))


def getoor_exit_mean(d, alpha, r, x):
    """Mean exit time from ball(0, r) of the standard isotropic stable process."""
    if d not in SUPPORTED_DIMS:
        raise DomainError(f"dimension {d} not supported")
    if not 0 < alpha < 2:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.size != d:
        raise DomainError(f"point has {x.size} coordinates, expected {d}")
    gap = r * r - float(np.dot(x, x))
    if gap < 0:
        raise DomainError("start point lies outside the ball")
    return getoor_constant(d, alpha) * gap ** (alpha / 2)


def _check_alpha(alpha):
    if not 0 < alpha < 2:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")


def cms_symmetric(alpha, v, w):
    """Chambers-Mallows-Stuck map for the symmetric case.

    v uniform on (-pi/2, pi/2), w standard exponential.
    """
    if alpha == 1.0:
        return np.tan(v)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


def positive_stable(a, u, w):
    """Kanter's representation: Laplace transform exp(-s^a), 0 < a < 1.

    u uniform on (0, pi), w standard exponential.
    """
    return (np.sin(a * u) / np.sin(u) ** (1.0 / a)
            * (np.sin((1.0 - a) * u) / w) ** ((1.0 - a) / a))


def stable_increment(alpha, t, rng_stream, d=1, size=None):
    """Increment over time t of the standard symmetric alpha-stable process.

    d = 1 uses Chambers-Mallows-Stuck. For d >= 2 the isotropic law is
    sqrt(A) * G with G ~ N(0, 2 I) and A positive (alpha/2)-stable.
    Returns shape (d,) for size None, else (size, d).
    """
    _check_alpha(alpha)
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    if d not in SUPPORTED_DIMS:
        raise DomainError(f"dimension {d} not supported")
    n = 1 if size is None else int(size)
    scale = t ** (1.0 / alpha)
    if d == 1:
        v = math.pi * (rng_stream.uniforms(n) - 0.5)
        w = rng_stream.exponentials(n)
        x = cms_symmetric(alpha, v, w)[:, None]
    else:
        u = math.pi * rng_stream.uniforms(n)
        w = rng_stream.exponentials(n)
        a = positive_stable(alpha / 2, u, w)
        g = math.sqrt(2.0) * rng_stream.normals(n * d).reshape(n, d)
        x = np.sqrt(a)[:, None] * g
    x = scale * x
    return x[0] if size is None else x


def ks_statistic(a, b):
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical_value(n_a, n_b, significance):
    c = math.sqrt(-0.5 * math.log(significance / 2.0))
    return c * math.sqrt((n_a + n_b) / (n_a * n_b))


def ks_two_sample(a, b, significance=0.01):
    """Two-sample Kolmogorov-Smirnov test with the asymptotic critical value."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < MIN_KS_SAMPLES or b.size < MIN_KS_SAMPLES:
        raise PreconditionError(
            f"need at least {MIN_KS_SAMPLES} samples per side, got {a.size} and {b.size}")
    if not 0 < significance < 1:
        raise DomainError("significance must lie in (0, 1)")
    stat = ks_statistic(a, b)
    crit = ks_critical_value(a.size, b.size, significance)
    return OracleReport(stat, crit, stat < crit, int(a.size), int(b.size))
