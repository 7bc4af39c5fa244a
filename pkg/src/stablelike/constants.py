"""Normalization constants shared by the kernels and the exact oracles."""

import math

SUPPORTED_DIMS = (1, 2, 3)


def sphere_area(d):
    """Surface area of the unit sphere in R^d, 2 pi^{d/2} / Gamma(d/2)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def stable_constant(d, alpha):
    """Levy density constant c so that c |h|^{-d-alpha} has symbol |xi|^alpha.

    c(d, alpha) = alpha 2^{alpha-1} Gamma((d+alpha)/2) / (pi^{d/2} Gamma(1-alpha/2)).
    For d = 1, alpha = 1 this is 1/pi (the standard Cauchy process).
    """
    return (alpha * 2.0 ** (alpha - 1.0) * math.gamma((d + alpha) / 2.0)
            / (math.pi ** (d / 2.0) * math.gamma(1.0 - alpha / 2.0)))


def default_kappa(c):
    """Tightest kappa in (0,1) with kappa <= c <= 1/kappa (capped just below 1)."""
    k = min(c, 1.0 / c)
    return min(k, 1.0 - 1e-12)
