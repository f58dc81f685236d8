"""CDF of a Gaussian truncated to an interval, stable far in the tails.

Tail ratios of the survival function Q are formed as

    Q(u) / Q(v) = exp(-(u - v)(u + v) / 2) * erfcx(u/sqrt2) / erfcx(v/sqrt2),

so intervals lying 40 standard deviations out, where both Q values underflow,
still give full relative precision.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erfcx, ndtr

from .errors import DegenerateTruncation, InvalidInput

_SQRT2 = math.sqrt(2.0)


def _log_tail_ratio(u: float, v: float) -> float:
    """log(Q(u) / Q(v)) for 0 <= v <= u (u may be +inf)."""
    if u == math.inf:
        return -math.inf
    return -0.5 * (u - v) * (u + v) + math.log(erfcx(u / _SQRT2) / erfcx(v / _SQRT2))


def _right_tail_cdf(x: float, a: float, b: float):
    """(F, 1 - F) on [a, b] with 0 <= a, each without cancellation."""
    lx = _log_tail_ratio(x, a)
    lb = _log_tail_ratio(b, a)
    den = -math.expm1(lb)
    cdf = -math.expm1(lx) / den
    # Q(x)/Q(a) - Q(b)/Q(a) = exp(lx) * (1 - exp(lb - lx))
    sf = math.exp(lx) * -math.expm1(lb - lx) / den
    return cdf, sf


def _standard_tails(x: float, a: float, b: float):
    """(F, 1 - F) of the standard normal truncated to [a, b], each to full precision."""
    if x <= a:
        return 0.0, 1.0
    if x >= b:
        return 1.0, 0.0
    if a >= 0:
        return _right_tail_cdf(x, a, b)
    if b <= 0:
        # mirror: X -> -X maps [a, b] to [-b, -a]
        sf, cdf = _right_tail_cdf(-x, -b, -a)
        return cdf, sf
    # interval straddles 0; each half is computed without cancellation
    den = (0.5 - ndtr(a)) + (0.5 - ndtr(-b))
    return (ndtr(x) - ndtr(a)) / den, (ndtr(-x) - ndtr(-b)) / den


def trunc_gauss_tails(x: float, nu: float, tau2: float, a: float, b: float):
    """Lower and upper tail probabilities at ``x`` of N(nu, tau2) truncated to ``[a, b]``.

    Both are accurate in relative terms, so ``1 - F`` keeps its digits when
    ``F`` rounds to 1.
    """
    if not tau2 > 0:
        raise InvalidInput("tau2 must be positive")
    if not a < b:
        raise DegenerateTruncation(f"empty truncation interval [{a}, {b}]")
    tau = math.sqrt(tau2)
    xs = (x - nu) / tau
    a_s = (a - nu) / tau
    b_s = (b - nu) / tau
    if not a_s < b_s:
        raise DegenerateTruncation(f"interval [{a}, {b}] collapses after standardization")
    cdf, sf = _standard_tails(xs, a_s, b_s)
    return float(min(1.0, max(0.0, cdf))), float(min(1.0, max(0.0, sf)))


def trunc_gauss_cdf(x: float, nu: float, tau2: float, a: float, b: float) -> float:
    """CDF at ``x`` of N(nu, tau2) truncated to ``[a, b]`` (ends may be infinite)."""
    return trunc_gauss_tails(x, nu, tau2, a, b)[0]


def trunc_gauss_sf(x: float, nu: float, tau2: float, a: float, b: float) -> float:
    """Survival function ``1 - F`` without cancellation."""
    return trunc_gauss_tails(x, nu, tau2, a, b)[1]


def trunc_gauss_cdf_naive(x, nu, tau2, a, b):
    """Textbook Phi-difference formula; loses all precision in far tails."""
    tau = np.sqrt(tau2)
    Fa, Fb, Fx = ndtr((a - nu) / tau), ndtr((b - nu) / tau), ndtr((x - nu) / tau)
    return (Fx - Fa) / (Fb - Fa)
