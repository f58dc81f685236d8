"""High-precision reference values used by the tests."""
import mpmath as mp


def _nodes(lo, hi, scale):
    """Integration breakpoints refined near ``lo`` where the density decays fastest."""
    pts = [lo]
    step = scale
    while pts[-1] + step < hi:
        pts.append(pts[-1] + step)
        step *= 2
    pts.append(hi)
    return pts


def _log_mass(lo, hi):
    """log of the standard normal density integral over [lo, hi], for lo > 0.

    The integrand is normalized to 1 at ``lo`` so the quadrature works on O(1)
    values; mpmath's tolerance is absolute and would accept any tiny integral.
    """
    f = lambda t: mp.exp(-(t - lo) * (t + lo) / 2)
    return mp.log(mp.quad(f, _nodes(lo, hi, 1 / max(lo, mp.mpf(1)) / 4))) - lo * lo / 2


def _standardized(x, nu, tau2, a, b):
    tau = mp.sqrt(tau2)
    return [(mp.mpf(v) - nu) / tau for v in (x, a, b)]


def trunc_cdf_quad(x, nu, tau2, a, b, dps=40):
    """Truncated normal CDF by quadrature of the density (interval right of the mean)."""
    with mp.workdps(dps):
        xs, as_, bs = _standardized(x, nu, tau2, a, b)
        if xs <= as_:
            return mp.mpf(0)
        if xs >= bs:
            return mp.mpf(1)
        return mp.exp(_log_mass(as_, xs) - _log_mass(as_, bs))


def trunc_sf_quad(x, nu, tau2, a, b, dps=40):
    """Upper tail ``1 - F`` by quadrature over [x, b], so it keeps its own digits."""
    with mp.workdps(dps):
        xs, as_, bs = _standardized(x, nu, tau2, a, b)
        if xs >= bs:
            return mp.mpf(0)
        if xs <= as_:
            return mp.mpf(1)
        return mp.exp(_log_mass(xs, bs) - _log_mass(as_, bs))


def trunc_cdf_erfc(x, nu, tau2, a, b, dps=60):
    with mp.workdps(dps):
        tau = mp.sqrt(tau2)
        z = lambda v: ((mp.mpf(v) - nu) / tau) / mp.sqrt(2)
        if mp.mpf(a) + b >= 2 * nu:
            # upper tails avoid cancellation on the right
            q = lambda v: mp.erfc(z(v)) / 2
            return (q(a) - q(x)) / (q(a) - q(b))
        p = lambda v: mp.erfc(-z(v)) / 2
        return (p(x) - p(a)) / (p(b) - p(a))


def trunc_sf_erfc(x, nu, tau2, a, b, dps=60):
    return trunc_cdf_erfc(-x, -nu, tau2, -b, -a, dps)
