"""Reference values computed without the package's own code paths.

Radial profiles are integrated by quadrature of ``g' = (f')^{-1}`` obtained
by root finding on ``f'``; Cheeger constants come from closed-form geometry.
"""

import numpy as np
from scipy import integrate, optimize


def fprime_power(p):
    return lambda s: s ** (p - 1)


def fprime_plateau(sigma, q):
    return lambda s: 0.0 if s <= sigma else (s - sigma) ** (q - 1)


def fprime_lpp(a, p):
    return lambda s: a + s ** (p - 1)


def inverse(fp, t, lo=0.0):
    """Largest ``s`` with ``fp(s) <= t`` for nondecreasing ``fp`` (``g'(t)``)."""
    if fp(lo + 1e-300) > t:
        return 0.0
    hi = 1.0
    while fp(hi) <= t:
        hi *= 2
    return optimize.brentq(lambda s: fp(s) - t, lo, hi, xtol=1e-15, rtol=1e-14) if fp(lo) < t else lo


def gprime_plateau(sigma, q, t):
    # f' vanishes on [0, sigma]; its generalized inverse jumps to sigma at t = 0+
    if t <= 0:
        return 0.0
    return sigma + t ** (1 / (q - 1))


def radial_u(gp, R, N, r):
    """``int_r^R g'(s/N) ds`` by adaptive quadrature."""
    val, _ = integrate.quad(lambda s: gp(s / N), r, R, epsabs=1e-13, epsrel=1e-13, limit=400)
    return val


def torsion(x, y, R=1.0):
    return (R * R - x * x - y * y) / 4.0


def cheeger_disk(R):
    return 2.0 / R


def cheeger_square_from_quadratic(L=1.0):
    """Largest root ``1/r`` of ``(4 - pi) r^2 - 4 r + 1 = 0`` scaled by ``1/L``."""
    roots = np.roots([4 - np.pi, -4.0, 1.0])
    r = float(np.min(roots[roots > 0]))
    return 1.0 / (r * L)


def lpp_max_u(a, R=1.0, N=2):
    """``u_R(0)`` for ``f(s) = a s + s^2/2``: ``int_{N a}^{R} (s/N - a) ds``."""
    lo = N * a
    if lo >= R:
        return 0.0
    return integrate.quad(lambda s: s / N - a, lo, R)[0]


def ellipse_normal_radius(a, b):
    """Radius of curvature ``b^2/a`` at the end of the major axis."""
    return b * b / a
