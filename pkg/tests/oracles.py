"""Independent reference computations used to freeze expected values.

Nothing here imports the package under test.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f, lo: float, hi: float, tol: float = 1e-13) -> tuple[float, float]:
    """Maximize a unimodal ``f`` on ``[lo, hi]`` by golden-section search."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    s = 0.5 * (a + b)
    return f(s), s


def radial_integral(g, upper: float = math.inf) -> float:
    """``int_0^upper g(r) 2 pi r dr`` by adaptive quadrature."""
    val, _ = quad(lambda r: g(r) * 2.0 * math.pi * r, 0.0, upper, epsabs=1e-14, epsrel=1e-13, limit=400)
    return val


def gaussian_functionals(amp: float, sigma: float, m: int = 0) -> dict:
    """Continuum functionals of ``amp (r/sigma)^|m| exp(-r^2/(2 sigma^2))`` in the plane."""
    am = abs(m)
    f = lambda r: amp * (r / sigma) ** am * math.exp(-r * r / (2 * sigma * sigma))
    df = lambda r: f(r) * ((am / r if r > 0 else 0.0) - r / (sigma * sigma))
    out = {
        "mass": radial_integral(lambda r: f(r) ** 2),
        "grad": radial_integral(lambda r: df(r) ** 2),
        "l4": radial_integral(lambda r: f(r) ** 4),
        "l5": radial_integral(lambda r: abs(f(r)) ** 5),
        "variance": radial_integral(lambda r: r * r * f(r) ** 2),
    }
    out["cent"] = 0.0 if am == 0 else radial_integral(lambda r: f(r) ** 2 / (r * r))
    return out


def townes_mass(n: int = 256, L: float = 40.0, gamma: float = 1.5, tol: float = 1e-12, max_iter: int = 2000) -> float:
    """``||Q_0||^2`` via the Townes profile ``Delta R - R + R^3 = 0``.

    Petviashvili iteration on a periodic box; ``Q(x) = R(sqrt(2) x)`` so
    ``||Q_0||^2 = ||R||^2 / 2``.
    """
    x = (np.arange(n) - n // 2) * (L / n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    k = 2 * np.pi * np.fft.fftfreq(n, d=L / n)
    KX, KY = np.meshgrid(k, k, indexing="ij")
    sym = 1.0 + KX**2 + KY**2
    R = 2.0 * np.exp(-(X**2 + Y**2))
    for _ in range(max_iter):
        rh = np.fft.fft2(R)
        nh = np.fft.fft2(R**3)
        s = np.sum(sym * np.abs(rh) ** 2) / np.sum(np.conj(rh) * nh).real
        new = np.fft.ifft2(s**gamma * nh / sym).real
        if np.max(np.abs(new - R)) < tol:
            R = new
            break
        R = new
    return float(np.sum(R**2) * (L / n) ** 2 / 2.0)


def free_gaussian(amp: float, X: np.ndarray, Y: np.ndarray, t: float) -> np.ndarray:
    """Exact solution of ``i u_t + (1/2) Delta u = 0`` from ``amp exp(-r^2/2)``."""
    z = 1.0 + 1j * t
    return amp / z * np.exp(-(X**2 + Y**2) / (2.0 * z))


def free_gaussian_variance(amp: float, t: float) -> float:
    """``int |x|^2 |u|^2`` for :func:`free_gaussian`: ``M (1 + t^2)`` with ``M = pi amp^2``."""
    return math.pi * amp * amp * (1.0 + t * t)


def pohozaev_combination(d: int) -> tuple[float, float]:
    """Coefficients ``(a, b)`` with third balance ``= a * first + b * second``.

    Solved from the (Hdot, L4, L5, omega M) coefficient vectors by least squares.
    """
    first = np.array([0.5, -1.0, 1.0, 1.0])
    second = np.array([(d - 2) / (4 * d), -0.25, 0.2, 0.5])
    third = np.array([(10 - 3 * d) / 2, d / 2, 0.0, -3.0 * d])
    coef, *_ = np.linalg.lstsq(np.stack([first, second], axis=1), third, rcond=None)
    return float(coef[0]), float(coef[1])


def gn3d_prefactor() -> float:
    """Prefactor ``c`` in ``rho* = (c / K)^{5/2}`` by direct 1D minimization.

    With ``x = ||psi||^2_{Hdot}``, ``y = ||psi||_5^5`` and the GN bound the energy
    is at least ``x/2 + 2y/5 - (K/2) rho^{2/5} x^{3/5} y^{2/5}``; this is
    homogeneous of degree one, so it is non-negative iff
    ``K rho^{2/5} <= 2 min_t (1/2 + 2t/5) t^{-2/5}``.
    """
    val, _ = golden_max(lambda t: -(0.5 + 0.4 * t) * t**-0.4, 1e-6, 50.0)
    return -2.0 * val
