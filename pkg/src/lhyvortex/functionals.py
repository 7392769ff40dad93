"""Norms, energies and conserved quantities of discrete fields."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .geometry import GeometryError, Grid, GridKind, WaveField, field_mass, weighted_sum
from .operators import gradient_norm_sq, spectral_gradient

#: Peter-Paul parameter used in the energy lower bound.
PETER_PAUL_EPS = 0.8
#: Tolerance on the imaginary part of <u, L_z u> before it is treated as a bug.
HERMITICITY_TOL = 1e-8


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    centrifugal: float
    quartic: float
    quintic: float

    @property
    def total(self) -> float:
        return math.fsum((self.kinetic, self.centrifugal, self.quartic, self.quintic))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d


@dataclass(frozen=True)
class ConservedScalars:
    mass: float
    momentum: tuple[float, float]
    angular_momentum: float
    variance: float


def mass(field: WaveField) -> float:
    return field_mass(field)


def grad_norm_sq(field: WaveField) -> float:
    """``||grad u||^2`` without the angular ``m^2/r^2`` contribution."""
    return gradient_norm_sq(field.grid, field.values)


def centrifugal(field: WaveField, m: int | None = None) -> float:
    """``(m^2/2) int |u|^2 / r^2``; radial and cylindrical grids only."""
    grid = field.grid
    if not grid.is_radial:
        raise GeometryError("centrifugal term is only defined on Radial2D/Cylindrical3D grids")
    m = field.m if m is None else m
    if m == 0:
        return 0.0
    return 0.5 * m * m * weighted_sum(grid.weights, np.abs(field.values) ** 2 / grid.radius**2)


def lebesgue(field: WaveField, p: float) -> float:
    """``int |u|^p`` (the p-th power of the L^p norm)."""
    return weighted_sum(field.grid.weights, np.abs(field.values) ** p)


def hdot_norm_sq(field: WaveField, m: int | None = None) -> float:
    """``||u||^2`` in the homogeneous vortex space: gradient plus ``m^2 int |u|^2/r^2``.

    On Cartesian grids this is just the gradient norm.
    """
    g = grad_norm_sq(field)
    if field.grid.is_radial:
        g += 2.0 * centrifugal(field, m)
    return g


def h1_norm_sq(field: WaveField, m: int | None = None) -> float:
    return hdot_norm_sq(field, m) + mass(field)


def energy(field: WaveField, m: int | None = None, include_potential: bool = True) -> EnergyBreakdown:
    """Energy parts. On radial grids ``include_potential`` adds the centrifugal term of the vortex energy."""
    grid = field.grid
    if include_potential and not grid.is_radial and (m or 0) != 0:
        raise GeometryError("the centrifugal term needs a radial geometry (or m = 0)")
    cent = centrifugal(field, m) if (include_potential and grid.is_radial) else 0.0
    absu = np.abs(field.values)
    u2 = absu * absu
    return EnergyBreakdown(
        kinetic=0.5 * grad_norm_sq(field),
        centrifugal=cent,
        quartic=-0.5 * weighted_sum(grid.weights, u2 * u2),
        quintic=0.4 * weighted_sum(grid.weights, u2 * u2 * absu),
    )


def momentum(field: WaveField) -> tuple[float, float]:
    grid = field.grid
    if grid.kind is not GridKind.CARTESIAN_2D:
        raise GeometryError("momentum is evaluated on Cartesian2D grids only (it vanishes by symmetry otherwise)")
    ux, uy = spectral_gradient(grid, field.values)
    conj = np.conj(field.values)
    return (
        weighted_sum(grid.weights, (conj * ux).imag),
        weighted_sum(grid.weights, (conj * uy).imag),
    )


def apply_lz(grid: Grid, values: np.ndarray) -> np.ndarray:
    """``L_z u = i (x1 d_2 u - x2 d_1 u)`` with spectral derivatives."""
    x, y = grid.mesh
    ux, uy = spectral_gradient(grid, values)
    return 1j * (x * uy - y * ux)


def angular_momentum(field: WaveField) -> float:
    """``<u, L_z u>`` evaluated literally; ``exp(i m theta) f(r)`` gives ``-m M``.

    The imaginary part must vanish up to roundoff; a residue above
    ``HERMITICITY_TOL * max(|L|, M)`` signals aliasing and raises.
    """
    grid = field.grid
    if grid.kind is not GridKind.CARTESIAN_2D:
        raise GeometryError("angular momentum is evaluated on Cartesian2D grids only")
    integrand = np.conj(field.values) * apply_lz(grid, field.values)
    re = weighted_sum(grid.weights, integrand.real)
    im = weighted_sum(grid.weights, integrand.imag)
    scale = max(abs(re), field_mass(field), 1e-300)
    if abs(im) > HERMITICITY_TOL * scale:
        raise GeometryError(f"<u, L_z u> has imaginary part {im:.3e}; the field is under-resolved")
    return re


def variance(field: WaveField) -> float:
    """``int |x|^2 |u|^2``."""
    return weighted_sum(field.grid.weights, field.grid.position_sq * np.abs(field.values) ** 2)


def conserved(field: WaveField) -> ConservedScalars:
    if field.grid.kind is GridKind.CARTESIAN_2D:
        p = momentum(field)
        ang = angular_momentum(field)
    else:
        p = (0.0, 0.0)
        ang = -field.m * mass(field)
    return ConservedScalars(mass(field), p, ang, variance(field))


def nonlinearity(z: complex | np.ndarray) -> complex | np.ndarray:
    """``f(z) = -|z|^2 z + |z|^3 z``."""
    a = np.abs(z)
    return (-a * a + a * a * a) * z


@lru_cache(maxsize=8)
def peter_paul_constant(eps: float = PETER_PAUL_EPS) -> tuple[float, float]:
    """``(max_{s>=0} s^2 - eps s^3, argmax)`` by bounded 1D maximization."""
    res = minimize_scalar(
        lambda s: -(s * s - eps * s**3),
        bounds=(0.0, 2.0 / eps),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(-res.fun), float(res.x)


def energy_lower_bound(rho: float) -> float:
    """Lower bound on ``E(u) - 1/2 ||grad u||^2`` at mass ``rho``: ``-(C(4/5)/2) rho``."""
    if rho < 0:
        raise ValueError("mass must be non-negative")
    return -0.5 * peter_paul_constant()[0] * rho


def h1m_inner(a: WaveField, b: WaveField, m: int | None = None) -> complex:
    """Complex inner product ``<a, b>`` inducing the ``H^1_m`` norm (conjugate-linear in ``a``)."""
    if a.grid != b.grid:
        raise GeometryError("fields live on different grids")
    grid = a.grid
    u, v = a.values, b.values
    w = grid.weights
    if grid.kind is GridKind.CARTESIAN_2D:
        kx, ky = grid.wavenumbers
        uh, vh = np.fft.fft2(u), np.fft.fft2(v)
        prod = np.conj(uh) * vh * (kx * kx + ky * ky)
        scale = grid.dx * grid.dy / grid.size
        grad = scale * complex(math.fsum(prod.real.ravel()), math.fsum(prod.imag.ravel()))
        cent = 0.0
    else:
        m = a.m if m is None else m
        h = grid.hr
        ghost = np.zeros((1,) + u.shape[1:])
        du = np.diff(np.concatenate([u, ghost]), axis=0) / h
        dv = np.diff(np.concatenate([v, ghost]), axis=0) / h
        wf = 2.0 * np.pi * grid.r_faces * h
        if grid.kind is GridKind.CYLINDRICAL_3D:
            wf = (wf * grid.hz)[:, None]
            zp = lambda f: np.pad(f, ((0, 0), (1, 1)))
            duz = np.diff(zp(u), axis=1) / grid.hz
            dvz = np.diff(zp(v), axis=1) / grid.hz
            wz = (2.0 * np.pi * grid.r_nodes * h * grid.hz)[:, None]
            extra = np.sum(wz * np.conj(duz) * dvz)
        else:
            extra = 0.0
        grad = complex(np.sum(wf * np.conj(du) * dv) + extra)
        cent = complex(m * m * np.sum(w * np.conj(u) * v / grid.radius**2))
    l2 = complex(np.sum(w * np.conj(u) * v))
    return grad + cent + l2
