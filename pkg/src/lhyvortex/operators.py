"""Discrete kinetic operators and the linear solvers built on them.

On radial grids the operator ``A = -1/2 Delta_h`` is the finite-volume form

    (A psi)_j = -1/(2 r_j h^2) [ r_{j+1/2} (psi_{j+1} - psi_j) - r_{j-1/2} (psi_j - psi_{j-1}) ]

with face radii ``r_{j+1/2} = (j+1) h`` (the face at the axis has radius 0) and
a zero ghost value beyond ``r_max``. It is self-adjoint and positive in the
weighted inner product ``<u, v>_W = sum_j w_j conj(u_j) v_j``, and
``<psi, A psi>_W`` is exactly half the face-difference gradient norm. The z
direction uses the standard three-point stencil with zero ghosts at both
ends, which the type-I sine transform diagonalizes.

On the periodic Cartesian grid derivatives are spectral.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft
from scipy.linalg import solve_banded

from .geometry import Grid, GridKind, GeometryError, weighted_sum


class SolverError(RuntimeError):
    """A linear solve failed or did not reach its tolerance."""


@dataclass(frozen=True)
class RadialStencil:
    """Tridiagonal coefficients of ``-1/2 Delta_r`` on the half-cell radial rule."""

    lower: np.ndarray  # coefficient of psi_{j-1} in row j, rows 1..nr-1
    diag: np.ndarray
    upper: np.ndarray  # coefficient of psi_{j+1} in row j, rows 0..nr-2

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Apply along axis 0 (extra axes are batch dimensions)."""
        shape = (-1,) + (1,) * (v.ndim - 1)
        out = self.diag.reshape(shape) * v
        out[1:] += self.lower.reshape(shape) * v[:-1]
        out[:-1] += self.upper.reshape(shape) * v[1:]
        return out


@lru_cache(maxsize=64)
def radial_stencil(nr: int, r_max: float) -> RadialStencil:
    h = r_max / nr
    r = (np.arange(nr) + 0.5) * h
    faces = np.arange(nr + 1) * h
    lower = -faces[1:nr] / (2.0 * r[1:] * h * h)
    upper = -faces[1:nr] / (2.0 * r[:-1] * h * h)
    diag = (faces[1:] + faces[:-1]) / (2.0 * r * h * h)
    for a in (lower, upper, diag):
        a.setflags(write=False)
    return RadialStencil(lower, diag, upper)


@lru_cache(maxsize=64)
def z_eigenvalues(nz: int, hz: float) -> np.ndarray:
    """Eigenvalues of the Dirichlet three-point ``-1/2 d^2/dz^2`` in DST-I order."""
    k = np.arange(1, nz + 1)
    lam = (1.0 - np.cos(np.pi * k / (nz + 1))) / (hz * hz)
    lam.setflags(write=False)
    return lam


def centrifugal_potential(grid: Grid, m: int) -> np.ndarray:
    """``m^2 / (2 r^2)`` at every node (radial geometries)."""
    return (m * m) / (2.0 * grid.radius**2)


# ---------------------------------------------------------------------------
# kinetic operator and gradient norm


def apply_kinetic(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Return ``-1/2 Delta_h values`` (no centrifugal term)."""
    if grid.kind is GridKind.CARTESIAN_2D:
        kx, ky = grid.wavenumbers
        return np.fft.ifft2(0.5 * (kx * kx + ky * ky) * np.fft.fft2(values))
    st = radial_stencil(grid.nr, grid.r_max)
    out = st.apply(values)
    if grid.kind is GridKind.CYLINDRICAL_3D:
        c = 0.5 / grid.hz**2
        out = out + 2.0 * c * values
        out[:, 1:] -= c * values[:, :-1]
        out[:, :-1] -= c * values[:, 1:]
    return out


def gradient_norm_sq(grid: Grid, values: np.ndarray, fast: bool = False) -> float:
    """Discrete ``||grad u||^2`` (radial-plus-axial part only on radial grids).

    Radial differences live on cell faces, so this equals ``2 <u, A u>_W``
    exactly while avoiding the cancellation of forming ``A u`` first.
    ``fast`` swaps the correctly rounded sum for ``numpy.sum``.
    """
    total = (lambda w, v: float(np.sum(w * v))) if fast else weighted_sum
    if grid.kind is GridKind.CARTESIAN_2D:
        kx, ky = grid.wavenumbers
        uh = np.fft.fft2(values)
        scale = grid.dx * grid.dy / grid.size
        return scale * total(kx * kx + ky * ky, np.abs(uh) ** 2)
    h = grid.hr
    wf = 2.0 * np.pi * grid.r_faces / h
    if grid.kind is GridKind.RADIAL_2D:
        dr = np.diff(values, append=0.0)
        return total(wf, np.abs(dr) ** 2)
    hz = grid.hz
    dr = np.diff(values, axis=0, append=np.zeros((1, values.shape[1])))
    out = total((wf * hz)[:, None], np.abs(dr) ** 2)
    dz = np.diff(values, axis=1, prepend=np.zeros((values.shape[0], 1)), append=np.zeros((values.shape[0], 1)))
    wz = (2.0 * np.pi * grid.r_nodes * h / hz)[:, None]
    return out + total(wz, np.abs(dz) ** 2)


def spectral_gradient(grid: Grid, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spectral ``(d/dx, d/dy)`` on the periodic Cartesian grid."""
    kx, ky = grid.wavenumbers
    uh = np.fft.fft2(values)
    return np.fft.ifft2(1j * kx * uh), np.fft.ifft2(1j * ky * uh)


# ---------------------------------------------------------------------------
# shifted solves  (I + c (A + V + D)) x = b


class TridiagonalFactor:
    """LU factors of a batch of tridiagonal matrices acting along axis 0.

    ``diag`` has shape ``(n,)`` or ``(n, batch)``; ``lower``/``upper`` have
    length ``n - 1`` and are shared across the batch. Factoring once and
    reusing the factors halves the cost of repeated solves.
    """

    def __init__(self, lower: np.ndarray, diag: np.ndarray, upper: np.ndarray):
        n = diag.shape[0]
        batched = diag.ndim == 2
        self._lo = lower[:, None] if batched else lower
        up = upper[:, None] if batched else upper
        dtype = np.result_type(lower, diag, upper)
        self._cp = np.empty((max(n - 1, 1),) + diag.shape[1:], dtype=dtype)
        self._inv = np.empty(diag.shape, dtype=dtype)
        self._inv[0] = 1.0 / diag[0]
        for i in range(1, n):
            self._cp[i - 1] = up[i - 1] * self._inv[i - 1]
            self._inv[i] = 1.0 / (diag[i] - self._lo[i - 1] * self._cp[i - 1])
        if not np.all(np.isfinite(self._inv)):
            raise SolverError("singular tridiagonal system")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        n = rhs.shape[0]
        x = np.empty(rhs.shape, dtype=np.result_type(rhs, self._inv))
        x[0] = rhs[0] * self._inv[0]
        lo, inv, cp = self._lo, self._inv, self._cp
        for i in range(1, n):
            x[i] = (rhs[i] - lo[i - 1] * x[i - 1]) * inv[i]
        for i in range(n - 2, -1, -1):
            x[i] -= cp[i] * x[i + 1]
        return x


class ShiftedSolver:
    """Solver for ``(I + c (A + V + D)) x = b`` with scalar ``c`` and diagonal ``D``.

    ``V`` is the centrifugal potential (depends on r only). On radial grids the
    system is tridiagonal and solved directly. On cylindrical grids the
    ``D = 0`` system separates under the z sine transform and is solved
    exactly; ``D != 0`` is handled by conjugate gradients in the weighted inner
    product, preconditioned with the separable solve (requires real positive
    ``c`` and a positive definite system).
    """

    def __init__(self, grid: Grid, m: int, c: complex, include_potential: bool = True):
        if grid.kind is GridKind.CARTESIAN_2D:
            raise GeometryError("shifted solves are defined for radial and cylindrical grids")
        self.grid = grid
        self.c = c
        self.stencil = radial_stencil(grid.nr, grid.r_max)
        self.potential = (
            centrifugal_potential(grid, m)[:, 0] if grid.kind is GridKind.CYLINDRICAL_3D else centrifugal_potential(grid, m)
        ) if include_potential else np.zeros(grid.nr)
        if grid.kind is GridKind.CYLINDRICAL_3D:
            lam = z_eigenvalues(grid.nz, grid.hz)
            diag = 1.0 + c * (self.stencil.diag[:, None] + self.potential[:, None] + lam[None, :])
            self._factor = TridiagonalFactor(c * self.stencil.lower, diag, c * self.stencil.upper)
        self.pcg_iterations = 0

    # exact separable part --------------------------------------------
    def _solve_separable(self, rhs: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(rhs) and np.isrealobj(self.c):
            return self._solve_separable(rhs.real) + 1j * self._solve_separable(rhs.imag)
        hat = scipy.fft.dst(rhs, type=1, axis=1)
        return scipy.fft.idst(self._factor.solve(hat), type=1, axis=1)

    def _apply(self, x: np.ndarray, extra: np.ndarray) -> np.ndarray:
        ax = apply_kinetic(self.grid, x)
        pot = self.potential[:, None] if x.ndim == 2 else self.potential
        return x + self.c * (ax + (pot + extra) * x)

    def solve(self, rhs: np.ndarray, extra: np.ndarray | None = None, tol: float = 1e-13, max_iter: int = 500) -> np.ndarray:
        grid = self.grid
        c = self.c
        if grid.kind is GridKind.RADIAL_2D:
            st = self.stencil
            n = grid.nr
            d = self.potential if extra is None else self.potential + extra
            ab = np.zeros((3, n), dtype=np.result_type(c, rhs, float))
            ab[0, 1:] = c * st.upper
            ab[1] = 1.0 + c * (st.diag + d)
            ab[2, :-1] = c * st.lower
            try:
                x = solve_banded((1, 1), ab, rhs, check_finite=True)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise SolverError(f"banded solve failed: {exc}") from exc
            if not np.all(np.isfinite(x)):
                raise SolverError("banded solve produced non-finite values")
            return x
        if extra is None or not np.any(extra):
            x = self._solve_separable(rhs)
            if not np.all(np.isfinite(x)):
                raise SolverError("separable solve produced non-finite values")
            return x
        return self._pcg(rhs, extra, tol, max_iter)

    def _pcg(self, rhs: np.ndarray, extra: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
        if np.iscomplexobj(rhs) or np.iscomplexobj(self.c) or not self.c > 0:
            raise SolverError("preconditioned CG needs a real positive shift and real data")
        w = self.grid.weights
        x = self._solve_separable(rhs)
        r = rhs - self._apply(x, extra)
        z = self._solve_separable(r)
        p = z.copy()
        rz = float(np.sum(w * r * z))
        bnorm = float(np.sqrt(np.sum(w * rhs * rhs)))
        if bnorm == 0.0:
            return np.zeros_like(rhs)
        for it in range(1, max_iter + 1):
            q = self._apply(p, extra)
            pq = float(np.sum(w * p * q))
            if not pq > 0:
                raise SolverError("system is not positive definite (reduce the pseudo-time step)")
            alpha = rz / pq
            x += alpha * p
            r -= alpha * q
            if float(np.sqrt(np.sum(w * r * r))) <= tol * bnorm:
                self.pcg_iterations += it
                return x
            z = self._solve_separable(r)
            rz_new = float(np.sum(w * r * z))
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise SolverError(f"preconditioned CG did not converge in {max_iter} iterations")
