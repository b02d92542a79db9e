"""Fourier pseudospectral machinery on the periodic unit box [0, 1]^2.

Spectral scalars are complex arrays of shape ``(nx, ny)`` holding Fourier
coefficients in FFT order, normalized so that the ``(0, 0)`` entry is the
spatial mean. Spectral vectors stack two such arrays into shape
``(2, nx, ny)``. Physical samples live on the collocation grid
``x_i = i / n`` along each axis.

Wavenumbers follow the unit-box convention k = 2*pi*j with
j in [-n/2, n/2), so every eigenvalue-dependent formula carries the 2*pi.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft as sfft

__all__ = [
    "TorusGrid",
    "to_spectral",
    "to_physical",
    "gradient",
    "divergence",
    "laplacian",
    "fractional_laplacian",
    "leray_project",
    "dealias",
    "inner_product_l2",
    "sobolev_norm",
    "lp_norm",
    "l2_norm",
    "evaluate_at",
    "oversampled",
]


DENSE_DFT_MAX = 16


def _dft_matrix(n: int) -> np.ndarray:
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n)


@dataclass(frozen=True, eq=False)
class TorusGrid:
    """Collocation grid and wavenumber tables for the unit torus.

    Attributes:
        nx, ny: collocation points per axis (even, >= 4).
        jx, jy: integer mode indices in FFT order, broadcastable to (nx, ny).
        kx, ky: wavenumbers 2*pi*j.
        k2: |k|^2 per mode.
        dealias_mask: True where |j_i| <= n_i / 3 on both axes.
        k2_safe: k2 with the mean mode set to 1 (safe divisor).
        kx_odd, ky_odd: wavenumbers with the Nyquist entry zeroed, so odd
            derivatives map real fields to real fields.
        inv_k2_odd: 1 / (kx_odd^2 + ky_odd^2), zero where that vanishes.
        conj_rows, conj_cols: FFT-order index of the mode -j for each j.
        dft: dense (forward x, forward y^T, inverse x, inverse y^T) matrices
            on small grids, where a matrix product beats FFT call overhead.
    """

    nx: int
    ny: int
    jx: np.ndarray = field(init=False, repr=False)
    jy: np.ndarray = field(init=False, repr=False)
    kx: np.ndarray = field(init=False, repr=False)
    ky: np.ndarray = field(init=False, repr=False)
    k2: np.ndarray = field(init=False, repr=False)
    dealias_mask: np.ndarray = field(init=False, repr=False)
    dealias_weight: np.ndarray = field(init=False, repr=False)
    k2_safe: np.ndarray = field(init=False, repr=False)
    kx_odd: np.ndarray = field(init=False, repr=False)
    ky_odd: np.ndarray = field(init=False, repr=False)
    inv_k2_odd: np.ndarray = field(init=False, repr=False)
    conj_rows: np.ndarray = field(init=False, repr=False)
    conj_cols: np.ndarray = field(init=False, repr=False)
    dft: Optional[tuple] = field(init=False, repr=False)

    def __post_init__(self):
        for name, n in (("nx", self.nx), ("ny", self.ny)):
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n}")
        jx = np.fft.fftfreq(self.nx, 1.0 / self.nx).astype(int)[:, None]
        jy = np.fft.fftfreq(self.ny, 1.0 / self.ny).astype(int)[None, :]
        kx = 2 * np.pi * jx.astype(float)
        ky = 2 * np.pi * jy.astype(float)
        mask = (3 * np.abs(jx) <= self.nx) & (3 * np.abs(jy) <= self.ny)
        set_ = object.__setattr__
        set_(self, "jx", jx)
        set_(self, "jy", jy)
        set_(self, "kx", kx)
        set_(self, "ky", ky)
        set_(self, "k2", kx**2 + ky**2)
        set_(self, "dealias_mask", mask)
        set_(self, "dealias_weight", mask.astype(float))
        k2 = self.k2
        set_(self, "k2_safe", np.where(k2 > 0, k2, 1.0))
        set_(self, "kx_odd", np.where(jx == -self.nx // 2, 0.0, kx))
        set_(self, "ky_odd", np.where(jy == -self.ny // 2, 0.0, ky))
        k2_odd = self.kx_odd**2 + self.ky_odd**2
        set_(self, "inv_k2_odd", np.where(k2_odd > 0, 1.0 / np.where(k2_odd > 0, k2_odd, 1.0), 0.0))
        set_(self, "conj_rows", (-np.arange(self.nx)) % self.nx)
        set_(self, "conj_cols", (-np.arange(self.ny)) % self.ny)
        dft = None
        if max(self.nx, self.ny) <= DENSE_DFT_MAX:
            fx, fy = _dft_matrix(self.nx), _dft_matrix(self.ny)
            dft = (fx / self.nx, fy.T / self.ny, fx.conj(), fy.conj().T)
        set_(self, "dft", dft)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def spacing(self) -> float:
        """Smallest collocation spacing h."""
        return 1.0 / max(self.nx, self.ny)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Collocation coordinates as an ``indexing='ij'`` mesh."""
        x = np.arange(self.nx) / self.nx
        y = np.arange(self.ny) / self.ny
        return np.meshgrid(x, y, indexing="ij")

    def same_as(self, other: "TorusGrid") -> bool:
        return self.nx == other.nx and self.ny == other.ny

    def __eq__(self, other):
        return isinstance(other, TorusGrid) and self.same_as(other)

    def __hash__(self):
        return hash((self.nx, self.ny))


def _check_shape(grid: TorusGrid, arr: np.ndarray, what: str = "field"):
    if arr.shape[-2:] != grid.shape:
        raise ValueError(
            f"{what} has trailing shape {arr.shape[-2:]}, grid expects {grid.shape}"
        )


def to_spectral(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    """Physical samples -> Fourier coefficients (mode 0 is the mean).

    Accepts scalar ``(nx, ny)`` or stacked ``(..., nx, ny)`` samples.
    """
    f = np.asarray(f)
    _check_shape(grid, f, "samples")
    if grid.dft is not None:
        return grid.dft[0] @ f @ grid.dft[1]
    return sfft.fft2(f, axes=(-2, -1), norm="forward")


def to_physical(grid: TorusGrid, fhat: np.ndarray, real: bool = False) -> np.ndarray:
    """Fourier coefficients -> physical samples; ``real`` drops the imaginary part."""
    _check_shape(grid, fhat, "coefficients")
    if grid.dft is not None:
        f = grid.dft[2] @ fhat @ grid.dft[3]
    else:
        f = sfft.ifft2(fhat, axes=(-2, -1), norm="forward")
    return f.real.copy() if real else f


def gradient(grid: TorusGrid, fhat: np.ndarray) -> np.ndarray:
    """Spectral gradient: multiply by i*k per component."""
    return np.stack((1j * grid.kx * fhat, 1j * grid.ky * fhat))


def divergence(grid: TorusGrid, vhat: np.ndarray) -> np.ndarray:
    return 1j * (grid.kx * vhat[0] + grid.ky * vhat[1])


def laplacian(grid: TorusGrid, fhat: np.ndarray) -> np.ndarray:
    return -grid.k2 * fhat


def fractional_laplacian(grid: TorusGrid, fhat: np.ndarray, s: float) -> np.ndarray:
    """(-Delta)^s as the multiplier |k|^(2s); the mean mode is annihilated."""
    if s < 0:
        raise ValueError(f"fractional order must be nonnegative, got {s}")
    mult = np.zeros_like(grid.k2)
    nz = grid.k2 > 0
    mult[nz] = grid.k2[nz] ** s
    return mult * fhat


def leray_project(grid: TorusGrid, vhat: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto divergence-free fields, mode by mode.

    Mode 0 passes through untouched: constant velocities are divergence-free.
    """
    kdotv = (grid.kx * vhat[0] + grid.ky * vhat[1]) / grid.k2_safe
    out = np.empty_like(vhat)
    out[0] = vhat[0] - grid.kx * kdotv
    out[1] = vhat[1] - grid.ky * kdotv
    return out


def dealias(grid: TorusGrid, fhat: np.ndarray) -> np.ndarray:
    """Zero every coefficient outside the two-thirds mask (works on stacks)."""
    return fhat * grid.dealias_weight


def inner_product_l2(grid: TorusGrid, fhat: np.ndarray, ghat: np.ndarray) -> complex:
    """<f, g> = integral of conj(f) g over the unit torus (Parseval)."""
    if fhat.shape != ghat.shape:
        raise ValueError(f"shape mismatch: {fhat.shape} vs {ghat.shape}")
    _check_shape(grid, fhat)
    return complex(np.vdot(fhat, ghat))


def l2_norm(fhat: np.ndarray) -> float:
    """L2 norm of a spectral scalar or vector field."""
    return float(np.sqrt(np.sum(np.abs(fhat) ** 2)))


def sobolev_norm(
    grid: TorusGrid, fhat: np.ndarray, s: float, homogeneous: bool = False
) -> float:
    """H^s or homogeneous H^s norm; vector fields sum over components."""
    if s < 0:
        raise ValueError(f"Sobolev order must be nonnegative, got {s}")
    if homogeneous:
        weight = np.zeros_like(grid.k2)
        nz = grid.k2 > 0
        weight[nz] = grid.k2[nz] ** s
    else:
        weight = (1.0 + grid.k2) ** s
    return float(np.sqrt(np.sum(weight * np.abs(fhat) ** 2)))


def lp_norm(f: np.ndarray, r: float) -> float:
    """Collocation L^r norm with uniform weights; ``r=inf`` is the grid maximum.

    The grid maximum only bounds the true supremum from below.
    """
    if not r >= 1:
        raise ValueError(f"L^r needs r >= 1, got {r}")
    a = np.abs(f)
    if np.isinf(r):
        return float(a.max())
    return float(np.mean(a**r) ** (1.0 / r))


def oversampled(grid: TorusGrid, fhat: np.ndarray, factor: int = 2) -> np.ndarray:
    """Physical samples of a spectral field on a grid refined by ``factor``.

    Zero-pads in Fourier space. Nyquist coefficients are split symmetrically
    so real fields stay real.
    """
    nx, ny = grid.shape
    mx, my = factor * nx, factor * ny
    padded = np.zeros(fhat.shape[:-2] + (mx, my), dtype=complex)
    hx, hy = nx // 2, ny // 2
    ix = np.r_[0:hx, mx - hx : mx]
    iy = np.r_[0:hy, my - hy : my]
    padded[..., ix[:, None], iy[None, :]] = fhat
    # Split the Nyquist rows/columns between +n/2 and -n/2.
    padded[..., hx, :] = padded[..., mx - hx, :] * 0.5
    padded[..., mx - hx, :] *= 0.5
    padded[..., :, hy] = padded[..., :, my - hy] * 0.5
    padded[..., :, my - hy] *= 0.5
    return sfft.ifft2(padded, axes=(-2, -1), norm="forward")


def evaluate_at(grid: TorusGrid, fhat: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of a spectral field at arbitrary points.

    ``points`` has shape ``(P, 2)``. Only nonzero columns/rows of the spectrum
    take part, so dealiased fields evaluate at a fraction of the full cost.
    Nyquist modes are evaluated as cosines so real fields give real values.
    """
    points = np.asarray(points, dtype=float)
    jx = grid.jx[:, 0]
    jy = grid.jy[0, :]
    rows = np.flatnonzero(np.any(fhat != 0, axis=1))
    cols = np.flatnonzero(np.any(fhat != 0, axis=0))
    if rows.size == 0 or cols.size == 0:
        return np.zeros(points.shape[0], dtype=complex)
    sub = fhat[np.ix_(rows, cols)]
    ex = _trig_factors(jx[rows], grid.nx, points[:, 0])
    ey = _trig_factors(jy[cols], grid.ny, points[:, 1])
    return np.einsum("pa,ab,pb->p", ex, sub, ey)


def _trig_factors(j: np.ndarray, n: int, x: np.ndarray) -> np.ndarray:
    phase = 2j * np.pi * np.outer(x, j)
    out = np.exp(phase)
    nyq = j == -(n // 2)
    if np.any(nyq):
        out[:, nyq] = np.cos(phase[:, nyq].imag)
    return out
