"""The coupling operator B and the inter-phase source terms it drives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .spectral import TorusGrid
from .state import SystemParams

def power_nonlinearity(psi_phys: np.ndarray, p: float) -> np.ndarray:
    """|psi|^p psi pointwise (zero where psi vanishes, since p > 0)."""
    a2 = psi_phys.real**2 + psi_phys.imag**2
    return a2 ** (0.5 * p) * psi_phys


def _check(grid, *arrays):
    for a in arrays:
        if a.shape[-2:] != grid.shape:
            raise ValueError(f"field shape {a.shape} does not match grid {grid.shape}")


def _bl_lower_order(grid, psi, vel, psi_phys=None, vel_phys=None):
    """Physical samples of 1/2 |u|^2 psi + i u . grad psi."""
    if psi_phys is None:
        psi_phys = sp.to_physical(grid, psi)
    if vel_phys is None:
        vel_phys = sp.to_physical(grid, vel, real=True)
    dpsi = sp.to_physical(grid, sp.gradient(grid, psi))
    u2 = vel_phys[0] ** 2 + vel_phys[1] ** 2
    return 0.5 * u2 * psi_phys + 1j * (vel_phys[0] * dpsi[0] + vel_phys[1] * dpsi[1])


def apply_BL(grid: TorusGrid, psi: np.ndarray, vel: np.ndarray) -> np.ndarray:
    """B_L psi = -1/2 Lap psi + 1/2 |u|^2 psi + i (u . grad) psi, dealiased.

    Products are formed on the collocation grid; ``vel`` should be
    divergence-free for B_L to be symmetric.
    """
    _check(grid, psi, vel)
    rest = sp.to_spectral(grid, _bl_lower_order(grid, psi, vel))
    return sp.dealias(grid, 0.5 * grid.k2 * psi + rest)


def apply_B(grid: TorusGrid, psi: np.ndarray, vel: np.ndarray, params: SystemParams) -> np.ndarray:
    """B psi = B_L psi + mu |psi|^p psi, dealiased."""
    _check(grid, psi, vel)
    psi_phys = sp.to_physical(grid, psi)
    rest = _bl_lower_order(grid, psi, vel, psi_phys=psi_phys)
    rest = rest + params.mu * power_nonlinearity(psi_phys, params.p)
    return sp.dealias(grid, 0.5 * grid.k2 * psi + sp.to_spectral(grid, rest))


@dataclass(frozen=True, eq=False)
class CouplingTerms:
    """Everything one evaluation of B psi feeds into the three equations.

    Attributes:
        B_psi: spectral B psi.
        nls_drive: explicit part of the NLS right side,
            -lam (B psi + 1/2 Lap psi) - i mu |psi|^p psi (the stiff
            Laplacians are left to the integrating factor).
        nse_force: spectral -2 lam Im(grad conj(psi) B psi) - 2 lam u Re(conj(psi) B psi),
            dealiased but not Leray-projected.
        continuity_source: spectral 2 lam Re(conj(psi) B psi), dealiased.
        psi_phys, grad_psi_phys, vel_phys, B_psi_phys: physical samples
            reused downstream.
    """

    B_psi: np.ndarray
    nls_drive: np.ndarray
    nse_force: np.ndarray
    continuity_source: np.ndarray
    psi_phys: np.ndarray
    grad_psi_phys: np.ndarray
    vel_phys: np.ndarray
    B_psi_phys: np.ndarray
    source_phys: np.ndarray


def compute_coupling_terms(
    grid: TorusGrid, psi: np.ndarray, vel: np.ndarray, params: SystemParams
) -> CouplingTerms:
    _check(grid, psi, vel)
    lam, mu = params.lam, params.mu
    # One batched inverse transform for psi, u and grad psi.
    phys = sp.to_physical(grid, np.stack(
        (psi, vel[0], vel[1], 1j * grid.kx * psi, 1j * grid.ky * psi)))
    psi_phys = phys[0]
    vel_phys = phys[1:3].real.copy()
    dpsi = phys[3:5]
    u2 = vel_phys[0] ** 2 + vel_phys[1] ** 2
    lower = 0.5 * u2 * psi_phys + 1j * (vel_phys[0] * dpsi[0] + vel_phys[1] * dpsi[1])
    both = sp.dealias(grid, sp.to_spectral(
        grid, np.stack((power_nonlinearity(psi_phys, params.p), lower))))
    nonlin, lower_hat = both[0], both[1]

    B_psi = sp.dealias(grid, 0.5 * grid.k2 * psi) + lower_hat + mu * nonlin
    nls_drive = -lam * (lower_hat + mu * nonlin) - 1j * mu * nonlin

    B_phys = sp.to_physical(grid, B_psi)
    re_pb = (np.conj(psi_phys) * B_phys).real
    sources = np.empty((3,) + grid.shape)
    for c in range(2):
        sources[c] = -2 * lam * ((np.conj(dpsi[c]) * B_phys).imag + vel_phys[c] * re_pb)
    sources[2] = 2 * lam * re_pb
    source_phys = sources[2]
    sources_hat = sp.dealias(grid, sp.to_spectral(grid, sources))
    return CouplingTerms(
        B_psi=B_psi,
        nls_drive=nls_drive,
        nse_force=sources_hat[:2],
        continuity_source=sources_hat[2],
        psi_phys=psi_phys,
        grad_psi_phys=dpsi,
        vel_phys=vel_phys,
        B_psi_phys=B_phys,
        source_phys=source_phys,
    )


def gradient_terms(grid: TorusGrid, psi: np.ndarray, vel: np.ndarray, params: SystemParams) -> np.ndarray:
    """lam grad Im(conj(psi) B psi) + mu/2 grad |psi|^(p+2), spectral.

    These are the two momentum sources that are pure gradients and get folded
    into the pressure.
    """
    B_phys = sp.to_physical(grid, apply_B(grid, psi, vel, params))
    psi_phys = sp.to_physical(grid, psi)
    scalar = params.lam * (np.conj(psi_phys) * B_phys).imag
    scalar = scalar + 0.5 * params.mu * np.abs(psi_phys) ** (params.p + 2)
    return sp.gradient(grid, sp.to_spectral(grid, scalar))
