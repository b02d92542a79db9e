"""Simulation state, physical parameters, initial data and snapshots."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import spectral as sp
from .spectral import TorusGrid

DIV_TOL = 1e-10
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class SystemParams:
    """Physical constants and the density thresholds.

    ``lam`` is the coupling strength (``lambda`` is reserved in Python).
    """

    lam: float
    mu: float
    nu: float
    alpha: float
    p: float
    m_i: float
    M_i: float
    m_f: float

    def __post_init__(self):
        for name in ("lam", "mu", "nu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if not self.p > 0:
            raise ValueError(
                f"p must be positive, got {self.p}; p = 0 is the linear "
                "Schrodinger case, which this model excludes"
            )
        if not 0 < self.m_f < self.m_i:
            raise ValueError(
                f"density thresholds need 0 < m_f < m_i, got m_f={self.m_f}, m_i={self.m_i}"
            )
        if not self.m_i <= self.M_i < np.inf:
            raise ValueError(
                f"density bounds need m_i <= M_i < inf, got m_i={self.m_i}, M_i={self.M_i}"
            )

    @property
    def M_f(self) -> float:
        """Density ceiling M_i + m_i - m_f."""
        return self.M_i + self.m_i - self.m_f


@dataclass(frozen=True, eq=False)
class History:
    """Explicit tendencies from the previous step, needed by the multistep schemes."""

    dt: float
    psi_rhs: np.ndarray
    vel_rhs: np.ndarray
    rho_rhs: np.ndarray
    inv_rho_ref: float
    vel: Optional[np.ndarray] = None
    source: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class SimState:
    """Spectral fields plus the physical density samples.

    The physical density is authoritative for positivity checks; the spectral
    copy feeds the differential operators. ``history`` is stepping scratch and
    not part of the physical state.
    """

    grid: TorusGrid
    t: float
    psi: np.ndarray
    vel: np.ndarray
    rho: np.ndarray
    rho_phys: np.ndarray
    pressure: Optional[np.ndarray] = None
    history: Optional[History] = None

    @classmethod
    def from_fields(cls, grid, t, psi, vel, rho, pressure=None, history=None):
        rho = np.asarray(rho, dtype=complex)
        return cls(
            grid=grid,
            t=float(t),
            psi=np.asarray(psi, dtype=complex),
            vel=np.asarray(vel, dtype=complex),
            rho=rho,
            rho_phys=sp.to_physical(grid, rho, real=True),
            pressure=pressure,
            history=history,
        )

    def evolve(self, **changes) -> "SimState":
        if "rho" in changes and "rho_phys" not in changes:
            changes["rho_phys"] = sp.to_physical(self.grid, changes["rho"], real=True)
        return replace(self, **changes)


@dataclass(frozen=True)
class InitialData:
    """Recipe for initial data.

    recipe:
        ``homogeneous``: psi = psi_const, u = 0, rho = rho_const (default m_i).
        ``band_limited_random``: random coefficients with |j_i| <= shell, u
        Leray-projected, rescaled so that
        ||psi||_{H^5/2} + ||u||_{H^1} + ||psi||_{L^{p+2}} = eps.
        ``prescribed_modes``: explicit modes ``(field, j1, j2, coefficient)``
        with field in {psi, ux, uy, rho}; rescaled to eps when eps is given.
    budget: shares of eps for (H^5/2 of psi, H^1 of u, L^{p+2} of psi). One
        scalar multiplies psi, so its two shares are pooled.
    """

    recipe: str = "band_limited_random"
    eps: Optional[float] = 1e-2
    psi_const: complex = 0.0
    rho_const: Optional[float] = None
    shell: int = 2
    rho_shell: int = 2
    rho_random: bool = True
    modes: tuple = ()
    budget: tuple = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)

    RECIPES = ("homogeneous", "band_limited_random", "prescribed_modes")

    def __post_init__(self):
        if self.recipe not in self.RECIPES:
            raise ValueError(f"unknown recipe {self.recipe!r}; expected one of {self.RECIPES}")
        if self.eps is not None and self.eps < 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if len(self.budget) != 3 or any(b < 0 for b in self.budget) or sum(self.budget) <= 0:
            raise ValueError(f"budget must be three nonnegative shares, got {self.budget}")


def smallness_norms(grid: TorusGrid, psi: np.ndarray, vel: np.ndarray, p: float):
    """(||psi||_{H^5/2}, ||u||_{H^1}, ||psi||_{L^{p+2}})."""
    return (
        sp.sobolev_norm(grid, psi, 2.5),
        sp.sobolev_norm(grid, vel, 1.0),
        sp.lp_norm(sp.to_physical(grid, psi), p + 2),
    )


def _rng(seed: int) -> np.random.Generator:
    # Philox is counter-based: identical streams on every platform.
    return np.random.Generator(np.random.Philox(key=int(seed)))


def _shell_mask(grid: TorusGrid, shell: int) -> np.ndarray:
    return (np.abs(grid.jx) <= shell) & (np.abs(grid.jy) <= shell)


def _random_real(grid, rng, shell, count=1):
    """Real band-limited random fields with |j_i| <= shell (spectral)."""
    mask = _shell_mask(grid, shell)
    coef = rng.standard_normal((count,) + grid.shape) + 1j * rng.standard_normal(
        (count,) + grid.shape
    )
    coef = np.where(mask, coef, 0.0)
    phys = sp.to_physical(grid, coef, real=True)
    return sp.to_spectral(grid, phys)


def make_initial_data(
    ic: InitialData, grid: TorusGrid, params: SystemParams, seed: int = 0
) -> SimState:
    """Build a validated t = 0 state from an initial-data recipe."""
    if ic.recipe == "band_limited_random" and max(ic.shell, ic.rho_shell) > min(grid.nx, grid.ny) // 3:
        raise ValueError(
            f"shell {max(ic.shell, ic.rho_shell)} exceeds the dealiased band of the grid"
        )
    rng = _rng(seed)
    psi = np.zeros(grid.shape, dtype=complex)
    vel = np.zeros((2,) + grid.shape, dtype=complex)
    rho_c = params.m_i if ic.rho_const is None else ic.rho_const
    rho = np.zeros(grid.shape, dtype=complex)
    rho[0, 0] = rho_c

    if ic.recipe == "homogeneous":
        psi[0, 0] = ic.psi_const
    elif ic.recipe == "band_limited_random":
        mask = _shell_mask(grid, ic.shell)
        psi = np.where(
            mask,
            rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape),
            0.0,
        )
        vel = sp.leray_project(grid, _random_real(grid, rng, ic.shell, count=2))
        eps = 0.0 if ic.eps is None else ic.eps
        w_h, w_u, w_lp = np.asarray(ic.budget) / sum(ic.budget)
        h, hu, lp = smallness_norms(grid, psi, vel, params.p)
        psi = psi * ((w_h + w_lp) * eps / (h + lp))
        vel = vel * (w_u * eps / hu) if hu > 0 else vel
    else:
        for entry in ic.modes:
            name, j1, j2, coef = entry
            slot = {"psi": psi, "ux": vel[0], "uy": vel[1], "rho": rho}.get(name)
            if slot is None:
                raise ValueError(f"unknown field {name!r} in prescribed mode")
            if max(abs(j1), abs(j2)) > min(grid.nx, grid.ny) // 3:
                raise ValueError(f"mode ({j1}, {j2}) lies outside the dealiased band")
            slot[j1 % grid.nx, j2 % grid.ny] += coef
            if name != "psi" and (j1, j2) != (0, 0):
                slot[-j1 % grid.nx, -j2 % grid.ny] += np.conj(coef)
        vel = sp.leray_project(grid, vel)
        if ic.eps is not None:
            total = sum(smallness_norms(grid, psi, vel, params.p))
            if total == 0 or ic.eps == 0:
                raise ValueError(
                    f"cannot rescale prescribed modes with norm sum {total} to eps={ic.eps}"
                )
            psi = psi * (ic.eps / total)
            vel = vel * (ic.eps / total)

    if ic.rho_random and ic.recipe == "band_limited_random":
        g = sp.to_physical(grid, _random_real(grid, rng, ic.rho_shell)[0], real=True)
        span = g.max() - g.min()
        g = np.clip((g - g.min()) / span, 0.0, 1.0) if span > 0 else np.zeros_like(g)
        rho_phys = params.m_i + (params.M_i - params.m_i) * g
        rho = sp.to_spectral(grid, rho_phys)
    state = SimState.from_fields(grid, 0.0, psi, vel, rho)
    if ic.recipe == "band_limited_random" and ic.rho_random:
        # Keep the exact bounded samples rather than the round-tripped ones.
        state = replace(state, rho_phys=rho_phys)
    report = validate_state(state, params)
    if not report.ok:
        raise ValueError(f"initial data violates standing assumptions: {report.violations}")
    if state.rho_phys.min() < params.m_i - 1e-12 or state.rho_phys.max() > params.M_i + 1e-12:
        raise ValueError("initial density leaves [m_i, M_i]")
    return state


@dataclass(frozen=True)
class ValidationReport:
    rho_min: float
    rho_max: float
    max_divergence: float
    rho_symmetry: float
    vel_symmetry: float
    rho_imag: float
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def floor_breached(self) -> bool:
        return "density_floor" in self.violations


def _conj_residual(grid: TorusGrid, fhat: np.ndarray) -> float:
    flipped = np.conj(fhat[..., grid.conj_rows, :][..., grid.conj_cols])
    scale = max(np.abs(fhat).max(), 1e-300)
    return float(np.abs(fhat - flipped).max() / scale)


def validate_state(state: SimState, params: SystemParams) -> ValidationReport:
    """Report density extrema, divergence and conjugate-symmetry residuals."""
    grid = state.grid
    rho_min = float(state.rho_phys.min())
    rho_max = float(state.rho_phys.max())
    vmax = np.abs(state.vel).max()
    div = np.abs(grid.kx * state.vel[0] + grid.ky * state.vel[1]).max()
    max_div = float(div / vmax) if vmax > 0 else 0.0
    rho_sym = _conj_residual(grid, state.rho)
    vel_sym = _conj_residual(grid, state.vel)
    rho_imag = float(np.abs(sp.to_physical(grid, state.rho).imag).max() / max(abs(rho_max), 1e-300))
    violations = []
    if rho_min < params.m_f:
        violations.append("density_floor")
    if max_div > DIV_TOL:
        violations.append("divergence")
    if rho_sym > SYMMETRY_TOL or vel_sym > SYMMETRY_TOL:
        violations.append("conjugate_symmetry")
    if not (np.all(np.isfinite(state.psi)) and np.all(np.isfinite(state.vel))
            and np.all(np.isfinite(state.rho_phys))):
        violations.append("non_finite")
    return ValidationReport(
        rho_min=rho_min,
        rho_max=rho_max,
        max_divergence=max_div,
        rho_symmetry=rho_sym,
        vel_symmetry=vel_sym,
        rho_imag=rho_imag,
        violations=tuple(violations),
    )


# Snapshot format: little-endian header then complex128 arrays in row-major order
# (psi, u_x, u_y, rho), each of shape (nx, ny).
SNAPSHOT_MAGIC = b"PTVSNAP\0"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<8sIIId8d")
PARAM_ORDER = ("lam", "mu", "nu", "alpha", "p", "m_i", "M_i", "m_f")


def write_snapshot(path, state: SimState, params: SystemParams) -> None:
    """Write the binary snapshot plus a ``.json`` parameter sidecar."""
    path = Path(path)
    grid = state.grid
    header = _HEADER.pack(
        SNAPSHOT_MAGIC,
        SNAPSHOT_VERSION,
        grid.nx,
        grid.ny,
        state.t,
        *(float(getattr(params, k)) for k in PARAM_ORDER),
    )
    body = np.concatenate(
        [state.psi.ravel(), state.vel[0].ravel(), state.vel[1].ravel(), state.rho.ravel()]
    ).astype("<c16")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())
    sidecar = {"t": state.t, "nx": grid.nx, "ny": grid.ny, "params": asdict(params)}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def read_snapshot(path) -> tuple[SimState, SystemParams]:
    data = Path(path).read_bytes()
    magic, version, nx, ny, t, *vals = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    grid = TorusGrid(nx, ny)
    arr = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    if arr.size != 4 * nx * ny:
        raise ValueError(f"{path}: truncated snapshot body")
    psi, ux, uy, rho = arr.reshape(4, nx, ny).astype(complex)
    params = SystemParams(**dict(zip(PARAM_ORDER, vals)))
    return SimState.from_fields(grid, t, psi, np.stack((ux, uy)), rho), params
