"""Property suite: operator identities on random fields plus short-run checks."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import diagnostics as dg
from . import spectral as sp
from .coupling import apply_B, apply_BL, gradient_terms
from .dynamics import StepperConfig, run
from .spectral import TorusGrid
from .state import InitialData, SystemParams, make_initial_data


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    note: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.name:<28} {self.value:.3e}  (tol {self.tolerance:.1e}) {self.note}".rstrip()


def random_fields(grid: TorusGrid, rng: np.random.Generator, shell: Optional[int] = None,
                  amplitude: float = 1.0):
    """Random (psi, u) supported inside the dealias mask; u is divergence-free and real."""
    mask = grid.dealias_mask if shell is None else (
        (np.abs(grid.jx) <= shell) & (np.abs(grid.jy) <= shell) & grid.dealias_mask)
    decay = 1.0 / (1.0 + grid.k2 / (2 * np.pi) ** 2)
    psi = mask * decay * (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    raw = mask * decay * (rng.standard_normal((2,) + grid.shape)
                          + 1j * rng.standard_normal((2,) + grid.shape))
    vel = sp.leray_project(grid, sp.to_spectral(grid, sp.to_physical(grid, raw, real=True)))
    vel = sp.dealias(grid, vel)
    return amplitude * psi, amplitude * vel


def bl_symmetry_residual(grid, phi, psi, vel) -> float:
    """|<phi, B_L psi> - <B_L phi, psi>| / (||phi||_H1 ||psi||_H1)."""
    lhs = sp.inner_product_l2(grid, phi, apply_BL(grid, psi, vel))
    rhs = sp.inner_product_l2(grid, apply_BL(grid, phi, vel), psi)
    scale = sp.sobolev_norm(grid, phi, 1) * sp.sobolev_norm(grid, psi, 1)
    return abs(lhs - rhs) / scale


def coercivity_gap(grid, psi, vel, params: SystemParams) -> float:
    """Re<psi, B psi> - mu ||psi||^(p+2)_(p+2); nonnegative in exact arithmetic."""
    re = sp.inner_product_l2(grid, psi, apply_B(grid, psi, vel, params)).real
    lp = sp.lp_norm(sp.to_physical(grid, psi), params.p + 2) ** (params.p + 2)
    return re - params.mu * lp


def gradient_annihilation(grid, psi, vel, params: SystemParams) -> float:
    g = gradient_terms(grid, psi, vel, params)
    norm = sp.l2_norm(g)
    return sp.l2_norm(sp.leray_project(grid, g)) / norm if norm > 0 else 0.0


def run_suite(params: SystemParams, nx: int = 32, ny: int = 32, seed: int = 0,
              samples: int = 10, stepper: Optional[StepperConfig] = None,
              initial: Optional[InitialData] = None, horizon: float = 0.1) -> list[Check]:
    """Every property check, each with its measured worst case."""
    grid = TorusGrid(nx, ny)
    rng = np.random.Generator(np.random.Philox(key=seed))
    sym, coer, grad_res, idem, div = 0.0, np.inf, 0.0, 0.0, 0.0
    for _ in range(samples):
        phi, _ = random_fields(grid, rng)
        psi, vel = random_fields(grid, rng)
        sym = max(sym, bl_symmetry_residual(grid, phi, psi, vel))
        coer = min(coer, coercivity_gap(grid, psi, vel, params))
        grad_res = max(grad_res, gradient_annihilation(grid, psi, vel, params))
        raw = rng.standard_normal((2,) + grid.shape) + 1j * rng.standard_normal((2,) + grid.shape)
        once = sp.leray_project(grid, raw)
        idem = max(idem, sp.l2_norm(sp.leray_project(grid, once) - once) / sp.l2_norm(once))
        div = max(div, float(np.abs(sp.divergence(grid, once)).max()
                             / (np.abs(grid.kx).max() * np.abs(once).max())))
    checks = [
        Check("B_L symmetry", sym, 1e-10, sym <= 1e-10),
        Check("B coercivity gap (min)", coer, 1e-9, coer >= -1e-9),
        Check("gradient annihilation", grad_res, 1e-10, grad_res <= 1e-10),
        Check("Leray idempotence", idem, 1e-14, idem <= 1e-14),
        Check("Leray divergence", div, 1e-14, div <= 1e-14),
    ]

    stepper = stepper or StepperConfig(dt=1e-3)
    initial = initial or InitialData(recipe="band_limited_random", eps=1e-2)
    if initial.recipe == "band_limited_random":
        band = min(nx, ny) // 3
        initial = replace(initial, shell=min(initial.shell, band),
                          rho_shell=min(initial.rho_shell, band))
    state = make_initial_data(initial, grid, params, seed=seed)
    divs = []
    res = run(state, params, stepper, horizon,
              callbacks=[lambda s, r: divs.append(_divergence(s))])
    recs = res.records
    mass = dg.series(recs, "total_mass")
    S = dg.series(recs, "S")
    E = dg.series(recs, "E")
    drift = float(np.max(np.abs(mass - mass[0])) / mass[0])
    s_rise = float(max(0.0, np.max(np.diff(S))) / S[0]) if S[0] > 0 else 0.0
    e_rise = float(max(0.0, np.max(np.diff(E))) / E[0]) if E[0] > 0 else 0.0
    _, _, rel = dg.energy_equality_residual(recs)
    checks += [
        Check("run halt reason", 0.0 if res.halt_reason == "horizon" else 1.0, 0.0,
              res.halt_reason == "horizon", res.halt_reason),
        Check("total mass drift", drift, 1e-8, drift <= 1e-8),
        Check("S increase per step", s_rise, 1e-10, s_rise <= 1e-10),
        Check("E increase per step", e_rise, 1e-10, e_rise <= 1e-10),
        Check("energy residual / E0", float(rel.max()), 1e-5, float(rel.max()) <= 1e-5),
        Check("divergence after steps", max(divs), 1e-10, max(divs) <= 1e-10),
    ]
    return checks


def _divergence(state) -> float:
    g = state.grid
    vmax = np.abs(state.vel).max()
    if vmax == 0:
        return 0.0
    return float(np.abs(g.kx * state.vel[0] + g.ky * state.vel[1]).max() / (vmax * np.abs(g.kx).max()))
