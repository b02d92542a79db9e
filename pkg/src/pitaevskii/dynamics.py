"""Time advancement of the coupled wavefunction / velocity / density system.

Each equation is written as y' = L y + N(y) with L diagonal in Fourier
space. L is integrated exactly (integrating factor) and N by second-order
Adams-Bashforth, started with a single integrating-factor Euler step:

    psi:  L = -(lam + i) |k|^2 / 2
    u:    L = -(nu |k|^2 / rho_ref + alpha)  (constant reference density)
    rho:  L = 0

All three right sides are evaluated from the same pre-step state (Jacobi
coupling). The velocity right side is the variable-density projection of

    G = (nu Lap u + F) / rho - (u . grad) u - alpha u,

i.e. G - grad(q) / rho with div(grad(q) / rho) = div G, solved by
preconditioned conjugate gradients, followed by an exact Leray projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import diagnostics
from . import spectral as sp
from .coupling import CouplingTerms, compute_coupling_terms
from .spectral import TorusGrid
from .state import History, SimState, SystemParams, validate_state

HALT_REASONS = ("horizon", "density_floor", "numerical_halt", "error")


class NumericalHalt(RuntimeError):
    """The integration cannot continue (non-finite values, solver failure)."""


class PressureSolveError(NumericalHalt):
    pass


@dataclass(frozen=True)
class StepperConfig:
    """Time-stepping controls.

    ``imex_cnab2`` is the second-order scheme (exact linear part,
    Adams-Bashforth for the rest); ``imex_euler`` is its first-order
    counterpart. With ``adaptive`` the step follows
    ``min(cfl h / max|u|, cfl h^2 2/pi)`` clipped to [min_dt, max_dt].
    """

    dt: float = 1e-3
    scheme: str = "imex_cnab2"
    density_method: str = "pseudospectral"
    cfl_target: float = 0.5
    adaptive: bool = False
    max_dt: float = 1e-2
    min_dt: float = 1e-8
    pressure_tol: float = 1e-10
    pressure_maxiter: int = 200

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 < self.cfl_target <= 1:
            raise ValueError(f"cfl_target must lie in (0, 1], got {self.cfl_target}")
        if self.scheme not in ("imex_cnab2", "imex_euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.density_method not in ("pseudospectral", "semi_lagrangian"):
            raise ValueError(f"unknown density method {self.density_method!r}")
        if not 0 < self.min_dt <= self.max_dt:
            raise ValueError("need 0 < min_dt <= max_dt")
        if not self.pressure_tol > 0 or self.pressure_maxiter < 1:
            raise ValueError("pressure solver tolerance/iterations must be positive")


_EXP_CACHE: dict = {}


def _exp(lin, h):
    """exp(lin h), memoized on the multiplier's bytes and h (steps repeat)."""
    if lin is None:
        return 1.0
    key = (lin.tobytes(), h)
    out = _EXP_CACHE.get(key)
    if out is None:
        if len(_EXP_CACHE) > 64:
            _EXP_CACHE.clear()
        out = _EXP_CACHE[key] = np.exp(lin * h)
    return out


def _multistep(y, lin, dt, rhs, prev_rhs, prev_dt, second_order):
    """Integrating-factor Euler / variable-step Adams-Bashforth 2."""
    e1 = _exp(lin, dt)
    if prev_rhs is None or not second_order:
        return e1 * (y + dt * rhs)
    w = dt / prev_dt
    e2 = _exp(lin, dt + prev_dt)
    return e1 * y + dt * ((1 + 0.5 * w) * e1 * rhs - 0.5 * w * e2 * prev_rhs)


def _finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericalHalt(f"non-finite values in {name}")


def psi_linear(grid: TorusGrid, params: SystemParams) -> np.ndarray:
    return -0.5 * (params.lam + 1j) * grid.k2


def step_psi(state: SimState, terms: CouplingTerms, params: SystemParams,
             cfg: StepperConfig, dt: float):
    """Advance psi by ``dt``; returns (new psi, explicit tendency used)."""
    h = state.history
    rhs = terms.nls_drive
    new = _multistep(
        state.psi, psi_linear(state.grid, params), dt, rhs,
        None if h is None else h.psi_rhs, None if h is None else h.dt,
        cfg.scheme == "imex_cnab2",
    )
    _finite("psi", new)
    return new, rhs


# --- velocity ---------------------------------------------------------------


def _odd_wavenumbers(grid: TorusGrid):
    return grid.kx_odd, grid.ky_odd


def solve_pressure(grid: TorusGrid, inv_rho: np.ndarray, vhat: np.ndarray,
                   tol: float = 1e-10, maxiter: int = 200,
                   guess: Optional[np.ndarray] = None):
    """Solve div(inv_rho grad q) = div v for q (spectral, zero mean).

    Conjugate gradients on the symmetric operator -div(inv_rho grad .),
    preconditioned by the constant-coefficient inverse with the mean of
    inv_rho. Returns (q_hat, iterations). The residual target is ``tol``
    relative to div v, floored at round-off relative to v. Raises
    PressureSolveError when the target is not reached.
    """
    kx, ky = _odd_wavenumbers(grid)
    lo, hi = inv_rho.min(), inv_rho.max()
    precond = grid.inv_k2_odd / float(inv_rho.mean())

    def apply(q):
        gx = sp.to_physical(grid, 1j * kx * q, real=True)
        gy = sp.to_physical(grid, 1j * ky * q, real=True)
        fx = sp.to_spectral(grid, inv_rho * gx)
        fy = sp.to_spectral(grid, inv_rho * gy)
        return -1j * (kx * fx + ky * fy)

    b = -1j * (kx * vhat[0] + ky * vhat[1])
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(grid.shape, dtype=complex), 0
    # When div v is at round-off relative to v itself, a purely relative test
    # chases noise and CG can break down; floor the target at that level.
    kmax = float(np.sqrt(kx.max() ** 2 + ky.max() ** 2))
    target = max(tol * bnorm, 64 * np.finfo(float).eps * kmax * np.linalg.norm(vhat))
    if lo == hi:
        # Constant coefficient: the preconditioner is the exact inverse.
        return precond * b, 1
    x = np.zeros(grid.shape, dtype=complex) if guess is None else guess * (grid.inv_k2_odd > 0)
    r = b - apply(x) if guess is not None else b.copy()
    z = precond * r
    d = z.copy()
    rz = np.vdot(r, z).real
    for it in range(maxiter + 1):
        if np.linalg.norm(r) <= target:
            return x, it
        if it == maxiter:
            break
        Ad = apply(d)
        dAd = np.vdot(d, Ad).real
        if not dAd > 0 or not rz > 0:
            break
        a = rz / dAd
        x = x + a * d
        r = r - a * Ad
        z = precond * r
        rz_new = np.vdot(r, z).real
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise PressureSolveError(
        f"pressure solve stalled at relative residual "
        f"{np.linalg.norm(r) / bnorm:.3e} after {maxiter} iterations"
    )


def velocity_linear(grid: TorusGrid, params: SystemParams, inv_rho_ref: float) -> np.ndarray:
    return -(params.nu * inv_rho_ref * grid.k2 + params.alpha)


def reference_inverse_density(rho_phys: np.ndarray) -> float:
    """1/rho_ref halfway between 1/min(rho) and 1/max(rho)."""
    return 0.5 * (1.0 / rho_phys.min() + 1.0 / rho_phys.max())


def velocity_tendency(state: SimState, terms: CouplingTerms, params: SystemParams,
                      cfg: StepperConfig, inv_rho_ref: float):
    """Projected explicit velocity tendency N_u and the pressure q."""
    grid = state.grid
    u = terms.vel_phys
    inv_rho = 1.0 / state.rho_phys
    v = state.vel
    phys = sp.to_physical(grid, np.concatenate((
        sp.laplacian(grid, v), terms.nse_force,
        1j * grid.kx * v, 1j * grid.ky * v)), real=True)
    lap_u, force = phys[0:2], phys[2:4]
    # du[c, d] = d u_c / d x_d
    du = np.stack((phys[4:6], phys[6:8]), axis=1)
    G = np.empty_like(u)
    for c in range(2):
        adv = u[0] * du[c, 0] + u[1] * du[c, 1]
        G[c] = inv_rho * (params.nu * lap_u[c] + force[c]) - adv - params.alpha * u[c]
    Ghat = sp.dealias(grid, sp.to_spectral(grid, G))
    q, _ = solve_pressure(grid, inv_rho, Ghat, cfg.pressure_tol, cfg.pressure_maxiter,
                          guess=state.pressure)
    if inv_rho.min() == inv_rho.max():
        corr = inv_rho.flat[0] * sp.gradient(grid, q)
    else:
        corr = sp.to_spectral(grid, inv_rho * sp.to_physical(grid, sp.gradient(grid, q), real=True))
    projected = sp.leray_project(grid, sp.dealias(grid, Ghat - corr))
    lin = velocity_linear(grid, params, inv_rho_ref)
    return projected - lin * state.vel, q


def step_velocity(state: SimState, terms: CouplingTerms, params: SystemParams,
                  cfg: StepperConfig, dt: float):
    """Advance u by ``dt``; returns (new u, pressure q, tendency, 1/rho_ref)."""
    if state.rho_phys.min() < params.m_f:
        raise NumericalHalt("density below the floor; momentum update undefined")
    h = state.history
    inv_ref = reference_inverse_density(state.rho_phys) if h is None else h.inv_rho_ref
    rhs, q = velocity_tendency(state, terms, params, cfg, inv_ref)
    lin = velocity_linear(state.grid, params, inv_ref)
    new = _multistep(
        state.vel, lin, dt, rhs,
        None if h is None else h.vel_rhs, None if h is None else h.dt,
        cfg.scheme == "imex_cnab2",
    )
    new = sp.leray_project(state.grid, new)
    _finite("velocity", new)
    return new, q, rhs, inv_ref


# --- density ----------------------------------------------------------------


def density_tendency(state: SimState, terms: CouplingTerms) -> np.ndarray:
    grid = state.grid
    drho = sp.to_physical(grid, sp.gradient(grid, state.rho), real=True)
    adv = terms.vel_phys[0] * drho[0] + terms.vel_phys[1] * drho[1]
    return sp.dealias(grid, -sp.to_spectral(grid, adv)) + terms.continuity_source


def _semi_lagrangian_density(state: SimState, terms: CouplingTerms, dt: float):
    """Backward characteristics with midpoint tracing and midpoint source."""
    grid = state.grid
    h = state.history
    second = h is not None and h.vel is not None
    w = dt / h.dt if second else 0.0
    # Velocity and source extrapolated to the half step.
    vel_mid = state.vel + (0.5 * w * (state.vel - h.vel) if second else 0.0)
    src_mid = terms.continuity_source + (
        0.5 * w * (terms.continuity_source - h.source) if second else 0.0
    )
    X, Y = grid.coordinates()
    pts = np.column_stack([X.ravel(), Y.ravel()])
    u_here = terms.vel_phys.reshape(2, -1).T
    half = pts - 0.5 * dt * u_here
    u_half = np.column_stack([sp.evaluate_at(grid, vel_mid[c], half % 1.0).real for c in range(2)])
    mid = pts - 0.5 * dt * u_half
    dep = pts - dt * u_half
    rho_dep = sp.evaluate_at(grid, state.rho, dep % 1.0).real
    src = sp.evaluate_at(grid, src_mid, mid % 1.0).real
    rho_phys = (rho_dep + dt * src).reshape(grid.shape)
    return sp.dealias(grid, sp.to_spectral(grid, rho_phys))


def step_density(state: SimState, terms: CouplingTerms, cfg: StepperConfig, dt: float):
    """Advance rho by ``dt``; returns (new rho spectral, tendency)."""
    rhs = density_tendency(state, terms)
    if cfg.density_method == "semi_lagrangian":
        new = _semi_lagrangian_density(state, terms, dt)
    else:
        h = state.history
        new = _multistep(
            state.rho, None, dt, rhs,
            None if h is None else h.rho_rhs, None if h is None else h.dt,
            cfg.scheme == "imex_cnab2",
        )
    _finite("density", new)
    return new, rhs


# --- orchestration ------------------------------------------------------------


def choose_dt(state: SimState, cfg: StepperConfig) -> float:
    if not cfg.adaptive:
        return cfg.dt
    h = state.grid.spacing
    umax = float(np.abs(sp.to_physical(state.grid, state.vel, real=True)).max())
    dt = cfg.cfl_target * h * h * 2 / np.pi
    if umax > 0:
        dt = min(dt, cfg.cfl_target * h / umax)
    return float(np.clip(dt, cfg.min_dt, cfg.max_dt))


def advance(state: SimState, params: SystemParams, cfg: StepperConfig,
            dt: Optional[float] = None, terms: Optional[CouplingTerms] = None) -> SimState:
    """One coupled step without diagnostics.

    ``terms`` may carry the coupling terms of ``state`` when already known.
    """
    dt = choose_dt(state, cfg) if dt is None else dt
    if terms is None:
        terms = compute_coupling_terms(state.grid, state.psi, state.vel, params)
    psi, psi_rhs = step_psi(state, terms, params, cfg, dt)
    vel, q, vel_rhs, inv_ref = step_velocity(state, terms, params, cfg, dt)
    rho, rho_rhs = step_density(state, terms, cfg, dt)
    hist = History(dt=dt, psi_rhs=psi_rhs, vel_rhs=vel_rhs, rho_rhs=rho_rhs,
                   inv_rho_ref=inv_ref, vel=state.vel, source=terms.continuity_source)
    return state.evolve(t=state.t + dt, psi=psi, vel=vel, rho=rho, pressure=q, history=hist)


def _step(state, params, cfg, prev_record, dt, terms):
    new = advance(state, params, cfg, dt, terms)
    report = validate_state(new, params)
    new_terms = compute_coupling_terms(new.grid, new.psi, new.vel, params)
    record = diagnostics.evaluate(new, params, new_terms)
    if prev_record is not None:
        record = diagnostics.accumulate(prev_record, record, params.lam)
    return new, record, report, new_terms


def step(state: SimState, params: SystemParams, cfg: StepperConfig,
         prev_record=None, dt: Optional[float] = None):
    """One coupled step; returns (new state, diagnostics record, validation report).

    ``prev_record`` carries the running integrals (dissipation, constraint);
    without it they restart from the new state.
    """
    new, record, report, _ = _step(state, params, cfg, prev_record, dt, None)
    return new, record, report


@dataclass
class RunResult:
    state: SimState
    halt_reason: str
    records: list
    steps: int
    existence_time: Optional[float] = None
    message: str = ""


def run(state: SimState, params: SystemParams, cfg: StepperConfig, horizon: float,
        callbacks: Sequence[Callable] = (), cadence: Optional[float] = None,
        max_steps: Optional[int] = None) -> RunResult:
    """Step until ``t >= horizon`` or a halt condition.

    Diagnostics are evaluated at cadence ticks (default: every step), and the
    running integrals use the trapezoidal rule over those ticks. Density
    bounds and finiteness are checked after every step regardless. Each
    callback is called as ``cb(state, record)`` at cadence ticks.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    t_end = state.t + horizon
    terms = compute_coupling_terms(state.grid, state.psi, state.vel, params)
    record = diagnostics.evaluate(state, params, terms)
    records = [record]
    for cb in callbacks:
        cb(state, record)
    next_tick = state.t + (cadence or 0.0)
    prev_rho_min = record.rho_min
    n = 0
    tiny = 1e-9 * cfg.min_dt

    def sample(s, tm):
        nonlocal record
        tm = compute_coupling_terms(s.grid, s.psi, s.vel, params) if tm is None else tm
        record = diagnostics.accumulate(record, diagnostics.evaluate(s, params, tm), params.lam)
        records.append(record)
        for cb in callbacks:
            cb(s, record)
        return tm

    while state.t < t_end - max(tiny, 1e-12 * max(1.0, abs(t_end))):
        if max_steps is not None and n >= max_steps:
            break
        dt = choose_dt(state, cfg)
        remaining = t_end - state.t
        if dt > remaining or remaining - dt < 1e-6 * dt:
            dt = remaining
        try:
            new = advance(state, params, cfg, dt, terms)
        except NumericalHalt as exc:
            return RunResult(state, "numerical_halt", records, n, message=str(exc))
        n += 1
        terms = None
        # per-step guard: only the floor and finiteness decide the run
        rho_min = float(new.rho_phys.min())
        if not (np.isfinite(rho_min) and np.isfinite(new.psi).all()
                and np.isfinite(new.vel).all()):
            return RunResult(state, "numerical_halt", records, n, message="non-finite state")
        if rho_min < params.m_f:
            frac = (prev_rho_min - params.m_f) / (prev_rho_min - rho_min)
            t_star = state.t + float(np.clip(frac, 0.0, 1.0)) * dt
            sample(new, None)
            return RunResult(new, "density_floor", records, n, existence_time=t_star,
                             message=f"density floor reached at t ~ {t_star:.6g}")
        prev_rho_min = rho_min
        state = new
        if cadence is None or state.t >= next_tick - 1e-9 * dt or state.t >= t_end - 1e-12:
            terms = sample(state, None)
            if cadence:
                while next_tick <= state.t + 1e-9 * dt:
                    next_tick += cadence
    return RunResult(state, "horizon", records, n)
