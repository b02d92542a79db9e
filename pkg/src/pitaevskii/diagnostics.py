"""Functionals, identity residuals and decay fits for monitored runs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import spectral as sp
from .coupling import compute_coupling_terms
from .state import SimState, SystemParams

W_ORDER = 1.25  # W = ||psi||^2 in homogeneous H^{2s} with s = 5/4
LINF_OVERSAMPLE = 2


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One sample of every monitored quantity.

    Instantaneous: S, E, X, Z, W, the three dissipation rates, total mass and
    momentum, density extrema, and the L-infinity norms entering the density
    constraint. Running (filled by :func:`accumulate`): ``dissipation_integral``,
    ``constraint_accum`` and ``energy_residual``; ``E0`` is the energy at the
    start of accumulation.
    """

    t: float
    S: float
    E: float
    X: float
    Z: float
    W: float
    diss_nabla_u: float
    diss_drag: float
    diss_B: float
    total_mass: float
    momentum_x: float
    momentum_y: float
    rho_min: float
    rho_max: float
    psi_linf: float
    Bpsi_linf: float
    dissipation_integral: float = 0.0
    constraint_accum: float = 0.0
    energy_residual: float = 0.0
    E0: float = float("nan")

    @property
    def dissipation(self) -> float:
        return self.diss_nabla_u + self.diss_drag + self.diss_B

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def evaluate(state: SimState, params: SystemParams, terms=None) -> DiagnosticsRecord:
    """Evaluate every functional on a state (running fields start at zero).

    ``terms`` may carry precomputed coupling terms for this state.
    """
    grid = state.grid
    psi, vel = state.psi, state.vel
    if terms is None:
        terms = compute_coupling_terms(grid, psi, vel, params)
    rho = state.rho_phys
    u = terms.vel_phys
    psi_phys = terms.psi_phys

    S = sp.l2_norm(psi) ** 2
    grad_psi2 = float(np.sum(grid.k2 * np.abs(psi) ** 2))
    potential = 2 * params.mu / (params.p + 2) * float(np.mean(np.abs(psi_phys) ** (params.p + 2)))
    kinetic = 0.5 * float(np.mean(rho * (u[0] ** 2 + u[1] ** 2)))
    E = kinetic + 0.5 * grad_psi2 + potential
    grad_u2 = float(np.sum(grid.k2 * np.abs(vel) ** 2))
    X = float(np.sum(grid.k2**2 * np.abs(psi) ** 2)) + params.nu * grad_u2
    W = sp.sobolev_norm(grid, psi, 2 * W_ORDER, homogeneous=True) ** 2

    dpsi = terms.grad_psi_phys
    sf_mom = (np.conj(psi_phys) * dpsi).imag
    mom = [float(np.mean(rho * u[c] + sf_mom[c])) for c in range(2)]

    fine = np.abs(sp.oversampled(grid, np.stack((psi, terms.B_psi)), LINF_OVERSAMPLE))
    psi_linf = float(fine[0].max())
    B_linf = float(fine[1].max())
    return DiagnosticsRecord(
        t=state.t,
        S=S,
        E=E,
        X=X,
        Z=X + E,
        W=W,
        diss_nabla_u=params.nu * grad_u2,
        diss_drag=params.alpha * 2 * kinetic,
        diss_B=2 * params.lam * sp.l2_norm(terms.B_psi) ** 2,
        total_mass=float(np.mean(rho)) + S,
        momentum_x=mom[0],
        momentum_y=mom[1],
        rho_min=float(rho.min()),
        rho_max=float(rho.max()),
        psi_linf=psi_linf,
        Bpsi_linf=B_linf,
        E0=E,
    )


def accumulate(prev: DiagnosticsRecord, new: DiagnosticsRecord, lam: float) -> DiagnosticsRecord:
    """Advance the running integrals from ``prev`` to ``new`` (trapezoidal).

    The constraint integrand is 2 lam ||psi||_inf ||B psi||_inf.
    """
    dt = new.t - prev.t
    diss = prev.dissipation_integral + 0.5 * dt * (prev.dissipation + new.dissipation)
    cons = prev.constraint_accum + lam * dt * (
        prev.psi_linf * prev.Bpsi_linf + new.psi_linf * new.Bpsi_linf
    )
    return replace(
        new,
        dissipation_integral=diss,
        constraint_accum=cons,
        energy_residual=abs(new.E + diss - prev.E0),
        E0=prev.E0,
    )


def series(records: Sequence[DiagnosticsRecord], name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in records], dtype=float)


def energy_equality_residual(records: Sequence[DiagnosticsRecord]):
    """|E(t) + int_0^t (dissipation) - E(0)| from sampled records.

    Uses trapezoidal time quadrature over the samples. Returns
    (t, absolute residual, residual relative to E(0)).
    """
    if len(records) < 2:
        raise ValueError("energy residual needs at least two samples")
    t = series(records, "t")
    E = series(records, "E")
    d = np.array([r.dissipation for r in records])
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (d[1:] + d[:-1]))])
    res = np.abs(E + integral - E[0])
    rel = res / E[0] if E[0] > 0 else np.full_like(res, np.nan)
    return t, res, rel


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    fit_error: float
    window: tuple
    n_points: int


def fit_decay_exponent(t, values, S0: float, p: float,
                       window: Optional[tuple] = None) -> DecayFit:
    """Least-squares slope of log(value) against log(1 + S0^(p/2) t).

    ``window`` is (t_start, t_end); by default the first 10% of the time span
    is dropped. ``fit_error`` is the standard error of the slope.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is None:
        span = t[-1] - t[0]
        window = (t[0] + 0.1 * span, t[-1])
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 2:
        raise ValueError("decay fit window holds fewer than two samples")
    if np.any(v[sel] <= 0):
        raise ValueError("decay fit needs positive values on the window")
    x = np.log1p(S0 ** (p / 2) * t[sel])
    y = np.log(v[sel])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    n = int(sel.sum())
    if n > 2:
        sxx = np.sum((x - x.mean()) ** 2)
        err = float(np.sqrt(np.sum(resid**2) / (n - 2) / sxx)) if sxx > 0 else float("inf")
    else:
        err = 0.0
    return DecayFit(float(coef[0]), err, tuple(window), n)


@dataclass(frozen=True)
class ConstraintReport:
    t: np.ndarray
    accum: np.ndarray
    threshold: float
    margin: float
    breach_time: Optional[float]


def constraint_monitor(records: Sequence[DiagnosticsRecord], params: SystemParams) -> ConstraintReport:
    """Compare the running constraint integral with m_i - m_f.

    The predicted breach time comes from a sufficient condition: it may be
    early, never late.
    """
    t = series(records, "t")
    acc = series(records, "constraint_accum")
    thr = params.m_i - params.m_f
    over = np.flatnonzero(acc > thr)
    breach = float(t[over[0]]) if over.size else None
    margin = thr - float(acc[-1]) if acc.size else thr
    if acc.size and acc[-1] == 0:
        margin = float("inf")
    return ConstraintReport(t=t, accum=acc, threshold=thr, margin=margin, breach_time=breach)


def write_csv(path, records: Iterable[DiagnosticsRecord]) -> None:
    """Diagnostics time series with a header row, 17 significant digits."""
    names = DiagnosticsRecord.field_names()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in records:
            w.writerow([format(float(getattr(r, n)), ".17g") for n in names])


def read_csv(path) -> list[DiagnosticsRecord]:
    names = DiagnosticsRecord.field_names()
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][: len(names)] != names:
        raise ValueError(f"{path}: header does not match the diagnostics schema")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(names):
            raise ValueError(f"{path}: row {i} has {len(row)} fields, expected {len(names)}")
        try:
            out.append(DiagnosticsRecord(**{n: float(v) for n, v in zip(names, row)}))
        except ValueError as exc:
            raise ValueError(f"{path}: row {i}: {exc}") from None
    return out
