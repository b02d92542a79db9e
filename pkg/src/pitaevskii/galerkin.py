"""Dense semi-Galerkin reference solver for small mode counts.

The wavefunction and velocity are expanded in real Fourier eigenfunctions of
the Laplacian and of the Stokes operator; the coefficient ODEs are
integrated with classical RK4. The density is carried along forward
characteristics (one particle per label on a uniform grid) and can be read
back on any set of points by tracing characteristics backward to t = 0 and
integrating the source along the path.

All integrals are evaluated by brute-force quadrature with dense
trigonometric tables; nothing here shares code with the pseudospectral
solver, so the two make an independent pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .state import SystemParams

SQRT2 = np.sqrt(2.0)
TWO_PI = 2 * np.pi

CONST, COS, SIN = 0, 1, 2


class OracleHalt(RuntimeError):
    """The reference integration cannot continue (singular mass matrix)."""


def _half_plane_modes(kmax: int) -> list[tuple[int, int]]:
    """One representative j of each pair {j, -j}, j != 0, in the square |j_i| <= kmax."""
    modes = [(0, j2) for j2 in range(1, kmax + 1)]
    modes += [(j1, j2) for j1 in range(1, kmax + 1) for j2 in range(-kmax, kmax + 1)]
    return modes


def _sort_key(j1, j2, kind):
    # eigenvalue, then |j1|, |j2|, sign pattern, cos before sin
    return (j1 * j1 + j2 * j2, abs(j1), abs(j2), (j1 < 0, j2 < 0), kind)


@dataclass(frozen=True, eq=False)
class GalerkinBasis:
    """Real Fourier eigenfunctions on the square |j_i| <= kmax.

    Scalar functions b: the constant, sqrt(2) cos(2 pi j.x), sqrt(2) sin(2 pi j.x).
    Vector functions a: the constants e1, e2, and (j_perp / |j|) times each
    non-constant scalar function, which is divergence-free by construction.
    Both lists are sorted by eigenvalue (|2 pi j|^2), ties broken by
    (|j1|, |j2|, sign pattern, cos before sin).

    ``quad_factor`` sets the quadrature grid: quad_factor * (2 kmax + 1)
    points per axis.
    """

    kmax: int
    quad_factor: int = 4
    scalar_modes: tuple = field(init=False, repr=False)
    vector_modes: tuple = field(init=False, repr=False)
    beta: np.ndarray = field(init=False, repr=False)
    alpha: np.ndarray = field(init=False, repr=False)
    scalar_map: np.ndarray = field(init=False, repr=False)
    vector_map: np.ndarray = field(init=False, repr=False)
    quad_n: int = field(init=False)
    quad_points: np.ndarray = field(init=False, repr=False)
    _tables: dict = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.kmax) != self.kmax or self.kmax < 1:
            raise ValueError(f"kmax must be a positive integer, got {self.kmax}")
        if self.quad_factor < 2:
            raise ValueError("quad_factor must be at least 2")
        set_ = object.__setattr__
        half = _half_plane_modes(self.kmax)
        scal = [(0, 0, CONST)] + [(j1, j2, kd) for j1, j2 in half for kd in (COS, SIN)]
        scal.sort(key=lambda m: _sort_key(*m))
        vec = [(0, 0, "e1"), (0, 0, "e2")] + [m for m in scal if m[2] != CONST]
        set_(self, "scalar_modes", tuple(scal))
        set_(self, "vector_modes", tuple(vec))
        lam = lambda m: TWO_PI**2 * (m[0] ** 2 + m[1] ** 2)  # noqa: E731
        set_(self, "beta", np.array([lam(m) for m in scal]))
        set_(self, "alpha", np.array([lam(m) for m in vec]))

        # Maps from real-basis coefficients to centered complex Fourier
        # coefficients; columns are orthonormal (Parseval).
        K = self.kmax
        w = 2 * K + 1
        smap = np.zeros((w, w, len(scal)), dtype=complex)
        for col, (j1, j2, kd) in enumerate(scal):
            _fill_scalar_column(smap[..., col], j1, j2, kd, K)
        vmap = np.zeros((2, w, w, len(vec)), dtype=complex)
        for col, (j1, j2, kd) in enumerate(vec):
            if kd == "e1":
                vmap[0, K, K, col] = 1.0
            elif kd == "e2":
                vmap[1, K, K, col] = 1.0
            else:
                tx, ty = _unit_perp(j1, j2)
                col_s = np.zeros((w, w), dtype=complex)
                _fill_scalar_column(col_s, j1, j2, kd, K)
                vmap[0, ..., col] = tx * col_s
                vmap[1, ..., col] = ty * col_s
        set_(self, "scalar_map", smap)
        set_(self, "vector_map", vmap)

        n = self.quad_factor * w
        x = np.arange(n) / n
        X, Y = np.meshgrid(x, x, indexing="ij")
        set_(self, "quad_n", n)
        set_(self, "quad_points", np.column_stack([X.ravel(), Y.ravel()]))
        set_(self, "_tables", {})

    @property
    def n_scalar(self) -> int:
        return len(self.scalar_modes)

    @property
    def n_vector(self) -> int:
        return len(self.vector_modes)

    # -- evaluation tables -------------------------------------------------

    def scalar_tables(self, points: np.ndarray):
        """Values (P, Nb) and gradients (2, P, Nb) of every b_j at ``points``."""
        cos_t, sin_t = self._phases(points)
        return self._scalar_from_phases(cos_t, sin_t)

    def vector_tables(self, points: np.ndarray):
        """Values (2, P, Na) and gradients (2, 2, P, Na) of every a_j at ``points``.

        ``grad[c, d]`` is the derivative of component c along axis d.
        """
        cos_t, sin_t = self._phases(points)
        return self._vector_from_phases(cos_t, sin_t)

    def tables(self, points: np.ndarray):
        """(b, grad b, a, grad a) at ``points`` sharing one phase evaluation."""
        cos_t, sin_t = self._phases(points)
        return self._scalar_from_phases(cos_t, sin_t) + self._vector_from_phases(cos_t, sin_t)

    def quad_tables(self):
        """Cached tables on the fixed quadrature grid."""
        if "quad" not in self._tables:
            self._tables["quad"] = self.tables(self.quad_points)
        return self._tables["quad"]

    def _index(self):
        if "index" not in self._tables:
            half = _half_plane_modes(self.kmax)
            pos = {m: i for i, m in enumerate(half)}
            J = np.array(half, dtype=float)

            def describe(modes):
                h = np.array([pos.get((m[0], m[1]), 0) for m in modes])
                kind = np.array([m[2] if isinstance(m[2], int) else -1 for m in modes])
                jv = np.array([[m[0], m[1]] for m in modes], dtype=float)
                cos_w = SQRT2 * (kind == COS)
                sin_w = SQRT2 * (kind == SIN)
                return h, jv, cos_w, sin_w

            sh, sj, scw, ssw = describe(self.scalar_modes)
            vh, vj, vcw, vsw = describe(self.vector_modes)
            norm = np.hypot(vj[:, 0], vj[:, 1])
            safe = np.where(norm > 0, norm, 1.0)
            t = np.stack([-vj[:, 1] / safe, vj[:, 0] / safe])
            const = np.zeros((2, len(self.vector_modes)))
            for col, m in enumerate(self.vector_modes):
                if m[2] == "e1":
                    const[0, col] = 1.0
                elif m[2] == "e2":
                    const[1, col] = 1.0
            # grad a[c, d] = t_c * 2 pi j_d * (derivative of the phase factor)
            vgrad = TWO_PI * t[:, None, :] * vj.T[None, :, :]
            s_const = np.array([m[2] == CONST for m in self.scalar_modes], dtype=float)
            self._tables["index"] = dict(
                J=J,
                scalar=(sh, scw, ssw, s_const, TWO_PI * sj.T),
                vector=(vh, vcw, vsw, t, const, vgrad),
            )
        return self._tables["index"]

    def _phases(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        theta = TWO_PI * (points @ self._index()["J"].T)
        return np.cos(theta), np.sin(theta)

    def _scalar_from_phases(self, cos_t, sin_t):
        h, cw, sw, const, kj = self._index()["scalar"]
        C = cos_t[:, h]
        S = sin_t[:, h]
        val = cw * C + sw * S + const
        dphase = sw * C - cw * S
        grad = kj[:, None, :] * dphase[None]
        return val, grad

    def _vector_from_phases(self, cos_t, sin_t):
        h, cw, sw, t, const, vgrad = self._index()["vector"]
        C = cos_t[:, h]
        S = sin_t[:, h]
        phase = cw * C + sw * S
        dphase = sw * C - cw * S
        val = t[:, None, :] * phase[None] + const[:, None, :]
        grad = vgrad[:, :, None, :] * dphase[None, None]
        return val, grad

    # -- coefficient <-> Fourier -------------------------------------------

    def scalar_from_fourier(self, fhat_centered: np.ndarray) -> np.ndarray:
        """Orthogonal projection of centered Fourier coefficients onto the b_j."""
        return np.tensordot(self.scalar_map.conj(), fhat_centered, axes=([0, 1], [0, 1]))

    def vector_from_fourier(self, vhat_centered: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a centered vector spectrum onto the a_j (real)."""
        c = np.tensordot(self.vector_map.conj(), vhat_centered, axes=([0, 1, 2], [0, 1, 2]))
        return c.real

    def scalar_to_fourier(self, d: np.ndarray) -> np.ndarray:
        return self.scalar_map @ d

    def vector_to_fourier(self, c: np.ndarray) -> np.ndarray:
        return self.vector_map @ c


def _unit_perp(j1, j2):
    r = np.hypot(j1, j2)
    return -j2 / r, j1 / r


def _fill_scalar_column(col, j1, j2, kind, K):
    if kind == CONST:
        col[K, K] = 1.0
        return
    a = SQRT2 / 2
    if kind == COS:
        col[K + j1, K + j2] += a
        col[K - j1, K - j2] += a
    else:
        col[K + j1, K + j2] += -1j * a
        col[K - j1, K - j2] += 1j * a


# --- density samples and the mass matrix ----------------------------------


@dataclass(frozen=True, eq=False)
class DensitySamples:
    """Density values at points carrying equal quadrature weight.

    Valid for a uniform grid and for particles advected by a
    volume-preserving flow from a uniform grid of labels.
    """

    points: np.ndarray
    values: np.ndarray

    @property
    def weight(self) -> float:
        return 1.0 / self.values.size


def _as_samples(rho, basis: GalerkinBasis) -> DensitySamples:
    if isinstance(rho, DensitySamples):
        return rho
    rho = np.asarray(rho, dtype=float)
    n = basis.quad_n
    if rho.shape not in ((n, n), (n * n,)):
        raise ValueError(f"density samples must live on the {n}x{n} quadrature grid")
    return DensitySamples(basis.quad_points, rho.ravel())


def assemble_mass_matrix(rho, basis: GalerkinBasis, a_vals: Optional[np.ndarray] = None) -> np.ndarray:
    """R_jk = integral of rho a_j . a_k by equal-weight quadrature.

    ``rho`` is either samples on the basis quadrature grid or
    :class:`DensitySamples`. Raises on non-positive density.
    """
    samples = _as_samples(rho, basis)
    if not np.all(samples.values > 0):
        raise ValueError("mass matrix needs a strictly positive density")
    if a_vals is None:
        a_vals, _ = basis.vector_tables(samples.points)
    w = samples.values * samples.weight
    R = a_vals[0].T @ (w[:, None] * a_vals[0]) + a_vals[1].T @ (w[:, None] * a_vals[1])
    return 0.5 * (R + R.T)


# --- right-hand sides ---------------------------------------------------------


def _power(psi, p):
    a2 = psi.real**2 + psi.imag**2
    return a2 ** (0.5 * p) * psi


def _lap(b, beta, d):
    v = b @ np.column_stack([-beta * d.real, -beta * d.imag])
    return v[:, 0] + 1j * v[:, 1]


@dataclass(frozen=True, eq=False)
class CoefficientRates:
    """Time derivatives of the coefficients plus the fields the density needs.

    ``velocity`` (P, 2) and ``source`` (P,) are evaluated at the density
    sample points.
    """

    dc: np.ndarray
    dd: np.ndarray
    velocity: np.ndarray
    source: np.ndarray


def _pointwise(d, c, b, db, a, da, beta, params, nonlinear):
    """psi, grad psi, u, B psi, grad u at points from the tables."""
    # Real tables times complex coefficients without promoting the tables.
    dd = np.column_stack([d.real, d.imag, -beta * d.real, -beta * d.imag])
    bd = b @ dd
    gd = db @ dd[:, :2]
    psi = bd[:, 0] + 1j * bd[:, 1]
    lap = bd[:, 2] + 1j * bd[:, 3]
    gpsi = gd[..., 0] + 1j * gd[..., 1]
    u = a @ c
    gu = da @ c
    bpsi = -0.5 * lap
    if nonlinear:
        u2 = u[0] ** 2 + u[1] ** 2
        bpsi = bpsi + 0.5 * u2 * psi + 1j * (u[0] * gpsi[0] + u[1] * gpsi[1])
        bpsi = bpsi + params.mu * _power(psi, params.p)
    return psi, gpsi, u, gu, bpsi


def coefficient_rhs(c: np.ndarray, d: np.ndarray, rho, basis: GalerkinBasis,
                    params: SystemParams, nonlinear: bool = True) -> CoefficientRates:
    """Right sides of the coefficient ODEs.

    psi = sum d_j b_j obeys

        d_j' = -(lam + i) beta_j d_j / 2
               + < -i mu |psi|^p psi - lam (B psi + Lap psi / 2), b_j >,

    and u = sum c_k a_k obeys

        R c' = -nu alpha c - N(c, c) - alpha_drag R c + < F, a >,

    with N_j = integral rho (u . grad u) . a_j and
    F = -2 lam Im(grad conj(psi) B psi) - 2 lam u Re(conj(psi) B psi).
    ``nonlinear=False`` keeps only the linear diagonal parts.
    """
    c = np.asarray(c, dtype=float)
    d = np.asarray(d, dtype=complex)
    if c.shape != (basis.n_vector,) or d.shape != (basis.n_scalar,):
        raise ValueError(
            f"coefficient sizes {c.shape}, {d.shape} do not match the basis "
            f"({basis.n_vector}, {basis.n_scalar})"
        )
    samples = _as_samples(rho, basis)
    lam, mu = params.lam, params.mu
    beta = basis.beta

    # Eulerian quadrature for the wavefunction equation and the force.
    bq, dbq, aq, daq = basis.quad_tables()
    wq = 1.0 / bq.shape[0]
    psi, gpsi, u, _, bpsi = _pointwise(d, c, bq, dbq, aq, daq, beta, params, nonlinear)
    dd = -0.5 * (lam + 1j) * beta * d
    if nonlinear:
        explicit = -1j * mu * _power(psi, params.p) - lam * (bpsi + 0.5 * _lap(bq, beta, d))
        proj = bq.T @ np.column_stack([explicit.real, explicit.imag])
        dd = dd + wq * (proj[:, 0] + 1j * proj[:, 1])
        re_pb = (np.conj(psi) * bpsi).real
        force = np.stack([
            -2 * lam * ((np.conj(gpsi[k]) * bpsi).imag + u[k] * re_pb) for k in range(2)
        ])
        forcing = wq * (aq[0].T @ force[0] + aq[1].T @ force[1])
    else:
        forcing = np.zeros(basis.n_vector)

    # Density-weighted terms at the density sample points.
    bp, dbp, ap, dap = basis.tables(samples.points)
    R = assemble_mass_matrix(samples, basis, a_vals=ap)
    psi_p, _, u_p, gu_p, bpsi_p = _pointwise(d, c, bp, dbp, ap, dap, beta, params, nonlinear)
    rhs = -params.nu * basis.alpha * c + forcing - params.alpha * (R @ c)
    if nonlinear:
        conv = np.stack([u_p[0] * gu_p[k, 0] + u_p[1] * gu_p[k, 1] for k in range(2)])
        w = samples.values * samples.weight
        rhs = rhs - (ap[0].T @ (w * conv[0]) + ap[1].T @ (w * conv[1]))
        source = 2 * lam * (np.conj(psi_p) * bpsi_p).real
    else:
        source = np.zeros(samples.values.size)
    try:
        dc = sla.cho_solve(sla.cho_factor(R), rhs)
    except sla.LinAlgError as exc:
        raise OracleHalt(f"mass matrix factorization failed: {exc}") from None
    return CoefficientRates(dc=dc, dd=dd, velocity=u_p.T.copy(), source=source)


# --- time integration ---------------------------------------------------------


@dataclass
class OracleResult:
    """Trajectory of a reference run.

    Coefficients and their time derivatives are stored at every step so the
    velocity and source can be reconstructed (cubic Hermite) at any time.
    """

    basis: GalerkinBasis
    params: SystemParams
    t: np.ndarray
    d: np.ndarray
    c: np.ndarray
    dd: np.ndarray
    dc: np.ndarray
    labels: np.ndarray
    positions: np.ndarray
    rho_labels: np.ndarray
    rho0: np.ndarray
    S: np.ndarray
    E: np.ndarray
    total_mass: np.ndarray
    rho_min: np.ndarray
    halt_reason: str = "horizon"
    existence_time: Optional[float] = None


def _energy(d, c, samples, basis, params):
    bq = basis.quad_tables()[0]
    psi = bq @ d
    potential = 2 * params.mu / (params.p + 2) * float(np.mean(np.abs(psi) ** (params.p + 2)))
    a_p, _ = basis.vector_tables(samples.points)
    u = a_p @ c
    kinetic = 0.5 * float(np.sum(samples.values * (u[0] ** 2 + u[1] ** 2)) * samples.weight)
    grad = 0.5 * float(np.sum(basis.beta * np.abs(d) ** 2))
    return kinetic + grad + potential


def oracle_run(d0: np.ndarray, c0: np.ndarray, rho0: np.ndarray, basis: GalerkinBasis,
               params: SystemParams, dt: float, T: float,
               nonlinear: bool = True) -> OracleResult:
    """Integrate the coefficient ODEs and the forward characteristics with RK4.

    ``rho0`` holds initial density samples on the basis quadrature grid; the
    same grid labels the characteristics. The run halts when the density at
    any label drops to ``params.m_f``; the crossing time is interpolated.
    """
    if not dt > 0 or T < 0:
        raise ValueError("need dt > 0 and T >= 0")
    rho0 = np.asarray(rho0, dtype=float).reshape(basis.quad_n, basis.quad_n)
    if not rho0.min() > 0:
        raise ValueError("initial density must be positive")
    labels = basis.quad_points.copy()
    d = np.asarray(d0, dtype=complex).copy()
    c = np.asarray(c0, dtype=float).copy()
    X = labels.copy()
    rl = rho0.ravel().copy()

    def rates(d, c, X, rl):
        r = coefficient_rhs(c, d, DensitySamples(X, rl), basis, params, nonlinear)
        return r.dd, r.dc, r.velocity, r.source

    nsteps = int(round(T / dt))
    if nsteps * dt < T - 1e-12 * max(1.0, T):
        nsteps += 1
    ts, ds, cs, dds, dcs = [0.0], [d.copy()], [c.copy()], [], []
    S, E, mass, rmin = [], [], [], []

    def record(d, c, X, rl):
        s = float(np.sum(np.abs(d) ** 2))
        S.append(s)
        E.append(_energy(d, c, DensitySamples(X, rl), basis, params))
        mass.append(float(rl.mean()) + s)
        rmin.append(float(rl.min()))

    record(d, c, X, rl)
    k1 = rates(d, c, X, rl)
    halt, t_star = "horizon", None
    t = 0.0
    for n in range(nsteps):
        h = min(dt, T - t) if n == nsteps - 1 else dt
        state = (d, c, X, rl)
        k2 = rates(*[y + 0.5 * h * k for y, k in zip(state, k1)])
        k3 = rates(*[y + 0.5 * h * k for y, k in zip(state, k2)])
        k4 = rates(*[y + h * k for y, k in zip(state, k3)])
        d, c, X, rl = [
            y + h / 6 * (a + 2 * b + 2 * e + f) for y, a, b, e, f in zip(state, k1, k2, k3, k4)
        ]
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(c))):
            halt = "numerical_halt"
            break
        dds.append(k1[0])
        dcs.append(k1[1])
        prev_min = rmin[-1]
        t += h
        ts.append(t)
        ds.append(d.copy())
        cs.append(c.copy())
        record(d, c, X, rl)
        if rmin[-1] <= params.m_f:
            frac = (prev_min - params.m_f) / (prev_min - rmin[-1])
            t_star = t - h + float(np.clip(frac, 0.0, 1.0)) * h
            halt = "density_floor"
            break
        try:
            k1 = rates(d, c, X, rl)
        except OracleHalt:
            halt = "numerical_halt"
            break
    # Derivative at the last stored time for Hermite reconstruction.
    if len(dds) < len(ts):
        try:
            last = rates(d, c, X, rl)
            dds.append(last[0])
            dcs.append(last[1])
        except OracleHalt:
            dds.append(dds[-1] if dds else np.zeros_like(d))
            dcs.append(dcs[-1] if dcs else np.zeros_like(c))
    return OracleResult(
        basis=basis, params=params, t=np.array(ts), d=np.array(ds), c=np.array(cs),
        dd=np.array(dds), dc=np.array(dcs), labels=labels, positions=X, rho_labels=rl,
        rho0=rho0, S=np.array(S), E=np.array(E), total_mass=np.array(mass),
        rho_min=np.array(rmin), halt_reason=halt, existence_time=t_star,
    )


def _hermite_mid(y0, y1, f0, f1, h):
    return 0.5 * (y0 + y1) + h / 8 * (f0 - f1)


def interpolate_periodic(samples: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of uniform samples on the unit torus."""
    n1, n2 = samples.shape
    fhat = np.fft.fft2(samples) / (n1 * n2)
    j1 = np.fft.fftfreq(n1, 1.0 / n1)
    j2 = np.fft.fftfreq(n2, 1.0 / n2)
    ex = np.exp(TWO_PI * 1j * np.outer(points[:, 0], j1))
    ey = np.exp(TWO_PI * 1j * np.outer(points[:, 1], j2))
    # Nyquist columns as cosines so real samples interpolate to real values.
    if n1 % 2 == 0:
        ex[:, n1 // 2] = np.cos(TWO_PI * points[:, 0] * n1 / 2)
    if n2 % 2 == 0:
        ey[:, n2 // 2] = np.cos(TWO_PI * points[:, 1] * n2 / 2)
    return np.einsum("pa,ab,pb->p", ex, fhat, ey).real


def density_readout(result: OracleResult, index: int = -1,
                    points: Optional[np.ndarray] = None) -> np.ndarray:
    """Density at ``points`` and stored time ``t[index]`` via backward characteristics.

    Traces dY/ds = u(s, Y) from s = t back to 0 with RK4 (coefficients at
    half steps from cubic Hermite interpolation), accumulating the source
    along the path, then adds rho0 interpolated at the departure point.
    Points default to the quadrature grid.
    """
    basis, params = result.basis, result.params
    n = index % len(result.t)
    Y = (basis.quad_points if points is None else np.atleast_2d(points)).astype(float).copy()
    J = np.zeros(Y.shape[0])

    def fields(d, c, pts):
        b, db, a, da = basis.tables(pts)
        psi, _, u, _, bpsi = _pointwise(d, c, b, db, a, da, basis.beta, params, True)
        return u.T, 2 * params.lam * (np.conj(psi) * bpsi).real

    for k in range(n, 0, -1):
        h = result.t[k] - result.t[k - 1]
        d1, c1 = result.d[k], result.c[k]
        d0, c0 = result.d[k - 1], result.c[k - 1]
        dm = _hermite_mid(d0, d1, result.dd[k - 1], result.dd[k], h)
        cm = _hermite_mid(c0, c1, result.dc[k - 1], result.dc[k], h)
        u1, s1 = fields(d1, c1, Y)
        u2, s2 = fields(dm, cm, Y - 0.5 * h * u1)
        u3, s3 = fields(dm, cm, Y - 0.5 * h * u2)
        u4, s4 = fields(d0, c0, Y - h * u3)
        Y = Y - h / 6 * (u1 + 2 * u2 + 2 * u3 + u4)
        J = J + h / 6 * (s1 + 2 * s2 + 2 * s3 + s4)
    return interpolate_periodic(result.rho0, Y % 1.0) + J


# --- cross-validation against the pseudospectral solver ---------------------


def centered_modes(fhat: np.ndarray, kmax: int) -> np.ndarray:
    """Extract |j_i| <= kmax from FFT-ordered coefficients into a centered array."""
    nx, ny = fhat.shape[-2:]
    if 2 * kmax >= min(nx, ny):
        raise ValueError(f"grid {nx}x{ny} cannot hold |j| <= {kmax}")
    ix = np.arange(-kmax, kmax + 1) % nx
    iy = np.arange(-kmax, kmax + 1) % ny
    return fhat[..., ix[:, None], iy[None, :]]


def coefficients_from_state(state, basis: GalerkinBasis):
    """(d, c, rho0 samples on the quadrature grid) for a solver state."""
    K = basis.kmax
    d = basis.scalar_from_fourier(centered_modes(state.psi, K))
    c = basis.vector_from_fourier(centered_modes(state.vel, K))
    rho_hat = centered_modes(state.rho, K)
    rest = state.rho.copy()
    ix = np.arange(-K, K + 1) % rest.shape[0]
    iy = np.arange(-K, K + 1) % rest.shape[1]
    rest[ix[:, None], iy[None, :]] = 0.0
    if np.linalg.norm(rest) > 1e-12 * max(1.0, np.linalg.norm(state.rho)):
        raise ValueError("initial density has modes outside the oracle basis")
    j = np.arange(-K, K + 1)
    pts = basis.quad_points
    ex = np.exp(TWO_PI * 1j * np.outer(pts[:, 0], j))
    ey = np.exp(TWO_PI * 1j * np.outer(pts[:, 1], j))
    rho0 = np.einsum("pa,ab,pb->p", ex, rho_hat, ey).real
    return d, c, rho0.reshape(basis.quad_n, basis.quad_n)


@dataclass(frozen=True)
class Discrepancy:
    """Solver-vs-oracle differences; every entry is a sup over common times."""

    times: np.ndarray
    psi_l2: np.ndarray
    vel_l2: np.ndarray
    sup_field: float
    sup_S: float
    sup_E: float
    sup_mass: float
    rho_l2_final: Optional[float] = None

    def rows(self) -> list[tuple[str, float]]:
        out = [("sup_t L2 field", self.sup_field), ("sup_t |dS|", self.sup_S),
               ("sup_t |dE|", self.sup_E), ("sup_t |d mass|", self.sup_mass)]
        if self.rho_l2_final is not None:
            out.append(("final L2 rho", self.rho_l2_final))
        return out


def compare_with_solver(snapshots: Sequence, oracle: OracleResult,
                        params: Optional[SystemParams] = None,
                        compare_density: bool = False,
                        time_tol: float = 1e-9) -> Discrepancy:
    """Compare solver snapshots against an oracle trajectory.

    ``snapshots`` are solver states whose times must coincide with stored
    oracle times. Main-solver fields are projected onto the oracle basis and
    compared in L2 (psi and u together). S, E and total mass come from the
    snapshots themselves. With ``compare_density`` the final density is
    read back from the oracle and compared on the retained modes.
    """
    from . import diagnostics

    if params is not None and params != oracle.params:
        raise ValueError("solver and oracle parameters differ")
    basis = oracle.basis
    K = basis.kmax
    if not snapshots:
        raise ValueError("no solver snapshots to compare")
    times, dpsi, dvel, dS, dE, dM = [], [], [], [], [], []
    for st in snapshots:
        k = int(np.argmin(np.abs(oracle.t - st.t)))
        if abs(oracle.t[k] - st.t) > time_tol * max(1.0, abs(st.t)):
            raise ValueError(f"solver time {st.t} has no matching oracle sample")
        d = basis.scalar_from_fourier(centered_modes(st.psi, K))
        c = basis.vector_from_fourier(centered_modes(st.vel, K))
        rec = diagnostics.evaluate(st, oracle.params)
        times.append(st.t)
        dpsi.append(float(np.linalg.norm(d - oracle.d[k])))
        dvel.append(float(np.linalg.norm(c - oracle.c[k])))
        dS.append(abs(rec.S - oracle.S[k]))
        dE.append(abs(rec.E - oracle.E[k]))
        dM.append(abs(rec.total_mass - oracle.total_mass[k]))
    psi_l2, vel_l2 = np.array(dpsi), np.array(dvel)
    rho_err = None
    if compare_density:
        last = snapshots[-1]
        k = int(np.argmin(np.abs(oracle.t - last.t)))
        rho_or = density_readout(oracle, k).reshape(basis.quad_n, basis.quad_n)
        n = basis.quad_n
        rho_or_hat = np.fft.fft2(rho_or) / (n * n)
        rho_err = float(np.linalg.norm(
            centered_modes(rho_or_hat, K) - centered_modes(last.rho, K)))
    return Discrepancy(
        times=np.array(times), psi_l2=psi_l2, vel_l2=vel_l2,
        sup_field=float(np.max(np.hypot(psi_l2, vel_l2))),
        sup_S=float(max(dS)), sup_E=float(max(dE)), sup_mass=float(max(dM)),
        rho_l2_final=rho_err,
    )
