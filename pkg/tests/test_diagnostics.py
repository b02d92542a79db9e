import numpy as np
import pytest

from pitaevskii import InitialData, StepperConfig, TorusGrid, evaluate, make_initial_data, run
from pitaevskii import diagnostics as dg
from pitaevskii.diagnostics import DiagnosticsRecord

from conftest import make_params
from test_dynamics import exact_S, homogeneous_state, shear_state


class TestEvaluate:
    def test_zero_state(self, params):
        g = TorusGrid(8, 8)
        rec = evaluate(homogeneous_state(g, params, 0.0), params)
        for name in ("S", "E", "X", "Z", "W", "diss_nabla_u", "diss_drag", "diss_B",
                     "momentum_x", "momentum_y", "psi_linf", "Bpsi_linf"):
            assert getattr(rec, name) == 0, name
        assert rec.rho_min == rec.rho_max == pytest.approx(params.m_i)
        assert rec.total_mass == pytest.approx(params.m_i)

    @pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
    def test_homogeneous_values(self, p):
        params = make_params(mu=0.8, p=p)
        g = TorusGrid(8, 8)
        c = 0.3 + 0.4j
        st = make_initial_data(InitialData(recipe="homogeneous", psi_const=c, rho_const=1.25,
                                           eps=None), g, params)
        rec = evaluate(st, params)
        assert rec.S == pytest.approx(0.25, rel=1e-14)
        assert rec.E == pytest.approx(2 * 0.8 / (p + 2) * 0.5 ** (p + 2), rel=1e-13)
        assert rec.X == 0 and rec.W == 0
        assert rec.total_mass == pytest.approx(1.25 + 0.25, rel=1e-14)
        assert rec.psi_linf == pytest.approx(0.5, rel=1e-13)

    def test_single_mode(self, params):
        g = TorusGrid(8, 8)
        a = 0.02 - 0.01j
        st = homogeneous_state(g, params, 0.0)
        psi = np.zeros(g.shape, complex)
        psi[1, 0] = a
        rec = evaluate(st.evolve(psi=psi), params)
        grad2 = 4 * np.pi**2 * abs(a) ** 2
        potential = 2 * params.mu / (params.p + 2) * abs(a) ** (params.p + 2)
        assert rec.E == pytest.approx(0.5 * grad2 + potential, rel=1e-12)
        assert rec.W == pytest.approx((4 * np.pi**2) ** 2.5 * abs(a) ** 2, rel=1e-12)
        assert rec.X == pytest.approx((4 * np.pi**2) ** 2 * abs(a) ** 2, rel=1e-12)

    def test_shear_flow_energies(self, params):
        g = TorusGrid(8, 8)
        st = shear_state(g, 1.5, amp=0.2)
        rec = evaluate(st, params)
        kinetic = 0.5 * 1.5 * 0.5 * 0.04
        assert rec.E == pytest.approx(kinetic, rel=1e-12)
        assert rec.diss_drag == pytest.approx(params.alpha * 2 * kinetic, rel=1e-12)
        assert rec.diss_nabla_u == pytest.approx(params.nu * 4 * np.pi**2 * 0.02, rel=1e-12)
        assert rec.momentum_x == pytest.approx(0.0, abs=1e-15)


class TestEnergyResidual:
    def test_pure_navier_stokes(self):
        params = make_params(nu=0.05, alpha=0.2)
        st = shear_state(TorusGrid(8, 8), 1.5, amp=0.2)
        r = run(st, params, StepperConfig(dt=1e-3), 1.0)
        _, _, rel = dg.energy_equality_residual(r.records)
        assert rel.max() <= 1e-6

    def test_homogeneous_second_order(self):
        # frozen: sup-in-time relative residuals 9.06e-5 / 2.16e-5 at dt = 2e-2 / 1e-2
        params = make_params(lam=0.5)
        st = homogeneous_state(TorusGrid(4, 4), params, 0.8)
        res = []
        for dt in (2e-2, 1e-2):
            _, _, rel = dg.energy_equality_residual(run(st, params, StepperConfig(dt=dt), 1.0).records)
            res.append(rel.max())
        assert res[0] == pytest.approx(9.065e-5, rel=1e-3)
        assert 3.5 < res[0] / res[1] < 4.5

    def test_starts_at_zero(self, params):
        st = make_initial_data(InitialData(), TorusGrid(8, 8), params)
        recs = run(st, params, StepperConfig(), 0.01).records
        t, res, rel = dg.energy_equality_residual(recs)
        assert t[0] == 0 and res[0] == 0 and rel[0] == 0

    def test_running_field_matches_batch(self, params):
        st = make_initial_data(InitialData(), TorusGrid(8, 8), params)
        recs = run(st, params, StepperConfig(), 0.05).records
        _, res, _ = dg.energy_equality_residual(recs)
        assert np.allclose(dg.series(recs, "energy_residual"), res, rtol=1e-10, atol=1e-22)

    def test_needs_two_samples(self, params):
        st = make_initial_data(InitialData(), TorusGrid(8, 8), params)
        with pytest.raises(ValueError):
            dg.energy_equality_residual([evaluate(st, params)])


class TestDecayFit:
    def test_exact_power_law(self):
        t = np.linspace(0, 50, 400)
        fit = dg.fit_decay_exponent(t, (1 + t) ** -3.0, S0=1.0, p=2.0)
        assert fit.exponent == pytest.approx(-3.0, abs=1e-6)
        assert fit.fit_error < 1e-10

    def test_constant_series(self):
        t = np.linspace(0, 5, 50)
        assert dg.fit_decay_exponent(t, np.full(50, 2.0), 1.0, 2.0).exponent == pytest.approx(0, abs=1e-12)

    @pytest.mark.parametrize("p", [1.0, 2.0, 4.0])
    def test_homogeneous_run(self, p):
        # with p lam mu = 1 the fit variable coincides with the closed form's
        params = make_params(lam=1.0 / p, p=p)
        st = homogeneous_state(TorusGrid(4, 4), params, 1.0)
        recs = run(st, params, StepperConfig(dt=1e-2), 20.0, cadence=0.1).records
        fit = dg.fit_decay_exponent(dg.series(recs, "t"), dg.series(recs, "S"), 1.0, p, (5.0, 20.0))
        assert fit.exponent == pytest.approx(-2.0 / p, abs=0.02)

    def test_window_validation(self):
        t = np.linspace(0, 1, 10)
        with pytest.raises(ValueError, match="fewer than two"):
            dg.fit_decay_exponent(t, np.ones(10), 1.0, 2.0, (5.0, 6.0))
        with pytest.raises(ValueError, match="positive"):
            dg.fit_decay_exponent(t, np.zeros(10), 1.0, 2.0)


class TestConstraintMonitor:
    def test_no_wavefunction(self, params):
        st = shear_state(TorusGrid(8, 8), 1.5, amp=0.2)
        rep = dg.constraint_monitor(run(st, params, StepperConfig(), 0.05).records, params)
        assert np.all(rep.accum == 0) and rep.margin == np.inf and rep.breach_time is None

    def test_homogeneous_accumulator_is_mass_transfer(self):
        # For psi = const the integrand 2 lam |psi| |B psi| equals the source, whose
        # integral to time t is S0 - S(t) and to infinity is S0 < m_i - m_f.
        params = make_params(lam=0.5)
        st = homogeneous_state(TorusGrid(4, 4), params, 0.5)
        recs = run(st, params, StepperConfig(dt=1e-2), 10.0, cadence=0.05).records
        rep = dg.constraint_monitor(recs, params)
        target = 0.25 - exact_S(0.25, 2.0, 0.5, 1.0, 10.0)
        assert rep.accum[-1] == pytest.approx(target, rel=1e-3)
        assert np.all(np.diff(rep.accum) >= 0)
        assert rep.breach_time is None and rep.margin > 0.5 - 0.25

    def test_small_data_consistency(self, params):
        st = make_initial_data(InitialData(eps=1e-2), TorusGrid(16, 16), params, seed=6)
        recs = run(st, params, StepperConfig(), 0.5, cadence=0.01).records
        rep = dg.constraint_monitor(recs, params)
        assert min(r.rho_min for r in recs) >= params.m_f
        assert rep.breach_time is None and rep.margin > 0


class TestCsv:
    def test_round_trip(self, params, tmp_path):
        st = make_initial_data(InitialData(), TorusGrid(8, 8), params)
        recs = run(st, params, StepperConfig(), 0.01).records
        dg.write_csv(tmp_path / "d.csv", recs)
        back = dg.read_csv(tmp_path / "d.csv")
        assert back == recs

    def test_header_checked(self, tmp_path):
        (tmp_path / "d.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            dg.read_csv(tmp_path / "d.csv")

    def test_short_row(self, params, tmp_path):
        st = make_initial_data(InitialData(), TorusGrid(8, 8), params)
        dg.write_csv(tmp_path / "d.csv", [evaluate(st, params)])
        with open(tmp_path / "d.csv", "a") as fh:
            fh.write("1,2,3\n")
        with pytest.raises(ValueError, match="row 3"):
            dg.read_csv(tmp_path / "d.csv")

    def test_schema_names(self):
        names = DiagnosticsRecord.field_names()
        assert names[:3] == ["t", "S", "E"] and "constraint_accum" in names
