import numpy as np
import pytest
from dataclasses import replace

from pitaevskii import InitialData, TorusGrid, make_initial_data, validate_state
from pitaevskii import spectral as sp
from pitaevskii.state import read_snapshot, smallness_norms, write_snapshot

from conftest import band_limited, make_params


class TestSystemParams:
    def test_ceiling(self, params):
        assert params.M_f == pytest.approx(params.M_i + params.m_i - params.m_f)

    @pytest.mark.parametrize("bad", [dict(p=0.0), dict(m_f=1.0), dict(m_f=-0.1), dict(lam=0.0),
                                     dict(nu=-1.0), dict(alpha=-0.1), dict(M_i=0.9)])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            make_params(**bad)

    def test_p_zero_message_names_linear_case(self):
        with pytest.raises(ValueError, match="linear"):
            make_params(p=0.0)


class TestInitialData:
    def test_homogeneous(self, params, grid16):
        st = make_initial_data(InitialData(recipe="homogeneous", psi_const=0.3, eps=None),
                               grid16, params)
        rep = validate_state(st, params)
        assert rep.ok
        assert st.psi[0, 0] == 0.3 and np.count_nonzero(st.psi) == 1
        assert np.all(st.vel == 0)
        assert np.allclose(st.rho_phys, params.m_i)

    def test_band_limited_norm_sum(self, params, grid16):
        st = make_initial_data(InitialData(eps=0.01), grid16, params, seed=4)
        total = sum(smallness_norms(grid16, st.psi, st.vel, params.p))
        assert abs(total - 0.01) < 1e-10

    def test_band_limited_density_inside_bounds(self, params, grid16):
        st = make_initial_data(InitialData(eps=0.01), grid16, params, seed=4)
        assert st.rho_phys.min() >= params.m_i - 1e-12
        assert st.rho_phys.max() <= params.M_i + 1e-12

    def test_seed_determinism(self, params, grid16):
        a = make_initial_data(InitialData(), grid16, params, seed=9)
        b = make_initial_data(InitialData(), grid16, params, seed=9)
        c = make_initial_data(InitialData(), grid16, params, seed=10)
        for name in ("psi", "vel", "rho"):
            assert np.array_equal(getattr(a, name), getattr(b, name))
        assert not np.array_equal(a.psi, c.psi)

    def test_velocity_divergence_free(self, params, grid16):
        st = make_initial_data(InitialData(), grid16, params, seed=2)
        assert validate_state(st, params).max_divergence < 1e-12

    def test_shell_beyond_band_rejected(self, params):
        with pytest.raises(ValueError, match="band"):
            make_initial_data(InitialData(shell=5), TorusGrid(12, 12), params)

    def test_prescribed_modes(self, params, grid16):
        ic = InitialData(recipe="prescribed_modes", eps=None, rho_const=1.5,
                         modes=(("psi", 1, 0, 0.01), ("ux", 0, 1, 0.002), ("rho", 1, 1, 0.05)))
        st = make_initial_data(ic, grid16, params)
        assert st.psi[1, 0] == 0.01
        assert st.vel[0, 0, 1] == 0.002 and st.vel[0, 0, -1] == 0.002
        assert st.rho[1, 1] == 0.05 and st.rho[-1, -1] == 0.05

    def test_density_below_initial_bound_rejected(self, params, grid16):
        ic = InitialData(recipe="prescribed_modes", eps=None, modes=(("rho", 1, 1, 0.05),))
        with pytest.raises(ValueError, match="m_i, M_i"):
            make_initial_data(ic, grid16, params)

    def test_prescribed_unknown_field(self, params, grid16):
        with pytest.raises(ValueError, match="unknown field"):
            make_initial_data(InitialData(recipe="prescribed_modes", eps=None,
                                          modes=(("phi", 1, 0, 1.0),)), grid16, params)

    def test_unknown_recipe(self):
        with pytest.raises(ValueError):
            InitialData(recipe="vortex")


class TestValidation:
    def test_density_floor_flagged(self, params, grid16):
        st = make_initial_data(InitialData(recipe="homogeneous", eps=None), grid16, params)
        rho = st.rho_phys.copy()
        rho[3, 5] = params.m_f / 2
        bad = replace(st, rho_phys=rho, rho=sp.to_spectral(grid16, rho))
        rep = validate_state(bad, params)
        assert rep.floor_breached and rep.rho_min == params.m_f / 2

    def test_gradient_velocity_flagged(self, params, grid16, rng):
        st = make_initial_data(InitialData(recipe="homogeneous", eps=None), grid16, params)
        f = band_limited(grid16, rng, shell=3, real=True)
        bad = st.evolve(vel=sp.gradient(grid16, f))
        assert "divergence" in validate_state(bad, params).violations

    def test_non_finite_flagged(self, params, grid16):
        st = make_initial_data(InitialData(recipe="homogeneous", eps=None), grid16, params)
        psi = st.psi.copy()
        psi[2, 2] = np.nan
        assert "non_finite" in validate_state(st.evolve(psi=psi), params).violations


class TestSnapshots:
    def test_round_trip(self, params, grid16, tmp_path):
        st = make_initial_data(InitialData(), grid16, params, seed=3).evolve(t=0.125)
        write_snapshot(tmp_path / "s.bin", st, params)
        back, p2 = read_snapshot(tmp_path / "s.bin")
        assert p2 == params and back.t == 0.125 and back.grid == grid16
        for name in ("psi", "vel", "rho"):
            assert np.array_equal(getattr(back, name), getattr(st, name))
        assert (tmp_path / "s.bin.json").exists()

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"\0" * 200)
        with pytest.raises(ValueError, match="not a snapshot"):
            read_snapshot(tmp_path / "x.bin")

    def test_rejects_truncated(self, params, grid16, tmp_path):
        st = make_initial_data(InitialData(), grid16, params)
        write_snapshot(tmp_path / "s.bin", st, params)
        data = (tmp_path / "s.bin").read_bytes()
        (tmp_path / "s.bin").write_bytes(data[:-16])
        with pytest.raises(ValueError, match="truncated"):
            read_snapshot(tmp_path / "s.bin")
