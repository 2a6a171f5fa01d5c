import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from masterlab import hilbert as hs
from masterlab import model as mdl
from masterlab.exceptions import AmbiguousLabelError, ConfigError

TWO_PI = 2 * math.pi


@pytest.fixture
def std():
    return mdl.SystemParams.reference(n_trunc=10)


class TestSystemParams:
    def test_units(self, std):
        assert std.omega_q == pytest.approx(TWO_PI * 5.304)
        assert std.omega_d == std.omega_r
        assert std.dim == 20

    @pytest.mark.parametrize("field", ["omega_q", "omega_r", "kappa"])
    def test_positive(self, std, field):
        with pytest.raises(ConfigError):
            std.with_(**{field: 0.0})

    def test_dispersive_warning(self):
        with pytest.warns(UserWarning, match="dispersive"):
            mdl.SystemParams.from_ghz(5.3, 5.5, 0.2, 0.1)

    def test_drive_spec_invariants(self):
        with pytest.raises(ConfigError):
            mdl.DriveSpec("none", 1.0, 1.0)
        with pytest.raises(ConfigError):
            mdl.DriveSpec("square", 1.0, 1.0)


class TestHamiltonians:
    def test_decoupled_spectrum(self, std):
        p = std.with_(g=0.0, n_trunc=5)
        expected = sorted(s * p.omega_q / 2 + n * p.omega_r for s in (1, -1) for n in range(5))
        np.testing.assert_allclose(np.linalg.eigvalsh(mdl.build_rabi(p)), expected, rtol=1e-13)

    def test_hermitian(self, std):
        H = mdl.build_rabi(std)
        np.testing.assert_array_equal(H, H.conj().T)

    def test_dispersive_splitting(self, std):
        # second-order perturbation theory: e0 shifted by +g^2/Delta, g0 by -g^2/Sigma
        e = hs.eigh(mdl.build_rabi(std))
        split = e.values[mdl.dressed_index(e, std, "e0")] - e.values[mdl.dressed_index(e, std, "g0")]
        oracle = std.omega_q + std.g ** 2 / std.delta + std.g ** 2 / std.sigma
        assert split == pytest.approx(oracle, rel=1e-3)

    def test_jc_decoupled_equals_rabi(self, std):
        p = std.with_(g=0.0)
        np.testing.assert_array_equal(mdl.build_jc(p), mdl.build_rabi(p))

    def test_jc_conserves_excitations(self, std):
        H = mdl.build_jc(std)
        Nex = mdl.operators(std).excitations
        assert np.max(np.abs(H @ Nex - Nex @ H)) < 1e-12

    def test_jc_single_excitation_block(self, std):
        p = std
        ops = mdl.operators(p)
        idx = [ops.index("e", 0), ops.index("g", 1)]
        block = mdl.build_jc(p)[np.ix_(idx, idx)]
        # diagonal entries w_q/2 and -w_q/2 + w_r: centre (w_r)/2, zero-point offset included
        centre = 0.5 * p.omega_r
        half = math.sqrt(p.delta ** 2 / 4 + p.g ** 2)
        np.testing.assert_allclose(np.linalg.eigvalsh(block), [centre - half, centre + half], rtol=1e-13)

    def test_counter_rotating_difference(self, std):
        ops = mdl.operators(std)
        diff = mdl.build_rabi(std) - mdl.build_jc(std)
        np.testing.assert_allclose(diff, std.g * (ops.sigma_plus @ ops.adag + ops.sigma_minus @ ops.a), atol=1e-14)


class TestDrive:
    def test_cosine_node(self, std):
        spec = mdl.DriveSpec("cosine", 0.7, std.omega_r)
        assert np.max(np.abs(mdl.drive_operator(spec, math.pi / (2 * spec.frequency), 6))) < 1e-15

    def test_rwa_never_zero(self, std):
        spec = mdl.DriveSpec("rwa", 0.3, std.omega_r)
        X = mdl.operators(6).X
        for t in np.linspace(0, spec.period, 17):
            assert np.linalg.norm(mdl.drive_operator(spec, t, 6), 2) == pytest.approx(0.3 * np.linalg.norm(X, 2))

    def test_cosine_and_rwa_at_zero(self, std):
        # both reduce to amplitude * X at t = 0, so eta = 2 eps gives twice the operator
        c = mdl.DriveSpec("cosine", 1.0, std.omega_r)
        r = mdl.DriveSpec("rwa", 0.5, std.omega_r)
        np.testing.assert_allclose(mdl.drive_operator(c, 0.0, 5), 2 * mdl.drive_operator(r, 0.0, 5))
        np.testing.assert_allclose(mdl.drive_operator(c, 0.0, 5), mdl.operators(5).X)

    def test_none_is_zero(self):
        assert not np.any(mdl.drive_operator(mdl.DriveSpec(), 1.0, 4))

    @given(st.floats(0, 50))
    def test_cosine_periodic(self, t):
        spec = mdl.DriveSpec("cosine", 0.9, TWO_PI * 7.5)
        np.testing.assert_allclose(mdl.drive_operator(spec, t, 4), mdl.drive_operator(spec, t + spec.period, 4),
                                   atol=1e-10)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            mdl.drive_operator(mdl.DriveSpec(), -1.0, 3)


class TestLabels:
    def test_decoupled_exact(self, std):
        p = std.with_(g=0.0)
        labs = mdl.dressed_labels(hs.eigh(mdl.build_rabi(p)), p)
        assert all(l.overlap2 == pytest.approx(1.0) for l in labs)
        assert [l.name for l in labs[:2]] == ["g0", "e0"]

    def test_e0_overlap(self, std):
        e = hs.eigh(mdl.build_rabi(std))
        lab = next(l for l in mdl.dressed_labels(e, std) if l.name == "e0")
        x = (std.g / std.delta) ** 2
        assert abs(lab.overlap2 - (1 - x)) < 4 * x ** 2

    def test_stable_under_truncation(self, std):
        names = []
        for N in (10, 15):
            p = std.with_(n_trunc=N)
            names.append([l.name for l in mdl.dressed_labels(hs.eigh(mdl.build_rabi(p)), p)[:4]])
        assert names[0] == names[1]

    @pytest.mark.parametrize("omega_q_ghz", [7.5, 7.45, 7.6])
    def test_near_resonant_ambiguity(self, omega_q_ghz):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = mdl.SystemParams.from_ghz(omega_q_ghz, 7.5, 0.2, 0.1, n_trunc=6)
        with pytest.raises(AmbiguousLabelError, match="both map to"):
            mdl.dressed_labels(hs.eigh(mdl.build_rabi(p)), p)

    def test_unknown_name(self, std):
        with pytest.raises(KeyError):
            mdl.dressed_index(hs.eigh(mdl.build_rabi(std)), std, "e9")


class TestDispersive:
    def test_chi(self, std):
        assert mdl.dispersive_shift(std) / TWO_PI == pytest.approx(-0.01680, abs=5e-6)

    def test_jc_limit(self, std):
        p = std.with_(omega_r=1e6, omega_q=1e6 - 10.0)
        assert mdl.dispersive_shift(p) == pytest.approx(p.g ** 2 / p.delta, rel=1e-5)

    def test_singular(self, std):
        p = std.with_(omega_q=std.omega_r)
        with pytest.raises(ZeroDivisionError):
            mdl.dispersive_shift(p)

    def test_stark(self, std):
        assert mdl.stark_shifted_freq(std, 0) == std.omega_q
        assert mdl.stark_shifted_freq(std, 10) / TWO_PI == pytest.approx(4.968, abs=5e-4)

    @given(st.floats(0, 30), st.floats(0.01, 5))
    def test_stark_decreasing(self, n, dn):
        p = mdl.SystemParams.reference()
        assert mdl.stark_shifted_freq(p, n + dn) < mdl.stark_shifted_freq(p, n)
