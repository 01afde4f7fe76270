"""Sideband flopping, ratio/trace nbar extraction, and ODF dephasing."""

import warnings
from types import SimpleNamespace

import numpy as np
import pytest

from eitcool import units
from eitcool.cooling import MotionalMode, com_mode_for_crystal
from eitcool.lindblad import LindbladSystem, evolve
from eitcool.numerics import ContractViolation
from eitcool.operators import (DensityMatrix, HilbertSpace, TruncationWarning,
                               thermal_weights)
from eitcool.thermometry import (CapacityError, InversionRangeError,
                                 OdfParams, SidebandParams,
                                 UnphysicalRatioError,
                                 expected_projection_sigma, fit_nbar_ratio,
                                 fit_nbar_trace, heating_rate_fit, odf_alpha,
                                 odf_height_to_nbar, odf_signal,
                                 ratio_nbar_sigma, read_trace_csv,
                                 sample_projection_noise,
                                 sideband_populations, thermal_average,
                                 write_nbar_csv)


def single_ion(n_max=30, rabi_mhz=0.5):
    mode = MotionalMode.from_lab(2.38, n_max=n_max)
    return SidebandParams(mode=mode, rabi=units.mhz(rabi_mhz))


class TestSidebandBaseCases:
    def test_blue_fock_flop(self):
        p = single_ion()
        g = p.couplings[0]
        t = np.linspace(0.0, 2.0 * np.pi / g, 40)
        for n in (0, 1, 3):
            got = sideband_populations(p, "blue", t, n=n)
            exact = np.sin(np.sqrt(n + 1.0) * g * t / 2.0)**2
            assert np.abs(got - exact).max() < 1e-12

    def test_red_fock_flop(self):
        p = single_ion()
        g = p.couplings[0]
        t = np.linspace(0.0, 2.0 * np.pi / g, 40)
        for n in (1, 2, 5):
            got = sideband_populations(p, "red", t, n=n)
            exact = np.sin(np.sqrt(float(n)) * g * t / 2.0)**2
            assert np.abs(got - exact).max() < 1e-12

    def test_red_from_ground_is_dark(self):
        p = single_ion()
        t = np.linspace(0.0, 1e-4, 20)
        assert np.abs(sideband_populations(p, "red", t, n=0)).max() == 0.0

    def test_blue_pi_time(self):
        p = single_ion()
        t_pi = p.blue_pi_time()
        assert abs(sideband_populations(p, "blue", t_pi, n=0) - 1.0) < 1e-12

    def test_table_shape(self):
        p = single_ion(n_max=12)
        t = np.linspace(0.0, 1e-5, 7)
        tab = sideband_populations(p, "blue", t)
        assert tab.shape == (13, 7)

    def test_fock_index_out_of_range(self):
        p = single_ion(n_max=5)
        with pytest.raises(ContractViolation):
            sideband_populations(p, "blue", [1e-6], n=6)

    def test_bad_side_rejected(self):
        with pytest.raises(ContractViolation):
            sideband_populations(single_ion(), "green", [1e-6])


class TestMultiSpin:
    def test_symmetric_matches_dense(self):
        mode = com_mode_for_crystal(4, 2.38, n_max=6)
        p = SidebandParams(mode=mode, rabi=units.mhz(0.5), n_spins=4)
        t = np.linspace(0.0, 4.0 * p.blue_pi_time(), 25)
        dense = sideband_populations(p, "blue", t, symmetric=False)
        symm = sideband_populations(p, "blue", t, symmetric=True)
        assert np.abs(dense - symm).max() < 1e-10

    def test_symmetric_requires_equal_couplings(self):
        mode = MotionalMode.from_lab(
            2.38, n_max=5, b=np.array([0.8, 0.6]))
        p = SidebandParams(mode=mode, rabi=units.mhz(0.5), n_spins=2)
        with pytest.raises(ContractViolation):
            sideband_populations(p, "blue", [1e-6], symmetric=True)

    def test_dense_capacity_guard(self):
        mode = com_mode_for_crystal(8, 2.38, n_max=2000)
        p = SidebandParams(mode=mode, rabi=units.mhz(0.5), n_spins=8)
        with pytest.raises(CapacityError):
            sideband_populations(p, "blue", [1e-6], symmetric=False)

    def test_rabi_broadcast(self):
        mode = com_mode_for_crystal(3, 2.38, n_max=4)
        p = SidebandParams(mode=mode, rabi=units.mhz(0.5), n_spins=3)
        assert p.rabi.size == 3
        assert np.ptp(p.couplings) < 1e-12 * p.couplings[0]


class TestThermalAverage:
    def test_ground_state_returns_first_row(self):
        p = single_ion(n_max=10)
        t = np.linspace(0.0, 1e-5, 9)
        tab = sideband_populations(p, "blue", t)
        assert np.abs(thermal_average(tab, 0.0) - tab[0]).max() == 0.0

    def test_constant_table_normalization(self):
        tab = np.full((8, 5), 0.37)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            avg = thermal_average(tab, 2.0)
        assert np.abs(avg - 0.37).max() < 1e-12

    def test_tail_warning(self):
        tab = np.zeros((4, 3))
        with pytest.warns(TruncationWarning):
            thermal_average(tab, 5.0)

    def test_matches_direct_thermal_evolution(self):
        # oracle: evolve spin x mode under the sideband coupling with the
        # generic integrator from a thermal state and compare P_up
        n_max = 30
        p = single_ion(n_max=n_max)
        g = p.couplings[0]
        nbar = 1.3
        nf = n_max + 1
        a = np.diag(np.sqrt(np.arange(1, nf)), 1).astype(complex)
        sp = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |up><down|
        h = 0.5 * g * (np.kron(sp, a.conj().T)
                       + np.kron(sp.conj().T, a))
        sys = LindbladSystem(h, [], HilbertSpace((2 * nf,)))
        w = thermal_weights(n_max, nbar)
        w /= w.sum()
        rho0 = np.kron(np.diag([0.0, 1.0]), np.diag(w)).astype(complex)
        proj_up = np.kron(np.diag([1.0, 0.0]), np.eye(nf))
        t = np.linspace(0.2, 1.0, 4) * p.blue_pi_time()
        direct = [np.real(np.trace(proj_up @ r.matrix))
                  for r in evolve(sys, rho0, t, method="rk45")]
        tab = sideband_populations(p, "blue", t)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            avg = thermal_average(tab, nbar)
        assert np.abs(np.array(direct) - avg).max() < 1e-6

    def test_red_below_blue(self):
        p = single_ion(n_max=40)
        t = np.linspace(1e-7, 2.0 * p.blue_pi_time(), 15)
        red = sideband_populations(p, "red", t)
        blue = sideband_populations(p, "blue", t)
        for nbar in (0.0, 0.5, 2.0, 6.0):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TruncationWarning)
                r = thermal_average(red, nbar)
                b = thermal_average(blue, nbar)
            assert np.all(r <= b + 1e-12)


class TestFitters:
    def test_trace_round_trips(self):
        for nbar, n_max in ((0.06, 30), (7.0, 60)):
            p = single_ion(n_max=n_max)
            t = np.linspace(0.0, 3.0 * p.blue_pi_time(), 40)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TruncationWarning)
                y = thermal_average(
                    sideband_populations(p, "blue", t), nbar)
            fr = fit_nbar_trace((t, y), p)
            assert fr.converged
            assert abs(fr.params[0] - nbar) / nbar < 0.05
            assert abs(fr.params[1] - 1.0) < 1e-3

    def test_trace_requires_pi_time_span(self):
        p = single_ion()
        t = np.linspace(0.0, 0.2 * p.blue_pi_time(), 10)
        with pytest.raises(ContractViolation):
            fit_nbar_trace((t, np.zeros_like(t)), p)

    def test_ratio_round_trips(self):
        for nbar, n_max in ((0.06, 30), (1.04, 30), (7.0, 60)):
            p = single_ion(n_max=n_max)
            t = p.blue_pi_time()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TruncationWarning)
                pr = float(thermal_average(
                    sideband_populations(p, "red", [t]), nbar))
                pb = float(thermal_average(
                    sideband_populations(p, "blue", [t]), nbar))
            got = fit_nbar_ratio(pr, pb, p)
            assert abs(got - nbar) / nbar < 1e-3

    def test_ratio_unphysical_raises(self):
        p = single_ion()
        with pytest.raises(UnphysicalRatioError):
            fit_nbar_ratio(0.6, 0.5, p)

    def test_ratio_zero_maps_to_ground(self):
        p = single_ion()
        assert fit_nbar_ratio(0.0, 0.9, p) == 0.0

    def test_ratio_above_cap_raises(self):
        p = single_ion(n_max=30)
        with pytest.raises(InversionRangeError):
            fit_nbar_ratio(0.90, 0.95, p, n_cap=0.5)

    def test_trace_and_ratio_agree(self):
        for nbar in (0.1, 1.0, 5.0):
            p = single_ion(n_max=60)
            t = np.linspace(0.0, 3.0 * p.blue_pi_time(), 40)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TruncationWarning)
                y_b = thermal_average(
                    sideband_populations(p, "blue", t), nbar)
                pr = float(thermal_average(
                    sideband_populations(p, "red",
                                         [p.blue_pi_time()]), nbar))
                pb = float(thermal_average(
                    sideband_populations(p, "blue",
                                         [p.blue_pi_time()]), nbar))
            fr = fit_nbar_trace((t, y_b), p)
            nb_ratio = fit_nbar_ratio(pr, pb, p)
            combined = fr.sigma[0] + 1e-3 * (1.0 + nbar)
            assert abs(fr.params[0] - nb_ratio) < combined

    def test_dicke_com_ratio_inversion(self):
        mode = com_mode_for_crystal(12, 2.38, n_max=30)
        p = SidebandParams(mode=mode, rabi=units.mhz(0.5), n_spins=12)
        t = p.blue_pi_time()
        nbar = 1.04
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            pr = float(thermal_average(
                sideband_populations(p, "red", [t]), nbar))
            pb = float(thermal_average(
                sideband_populations(p, "blue", [t]), nbar))
        got = fit_nbar_ratio(pr, pb, p, t=t)
        assert abs(got - nbar) / nbar < 1e-3

    def test_ratio_sigma_positive_and_scales(self):
        p = single_ion()
        t = p.blue_pi_time()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            pr = float(thermal_average(
                sideband_populations(p, "red", [t]), 0.5))
            pb = float(thermal_average(
                sideband_populations(p, "blue", [t]), 0.5))
        s1 = ratio_nbar_sigma(0.5, pr, pb, 0.01, 0.01, p, t=t)
        s2 = ratio_nbar_sigma(0.5, pr, pb, 0.02, 0.02, p, t=t)
        assert 0.0 < s1 < s2
        assert abs(s2 / s1 - 2.0) < 1e-6


ODF_MODE = SimpleNamespace(
    frequencies=np.array([units.mhz(1.22)]),
    b_matrix=np.array([[1.0 / np.sqrt(12.0)]]))


def odf_at_phi(phi, tau=100e-6, rabi_mhz=0.005, **kw):
    w = ODF_MODE.frequencies[0]
    return OdfParams(rabi=units.mhz(rabi_mhz),
                     mu_r=w + 2.0 * np.pi * phi / tau, tau=tau, **kw)


class TestOdf:
    def test_nulls_at_detuning_multiples(self):
        for n in range(1, 6):
            o = odf_at_phi(float(n))
            a = odf_alpha(o, (ODF_MODE.frequencies[0],
                              ODF_MODE.b_matrix[0, 0]))
            assert abs(a) < 1e-12

    def test_alpha_linear_near_resonance(self):
        w = ODF_MODE.frequencies[0]
        tau = 100e-6

        def alpha_at(delta):
            o = OdfParams(rabi=units.mhz(0.005), mu_r=w + delta, tau=tau)
            return odf_alpha(o, (w, 1.0))

        a1 = alpha_at(4e-7 * w)      # series branch
        a2 = alpha_at(8e-7 * w)      # series branch
        a3 = alpha_at(4e-6 * w)      # closed-form branch
        assert abs(a2 / a1 - 2.0) < 1e-6
        # the closed-form branch carries genuine second-order terms, so
        # continuity across the switch is only first-order tight
        assert abs(a3 / a1 - 10.0) < 0.5

    def test_zero_rabi_gives_zero(self):
        o = odf_at_phi(0.37, rabi_mhz=0.0)
        assert odf_alpha(o, (ODF_MODE.frequencies[0], 1.0)) == 0.0

    def test_signal_monotone_in_nbar(self):
        o = odf_at_phi(0.37)
        vals = [odf_signal(o, ODF_MODE, [nb])[0]
                for nb in np.linspace(0.0, 20.0, 41)]
        assert np.all(np.diff(vals) > 0.0)

    def test_height_round_trips(self):
        o = odf_at_phi(0.37)
        for nbar in (0.82, 9.97):
            h = odf_signal(o, ODF_MODE, [nbar])[0]
            got = odf_height_to_nbar(h, o, ODF_MODE)
            assert abs(got - nbar) < 1e-2

    def test_height_out_of_range(self):
        o = odf_at_phi(0.37)
        with pytest.raises(InversionRangeError):
            odf_height_to_nbar(0.75, o, ODF_MODE, nbar_hi=5.0)

    def test_background_decoherence_baseline(self):
        o = odf_at_phi(3.0, gamma_d=50.0)   # alpha null: pure background
        got = odf_signal(o, ODF_MODE, [0.0])[0]
        expected = 0.5 * (1.0 - np.exp(-2.0 * 50.0 * o.tau))
        assert abs(got - expected) < 1e-12

    def test_nbar_count_mismatch(self):
        o = odf_at_phi(0.37)
        with pytest.raises(ContractViolation):
            odf_signal(o, ODF_MODE, [0.1, 0.2])

    def test_heating_rate_recovery(self):
        t = np.array([0.0, 5e-3, 10e-3, 20e-3])
        nbars = 0.4 + 670.0 * t
        fr = heating_rate_fit(t, nbars)
        assert abs(fr.params[0] - 0.4) < 1e-9
        assert abs(fr.params[1] - 670.0) < 1e-6

    def test_heating_fit_needs_three_points(self):
        with pytest.raises(ContractViolation):
            heating_rate_fit(np.array([0.0, 1.0]), np.array([0.0, 1.0]))


class TestNoiseAndIo:
    def test_projection_noise_deterministic(self):
        p_true = np.linspace(0.05, 0.95, 10)
        a1, s1 = sample_projection_noise(p_true, shots=200, rng=5)
        a2, s2 = sample_projection_noise(p_true, shots=200, rng=5)
        assert np.all(a1 == a2) and np.all(s1 == s2)
        assert np.all((a1 >= 0.0) & (a1 <= 1.0))
        assert np.all(s1 > 0.0)

    def test_expected_sigma_floor(self):
        s = expected_projection_sigma(np.array([0.0, 0.5]), shots=100)
        assert abs(s[0] - 0.005) < 1e-12
        assert abs(s[1] - 0.05) < 1e-12

    def test_trace_csv_round_trip(self, tmp_path):
        path = tmp_path / "trace.csv"
        with open(path, "w") as fh:
            fh.write("t_us,P_up,sigma\n1.0,0.25,0.01\n2.5,0.5,0.02\n")
        t, p, sig = read_trace_csv(path)
        assert np.allclose(t, [1e-6, 2.5e-6])
        assert np.allclose(p, [0.25, 0.5])
        assert np.allclose(sig, [0.01, 0.02])

    def test_nbar_csv(self, tmp_path):
        path = tmp_path / "nbar.csv"
        write_nbar_csv(path, [units.mhz(1.22)], [0.82], [0.05])
        text = path.read_text()
        assert text.splitlines()[0] == "mode_MHz,nbar,sigma"
        assert "0.82" in text
