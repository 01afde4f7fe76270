"""Differential Stark shifts and joint Rabi-component calibration."""

import json

import numpy as np
import pytest

from eitcool import units
from eitcool.numerics import ContractViolation
from eitcool.stark import (QUBITS, NearResonanceError, StarkParams,
                           b_field_alignment, clock_shift,
                           fit_rabi_components, ramsey_signal, write_json,
                           zeeman_shift)

DRIVE = StarkParams.from_mhz(18.03, 16.74, 1.72, 55.6, delta_b=4.6,
                             gamma_clock=2e3, gamma_zeeman=2e3)
PROBE = StarkParams.from_mhz(3.17, 1.49, 6.67, 55.6, delta_b=4.6,
                             gamma_clock=2e3, gamma_zeeman=2e3)


def sample_traces(p, n_points=800):
    """Noiseless Ramsey triple resolving the fastest, spanning the
    slowest oscillation."""
    shifts = [abs(clock_shift(p)), abs(zeeman_shift(p, +1)),
              abs(zeeman_shift(p, -1))]
    t = np.linspace(0.0, 6.0 * np.pi / min(shifts), n_points)
    if np.max(shifts) * (t[1] - t[0]) > 0.5 * np.pi:
        t = np.linspace(0.0, t[-1],
                        int(np.ceil(np.max(shifts) * t[-1] / (0.4 * np.pi))))
    return t, [ramsey_signal(p, q, t) for q in QUBITS]


class TestShifts:
    def test_clock_pi_only_closed_form(self):
        p = DRIVE.replace(omega_plus=0.0, omega_minus=0.0)
        d, dp, ds = p.delta, p.delta_p, p.delta_s
        expected = p.omega_pi**2 * (1.0 / d + 1.0 / (dp + ds - d))
        assert abs(clock_shift(p) - expected) < 1e-9 * abs(expected)

    def test_zeeman_near_component_dominates(self):
        # only the counter-rotating sigma component survives near detuning
        p = DRIVE.replace(omega_pi=0.0, omega_plus=0.0)
        d, dp, ds, db = p.delta, p.delta_p, p.delta_s, p.delta_b
        expected = p.omega_minus**2 * (1.0 / (d + db)
                                       - 1.0 / (dp - d - db)
                                       + 1.0 / (dp + ds - d))
        assert abs(zeeman_shift(p, +1) - expected) < 1e-9 * abs(expected)

    def test_swap_symmetry(self):
        swapped = DRIVE.replace(omega_plus=DRIVE.omega_minus,
                                omega_minus=DRIVE.omega_plus,
                                delta_b=-DRIVE.delta_b)
        assert abs(zeeman_shift(DRIVE, +1) - zeeman_shift(swapped, -1)) \
            < 1e-9 * abs(zeeman_shift(DRIVE, +1))

    def test_clock_independent_of_sigma_split(self):
        a = DRIVE.replace(omega_plus=units.mhz(10.0),
                          omega_minus=units.mhz(5.0))
        b = DRIVE.replace(omega_plus=units.mhz(5.0),
                          omega_minus=units.mhz(10.0))
        assert abs(clock_shift(a) - clock_shift(b)) < 1e-9 * abs(
            clock_shift(a))

    def test_guard_band_small_delta(self):
        with pytest.raises(NearResonanceError):
            clock_shift(DRIVE.replace(delta=units.mhz(0.1)))

    def test_guard_band_zeeman_denominator(self):
        p = DRIVE.replace(delta=units.mhz(4.5), delta_b=units.mhz(4.6))
        with pytest.raises(NearResonanceError):
            zeeman_shift(p, -1)

    def test_bad_sign_rejected(self):
        with pytest.raises(ContractViolation):
            zeeman_shift(DRIVE, 0)


class TestRamsey:
    def test_zero_time_zero_signal(self):
        for q in QUBITS:
            assert ramsey_signal(DRIVE, q, 0.0) == 0.0

    def test_negative_time_rejected(self):
        with pytest.raises(ContractViolation):
            ramsey_signal(DRIVE, "clock", np.array([-1e-6]))

    def test_unknown_qubit_rejected(self):
        with pytest.raises(ContractViolation):
            ramsey_signal(DRIVE, "stretch", np.array([1e-6]))

    def test_bounded_and_decaying(self):
        t = np.linspace(0.0, 20e-6, 500)
        y = ramsey_signal(DRIVE, "clock", t)
        assert np.all((y >= 0.0) & (y <= 1.0))
        # decay envelope: late-time maxima below early-time maxima
        assert y[t > 15e-6].max() < y[t < 5e-6].max()

    def test_no_decay_without_gamma(self):
        p = DRIVE.replace(gamma_clock=0.0)
        shift = clock_shift(p)
        t = np.pi / (2.0 * abs(shift))
        assert abs(ramsey_signal(p, "clock", t) - 1.0) < 1e-9


class TestFit:
    def test_round_trip_reference_triples(self):
        for p in (DRIVE, PROBE):
            t, traces = sample_traces(p)
            guess = p.replace(omega_plus=p.omega_plus * 1.25,
                              omega_minus=p.omega_minus * 0.8,
                              omega_pi=p.omega_pi * 1.2)
            fr = fit_rabi_components(list(zip([t] * 3, traces)), guess)
            truth = np.array([p.omega_plus, p.omega_minus, p.omega_pi])
            assert np.abs(fr.params - truth).max() < 0.01 * truth.min()

    def test_random_round_trips(self):
        rng = np.random.default_rng(6)
        for _ in range(6):
            p = StarkParams.from_mhz(
                rng.uniform(1.0, 20.0), rng.uniform(1.0, 20.0),
                rng.uniform(1.0, 20.0), rng.uniform(40.0, 70.0),
                delta_b=4.6, gamma_clock=2e3, gamma_zeeman=2e3)
            t, traces = sample_traces(p)
            guess = p.replace(
                omega_plus=p.omega_plus * rng.uniform(0.75, 1.3),
                omega_minus=p.omega_minus * rng.uniform(0.75, 1.3),
                omega_pi=p.omega_pi * rng.uniform(0.75, 1.3))
            fr = fit_rabi_components(list(zip([t] * 3, traces)), guess)
            truth = np.array([p.omega_plus, p.omega_minus, p.omega_pi])
            assert np.abs(fr.params / truth - 1.0).max() < 0.01

    def test_dict_input(self):
        t, traces = sample_traces(DRIVE)
        by_name = dict(zip(QUBITS, zip([t] * 3, traces)))
        fr = fit_rabi_components(by_name, DRIVE)
        truth = np.array([DRIVE.omega_plus, DRIVE.omega_minus,
                          DRIVE.omega_pi])
        assert np.abs(fr.params - truth).max() < 1e-4 * truth.max()

    def test_permuted_traces_fit_worse(self):
        t, traces = sample_traces(DRIVE)
        good = fit_rabi_components(list(zip([t] * 3, traces)), DRIVE)
        bad = fit_rabi_components(
            list(zip([t] * 3, [traces[1], traces[2], traces[0]])), DRIVE)
        assert bad.residual_norm > 10.0 * max(good.residual_norm, 1e-6)

    def test_wrong_trace_count_rejected(self):
        t = np.linspace(0.0, 1e-5, 50)
        with pytest.raises(ContractViolation):
            fit_rabi_components([(t, np.zeros_like(t))] * 2, DRIVE)


class TestReporting:
    def test_b_field_alignment(self):
        assert abs(b_field_alignment([3.0, 4.0, 1.0]) - 0.2) < 1e-12
        with pytest.raises(ContractViolation):
            b_field_alignment([0.0, 0.0, 1.0])

    def test_json_artifact(self, tmp_path):
        t, traces = sample_traces(DRIVE)
        fr = fit_rabi_components(list(zip([t] * 3, traces)), DRIVE)
        path = tmp_path / "stark_fit.json"
        write_json(path, fr, DRIVE)
        with open(path) as fh:
            data = json.load(fh)
        assert abs(data["omega_plus_mhz"] - 18.03) < 0.01
        assert abs(data["omega_minus_mhz"] - 16.74) < 0.01
        assert abs(data["omega_pi_mhz"] - 1.72) < 0.01
        assert isinstance(data["wide_sigma"], bool)
