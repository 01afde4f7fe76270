"""Planar crystal structure and transverse normal modes."""

import numpy as np
import pytest

from eitcool import units
from eitcool.crystal import (CrystalConfig, PlanarInstabilityError,
                             equilibrium_positions, transverse_modes,
                             write_json)
from eitcool.numerics import ContractViolation


def make(n, wx=0.34, wy=1.22, wz=0.42, seed=0):
    return CrystalConfig.from_mhz(n, wx, wy, wz, seed=seed)


class TestConfig:
    def test_nonpositive_frequency_rejected(self):
        with pytest.raises(ContractViolation):
            make(3, wx=0.0)

    def test_zero_ions_rejected(self):
        with pytest.raises(ContractViolation):
            make(0)

    def test_length_scale_magnitude(self):
        # micrometer scale for MHz traps and Yb mass
        c = make(2)
        assert 1e-6 < c.length_scale < 1e-5


class TestEquilibrium:
    def test_single_ion_at_origin(self):
        c = make(1)
        assert np.abs(equilibrium_positions(c)).max() == 0.0

    def test_two_ion_closed_form(self):
        c = make(2)
        pos = equilibrium_positions(c)
        # the pair aligns along the softer in-plane axis (x here) with
        # separation (2 / alpha)^(1/3) in scaled units
        alpha = (c.omega_x / c.omega_z)**2
        s_expected = (2.0 / alpha)**(1.0 / 3.0) * c.length_scale
        s = np.linalg.norm(pos[0] - pos[1])
        assert abs(s - s_expected) < 1e-9 * s_expected
        assert np.abs(pos[:, 1]).max() < 1e-9 * s_expected

    def test_center_of_charge_at_origin(self):
        c = make(7)
        pos = equilibrium_positions(c)
        assert np.abs(pos.mean(axis=0)).max() < 1e-12 * np.abs(pos).max()

    def test_deterministic_given_seed(self):
        a = equilibrium_positions(make(5, seed=3))
        b = equilibrium_positions(make(5, seed=3))
        assert np.abs(a - b).max() == 0.0


class TestModes:
    def test_single_ion_mode_at_trap_frequency(self):
        c = make(1)
        modes = transverse_modes(c, equilibrium_positions(c))
        assert modes.frequencies.size == 1
        assert abs(modes.frequencies[0] - c.omega_y) < 1e-9 * c.omega_y

    def test_com_mode_exact(self):
        c = make(5)
        modes = transverse_modes(c, equilibrium_positions(c))
        i = np.argmin(np.abs(modes.frequencies - c.omega_y))
        assert abs(modes.frequencies[i] - c.omega_y) < 1e-9 * c.omega_y
        b = modes.b_matrix[:, i]
        assert np.abs(np.abs(b) - 1.0 / np.sqrt(5.0)).max() < 1e-9

    def test_com_is_highest_transverse_mode(self):
        c = make(6)
        modes = transverse_modes(c, equilibrium_positions(c))
        assert abs(modes.frequencies[-1] - c.omega_y) < 1e-9 * c.omega_y

    def test_trace_identity(self):
        c = make(6)
        modes = transverse_modes(c, equilibrium_positions(c))
        lhs = np.sum(modes.frequencies**2)
        assert abs(lhs - modes.hessian_trace) < 1e-9 * lhs

    def test_mode_vectors_orthonormal(self):
        c = make(6)
        modes = transverse_modes(c, equilibrium_positions(c))
        b = modes.b_matrix
        assert np.abs(b.T @ b - np.eye(6)).max() < 1e-10

    def test_nonequilibrium_positions_rejected(self):
        c = make(4)
        pos = equilibrium_positions(c)
        with pytest.raises(ContractViolation):
            transverse_modes(c, pos * 1.5)

    def test_wrong_ion_count_rejected(self):
        c = make(4)
        pos = equilibrium_positions(make(3))
        with pytest.raises(ContractViolation):
            transverse_modes(c, pos)

    def test_soft_transverse_confinement_unstable(self):
        c = make(8, wy=0.12)
        pos = equilibrium_positions(c)
        with pytest.raises(PlanarInstabilityError) as exc:
            transverse_modes(c, pos)
        assert exc.value.mode_index == 0


class TestJson:
    def test_artifact_roundtrip(self, tmp_path):
        import json

        c = make(3)
        modes = transverse_modes(c, equilibrium_positions(c))
        path = tmp_path / "modes.json"
        write_json(path, c, modes)
        with open(path) as fh:
            data = json.load(fh)
        assert data["n_ions"] == 3
        assert len(data["mode_frequencies_mhz"]) == 3
        assert abs(max(data["mode_frequencies_mhz"])
                   - units.to_mhz(c.omega_y)) < 1e-6
        assert len(data["positions_um"]) == 3
