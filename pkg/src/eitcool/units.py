"""Unit conventions and physical constants.

All frequencies inside the library are angular frequencies in rad/s with
hbar = 1.  User-facing configs and CLI quote frequencies in MHz, meaning
omega/(2 pi); conversion happens once at the boundary.
"""

import math

# CODATA 2018 values, 9 significant digits
HBAR = 1.05457182e-34       # J s
EPSILON_0 = 8.85418781e-12  # F/m
ELEMENTARY_CHARGE = 1.60217663e-19  # C
AMU = 1.66053907e-27        # kg

# default Yb-171 values
YB171_MASS_AMU = 170.936332
YB171_S_P_WAVELENGTH_NM = 369.5
YB171_GAMMA_MHZ = 19.6          # P1/2 natural linewidth / 2pi
YB171_QUBIT_SPLITTING_GHZ = 12.642812

COULOMB_K = ELEMENTARY_CHARGE**2 / (4.0 * math.pi * EPSILON_0)


def mhz(value):
    """Convert a frequency given as omega/(2 pi) in MHz to rad/s."""
    return 2.0 * math.pi * 1e6 * value


def to_mhz(omega):
    """Convert an angular frequency in rad/s to omega/(2 pi) in MHz."""
    return omega / (2.0 * math.pi * 1e6)


def us(value):
    """Convert microseconds to seconds."""
    return 1e-6 * value
