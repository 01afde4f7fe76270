"""Sideband and optical-dipole-force (ODF) thermometry.

Sideband protocol: unitary red/blue sideband flopping from Fock states,
thermal weighting of the Fock-resolved traces, and mean-phonon-number
extraction either by fitting a full trace or by inverting the red/blue
ratio at the blue pi time.  ODF protocol: closed-form spin-motion
displacement amplitudes, the dephasing spectrum they imply, the height
method that inverts a single spectrum point to nbar, and heating-rate
line fits.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import units
from .numerics import ContractViolation, FitResult, fit_least_squares
from .operators import (TruncationWarning, tensor, thermal_weights)


class CapacityError(RuntimeError):
    """State size guard tripped; suggests the symmetric-subspace path."""


class UnphysicalRatioError(ValueError):
    """Red/blue ratio at or above 1 cannot come from a thermal state."""


class InversionRangeError(ValueError):
    """Measured height lies outside the invertible model range."""


STATE_SIZE_LIMIT = 2**18
DENSE_SPIN_LIMIT = 8


@dataclass
class SidebandParams:
    """Raman sideband drive addressing one motional mode.

    rabi holds the per-ion carrier Rabi frequencies Omega_j (rad/s); the
    effective sideband coupling of ion j is eta_m * b_j * Omega_j with
    eta_m the mode's Lamb-Dicke parameter.
    """
    mode: object                   # MotionalMode (cooling.MotionalMode)
    rabi: np.ndarray               # per-ion Omega_j, rad/s
    mu_r: float = 0.0              # Raman detuning omega_R - omega_0, rad/s
    n_spins: int = 1

    def __post_init__(self):
        self.rabi = np.atleast_1d(np.asarray(self.rabi, dtype=float))
        if self.rabi.size == 1 and self.n_spins > 1:
            self.rabi = np.full(self.n_spins, self.rabi[0])
        if self.rabi.size != self.n_spins:
            raise ContractViolation("need one Rabi frequency per spin")
        if np.any(self.rabi < 0):
            raise ContractViolation("rabi must be >= 0")
        if self.mode.b.size != self.n_spins:
            raise ContractViolation(
                "mode participation vector does not match n_spins")
        if abs(self.mu_r) > 2.0 * self.mode.nu:
            raise ContractViolation(
                "mu_r far outside the sideband band of this mode")

    @property
    def couplings(self):
        """Effective sideband rates eta_m * b_j * Omega_j, rad/s."""
        return self.mode.eta * self.mode.b * self.rabi

    def blue_pi_time(self):
        """pi time of the n = 0 blue flop for the first addressed ion."""
        g = self.couplings
        g0 = g[np.argmax(np.abs(g))]
        if g0 == 0:
            raise ContractViolation("all sideband couplings are zero")
        return np.pi / g0


_SX = np.array([[0.0, 1.0], [1.0, 0.0]])
_SP = np.array([[0.0, 1.0], [0.0, 0.0]])   # sigma+ = |up><down|
_SZ = np.diag([1.0, -1.0])


class _SidebandModel:
    """Cached eigensystem for P_up(t, n) tables of one sideband drive.

    The Hamiltonian is linear in an overall Rabi scale, so a table at
    scaled couplings s*g equals the unit table sampled at s*t; fitters
    exploit this to avoid re-diagonalizing.
    """

    def __init__(self, p, side, symmetric=None):
        if side not in ("red", "blue"):
            raise ContractViolation("side must be 'red' or 'blue'")
        self.p = p
        self.side = side
        self.n_fock = p.mode.n_max + 1
        n = p.n_spins
        if symmetric is None:
            symmetric = n > DENSE_SPIN_LIMIT
        if symmetric:
            g = p.couplings
            if np.ptp(g) > 1e-9 * max(np.abs(g).max(), 1e-300):
                raise ContractViolation(
                    "symmetric-subspace path requires equal couplings "
                    "(COM mode, uniform Rabi)")
            self._build_symmetric(g[0])
        else:
            if (2**n) * self.n_fock > STATE_SIZE_LIMIT:
                raise CapacityError(
                    f"dense state size 2^{n} x {self.n_fock} exceeds "
                    f"{STATE_SIZE_LIMIT}; use symmetric=True for the "
                    "COM mode")
            self._build_dense()
        self.symmetric = symmetric

    def _build_dense(self):
        p, nf = self.p, self.n_fock
        n = p.n_spins
        a = np.diag(np.sqrt(np.arange(1, nf)), 1)
        mode_op = a.T if self.side == "blue" else a     # a^dag or a
        g = self.couplings = p.couplings
        h = np.zeros((2**n * nf,) * 2)
        for j in range(n):
            ops = [np.eye(2)] * n
            ops[j] = _SP
            sp_j = tensor(ops).real
            h += 0.5 * g[j] * np.kron(sp_j, mode_op)
        h = h + h.T - np.diag(np.diag(h))
        self.evals, self.evecs = np.linalg.eigh(h)
        # fraction of up spins per basis state (bit 1 = down in our order)
        up = np.array([(n - bin(s).count("1")) / n for s in range(2**n)])
        self.weight = np.repeat(up, nf)
        # initial states |down...down> x |n>: spin index 0 is all-up
        # with our ordering (|0> = up), all-down is the last index
        self.psi0_offset = (2**n - 1) * nf

    def _build_symmetric(self, g):
        """Dicke ladder |k up-spins> x Fock, exact for uniform coupling."""
        p, nf = self.p, self.n_fock
        n = p.n_spins
        dim = (n + 1) * nf
        if dim > STATE_SIZE_LIMIT:
            raise CapacityError(f"symmetric state size {dim} exceeds limit")
        jp = np.zeros((n + 1, n + 1))
        for k in range(n):
            jp[k + 1, k] = np.sqrt((k + 1) * (n - k))   # J+ |k> ~ |k+1>
        a = np.diag(np.sqrt(np.arange(1, nf)), 1)
        mode_op = a.T if self.side == "blue" else a
        h = 0.5 * g * np.kron(jp, mode_op)
        h = h + h.T
        self.evals, self.evecs = np.linalg.eigh(h)
        self.weight = np.repeat(np.arange(n + 1) / n, nf)
        self.psi0_offset = 0    # |k = 0> x |n>

    def table(self, t):
        """P_up(t, n) for n = 0..n_max; shape (n_max + 1, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        v = self.evecs
        phases = np.exp(-1j * np.outer(self.evals, t))   # (dim, nt)
        out = np.empty((self.n_fock, t.size))
        for n in range(self.n_fock):
            c0 = v[self.psi0_offset + n, :].conj()       # <evecs|psi0>
            amp = v @ (c0[:, None] * phases)             # (dim, nt)
            out[n] = self.weight @ (np.abs(amp)**2)
        return out


def sideband_populations(p, side, t, n=None, symmetric=None):
    """Per-spin-averaged P_up under the red or blue sideband drive.

    Initial state |down...down> x |n>.  With n given, returns P_up with
    the shape of t; with n omitted, returns the full Fock-resolved table
    of shape (n_max + 1, len(t)).
    """
    model = _SidebandModel(p, side, symmetric=symmetric)
    tab = model.table(t)
    if n is None:
        return tab
    if not 0 <= n <= p.mode.n_max:
        raise ContractViolation(f"Fock index {n} outside 0..{p.mode.n_max}")
    out = tab[n]
    return out if np.ndim(t) else float(out[0])


def thermal_average(p_table, nbar):
    """Thermal mixture of Fock-resolved traces.

    sum_n w_n P(t, n) with geometric weights nbar^n/(nbar+1)^(n+1),
    renormalized over the truncated table; warns when the dropped tail
    exceeds 1e-3.
    """
    p_table = np.atleast_2d(np.asarray(p_table, dtype=float))
    n_max = p_table.shape[0] - 1
    w = thermal_weights(n_max, nbar)
    held = w.sum()
    if 1.0 - held > 1e-3:
        warnings.warn(
            f"thermal tail beyond n_max={n_max} holds {1.0 - held:.3e} "
            "of the weight", TruncationWarning)
    out = (w / held) @ p_table
    return out if out.size > 1 else float(out[0])


def fit_nbar_trace(data, p, side="blue", p0=None):
    """Extract nbar from a sideband trace by thermal-model least squares.

    data is (t, P_up) or (t, P_up, sigma).  Free parameters are
    nbar = e^u (positivity built in) and an overall Rabi scale; the
    returned FitResult carries params (nbar, scale) with 1-sigma errors
    propagated through the exponential.
    """
    if len(data) == 2:
        t, y = np.asarray(data[0], float), np.asarray(data[1], float)
        sig = np.ones_like(y)
    else:
        t, y, sig = (np.asarray(v, float) for v in data)
    g0 = max(np.abs(p.couplings))
    if t.max() * g0 < np.pi:
        raise ContractViolation("trace must span at least one pi time")
    model = _SidebandModel(p, side)

    def f(x, pr):
        u, v = pr
        tab = model.table(np.exp(v) * x)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            return thermal_average(tab, np.exp(u))

    if p0 is None:
        p0 = (1.0, 1.0)
    fr = fit_least_squares(f, (t, y, sig), [np.log(max(p0[0], 1e-4)),
                                            np.log(p0[1])])
    nbar, scale = np.exp(fr.params)
    sigma = np.array([nbar * fr.sigma[0], scale * fr.sigma[1]])
    return FitResult(params=np.array([nbar, scale]), sigma=sigma,
                     residual_norm=fr.residual_norm,
                     converged=fr.converged, n_iter=fr.n_iter)


def fit_nbar_ratio(p_red, p_blue, p, t=None, n_cap=None, tol=1e-6):
    """Invert the red/blue population ratio at the blue pi time to nbar.

    The ratio of thermally averaged sideband populations at a fixed time
    is monotone in nbar; bisection brackets it on [0, n_max / 2].
    """
    if p_blue <= 0:
        raise ContractViolation("blue-sideband population must be > 0")
    ratio = p_red / p_blue
    if ratio >= 1.0:
        raise UnphysicalRatioError(
            f"red/blue ratio {ratio:.3f} >= 1 is outside the thermal model "
            "(noise floor)")
    if ratio <= 0:
        return 0.0
    if t is None:
        t = p.blue_pi_time()
    tab_r = _SidebandModel(p, "red").table([t])
    tab_b = _SidebandModel(p, "blue").table([t])
    if n_cap is None:
        n_cap = p.mode.n_max / 2.0

    def model_ratio(nbar):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            return (thermal_average(tab_r, nbar)
                    / thermal_average(tab_b, nbar))

    lo, hi = 0.0, n_cap
    if ratio > model_ratio(hi):
        raise InversionRangeError(
            f"ratio {ratio:.3f} exceeds the model at nbar = {hi:.1f}; "
            "raise n_max")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if model_ratio(mid) < ratio:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ratio_nbar_sigma(nbar, p_red, p_blue, sigma_red, sigma_blue, p, t=None):
    """1-sigma error of a ratio-method nbar estimate (delta method).

    Propagates the measurement errors of the two populations through the
    inverse slope of the model ratio curve at the fitted nbar.
    """
    if t is None:
        t = p.blue_pi_time()
    tab_r = _SidebandModel(p, "red").table([t])
    tab_b = _SidebandModel(p, "blue").table([t])

    def model_ratio(nb):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            return (thermal_average(tab_r, nb)
                    / thermal_average(tab_b, nb))

    ratio = p_red / p_blue
    sigma_ratio = np.hypot(sigma_red, ratio * sigma_blue) / p_blue
    h = max(1e-4, 1e-3 * max(nbar, 1e-2))
    lo = max(nbar - h, 0.0)
    slope = (model_ratio(nbar + h) - model_ratio(lo)) / (nbar + h - lo)
    return float(sigma_ratio / slope)


@dataclass
class OdfParams:
    """Spin-echo ODF sequence parameters.

    rabi is the per-ion carrier Rabi frequency (a scalar calibrated on a
    single ion applies to all ions); k_mag and mass set the Lamb-Dicke
    parameter of each mode.
    """
    rabi: np.ndarray               # Omega_j, rad/s (scalar broadcast)
    mu_r: float                    # Raman detuning, rad/s
    tau: float                     # ODF arm duration, s
    tau_pi: float = 0.0            # spin-echo pi time, s
    gamma_d: float = 0.0           # background decoherence, 1/s
    phi_s: float = 0.0
    phi_m: float = 0.0
    k_mag: float = 2.0 * np.pi / (units.YB171_S_P_WAVELENGTH_NM * 1e-9)
    mass: float = units.YB171_MASS_AMU * units.AMU

    def __post_init__(self):
        self.rabi = np.atleast_1d(np.asarray(self.rabi, dtype=float))
        if self.tau < 0 or self.tau_pi < 0:
            raise ContractViolation("tau and tau_pi must be >= 0")
        if self.gamma_d < 0:
            raise ContractViolation("gamma_d must be >= 0")

    def eta(self, omega_m):
        return self.k_mag * np.sqrt(
            units.HBAR / (2.0 * self.mass * omega_m))

    def rabi_of(self, j):
        return self.rabi[j] if self.rabi.size > 1 else self.rabi[0]


def odf_alpha(o, mode, j=0):
    """Residual spin-motion displacement of ion j for one mode.

    mode is (omega_m, b_j) for that ion.  The closed form has a
    removable singularity at mu_r = omega_m; within 1e-6 relative of the
    pole the first-order series (which vanishes linearly at resonance,
    the echo cancelling the resonant displacement) is used instead.
    """
    omega_m, b_j = mode
    if omega_m <= 0:
        raise ContractViolation("mode frequency must be positive")
    amp = o.rabi_of(j) * b_j * o.eta(omega_m)
    if amp == 0:
        return 0.0 + 0.0j
    mu, tau, s = o.mu_r, o.tau, o.tau + o.tau_pi
    delta = mu - omega_m
    if abs(delta) < 1e-6 * omega_m:
        w = omega_m
        bracket = (0.5 * np.sin(2.0 * w * tau) - w * tau
                   + 1j * np.sin(w * tau)**2)
        return amp * delta * s * bracket / (2.0 * w)
    phi = s * delta
    w = omega_m
    num = (w * (1.0 - np.cos(phi)) + 1j * mu * np.sin(phi)
           - np.exp(1j * w * tau)
           * (w * (np.cos(mu * tau) - np.cos(mu * tau + phi))
              - 1j * mu * (np.sin(mu * tau) - np.sin(mu * tau + phi))))
    return amp * num / (mu**2 - w**2)


def odf_signal(o, modes, nbars):
    """Per-ion ODF Ramsey population.

    P_up_j = 1/2 [1 - e^(-2 gamma_d tau)
                  exp(-2 sum_m |alpha_jm|^2 (2 nbar_m + 1))]
    modes is a ModeDecomposition (or anything with .frequencies and
    .b_matrix); nbars is the per-mode occupation.
    """
    freqs = np.asarray(modes.frequencies, dtype=float)
    b = np.asarray(modes.b_matrix, dtype=float)
    nbars = np.asarray(nbars, dtype=float)
    if nbars.size != freqs.size:
        raise ContractViolation("need one nbar per mode")
    n_ions = b.shape[0]
    out = np.empty(n_ions)
    for j in range(n_ions):
        acc = 0.0
        for m in range(freqs.size):
            a = odf_alpha(o, (freqs[m], b[j, m]), j)
            acc += np.abs(a)**2 * (2.0 * nbars[m] + 1.0)
        out[j] = 0.5 * (1.0 - np.exp(-2.0 * o.gamma_d * o.tau)
                        * np.exp(-2.0 * acc))
    return out


def odf_height_to_nbar(height, o, modes, calibration=None, mode_index=None,
                       ion_index=0, nbar_hi=200.0, tol=1e-4):
    """Invert one ODF spectrum point to the target-mode occupation.

    The height-versus-nbar curve at fixed detuning is strictly
    increasing, so bisection inverts it; other modes are held at the
    occupations given in calibration (default 0).  mode_index defaults
    to the highest-frequency (COM) mode.
    """
    freqs = np.asarray(modes.frequencies, dtype=float)
    if mode_index is None:
        mode_index = int(np.argmax(freqs))
    base = np.zeros(freqs.size)
    if calibration is not None:
        for m, v in dict(calibration).items():
            base[int(m)] = v

    def forward(nbar):
        nb = base.copy()
        nb[mode_index] = nbar
        return odf_signal(o, modes, nb)[ion_index]

    lo_val, hi_val = forward(0.0), forward(nbar_hi)
    if not lo_val <= height <= hi_val:
        raise InversionRangeError(
            f"height {height:.4f} outside invertible range "
            f"[{lo_val:.4f}, {hi_val:.4f}]")
    lo, hi = 0.0, nbar_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if forward(mid) < height:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def heating_rate_fit(delays, nbars, sigmas=None):
    """Weighted linear fit nbar(t) = n0 + rate * t.

    Returns a FitResult whose params are (n0, rate in quanta/s) with
    1-sigma errors.
    """
    delays = np.asarray(delays, dtype=float)
    nbars = np.asarray(nbars, dtype=float)
    if delays.size < 3:
        raise ContractViolation("need at least 3 delay points")
    if sigmas is None:
        sigmas = np.ones_like(nbars)
    span = max(delays.max(), 1e-12)

    def line(x, pr):
        return pr[0] + pr[1] * x

    guess = [nbars[0], (nbars[-1] - nbars[0]) / span]
    return fit_least_squares(line, (delays, nbars, sigmas), guess)


def sample_projection_noise(p_true, shots=200, rng=None):
    """Binomial quantum-projection-noise sample of a probability trace.

    Returns (p_sampled, sigma) with a Laplace-smoothed binomial error
    estimate, sqrt(p~(1 - p~)/shots) with p~ = (k + 1)/(shots + 2), which
    stays finite at 0 and 1 counts.  For weighted fits prefer
    expected_projection_sigma of the model trace: weights derived from
    the sampled counts correlate with the noise and bias the fit.
    """
    rng = np.random.default_rng(rng)
    p_true = np.clip(np.asarray(p_true, dtype=float), 0.0, 1.0)
    k = rng.binomial(shots, p_true)
    p_smooth = (k + 1.0) / (shots + 2.0)
    sigma = np.sqrt(p_smooth * (1.0 - p_smooth) / shots)
    return k / shots, sigma


def expected_projection_sigma(p_model, shots=200):
    """Expected projection-noise scale of a model probability trace."""
    p_model = np.clip(np.asarray(p_model, dtype=float), 0.0, 1.0)
    return np.sqrt(np.clip(p_model * (1.0 - p_model), 0.25 / shots, None)
                   / shots)


def read_trace_csv(path):
    """Read `t_us, P_up[, sigma]` rows; returns (t_seconds, p, sigma)."""
    rows = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        for row in rd:
            rows.append([float(v) for v in row if v != ""])
    arr = np.array(rows)
    t = arr[:, 0] * 1e-6
    p = arr[:, 1]
    sig = arr[:, 2] if arr.shape[1] > 2 else None
    return t, p, sig


def write_nbar_csv(path, mode_freqs, nbars, sigmas=None):
    """Per-mode fitted nbar table: `mode_MHz, nbar[, sigma]`."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["mode_MHz", "nbar", "sigma"])
        for i, f in enumerate(mode_freqs):
            s = "" if sigmas is None else repr(float(sigmas[i]))
            wr.writerow([repr(float(units.to_mhz(f))),
                         repr(float(nbars[i])), s])
