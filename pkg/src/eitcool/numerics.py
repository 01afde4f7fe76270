"""Shared numerical kernels: Hermitian eigensolver, real cubic roots,
adaptive ODE integration, and damped Gauss-Newton least squares.

Everything downstream (spectra, cooling, thermometry, calibration fits)
funnels through these four entry points so the tolerance contracts live
in one place.
"""

import numpy as np
from dataclasses import dataclass, field


class ContractViolation(ValueError):
    """An input breaks a documented precondition."""


class DegenerateOrderError(ContractViolation):
    """Leading polynomial coefficient is zero."""


class StiffnessError(RuntimeError):
    """Adaptive step size underflowed; carries the last good time."""

    def __init__(self, message, t_last):
        super().__init__(message)
        self.t_last = t_last


class DegenerateFitError(RuntimeError):
    """Normal equations are numerically singular."""

    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


@dataclass
class FitResult:
    params: np.ndarray
    sigma: np.ndarray
    residual_norm: float
    converged: bool
    n_iter: int


@dataclass
class OdeSpec:
    """Linear, time-independent initial value problem dy/dt = rhs(y)."""
    rhs: callable
    t_list: np.ndarray
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10

    def __post_init__(self):
        self.t_list = np.asarray(self.t_list, dtype=float)
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ContractViolation("tolerances must be positive")
        if self.t_list.ndim != 1 or np.any(np.diff(self.t_list) <= 0):
            raise ContractViolation("t_list must be strictly increasing")


def eig_hermitian(m):
    """Eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues ascending, eigenvectors as columns).  The input
    must be Hermitian to 1e-10 relative to its largest entry; it is
    symmetrized before factorization so the contract
    ``M v = lambda v`` holds to 1e-9 * ||M||.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractViolation(f"matrix must be square, got {m.shape}")
    scale = max(np.abs(m).max(), 1.0)
    asym = np.abs(m - m.conj().T).max()
    if asym > 1e-10 * scale:
        raise ContractViolation(
            f"matrix is not Hermitian: |M - M^dag|_max = {asym:.3e} "
            f"(limit {1e-10 * scale:.3e})")
    m = 0.5 * (m + m.conj().T)
    vals, vecs = np.linalg.eigh(m)
    return vals, vecs


def solve_cubic_real(c3, c2, c1, c0):
    """Real roots of c3 x^3 + c2 x^2 + c1 x + c0, ascending.

    Closed-form (Cardano / trigonometric) solution, independent of any
    eigenvalue machinery.  Complex-conjugate pairs are excluded; repeated
    real roots are reported once per distinct value.
    """
    if c3 == 0:
        raise DegenerateOrderError("leading coefficient c3 must be nonzero")
    b, c, d = c2 / c3, c1 / c3, c0 / c3
    # depressed cubic t^3 + p t + q with x = t - b/3
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    shift = -b / 3.0
    scale = max(abs(c3), abs(c2), abs(c1), abs(c0)) / abs(c3)
    eps = 1e-12 * max(1.0, abs(p))**1.5

    disc = -(4.0 * p**3 + 27.0 * q * q)
    if abs(p) < 1e-14 * max(1.0, scale) and abs(q) < eps:
        roots = [shift]
    elif disc > 0:
        # three distinct real roots, trigonometric form (p < 0 here)
        r = 2.0 * np.sqrt(-p / 3.0)
        arg = np.clip(3.0 * q / (p * r), -1.0, 1.0)
        theta = np.arccos(arg)
        roots = [shift + r * np.cos((theta - 2.0 * np.pi * k) / 3.0)
                 for k in range(3)]
    elif abs(disc) <= 1e-10 * max(1.0, (abs(p)**3 + q * q)) and p != 0.0:
        # borderline double root: closed forms 3q/p (simple) and
        # -3q/(2p) (double) avoid picking the wrong Cardano branch
        roots = [shift + 3.0 * q / p, shift - 1.5 * q / p]
    else:
        # one real root
        u = -q / 2.0 + np.sqrt(q * q / 4.0 + p**3 / 27.0 + 0j)
        u = u**(1.0 / 3.0) if abs(u) > 0 else 0.0
        t0 = np.real(u - p / (3.0 * u)) if abs(u) > 0 else 0.0
        roots = [shift + t0]
    roots = sorted(set(_polish_cubic_root(c3, c2, c1, c0, r) for r in roots))
    return np.array(roots)


def _polish_cubic_root(c3, c2, c1, c0, x):
    # two Newton steps to push |p(x)| to the contract tolerance
    for _ in range(2):
        f = ((c3 * x + c2) * x + c1) * x + c0
        df = (3.0 * c3 * x + 2.0 * c2) * x + c1
        if df != 0:
            x -= f / df
    return x


# Dormand-Prince 5(4) coefficients
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


def integrate_ode(spec, y0):
    """Integrate dy/dt = rhs(y) over spec.t_list.

    Embedded Dormand-Prince 5(4) pair with PI step-size control; the first
    t_list entry is the initial time.  Returns an array of states of shape
    (len(t_list), len(y0)).
    """
    y = np.asarray(y0, dtype=complex).ravel().copy()
    if not np.all(np.isfinite(y)):
        raise ContractViolation("initial state must be finite")
    t_list = spec.t_list
    out = np.empty((len(t_list), y.size), dtype=complex)
    out[0] = y
    t = t_list[0]
    span = t_list[-1] - t_list[0]
    h = span / 100.0
    err_prev = 1.0
    k = [None] * 7
    k[0] = spec.rhs(y)

    for idx in range(1, len(t_list)):
        t_end = t_list[idx]
        while t < t_end:
            h = min(h, t_end - t)
            if h < 1e-14 * max(abs(t), span):
                raise StiffnessError(
                    f"step size underflow at t = {t:.6e}", t)
            for i in range(1, 7):
                yi = y + h * sum(a * k[j] for j, a in enumerate(_DP_A[i]))
                k[i] = spec.rhs(yi)
            y5 = y + h * sum(b * ki for b, ki in zip(_DP_B5, k) if b != 0)
            y4 = y + h * sum(b * ki for b, ki in zip(_DP_B4, k) if b != 0)
            tol = spec.abs_tol + spec.rel_tol * np.maximum(np.abs(y), np.abs(y5))
            err = max(np.sqrt(np.mean(np.abs((y5 - y4) / tol)**2)), 1e-10)
            if err <= 1.0:
                t += h
                y = y5
                k[0] = k[6]  # FSAL
                # PI controller: current and previous error exponents
                fac = 0.9 * err**-0.12 * err_prev**0.08
                err_prev = err
            else:
                fac = 0.9 * err**-0.2
                k[6] = None
            h *= min(5.0, max(0.2, fac))
        out[idx] = y
    return out


def fit_least_squares(model, data, p0, max_iter=200, bounds=None):
    """Weighted nonlinear least squares via Levenberg-Marquardt.

    model(x, params) -> y_hat; data is (x, y, sigma_y) with sigma_y > 0.
    The Jacobian is numerical (central differences, step 1e-6 * scale).
    1-sigma errors come from the diagonal of the inverse approximate
    Hessian (J^T J in whitened residual coordinates).
    """
    x, y, sig = (np.asarray(v, dtype=float) for v in data)
    if np.any(sig <= 0):
        raise ContractViolation("sigma_y must be positive")
    p = np.asarray(p0, dtype=float).copy()
    if y.size < p.size:
        raise ContractViolation("need at least as many points as parameters")

    def residuals(pp):
        return (y - np.asarray(model(x, pp), dtype=float)) / sig

    def jacobian(pp):
        J = np.empty((y.size, pp.size))
        for j in range(pp.size):
            step = 1e-6 * max(abs(pp[j]), 1.0)
            pu, pd = pp.copy(), pp.copy()
            pu[j] += step
            pd[j] -= step
            # whitened model derivative d(f/sigma)/dp_j
            J[:, j] = (residuals(pd) - residuals(pu)) / (2.0 * step)
        return J

    r = residuals(p)
    chi2 = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = jacobian(p)
        JtJ = J.T @ J
        g = J.T @ r
        cond = np.linalg.cond(JtJ)
        if not np.isfinite(cond) or cond > 1e14:
            raise DegenerateFitError(
                f"singular Jacobian (cond ~ {cond:.3e})", cond)
        step_ok = False
        for _ in range(30):
            try:
                delta = np.linalg.solve(
                    JtJ + lam * np.diag(np.diag(JtJ).clip(min=1e-30)), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_try = p + delta
            if bounds is not None:
                p_try = np.clip(p_try, bounds[0], bounds[1])
            r_try = residuals(p_try)
            chi2_try = float(r_try @ r_try)
            if np.isfinite(chi2_try) and chi2_try <= chi2:
                step_ok = True
                break
            lam *= 10.0
        if not step_ok:
            break
        rel_step = np.abs(p_try - p) / np.maximum(np.abs(p), 1.0)
        rel_drop = (chi2 - chi2_try) / max(chi2, 1e-300)
        p, r, chi2 = p_try, r_try, chi2_try
        lam = max(lam / 10.0, 1e-12)
        if rel_step.max() < 1e-10 or rel_drop < 1e-12:
            converged = True
            break

    J = jacobian(p)
    JtJ = J.T @ J
    try:
        cov = np.linalg.inv(JtJ)
        sigma = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        sigma = np.full(p.size, np.inf)
    return FitResult(params=p, sigma=sigma, residual_norm=float(np.sqrt(chi2)),
                     converged=converged, n_iter=it)
