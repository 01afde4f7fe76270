"""Lindblad master-equation engine.

drho/dt = -i[H, rho] + sum_i (c_i rho c_i^dag - 1/2 {c_i^dag c_i, rho})

The right-hand side is always evaluated in matrix form (O(d^3) work,
O(d^2) memory); the dense superoperator is only materialized for the
null-space steady-state solve on small systems.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .numerics import ContractViolation, OdeSpec, integrate_ode
from .operators import DensityMatrix, HilbertSpace

# above this total dimension the dense Liouvillian (d^2 x d^2) is
# impractical and steady states fall back to long-time evolution
NULL_SPACE_DIM_LIMIT = 64


class NonUniqueSteadyStateError(RuntimeError):
    pass


class SteadyStateTimeout(RuntimeError):
    pass


@dataclass
class LindbladSystem:
    hamiltonian: np.ndarray
    collapse: list
    space: HilbertSpace

    def __post_init__(self):
        d = self.space.dim
        self.hamiltonian = np.asarray(self.hamiltonian, dtype=complex)
        self.collapse = [np.asarray(c, dtype=complex) for c in self.collapse]
        if self.hamiltonian.shape != (d, d):
            raise ContractViolation("hamiltonian dim does not match space")
        for c in self.collapse:
            if c.shape != (d, d):
                raise ContractViolation("collapse dim does not match space")
        h = self.hamiltonian
        scale = max(np.abs(h).max(), 1.0)
        if np.abs(h - h.conj().T).max() > 1e-10 * scale:
            raise ContractViolation("hamiltonian is not Hermitian")

    def rhs_matrix(self, rho):
        """Lindblad generator applied to a (d, d) matrix."""
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        for c in self.collapse:
            cd = c.conj().T
            cdc = cd @ c
            out += c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)
        return out

    def effective_hamiltonian(self):
        """H - (i/2) sum c^dag c, the no-jump generator."""
        heff = self.hamiltonian.astype(complex).copy()
        for c in self.collapse:
            heff -= 0.5j * (c.conj().T @ c)
        return heff

    def liouvillian_matrix(self):
        """Dense superoperator on vec(rho), row-major convention."""
        d = self.space.dim
        if d > NULL_SPACE_DIM_LIMIT:
            raise ContractViolation(
                f"dense Liouvillian refused for dim {d} > "
                f"{NULL_SPACE_DIM_LIMIT}")
        h = self.hamiltonian
        eye = np.eye(d)
        L = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
        for c in self.collapse:
            cd = c.conj().T
            cdc = cd @ c
            L += np.kron(c, c.conj())
            L -= 0.5 * (np.kron(cdc, eye) + np.kron(eye, cdc.T))
        return L


def _finalize(sys, mat, trace_tol=1e-6):
    mat = 0.5 * (mat + mat.conj().T)
    tr = np.trace(mat).real
    if abs(tr - 1.0) > trace_tol:
        raise RuntimeError(f"trace drifted to {tr}")
    return DensityMatrix(sys.space, mat / tr)


def evolve(sys, rho0, t_list, rel_tol=1e-8, abs_tol=1e-10, method="auto",
           split_dt=2e-9):
    """Trajectory of density matrices at the requested times.

    method "rk45" integrates the full generator with the adaptive
    embedded pair; "split" alternates the exact no-jump propagator
    exp(-i H_eff dt) with a first-order jump update, which is far cheaper
    for large Hilbert spaces at fixed fast-rotation scales.  "auto"
    switches to the split propagator above dimension 64.  Both paths are
    cross-checked against each other in the test suite.
    """
    t_list = np.asarray(t_list, dtype=float)
    d = sys.space.dim
    rho = np.asarray(rho0.matrix if isinstance(rho0, DensityMatrix) else rho0,
                     dtype=complex)
    if method == "auto":
        method = "rk45" if d <= NULL_SPACE_DIM_LIMIT else "split"

    if method == "rk45":
        def rhs(y):
            return sys.rhs_matrix(y.reshape(d, d)).ravel()
        ts = t_list if t_list[0] == 0.0 else np.r_[0.0, t_list]
        spec = OdeSpec(rhs=rhs, t_list=ts, rel_tol=rel_tol, abs_tol=abs_tol)
        states = integrate_ode(spec, rho.ravel())
        if t_list[0] != 0.0:
            states = states[1:]
        return [_finalize(sys, s.reshape(d, d)) for s in states]

    if method != "split":
        raise ContractViolation(f"unknown method {method!r}")
    return _evolve_split(sys, rho, t_list, split_dt)


def _evolve_split(sys, rho, t_list, dt_target):
    jumps = [(c, c.conj().T) for c in sys.collapse]
    out = []
    t = 0.0
    propagators = {}
    for t_next in t_list:
        span = t_next - t
        if span < 0:
            raise ContractViolation("t_list must start at or after 0")
        if span == 0:
            out.append(_finalize(sys, rho.copy()))
            continue
        n = max(1, int(round(span / dt_target)))
        dt = span / n
        key = round(dt, 18)
        if key not in propagators:
            propagators[key] = sla.expm(-1j * sys.effective_hamiltonian() * dt)
        m = propagators[key]
        md = m.conj().T
        for _ in range(n):
            rho = m @ rho @ md
            for c, cd in jumps:
                rho += dt * (c @ rho @ cd)
            rho /= np.trace(rho).real
        t = t_next
        out.append(_finalize(sys, rho.copy()))
    return out


def steadystate(sys, method="null_space", t_max=None, rho0=None,
                check_tol=1e-9):
    """Steady state of the Lindblad generator.

    "null_space" solves the dense d^2 x d^2 linear system with the trace
    constraint replacing one row (dims <= 64 only); the residual contract
    ||L rho_ss||_max < check_tol is evaluated on the generator normalized
    by its largest entry.  "long_time" evolves until
    ||rho(t + dt) - rho(t)||_max < 1e-8.
    """
    d = sys.space.dim
    if method == "null_space":
        L = sys.liouvillian_matrix()
        scale = np.abs(L).max()
        A = L / scale
        # replace the first row with the trace constraint
        A[0, :] = np.eye(d).ravel()
        b = np.zeros(d * d, dtype=complex)
        b[0] = 1.0
        try:
            x = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise NonUniqueSteadyStateError(
                "Liouvillian linear system is singular") from exc
        rho = x.reshape(d, d)
        resid = np.abs((L / scale) @ x).max()
        if resid > check_tol:
            raise NonUniqueSteadyStateError(
                f"null-space residual {resid:.3e} exceeds {check_tol:.1e}; "
                "steady state may be non-unique")
        if d <= 32:
            sv = np.linalg.svd(L / scale, compute_uv=False)
            if sv[-2] < 1e-10:
                raise NonUniqueSteadyStateError(
                    "Liouvillian null space has dimension > 1")
        return _finalize(sys, rho)

    if method != "long_time":
        raise ContractViolation(f"unknown method {method!r}")

    rates = [np.abs(np.trace(c.conj().T @ c)).real / d for c in sys.collapse
             if np.abs(c).max() > 0]
    slowest = min(rates) if rates else 1.0
    if t_max is None:
        t_max = 50.0 / slowest
    if rho0 is None:
        rho = np.eye(d, dtype=complex) / d
    else:
        rho = np.asarray(
            rho0.matrix if isinstance(rho0, DensityMatrix) else rho0,
            dtype=complex)
    dt_chunk = min(1.0 / slowest, t_max / 10.0)
    t = 0.0
    prev = rho
    while t < t_max:
        cur = evolve(sys, DensityMatrix(sys.space, prev), [dt_chunk],
                     method="auto")[-1].matrix
        t += dt_chunk
        if np.abs(cur - prev).max() < 1e-8:
            return _finalize(sys, cur)
        prev = cur
    raise SteadyStateTimeout(
        f"no steady state within t_max = {t_max:.3e} s")
