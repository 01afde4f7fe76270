"""Planar ion-crystal structure and transverse normal modes.

Ions are confined to the y = 0 trap plane (x-z) during the structure
search; planarity is certified afterwards by positivity of the
transverse Hessian rather than assumed.  Lengths are scaled by
l = (q^2 / (4 pi eps0 M wz^2))^(1/3) internally.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import units
from .numerics import ContractViolation, eig_hermitian


class StructureSearchError(RuntimeError):
    pass


class PlanarInstabilityError(RuntimeError):
    def __init__(self, message, mode_index):
        super().__init__(message)
        self.mode_index = mode_index


@dataclass
class CrystalConfig:
    n_ions: int
    mass: float                    # kg
    omega_x: float                 # rad/s (in-plane)
    omega_y: float                 # rad/s (transverse, out of plane)
    omega_z: float                 # rad/s (in-plane)
    charge: float = units.ELEMENTARY_CHARGE
    seed: int = 0

    def __post_init__(self):
        if min(self.omega_x, self.omega_y, self.omega_z) <= 0:
            raise ContractViolation("trap frequencies must be positive")
        if self.n_ions < 1:
            raise ContractViolation("need at least one ion")

    @classmethod
    def from_mhz(cls, n_ions, omega_x, omega_y, omega_z,
                 mass_amu=units.YB171_MASS_AMU, seed=0):
        return cls(n_ions=n_ions, mass=mass_amu * units.AMU,
                   omega_x=units.mhz(omega_x), omega_y=units.mhz(omega_y),
                   omega_z=units.mhz(omega_z), seed=seed)

    @property
    def length_scale(self):
        k = self.charge**2 / (4.0 * np.pi * units.EPSILON_0)
        return (k / (self.mass * self.omega_z**2))**(1.0 / 3.0)


@dataclass
class ModeDecomposition:
    frequencies: np.ndarray        # rad/s, ascending
    b_matrix: np.ndarray           # columns are mode vectors b_j^m
    positions: np.ndarray          # (N, 2) equilibrium (x, z), meters
    hessian_trace: float = 0.0     # tr(K), rad^2/s^2


def _potential_and_grad(u, alpha):
    """Dimensionless in-plane energy and gradient; u = [x..., z...]."""
    n = u.size // 2
    x, z = u[:n], u[n:]
    v = 0.5 * np.sum(alpha * x * x + z * z)
    gx = alpha * x
    gz = z.copy()
    dx = x[:, None] - x[None, :]
    dz = z[:, None] - z[None, :]
    r2 = dx * dx + dz * dz
    np.fill_diagonal(r2, np.inf)
    r = np.sqrt(r2)
    v += 0.5 * np.sum(1.0 / r)
    inv3 = 1.0 / (r2 * r)
    gx -= np.sum(dx * inv3, axis=1)
    gz -= np.sum(dz * inv3, axis=1)
    return v, np.concatenate([gx, gz])


def _hessian_inplane(u, alpha):
    n = u.size // 2
    x, z = u[:n], u[n:]
    dx = x[:, None] - x[None, :]
    dz = z[:, None] - z[None, :]
    r2 = dx * dx + dz * dz
    np.fill_diagonal(r2, np.inf)
    r5 = r2**2.5
    with np.errstate(invalid="ignore", divide="ignore"):
        hxx = -(3.0 * dx * dx - r2) / r5
        hzz = -(3.0 * dz * dz - r2) / r5
        hxz = -(3.0 * dx * dz) / r5
    for hb in (hxx, hzz, hxz):
        np.fill_diagonal(hb, 0.0)
        np.fill_diagonal(hb, -hb.sum(axis=1))
    hxx += np.diag(np.full(n, 0.0) + alpha)
    hzz += np.eye(n)
    h = np.block([[hxx, hxz], [hxz.T, hzz]])
    return h


def _hex_seed(n, rng):
    """Triangular-lattice patch, closest sites first, mildly perturbed."""
    pts = []
    rad = int(np.ceil(np.sqrt(n))) + 2
    for i in range(-rad, rad + 1):
        for j in range(-rad, rad + 1):
            pts.append((i + 0.5 * j, j * np.sqrt(3.0) / 2.0))
    pts = np.array(pts)
    pts = pts[np.argsort(np.hypot(pts[:, 0], pts[:, 1]))][:n]
    spacing = 1.5 * max(1.0, n**(1.0 / 6.0))
    pts = pts * spacing + 0.15 * rng.standard_normal(pts.shape)
    return np.concatenate([pts[:, 0], pts[:, 1]])


def equilibrium_positions(c, n_restarts=20, grad_tol=1e-10):
    """Equilibrium (x, z) positions in meters, center of charge at origin.

    BFGS descent from a perturbed hexagonal patch plus random restarts,
    then Newton polish; the lowest-energy stationary point with gradient
    max-norm below grad_tol (dimensionless) wins.
    """
    n = c.n_ions
    if n == 1:
        return np.zeros((1, 2))
    alpha = (c.omega_x / c.omega_z)**2
    rng = np.random.default_rng(c.seed)
    best = None
    best_v = np.inf
    for _ in range(n_restarts):
        u0 = _hex_seed(n, rng)
        res = minimize(_potential_and_grad, u0, args=(alpha,), jac=True,
                       method="BFGS",
                       options={"maxiter": 2000, "gtol": 1e-8})
        u = res.x
        # Newton polish to machine-level gradient
        for _ in range(50):
            v, g = _potential_and_grad(u, alpha)
            if np.abs(g).max() < grad_tol:
                break
            h = _hessian_inplane(u, alpha)
            try:
                step = np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                break
            if np.abs(step).max() > 1.0:
                step *= 1.0 / np.abs(step).max()
            u = u - step
        v, g = _potential_and_grad(u, alpha)
        if np.abs(g).max() < grad_tol and v < best_v - 1e-12:
            best_v, best = v, u.copy()
    if best is None:
        raise StructureSearchError(
            f"no equilibrium with |grad| < {grad_tol} in "
            f"{n_restarts} restarts")
    x, z = best[:n], best[n:]
    x -= x.mean()
    z -= z.mean()
    pos = np.column_stack([x, z]) * c.length_scale
    return pos


def transverse_modes(c, positions):
    """Transverse (y) mode frequencies and participation matrix.

    K_ij = wy^2 d_ij - (q^2 / 4 pi eps0 M)(d_ij sum_l 1/r_jl^3
           - (1 - d_ij)/r_ij^3); frequencies are sqrt(eigenvalues).
    The COM mode sits exactly at wy with uniform participation.
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    if n != c.n_ions:
        raise ContractViolation("positions do not match ion count")
    # re-check the equilibrium condition
    if n > 1:
        u = np.concatenate([pos[:, 0], pos[:, 1]]) / c.length_scale
        _, g = _potential_and_grad(u, (c.omega_x / c.omega_z)**2)
        if np.abs(g).max() > 1e-8:
            raise ContractViolation(
                f"positions are not an equilibrium (|grad| = "
                f"{np.abs(g).max():.3e})")
    kq = c.charge**2 / (4.0 * np.pi * units.EPSILON_0 * c.mass)
    K = np.full((n, n), 0.0)
    if n > 1:
        d = pos[:, None, :] - pos[None, :, :]
        r = np.sqrt((d * d).sum(axis=2))
        np.fill_diagonal(r, np.inf)
        inv3 = 1.0 / r**3
        K = kq * inv3
        np.fill_diagonal(K, -kq * inv3.sum(axis=1))
    K += c.omega_y**2 * np.eye(n)
    w2, b = eig_hermitian(K)
    if w2[0] <= 0:
        raise PlanarInstabilityError(
            f"planar crystal unstable: mode 0 has omega^2 = {w2[0]:.3e}",
            0)
    b = np.real(b)
    # fix sign convention: largest-magnitude component positive
    for m in range(n):
        j = np.argmax(np.abs(b[:, m]))
        if b[j, m] < 0:
            b[:, m] = -b[:, m]
    return ModeDecomposition(frequencies=np.sqrt(w2), b_matrix=b,
                             positions=pos,
                             hessian_trace=float(np.trace(K).real))


def write_json(path, c, modes):
    """JSON artifact: positions in um, mode table in MHz, constants echoed."""
    out = {
        "n_ions": c.n_ions,
        "seed": c.seed,
        "constants": {
            "epsilon_0": units.EPSILON_0,
            "elementary_charge": units.ELEMENTARY_CHARGE,
            "amu": units.AMU,
        },
        "trap_mhz": {
            "omega_x": units.to_mhz(c.omega_x),
            "omega_y": units.to_mhz(c.omega_y),
            "omega_z": units.to_mhz(c.omega_z),
        },
        "mass_kg": c.mass,
        "positions_um": (modes.positions * 1e6).tolist(),
        "mode_frequencies_mhz": [float(units.to_mhz(f))
                                 for f in modes.frequencies],
        "participation_matrix": modes.b_matrix.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2)
