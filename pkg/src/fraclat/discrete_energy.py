"""Assembly of the discrete spring energies on a lattice mesh.

Displacements are stored in the square-root-of-eps rescaled frame: the
deformation of a point x is ``y(x) = x + sqrt(eps) u(x)`` and the reported
energy is ``eps`` times the raw pair sum, so that elastic and fully
cracked configurations carry comparable, order-one energies.

The raw pair sum over nearest-neighbor bonds equals the sum of
per-triangle cell energies plus a boundary term collecting bonds that
belong to fewer than two mesh triangles; both routes are assembled and
cross-checked on every evaluation.

Energy modes
------------
plain
    cell energies plus the boundary term.
chi
    plain plus the orientation penalty, summed per triangle with weight
    eps (the same scaling as the cell energies).
f
    chi plus the external-field term ``(1/eps) * integral of f over the
    triangulated specimen``, evaluated exactly as a triangle sum since
    the integrand is piecewise constant (weight ``sqrt(3) eps / 4`` per
    triangle).
total-magnetic
    chi plus the magnetic energy ``-(kappa/eps) * integral of m1``.
    Subtracting the renormalization constant ``kappa |Omega_eps| / eps``
    recovers the ``f`` mode exactly whenever every triangle satisfies
    |F| <= T.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lattice import SQRT3, TriangleMesh, classify_edges
from .material import (MagnetizationModel, PairPotential, PenaltyChi,
                       cell_energy, field_energy, field_energy_smooth,
                       magnetization_first)

MODES = ("plain", "chi", "f", "total-magnetic")

_CONSISTENCY_RTOL = 1e-12


class DiscreteEnergyError(RuntimeError):
    """Assembly failure (inconsistent sums, bad mode, non-finite input)."""


@dataclass
class Displacement:
    """Rescaled displacement values at the mesh points."""

    mesh: TriangleMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_points, 2):
            raise DiscreteEnergyError(
                f"expected values of shape {(self.mesh.n_points, 2)}, got {self.values.shape}")

    @classmethod
    def zero(cls, mesh: TriangleMesh) -> "Displacement":
        return cls(mesh, np.zeros((mesh.n_points, 2)))

    def copy(self) -> "Displacement":
        return Displacement(self.mesh, self.values.copy())


@dataclass
class EnergyBreakdown:
    """Energy split into bulk, boundary, penalty and field contributions."""

    mode: str
    bulk: float
    boundary: float
    penalty: float = 0.0
    field: float = 0.0

    @property
    def total(self) -> float:
        return self.bulk + self.boundary + self.penalty + self.field

    def row(self) -> list:
        return [self.mode, self.bulk, self.boundary, self.penalty, self.field, self.total]


# ----------------------------------------------------------------------
# interpolation
# ----------------------------------------------------------------------

def _basis_inverse(mesh: TriangleMesh) -> np.ndarray:
    return np.linalg.inv(np.column_stack([mesh.vecs.v1, mesh.vecs.v2]))


def _gradients_from_values(mesh: TriangleMesh, values: np.ndarray,
                           scale: float) -> np.ndarray:
    """Per-triangle gradient of the affine interpolant of point values."""
    tri = mesh.triangles
    d1 = values[tri[:, 1]] - values[tri[:, 0]]
    d2 = values[tri[:, 2]] - values[tri[:, 0]]
    D = np.stack([d1, d2], axis=-1)  # columns are the two edge differences
    G = D @ _basis_inverse(mesh)
    return G / (mesh.tri_sign * scale)[:, None, None]


def interpolate_gradients(u: Displacement) -> tuple[np.ndarray, np.ndarray]:
    """Per-triangle displacement gradient and deformation gradient.

    Returns ``(grad_u, F)`` with ``F = Id + sqrt(eps) grad_u``, both of
    shape (n_triangles, 2, 2).  The affine interpolant reproduces the
    point values exactly, so affine inputs give an exact constant
    gradient.
    """
    eps = u.mesh.spec.eps
    grad_u = _gradients_from_values(u.mesh, u.values, eps)
    F = np.eye(2) + np.sqrt(eps) * grad_u
    return grad_u, F


def deformation_gradients_from_y(mesh: TriangleMesh, y_values: np.ndarray) -> np.ndarray:
    """Per-triangle gradient of the affine interpolant of a deformation."""
    return _gradients_from_values(mesh, y_values, mesh.spec.eps)


def gradient_l1_norm(u: Displacement, domain: str = "omega") -> float:
    """Area-weighted L1 norm of the displacement gradient over the domain."""
    grad_u, _ = interpolate_gradients(u)
    mask = u.mesh.triangle_set(domain)
    frob = np.linalg.norm(grad_u[mask], axis=(1, 2))
    return float(u.mesh.triangle_area * frob.sum())


# ----------------------------------------------------------------------
# boundary conditions
# ----------------------------------------------------------------------

@dataclass
class BoundaryCondition:
    """Dirichlet data imposed on the margin layer of the mesh.

    ``components`` selects which displacement components are pinned:
    "both", or "x" for loadings that leave the transverse component free.
    """

    g: Callable[[np.ndarray], np.ndarray]
    components: str = "both"
    lipschitz_bound: float | None = None
    label: str = "custom"

    def masks(self, mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray]:
        base = mesh.dirichlet
        if self.components == "both":
            return base, base
        if self.components == "x":
            return base, np.zeros_like(base)
        raise DiscreteEnergyError(f"unknown component selector {self.components!r}")

    def target(self, mesh: TriangleMesh) -> np.ndarray:
        vals = np.asarray(self.g(mesh.points), dtype=float)
        if vals.shape != (mesh.n_points, 2):
            raise DiscreteEnergyError("boundary function must return one 2-vector per point")
        return vals

    def estimate_lipschitz(self, mesh: TriangleMesh) -> float:
        """Largest difference quotient of g over bonds inside the pinned layer."""
        vals = self.target(mesh)
        both = mesh.dirichlet[mesh.edges].all(axis=1)
        if not np.any(both):
            return 0.0
        dv = vals[mesh.edges[both, 1]] - vals[mesh.edges[both, 0]]
        est = float(np.linalg.norm(dv, axis=1).max() / mesh.spec.eps)
        if self.lipschitz_bound is not None and est > self.lipschitz_bound * (1 + 1e-9):
            raise DiscreteEnergyError(
                f"boundary data exceeds its Lipschitz bound: {est} > {self.lipschitz_bound}")
        return est


def bc_zero() -> BoundaryCondition:
    return BoundaryCondition(lambda p: np.zeros_like(p), label="zero")


def bc_affine(G: np.ndarray, b: np.ndarray | None = None) -> BoundaryCondition:
    G = np.asarray(G, dtype=float)
    b = np.zeros(2) if b is None else np.asarray(b, dtype=float)
    return BoundaryCondition(lambda p: p @ G.T + b, label="affine")


def bc_cleavage(a: float, l: float) -> BoundaryCondition:
    """Uniaxial tension data: u1 = 0 on the left layer, a*l on the right.

    Only the first component is pinned; the transverse component remains
    free, matching a grip that allows lateral contraction.
    """

    def g(points: np.ndarray) -> np.ndarray:
        out = np.zeros_like(points)
        out[:, 0] = np.where(points[:, 0] > l / 2.0, a * l, 0.0)
        return out

    return BoundaryCondition(g, components="x", label=f"cleavage(a={a:g})")


def apply_bc(u: Displacement, bc: BoundaryCondition) -> Displacement:
    """Overwrite the pinned components with the boundary data; idempotent."""
    mask_x, mask_y = bc.masks(u.mesh)
    target = bc.target(u.mesh)
    values = u.values.copy()
    values[mask_x, 0] = target[mask_x, 0]
    values[mask_y, 1] = target[mask_y, 1]
    return Displacement(u.mesh, values)


# ----------------------------------------------------------------------
# energy assembly
# ----------------------------------------------------------------------

def _edge_geometry(mesh: TriangleMesh, u_values: np.ndarray, edge_mask: np.ndarray):
    """Deformed bond vectors z (in units of eps) and stretches r = |z|."""
    dirs = mesh.vecs.as_array()[mesh.edge_dir[edge_mask]]
    e = mesh.edges[edge_mask]
    du = u_values[e[:, 1]] - u_values[e[:, 0]]
    z = dirs + du / np.sqrt(mesh.spec.eps)
    return z, np.linalg.norm(z, axis=1)


def _check_pair_identity(pair_total: float, bulk: float, boundary: float):
    scale = 1.0 + abs(pair_total) + abs(bulk) + abs(boundary)
    if abs(pair_total - bulk - boundary) > _CONSISTENCY_RTOL * scale:
        raise DiscreteEnergyError(
            "pair sum and triangle-plus-boundary sum disagree: "
            f"{pair_total} vs {bulk} + {boundary}")


def energy_rescaled(u: Displacement, pot: PairPotential, mode: str = "plain",
                    chi: PenaltyChi | None = None,
                    model: MagnetizationModel | None = None,
                    domain: str = "omega", include_boundary: bool = True,
                    smooth_field: bool = False) -> EnergyBreakdown:
    """Rescaled energy eps * E(id + sqrt(eps) u) with the selected extras.

    The bulk part sums cell energies over the domain's triangles, the
    boundary part collects under-covered bonds, and the two together are
    verified against the raw pair sum to 1e-12 relative on every call.
    ``include_boundary=False`` drops the boundary term from the report.
    """
    mode = "f" if mode == "F" else mode
    if mode not in MODES:
        raise DiscreteEnergyError(f"unknown mode {mode!r}")
    mesh, eps = u.mesh, u.mesh.spec.eps
    if not np.all(np.isfinite(u.values)):
        raise DiscreteEnergyError("displacement contains non-finite entries")

    edge_mask = mesh.edge_set(domain)
    _, r = _edge_geometry(mesh, u.values, edge_mask)
    Wr = pot(r)
    pair_total = eps * float(Wr.sum())

    tri_mask = mesh.triangle_set(domain)
    _, F = interpolate_gradients(u)
    Fd = F[tri_mask]
    bulk = eps * float(cell_energy(Fd, pot, mesh.vecs).sum())
    weights = classify_edges(mesh, domain)[edge_mask]
    boundary = eps * float((2.0 * weights * Wr).sum())
    _check_pair_identity(pair_total, bulk, boundary)

    penalty = 0.0
    fieldval = 0.0
    if mode in ("chi", "f", "total-magnetic"):
        if chi is None:
            raise DiscreteEnergyError(f"mode {mode!r} needs a penalty definition")
        penalty = eps * float(chi(Fd).sum())
    if mode == "f":
        if model is None:
            raise DiscreteEnergyError("mode 'f' needs a magnetization model")
        fvals = field_energy_smooth(Fd, model) if smooth_field else field_energy(Fd, model)
        fieldval = SQRT3 * eps / 4.0 * float(np.sum(fvals))
    elif mode == "total-magnetic":
        if model is None:
            raise DiscreteEnergyError("mode 'total-magnetic' needs a magnetization model")
        fieldval = -model.kappa * SQRT3 * eps / 4.0 * float(magnetization_first(Fd).sum())

    return EnergyBreakdown(mode=mode, bulk=bulk,
                           boundary=boundary if include_boundary else 0.0,
                           penalty=penalty, field=fieldval)


def energy_deformation(mesh: TriangleMesh, y_values: np.ndarray, pot: PairPotential,
                       domain: str = "omega") -> EnergyBreakdown:
    """Unrescaled pair energy of a raw deformation y, with the same split."""
    eps = mesh.spec.eps
    u = Displacement(mesh, (y_values - mesh.points) / np.sqrt(eps))
    bd = energy_rescaled(u, pot, mode="plain", domain=domain)
    return EnergyBreakdown(mode="plain", bulk=bd.bulk / eps, boundary=bd.boundary / eps)


def specimen_area(mesh: TriangleMesh, domain: str = "omega") -> float:
    """Total area of the domain's triangles (the triangulated specimen)."""
    return mesh.triangle_area * float(mesh.triangle_set(domain).sum())


def renormalization_sides(u: Displacement, pot: PairPotential, chi: PenaltyChi,
                          model: MagnetizationModel,
                          domain: str = "omega") -> tuple[float, float]:
    """Both sides of the magnet renormalization identity.

    Returns ``(field_total, magnetic_total - kappa |Omega_eps| / eps)``;
    the two agree exactly whenever every triangle satisfies |F| <= T.
    """
    lhs = energy_rescaled(u, pot, mode="f", chi=chi, model=model, domain=domain).total
    tot = energy_rescaled(u, pot, mode="total-magnetic", chi=chi, model=model,
                          domain=domain).total
    area = specimen_area(u.mesh, domain)
    return lhs, tot + model.kappa / u.mesh.spec.eps * area


# ----------------------------------------------------------------------
# analytic gradient
# ----------------------------------------------------------------------

def _scatter_triangle_gradient(mesh: TriangleMesh, dPhi_dF: np.ndarray,
                               tri_mask: np.ndarray, coeff: np.ndarray | float,
                               out: np.ndarray):
    """Accumulate d Phi(F_triangle) / d u_vertex into the point array."""
    eps = mesh.spec.eps
    Minv = _basis_inverse(mesh)
    # chain rule through F = Id + sqrt(eps)/(sign*eps) * [d1 d2] Minv
    P = dPhi_dF @ Minv.T  # (M, 2, 2); column c acts on vertex c+1
    pref = coeff * np.sqrt(eps) / (mesh.tri_sign[tri_mask] * eps)
    P = P * pref[:, None, None]
    tri = mesh.triangles[tri_mask]
    np.add.at(out, tri[:, 1], P[:, :, 0])
    np.add.at(out, tri[:, 2], P[:, :, 1])
    np.add.at(out, tri[:, 0], -(P[:, :, 0] + P[:, :, 1]))


def gradient(u: Displacement, pot: PairPotential, mode: str = "plain",
             chi: PenaltyChi | None = None,
             model: MagnetizationModel | None = None,
             domain: str = "omega") -> np.ndarray:
    """Analytic gradient of :func:`energy_rescaled` with respect to u.

    The field term is differentiated in its smoothed form; modes that are
    not differentiable (tabulated potentials, 'total-magnetic') are
    rejected.
    """
    mode = "f" if mode == "F" else mode
    if mode == "total-magnetic":
        raise DiscreteEnergyError("no gradient for mode 'total-magnetic'")
    if not pot.differentiable:
        raise DiscreteEnergyError("gradient needs a differentiable potential family")
    mesh, eps = u.mesh, u.mesh.spec.eps
    out = np.zeros_like(u.values)

    edge_mask = mesh.edge_set(domain)
    z, r = _edge_geometry(mesh, u.values, edge_mask)
    coef = np.sqrt(eps) * pot.deriv(r) / np.where(r > 0.0, r, 1.0)
    gvec = coef[:, None] * z
    e = mesh.edges[edge_mask]
    np.add.at(out, e[:, 1], gvec)
    np.add.at(out, e[:, 0], -gvec)

    if mode in ("chi", "f"):
        if chi is None:
            raise DiscreteEnergyError(f"mode {mode!r} needs a penalty definition")
        tri_mask = mesh.triangle_set(domain)
        _, F = interpolate_gradients(u)
        Fd = F[tri_mask]
        _scatter_triangle_gradient(mesh, chi.grad(Fd), tri_mask, eps, out)
        if mode == "f":
            if model is None:
                raise DiscreteEnergyError("mode 'f' needs a magnetization model")
            _scatter_triangle_gradient(mesh, _field_energy_smooth_grad(Fd, model),
                                       tri_mask, SQRT3 * eps / 4.0, out)
    return out


def _field_energy_smooth_grad(F: np.ndarray, model: MagnetizationModel,
                              band: float = 0.1) -> np.ndarray:
    """d/dF of the smoothed field energy; zero beyond the cutoff."""
    from .material import _smoothstep_deriv, smoothstep

    F = np.asarray(F, dtype=float)
    out = np.zeros_like(F)
    norm = np.linalg.norm(F, axis=(-2, -1))
    x = (norm - (model.T - band)) / band
    ramp = 1.0 - smoothstep(x)
    open_ = ramp > 0.0
    if not np.any(open_):
        return out
    Fo = F[open_]
    t = Fo[:, 0, 0] + Fo[:, 1, 1]
    s = Fo[:, 1, 0] - Fo[:, 0, 1]
    h = np.hypot(t, s)
    # the degenerate set h = 0 is a null set; treat the term as flat there
    hs = np.where(h > 0.0, h, 1.0)
    m1 = np.where(h > 0.0, t / hs, 1.0)
    dm1_dt = np.where(h > 0.0, s ** 2 / hs ** 3, 0.0)
    dm1_ds = np.where(h > 0.0, -t * s / hs ** 3, 0.0)
    dm1 = np.zeros_like(Fo)
    dm1[:, 0, 0] = dm1_dt
    dm1[:, 1, 1] = dm1_dt
    dm1[:, 1, 0] = dm1_ds
    dm1[:, 0, 1] = -dm1_ds
    dramp = -_smoothstep_deriv(x[open_]) / band
    no = norm[open_]
    dnorm = Fo / np.where(no > 0.0, no, 1.0)[:, None, None]
    grad = (-model.kappa * ramp[open_])[:, None, None] * dm1 \
        + (model.kappa * (1.0 - m1) * dramp)[:, None, None] * dnorm
    out[open_] = grad
    return out


def project_gradient(g: np.ndarray, mask_x: np.ndarray, mask_y: np.ndarray) -> np.ndarray:
    """Zero the gradient on pinned components (the feasible-set projection)."""
    out = g.copy()
    out[mask_x, 0] = 0.0
    out[mask_y, 1] = 0.0
    return out


# ----------------------------------------------------------------------
# CSV interchange
# ----------------------------------------------------------------------

DISPLACEMENT_HEADER = ["index", "x", "y", "u1", "u2"]
ENERGY_HEADER = ["mode", "bulk", "boundary", "penalty", "field", "total"]


def format_float(x: float) -> str:
    return f"{x:.17g}"


def displacement_to_csv(u: Displacement, path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DISPLACEMENT_HEADER)
        for i, (p, v) in enumerate(zip(u.mesh.points, u.values)):
            writer.writerow([i, format_float(p[0]), format_float(p[1]),
                             format_float(v[0]), format_float(v[1])])


def displacement_from_csv(path: str, mesh: TriangleMesh) -> Displacement:
    values = np.zeros((mesh.n_points, 2))
    seen = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != DISPLACEMENT_HEADER:
            raise DiscreteEnergyError(f"unexpected displacement header {header}")
        for row in reader:
            i = int(row[0])
            p = np.array([float(row[1]), float(row[2])])
            if not np.allclose(p, mesh.points[i], atol=1e-9 * max(1.0, mesh.spec.l)):
                raise DiscreteEnergyError(f"point {i} does not match the mesh")
            values[i] = [float(row[3]), float(row[4])]
            seen += 1
    if seen != mesh.n_points:
        raise DiscreteEnergyError(f"csv has {seen} rows, mesh has {mesh.n_points} points")
    return Displacement(mesh, values)
