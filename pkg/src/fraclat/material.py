"""Material laws of the spring lattice.

Contains the pair interaction potential families, the per-triangle cell
energy, its quadratic linearization about the identity, the orientation
penalty that discourages reflected triangles, the magnetization map built
from the polar decomposition, and the Frobenius distances to the two
components of the orthogonal group.

All matrix norms are Frobenius.  Functions accept a single ``(2, 2)``
matrix or a batch shaped ``(..., 2, 2)`` and broadcast accordingly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeVectors

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)

POTENTIAL_FAMILIES = ("exp-well", "shifted-lj", "tabulated")


class MaterialError(ValueError):
    """Invalid material parameters or an unsupported operation."""


@dataclass(frozen=True)
class PairPotential:
    """Lennard-Jones-type pair potential.

    Requirements: W >= 0 with W(r) = 0 exactly at r = 1, twice
    differentiable near 1 with curvature ``alpha``, and W(r) -> ``beta``
    as r -> infinity.

    Families
    --------
    exp-well
        ``W(r) = beta * (1 - exp(-alpha (r-1)^2 / (2 beta)))``.
        Smooth everywhere, with independent alpha and beta.  Default.
    shifted-lj
        ``W(r) = beta * (r^-6 - 1)^2``, which forces ``alpha = 72 beta``.
    tabulated
        Linear interpolation of user samples; not differentiable, so it
        is rejected by gradient-based drivers.
    """

    family: str = "exp-well"
    alpha: float = 1.0
    beta: float = 1.0
    r_table: np.ndarray | None = None
    w_table: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in POTENTIAL_FAMILIES:
            raise MaterialError(f"unknown potential family {self.family!r}")
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise MaterialError("alpha and beta must be positive")
        if self.family == "shifted-lj" and abs(self.alpha - 72.0 * self.beta) > 1e-12 * self.alpha:
            raise MaterialError("shifted-lj forces alpha = 72 beta; use PairPotential.shifted_lj")
        if self.family == "tabulated" and (self.r_table is None or self.w_table is None):
            raise MaterialError("tabulated family needs r_table and w_table")

    @classmethod
    def shifted_lj(cls, beta: float = 1.0) -> "PairPotential":
        return cls(family="shifted-lj", alpha=72.0 * beta, beta=beta)

    @property
    def differentiable(self) -> bool:
        return self.family in ("exp-well", "shifted-lj")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == "exp-well":
            c = self.alpha / (2.0 * self.beta)
            return -self.beta * np.expm1(-c * (r - 1.0) ** 2)
        if self.family == "shifted-lj":
            with np.errstate(divide="ignore"):
                q = np.where(r > 0.0, r, np.inf) ** -6
            return self.beta * (q - 1.0) ** 2
        return np.interp(r, self.r_table, self.w_table, right=self.beta)

    def deriv(self, r):
        if not self.differentiable:
            raise MaterialError("tabulated potential has no derivative")
        r = np.asarray(r, dtype=float)
        if self.family == "exp-well":
            c = self.alpha / (2.0 * self.beta)
            return self.alpha * (r - 1.0) * np.exp(-c * (r - 1.0) ** 2)
        with np.errstate(divide="ignore"):
            q = np.where(r > 0.0, r, np.inf)
        return -12.0 * self.beta * q ** -7 * (q ** -6 - 1.0)

    def tail_infimum(self, r0: float = 2.0) -> float:
        """Infimum of W on [r0, infinity), by coarse scan plus the limit value."""
        grid = np.linspace(r0, max(10.0 * r0, 50.0), 4096)
        return float(min(self(grid).min(), self.beta))


def bond_stretches(F: np.ndarray, vecs: LatticeVectors) -> np.ndarray:
    """|F v| for the three bond directions; shape (..., 3)."""
    V = vecs.as_array()  # (3, 2)
    Fv = np.einsum("...ij,vj->...vi", np.asarray(F, dtype=float), V)
    return np.linalg.norm(Fv, axis=-1)


def cell_energy(F: np.ndarray, pot: PairPotential, vecs: LatticeVectors) -> np.ndarray:
    """Energy of one lattice triangle under the affine map F.

    Half the sum of pair energies over the three bond directions; zero
    exactly on the orthogonal group.
    """
    return 0.5 * pot(bond_stretches(F, vecs)).sum(axis=-1)


def quadratic_form(G: np.ndarray, alpha: float) -> np.ndarray:
    """Quadratic energy density of the linearized cell energy.

    ``(3 alpha / 16) * (3 g11^2 + 3 g22^2 + 2 g11 g22 + 4 ((g12+g21)/2)^2)``;
    depends only on the symmetric part of G and is positive definite on
    symmetric matrices.
    """
    G = np.asarray(G, dtype=float)
    g11, g22 = G[..., 0, 0], G[..., 1, 1]
    g12 = 0.5 * (G[..., 0, 1] + G[..., 1, 0])
    return (3.0 * alpha / 16.0) * (3.0 * g11 ** 2 + 3.0 * g22 ** 2
                                   + 2.0 * g11 * g22 + 4.0 * g12 ** 2)


def quadratic_min_under_strain(r: float, alpha: float) -> tuple[float, np.ndarray]:
    """Minimum of the quadratic form over matrices with axial strain g11 = r.

    Returns the value ``alpha r^2 / 2`` together with the minimizing
    symmetric strain ``diag(r, -r/3)`` (lateral contraction one third of
    the axial extension).
    """
    argmin = np.array([[r, 0.0], [0.0, -r / 3.0]])
    return 0.5 * alpha * r ** 2, argmin


# ----------------------------------------------------------------------
# magnetization map and field energy
# ----------------------------------------------------------------------

def _magnetization_total(F: np.ndarray) -> np.ndarray:
    """Rotation-equivariant unit direction defined for (almost) every F.

    Equals the polar factor applied to e1 wherever det F > 0; away from
    that region it normalizes the same trace/skew vector, falling back to
    the first-row direction on the degenerate set (symmetric traceless
    matrices, which contains the reflections) and to e1 at the origin.
    """
    F = np.asarray(F, dtype=float)
    t = F[..., 0, 0] + F[..., 1, 1]
    s = F[..., 1, 0] - F[..., 0, 1]
    h = np.hypot(t, s)
    g = np.hypot(F[..., 0, 0], F[..., 0, 1])
    main = h > 0.0
    row = ~main & (g > 0.0)
    hs = np.where(main, h, 1.0)
    gs = np.where(row, g, 1.0)
    m1 = np.where(main, t / hs, np.where(row, F[..., 0, 0] / gs, 1.0))
    m2 = np.where(main, s / hs, np.where(row, F[..., 0, 1] / gs, 0.0))
    return np.stack([m1, m2], axis=-1)


def magnetization(F: np.ndarray) -> np.ndarray:
    """Unit magnetization direction: the polar rotation factor applied to e1.

    Defined for det F > 0.  Equivariant under left rotations and constant
    equal to e1 on symmetric positive definite arguments.
    """
    F = np.asarray(F, dtype=float)
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    if np.any(det <= 0.0):
        raise MaterialError("magnetization needs det F > 0 (orientation preserved)")
    return _magnetization_total(F)


def magnetization_first(F: np.ndarray) -> np.ndarray:
    """First component of the magnetization direction."""
    return magnetization(F)[..., 0]


def magnetization_hessian_form(G: np.ndarray) -> np.ndarray:
    """Second-order coefficient of m1(Id + t G) in t: ``-((g21 - g12)/2)^2``.

    Vanishes on symmetric matrices and is nonpositive everywhere.
    """
    G = np.asarray(G, dtype=float)
    w = 0.5 * (G[..., 1, 0] - G[..., 0, 1])
    return -w * w


@dataclass(frozen=True)
class MagnetizationModel:
    """External field strength and the norm cutoff of the field energy."""

    kappa: float = 1.0
    T: float = 2.0

    def __post_init__(self):
        if self.kappa <= 0.0:
            raise MaterialError("kappa must be positive")
        if self.T <= SQRT2:
            raise MaterialError(f"cutoff T must exceed sqrt(2), got {self.T}")


def _gated_field_energy(F: np.ndarray, model: MagnetizationModel, gate) -> np.ndarray:
    """kappa (1 - m1(F)) * gate(|F|), evaluating m only where the gate is open.

    Uses the total extension of the magnetization direction, so that the
    field energy is defined for every finite F with |F| <= T, including
    orientation-reversing arguments.
    """
    F = np.asarray(F, dtype=float)
    scalar = F.ndim == 2
    flat = F.reshape(-1, 2, 2)
    g = gate(np.linalg.norm(flat, axis=(-2, -1)))
    out = np.zeros(len(flat))
    open_ = g > 0.0
    if np.any(open_):
        m1 = _magnetization_total(flat[open_])[..., 0]
        out[open_] = model.kappa * (1.0 - m1) * g[open_]
    return float(out[0]) if scalar else out.reshape(F.shape[:-2])


def field_energy(F: np.ndarray, model: MagnetizationModel) -> np.ndarray:
    """Misalignment energy kappa (1 - e1 . m(F)) for |F| <= T, zero beyond.

    Values lie in [0, 2 kappa].  The cutoff is sharp; see
    :func:`field_energy_smooth` for the solver-friendly variant.
    """
    return _gated_field_energy(F, model, lambda n: (n <= model.T).astype(float))


def field_energy_smooth(F: np.ndarray, model: MagnetizationModel,
                        band: float = 0.1) -> np.ndarray:
    """Field energy with the sharp cutoff smoothed over (T - band, T)."""
    return _gated_field_energy(
        F, model, lambda n: 1.0 - smoothstep((n - (model.T - band)) / band))


# ----------------------------------------------------------------------
# orientation penalty
# ----------------------------------------------------------------------

def smoothstep(x):
    """Monotone C1 clamp of x to [0, 1]."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _smoothstep_deriv(x):
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 6.0 * x * (1.0 - x), 0.0)


@dataclass(frozen=True)
class PenaltyChi:
    """Frame-indifferent penalty that floors reflected configurations.

    ``chi(F) = c_chi * s(-det F / delta_det) * (1 - s((|F| - (cutoff - width)) / width))``
    with s the smoothstep clamp.  It depends on F only through det F and
    |F|, hence is invariant under left rotations; it equals c_chi on a
    neighborhood of the reflections (det near -1) at moderate norms and
    vanishes identically near the rotations and for |F| >= cutoff_norm.
    """

    c_chi: float = 1.0
    delta_det: float = 0.1
    cutoff_norm: float = 20.0
    width: float = 1.0

    def __post_init__(self):
        if min(self.c_chi, self.delta_det, self.width) <= 0.0:
            raise MaterialError("penalty parameters must be positive")
        if self.cutoff_norm - self.width <= 2.0:
            raise MaterialError("cutoff_norm - width must stay above the norm of O(2)")

    def __call__(self, F: np.ndarray) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
        norm = np.linalg.norm(F, axis=(-2, -1))
        gate = smoothstep(-det / self.delta_det)
        fade = 1.0 - smoothstep((norm - (self.cutoff_norm - self.width)) / self.width)
        return self.c_chi * gate * fade

    def grad(self, F: np.ndarray) -> np.ndarray:
        """d chi / dF, shape (..., 2, 2)."""
        F = np.asarray(F, dtype=float)
        det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
        norm = np.linalg.norm(F, axis=(-2, -1))
        xg = -det / self.delta_det
        xf = (norm - (self.cutoff_norm - self.width)) / self.width
        gate, fade = smoothstep(xg), 1.0 - smoothstep(xf)
        ddet = np.empty_like(F)
        ddet[..., 0, 0] = F[..., 1, 1]
        ddet[..., 0, 1] = -F[..., 1, 0]
        ddet[..., 1, 0] = -F[..., 0, 1]
        ddet[..., 1, 1] = F[..., 0, 0]
        safe = np.where(norm > 0.0, norm, 1.0)
        dnorm = F / safe[..., None, None]
        term1 = (_smoothstep_deriv(xg) * (-1.0 / self.delta_det) * fade)[..., None, None] * ddet
        term2 = (gate * (-_smoothstep_deriv(xf) / self.width))[..., None, None] * dnorm
        return self.c_chi * (term1 + term2)


# ----------------------------------------------------------------------
# distances to the orthogonal group
# ----------------------------------------------------------------------

def rotation_reflection_distances(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Frobenius distances from F to the rotations and to the reflections.

    Uses the closed form through the signed singular values: with
    sigma1 >= sigma2 >= 0 and s = sign(det F),

    ``dist(F, SO(2))^2   = (sigma1 - 1)^2 + (s sigma2 - 1)^2``
    ``dist(F, O(2)\\SO(2))^2 = (sigma1 - 1)^2 + (s sigma2 + 1)^2``.
    """
    F = np.asarray(F, dtype=float)
    z1 = 0.5 * np.hypot(F[..., 0, 0] + F[..., 1, 1], F[..., 1, 0] - F[..., 0, 1])
    z2 = 0.5 * np.hypot(F[..., 0, 0] - F[..., 1, 1], F[..., 1, 0] + F[..., 0, 1])
    sigma1 = z1 + z2
    sigma2_signed = z1 - z2  # negative exactly when det F < 0
    d_rot = np.sqrt((sigma1 - 1.0) ** 2 + (sigma2_signed - 1.0) ** 2)
    d_refl = np.sqrt((sigma1 - 1.0) ** 2 + (sigma2_signed + 1.0) ** 2)
    return d_rot, d_refl


def distance_to_O2(F: np.ndarray) -> np.ndarray:
    d_rot, d_refl = rotation_reflection_distances(F)
    return np.minimum(d_rot, d_refl)


def coercivity_ratio_cell(F: np.ndarray, pot: PairPotential,
                          vecs: LatticeVectors) -> np.ndarray:
    """Ratio cell_energy(F) / dist(F, O(2))^2, the bounded-norm coercivity test."""
    d = distance_to_O2(F)
    return cell_energy(F, pot, vecs) / d ** 2


def coercivity_ratio_field(F: np.ndarray, pot: PairPotential, chi: PenaltyChi,
                           model: MagnetizationModel,
                           vecs: LatticeVectors) -> np.ndarray:
    """Ratio (cell + penalty + field energy)(F) / |F - Id|^2.

    Strict positivity over |F| <= T quantifies how the external field
    breaks the rotation invariance of the spring energy.
    """
    F = np.asarray(F, dtype=float)
    num = cell_energy(F, pot, vecs) + chi(F) + field_energy(F, model)
    diff = F - np.eye(2)
    den = np.einsum("...ij,...ij->...", diff, diff)
    return num / den
