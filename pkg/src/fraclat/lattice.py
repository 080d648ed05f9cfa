"""Rotated triangular lattice geometry.

Builds the epsilon-scaled triangular point set inside a rectangular domain
with Dirichlet margins, enumerates the equilateral triangle mesh and its
nearest-neighbor bonds, classifies boundary bonds, and computes the
cleavage-direction data (the lattice direction best aligned with the
vertical axis, which controls where a bar under uniaxial tension prefers
to crack).

Conventions
-----------
* The rotation angle ``phi`` lives in ``[0, pi/3)``; larger angles repeat
  the same lattice.
* The specimen is ``Omega = (0, l) x (0, 1)``.  The enlarged domain used
  to impose boundary values is either ``(-eta, l+eta) x (0, 1)`` (margin
  mode ``"cleavage"``, margins only on the vertical sides) or a uniform
  frame ``(-eta, l+eta) x (-eta, 1+eta)`` (margin mode ``"uniform"``).
* Point membership in a rectangle uses a closed comparison with tolerance
  ``1e-9 * eps`` so that meshes are reproducible across platforms.
* Points are indexed lexicographically in ``(lam2, lam1)`` (row sweeps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT3 = math.sqrt(3.0)
PHI_MAX = math.pi / 3.0

# relative tolerance for domain membership near a rectangle boundary
BOUNDARY_RTOL = 1e-9

# neighbor offsets in integer lattice coordinates, one per bond direction
_NEIGHBOR_OFFSETS = ((1, 0), (0, 1), (-1, 1))


class LatticeError(ValueError):
    """Invalid lattice parameters or a degenerate mesh."""


def rotation_matrix(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def perp(v: np.ndarray) -> np.ndarray:
    """Counterclockwise 90 degree rotation of a 2-vector."""
    return np.array([-v[1], v[0]])


@dataclass(frozen=True)
class LatticeVectors:
    """The three unit bond directions of the rotated triangular lattice.

    ``v3 = v2 - v1`` exactly; all three have unit length.
    """

    phi: float
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray

    def as_array(self) -> np.ndarray:
        """Stack (v1, v2, v3) into a (3, 2) array."""
        return np.stack([self.v1, self.v2, self.v3])


def lattice_vectors(phi: float) -> LatticeVectors:
    """Bond directions v1 = R(phi) e1, v2 = R(phi)(e1/2 + sqrt(3)/2 e2), v3 = v2 - v1."""
    if not 0.0 <= phi < PHI_MAX:
        raise LatticeError(f"rotation angle must lie in [0, pi/3), got {phi}")
    R = rotation_matrix(phi)
    v1 = R @ np.array([1.0, 0.0])
    v2 = R @ np.array([0.5, 0.5 * SQRT3])
    return LatticeVectors(phi=phi, v1=v1, v2=v2, v3=v2 - v1)


@dataclass(frozen=True)
class CleavageData:
    """Cleavage direction data for a given lattice rotation.

    ``gamma`` is the largest |v . e2| over the three bond directions and
    lies in [sqrt(3)/2, 1].  ``v_gamma`` attains the maximum (oriented so
    that v_gamma . e2 > 0) and is unique exactly when phi != 0; at phi = 0
    the tie is broken toward v2.
    """

    phi: float
    gamma: float
    v_gamma: np.ndarray
    index: int  # 0, 1, 2 for v1, v2, v3
    unique: bool

    @property
    def v_gamma_perp(self) -> np.ndarray:
        return perp(self.v_gamma)


def cleavage_direction(phi: float) -> CleavageData:
    """Maximizer of |v . e2| over the bond directions, with uniqueness flag."""
    vecs = lattice_vectors(phi).as_array()
    dots = np.abs(vecs[:, 1])
    index = int(np.argmax(dots))
    gamma = float(dots[index])
    ties = np.sum(dots >= gamma - 1e-14)
    v = vecs[index]
    if v[1] < 0.0:
        v = -v
    return CleavageData(phi=phi, gamma=gamma, v_gamma=v, index=index,
                        unique=bool(ties == 1))


# backwards-friendly alias matching the quantity name used in reports
gamma_of = cleavage_direction


@dataclass(frozen=True)
class LatticeSpec:
    """Parameters of one scaled lattice inside the slab (0, l) x (0, 1).

    Parameters
    ----------
    phi : rotation angle in [0, pi/3).
    eps : lattice spacing, > 0.
    l : slab length, >= 1/sqrt(3) so a single bond line can span the height.
    eta : width of the Dirichlet margin, > 0.
    margin : "cleavage" puts margins only on the vertical sides,
        "uniform" frames the whole slab.
    """

    phi: float
    eps: float
    l: float = 1.0
    eta: float = 0.25
    margin: str = "cleavage"

    def __post_init__(self):
        if not 0.0 <= self.phi < PHI_MAX:
            raise LatticeError(f"phi must lie in [0, pi/3), got {self.phi}")
        if self.eps <= 0.0:
            raise LatticeError("eps must be positive")
        if self.l < 1.0 / SQRT3 - 1e-12:
            raise LatticeError("slab length l must be at least 1/sqrt(3)")
        if self.eta <= 0.0:
            raise LatticeError("margin width eta must be positive")
        if self.margin not in ("cleavage", "uniform"):
            raise LatticeError(f"unknown margin mode {self.margin!r}")

    @property
    def omega(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the specimen."""
        return (0.0, self.l, 0.0, 1.0)

    @property
    def omega_tilde(self) -> tuple[float, float, float, float]:
        if self.margin == "cleavage":
            return (-self.eta, self.l + self.eta, 0.0, 1.0)
        return (-self.eta, self.l + self.eta, -self.eta, 1.0 + self.eta)


def _in_rect(points: np.ndarray, rect, tol: float) -> np.ndarray:
    x0, x1, y0, y1 = rect
    return ((points[:, 0] >= x0 - tol) & (points[:, 0] <= x1 + tol)
            & (points[:, 1] >= y0 - tol) & (points[:, 1] <= y1 + tol))


def _margin_distance(points: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    """Distance from each point to the margin region (Omega-tilde minus Omega)."""
    x, y = points[:, 0], points[:, 1]
    # distance to the two vertical margin strips
    dx_left = np.maximum.reduce([np.zeros_like(x), x, -spec.eta - x])
    dy_strip = np.maximum.reduce([np.zeros_like(y), -y, y - 1.0])
    d_left = np.hypot(dx_left, dy_strip)
    dx_right = np.maximum.reduce([np.zeros_like(x), spec.l - x, x - spec.l - spec.eta])
    d_right = np.hypot(dx_right, dy_strip)
    d = np.minimum(d_left, d_right)
    if spec.margin == "uniform":
        # horizontal strips complete the frame
        dy_bot = np.maximum.reduce([np.zeros_like(y), y, -spec.eta - y])
        dy_top = np.maximum.reduce([np.zeros_like(y), 1.0 - y, y - 1.0 - spec.eta])
        dx_strip = np.maximum.reduce([np.zeros_like(x), -spec.eta - x, x - spec.l - spec.eta])
        d = np.minimum.reduce([d, np.hypot(dx_strip, dy_bot), np.hypot(dx_strip, dy_top)])
    return d


class TriangleMesh:
    """Immutable triangle mesh of the scaled lattice clipped to Omega-tilde.

    Attributes
    ----------
    points : (N, 2) float, lattice point coordinates.
    lam : (N, 2) int, integer lattice coordinates of each point.
    triangles : (M, 3) int, vertex indices ordered so that
        ``points[t1] - points[t0] = sign * eps * v1`` and
        ``points[t2] - points[t0] = sign * eps * v2`` with ``sign = +1``
        for upward triangles and ``-1`` for downward ones.
    tri_sign : (M,) float, the orientation sign above.
    tri_in_omega : (M,) bool, triangle lies inside the specimen.
    edges : (E, 2) int, one row per unordered nearest-neighbor bond;
        ``points[b] - points[a] = eps * v_d`` with direction ``edge_dir``.
    edge_dir : (E,) int in {0, 1, 2}.
    edge_inc_tilde / edge_inc_omega : (E,) int, number of mesh triangles
        (of the full mesh, resp. of the in-specimen subset) having the
        bond as a side.
    edge_in_omega : (E,) bool, both endpoints inside the specimen.
    point_in_omega : (N,) bool.
    dirichlet : (N,) bool, point lies within eps of the margin region.
    """

    def __init__(self, spec: LatticeSpec):
        self.spec = spec
        self.vecs = lattice_vectors(spec.phi)
        eps = spec.eps
        tol = BOUNDARY_RTOL * eps

        A = np.column_stack([self.vecs.v1, self.vecs.v2])
        Ainv = np.linalg.inv(A)

        # integer bounding box of Omega-tilde pulled back through the lattice map
        x0, x1, y0, y1 = spec.omega_tilde
        corners = np.array([[x0, y0], [x1, y0], [x0, y1], [x1, y1]])
        lam_corners = corners @ Ainv.T / eps
        lo = np.floor(lam_corners.min(axis=0)).astype(int) - 2
        hi = np.ceil(lam_corners.max(axis=0)).astype(int) + 2

        l1 = np.arange(lo[0], hi[0] + 1)
        l2 = np.arange(lo[1], hi[1] + 1)
        # row sweeps: lam2 outer, lam1 inner, so kept points sort by (lam2, lam1)
        L2, L1 = np.meshgrid(l2, l1, indexing="ij")
        lam_all = np.column_stack([L1.ravel(), L2.ravel()])
        pts_all = (lam_all @ A.T) * eps
        keep = _in_rect(pts_all, spec.omega_tilde, tol)
        if not np.any(keep):
            raise LatticeError("no lattice point fits inside the enlarged domain")

        self.lam = lam_all[keep]
        self.points = pts_all[keep]
        n1 = len(l1)
        flat_index = np.full(len(l1) * len(l2), -1, dtype=np.int64)
        flat_index[np.flatnonzero(keep)] = np.arange(len(self.lam))
        grid = flat_index.reshape(len(l2), n1)

        def idx_of(shift1: int, shift2: int) -> np.ndarray:
            """Index grid shifted by (shift1, shift2) in lattice coordinates."""
            out = np.full_like(grid, -1)
            src1 = slice(max(shift1, 0), n1 + min(shift1, 0))
            dst1 = slice(max(-shift1, 0), n1 + min(-shift1, 0))
            src2 = slice(max(shift2, 0), grid.shape[0] + min(shift2, 0))
            dst2 = slice(max(-shift2, 0), grid.shape[0] + min(-shift2, 0))
            out[dst2, dst1] = grid[src2, src1]
            return out

        base = grid.ravel()
        up = np.column_stack([base, idx_of(1, 0).ravel(), idx_of(0, 1).ravel()])
        dn = np.column_stack([base, idx_of(-1, 0).ravel(), idx_of(0, -1).ravel()])
        up = up[(up >= 0).all(axis=1)]
        dn = dn[(dn >= 0).all(axis=1)]
        if len(up) + len(dn) == 0:
            raise LatticeError(
                f"eps={eps} is too coarse: no triangle fits inside the domain")
        self.triangles = np.vstack([up, dn])
        self.tri_sign = np.concatenate([np.ones(len(up)), -np.ones(len(dn))])

        self.point_in_omega = _in_rect(self.points, spec.omega, tol)
        self.tri_in_omega = self.point_in_omega[self.triangles].all(axis=1)

        # nearest-neighbor bonds, one row per unordered pair
        edge_parts, dir_parts = [], []
        for d, (s1, s2) in enumerate(_NEIGHBOR_OFFSETS):
            nb = idx_of(s1, s2).ravel()
            ok = (base >= 0) & (nb >= 0)
            edge_parts.append(np.column_stack([base[ok], nb[ok]]))
            dir_parts.append(np.full(ok.sum(), d, dtype=np.int8))
        self.edges = np.vstack(edge_parts)
        self.edge_dir = np.concatenate(dir_parts)
        self.edge_in_omega = self.point_in_omega[self.edges].all(axis=1)

        # incidence counts via an edge lookup keyed on (min, max) vertex index
        order = np.sort(self.edges, axis=1)
        n = len(self.points)
        keys = order[:, 0] * n + order[:, 1]
        sort_idx = np.argsort(keys)
        sorted_keys = keys[sort_idx]
        tri_edges = np.stack([
            self.triangles[:, [0, 1]], self.triangles[:, [0, 2]],
            self.triangles[:, [1, 2]]], axis=1)
        tri_edges = np.sort(tri_edges, axis=2)
        tri_keys = tri_edges[:, :, 0] * n + tri_edges[:, :, 1]
        edge_ids = sort_idx[np.searchsorted(sorted_keys, tri_keys.ravel())]
        self.edge_inc_tilde = np.zeros(len(self.edges), dtype=np.int8)
        self.edge_inc_omega = np.zeros(len(self.edges), dtype=np.int8)
        np.add.at(self.edge_inc_tilde, edge_ids, 1)
        omega_rep = np.repeat(self.tri_in_omega, 3)
        np.add.at(self.edge_inc_omega, edge_ids[omega_rep], 1)

        self.dirichlet = _margin_distance(self.points, spec) <= eps * (1.0 + BOUNDARY_RTOL)

        for arr in (self.points, self.lam, self.triangles, self.tri_sign,
                    self.tri_in_omega, self.edges, self.edge_dir,
                    self.edge_inc_tilde, self.edge_inc_omega,
                    self.edge_in_omega, self.point_in_omega, self.dirichlet):
            arr.setflags(write=False)

    # ------------------------------------------------------------------
    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def triangle_area(self) -> float:
        return SQRT3 * self.spec.eps ** 2 / 4.0

    def triangle_set(self, domain: str) -> np.ndarray:
        """Boolean mask of triangles belonging to the requested domain."""
        if domain == "omega":
            return self.tri_in_omega
        if domain == "omega_tilde":
            return np.ones(self.n_triangles, dtype=bool)
        raise LatticeError(f"unknown domain {domain!r}")

    def edge_set(self, domain: str) -> np.ndarray:
        """Boolean mask of bonds whose both endpoints lie in the domain."""
        if domain == "omega":
            return self.edge_in_omega
        if domain == "omega_tilde":
            return np.ones(self.n_edges, dtype=bool)
        raise LatticeError(f"unknown domain {domain!r}")

    def edge_incidence(self, domain: str) -> np.ndarray:
        return self.edge_inc_omega if domain == "omega" else self.edge_inc_tilde


def build_mesh(spec: LatticeSpec) -> TriangleMesh:
    """Construct the triangle mesh for a lattice specification."""
    return TriangleMesh(spec)


def classify_edges(mesh: TriangleMesh, domain: str = "omega_tilde") -> np.ndarray:
    """Boundary-term weight of each bond: 0, 1/4 or 1/2.

    The weight is stated per ordered pair, matching the double-counting
    pair sum of the discrete energy: a bond that is the side of two mesh
    triangles is fully covered by the cell-energy sum (weight 0), a bond
    on the side of exactly one triangle carries 1/4 W per ordered pair,
    and a stray bond belonging to no triangle carries 1/2 W.  Summed over
    an unordered bond the boundary term is therefore twice the weight.
    Bonds outside the requested domain get weight 0.
    """
    inc = mesh.edge_incidence(domain)
    w = np.choose(inc, [0.5, 0.25, 0.0])
    return np.where(mesh.edge_set(domain), w, 0.0)
