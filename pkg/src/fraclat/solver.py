"""Minimization of the discrete energies and the convergence experiments.

The landscape is nonconvex (a fully cracked bar and a stretched elastic
bar are both critical), so no global optimality is claimed: the driver
runs a projected gradient descent with Armijo backtracking and an
optional limited-memory quasi-Newton acceleration from a deterministic
family of starting guesses (unloaded, homogeneously stretched, cracked
at several stations, randomly perturbed) and reports the best local
minimum next to the sampled-configuration upper bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .continuum import (CleavageProblem, ContinuumDisplacement, build_u_cr,
                        build_u_el, crack_branch_energy,
                        elastic_branch_energy, min_energy)
from .crack_extraction import (angle_between_lines_deg, build_modified,
                               classify_broken, crack_energy_estimate,
                               principal_normal)
from .discrete_energy import (BoundaryCondition, Displacement, EnergyBreakdown,
                              apply_bc, bc_cleavage, bc_zero, energy_rescaled,
                              gradient, gradient_l1_norm, interpolate_gradients,
                              project_gradient, renormalization_sides)
from .lattice import (LatticeSpec, TriangleMesh, build_mesh,
                      cleavage_direction, rotation_matrix)
from .material import MagnetizationModel, PairPotential, PenaltyChi


class SolverError(RuntimeError):
    """Diverged iteration or an inconsistent study result.

    When a line search produces a NaN energy the offending iterate is
    attached as the ``iterate`` attribute for post-mortem dumps.
    """

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


@dataclass(frozen=True)
class SolveConfig:
    """Deterministic optimizer settings; same config and seed give the
    same iterate sequence."""

    max_iters: int = 400
    grad_tol: float = 1e-6
    step0: float = 1.0
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    max_backtracks: int = 40
    lbfgs_memory: int = 8
    stall_tol: float = 1e-14
    stall_iters: int = 3
    multistart: tuple = ("zero", "elastic", "cleaved", "perturbed")
    n_cleaved: int = 9
    perturb_scale: float = 0.01
    rng_seed: int = 0
    mode: str = "chi"
    domain: str = "omega"


@dataclass
class StartResult:
    tag: str
    energy: float
    iters: int
    grad_norm: float
    converged: bool
    history: list | None = None  # energy after each accepted step


@dataclass
class MinimizeResult:
    u: Displacement
    breakdown: EnergyBreakdown
    best_tag: str
    starts: list


@dataclass
class ConvergenceRow:
    """One line of a convergence table."""

    eps: float
    mode: str
    energy: float
    target: float
    n_broken: int = 0
    crack_energy_est: float = float("nan")
    crack_angle_deg: float = float("nan")

    @property
    def gap(self) -> float:
        return self.energy - self.target

    def row(self) -> list:
        return [self.eps, self.mode, self.energy, self.target, self.gap,
                self.n_broken, self.crack_energy_est, self.crack_angle_deg]


CONVERGENCE_HEADER = ["eps", "mode", "energy", "target", "gap",
                      "n_broken", "crack_energy_est", "crack_angle_deg"]


# ----------------------------------------------------------------------
# recovery sequences
# ----------------------------------------------------------------------

def recovery_sequence(u_cont: ContinuumDisplacement, mesh: TriangleMesh) -> Displacement:
    """Sample a continuum configuration pointwise at the lattice points.

    If a lattice point sits on the crack polyline (within 1e-12) the
    whole crack is first translated by eps/17 along its normal, a fixed
    deterministic offset that clears the lattice.
    """
    if u_cont.crack:
        d = u_cont.crack_point_distance(mesh.points)
        if d.min() < 1e-12:
            if u_cont.shifted is None:
                raise SolverError("a lattice point sits on the crack and the "
                                  "configuration cannot be translated")
            u_cont = u_cont.shifted(mesh.spec.eps / 17.0)
            if u_cont.crack_point_distance(mesh.points).min() < 1e-12:
                raise SolverError("crack still touches the lattice after translation")
    return Displacement(mesh, u_cont.eval(mesh.points))


# ----------------------------------------------------------------------
# projected descent
# ----------------------------------------------------------------------

def _lbfgs_direction(g: np.ndarray, s_hist: list, y_hist: list) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((a, rho, s, y))
        q -= a * y
    if y_hist:
        y = y_hist[-1]
        q *= float(s_hist[-1] @ y) / float(y @ y)
    for a, rho, s, y in reversed(alphas):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def _descend(u0: Displacement, bc: BoundaryCondition, pot: PairPotential,
             config: SolveConfig, chi: PenaltyChi | None,
             model: MagnetizationModel | None):
    """Projected descent from one start; returns (u, iters, |g|, converged, history)."""
    mesh = u0.mesh
    mask_x, mask_y = bc.masks(mesh)

    def f(vals: np.ndarray) -> float:
        d = Displacement(mesh, vals)
        return energy_rescaled(d, pot, mode=config.mode, chi=chi, model=model,
                               domain=config.domain, smooth_field=True).total

    def df(vals: np.ndarray) -> np.ndarray:
        g = gradient(Displacement(mesh, vals), pot, mode=config.mode, chi=chi,
                     model=model, domain=config.domain)
        return project_gradient(g, mask_x, mask_y)

    x = apply_bc(u0, bc).values.copy()
    fx = f(x)
    if not math.isfinite(fx):
        raise SolverError("non-finite energy at the starting point")
    g = df(x)
    history = [fx]
    s_hist: list = []
    y_hist: list = []
    stalled = 0
    it = 0
    for it in range(1, config.max_iters + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= config.grad_tol:
            return Displacement(mesh, x), it - 1, gnorm, True, history
        d = _lbfgs_direction(g.ravel(), s_hist, y_hist).reshape(x.shape) \
            if s_hist else -g
        slope = float(np.sum(g * d))
        if slope >= 0.0:  # quasi-Newton direction lost descent; reset
            s_hist.clear()
            y_hist.clear()
            d = -g
            slope = -gnorm ** 2
        t = config.step0
        accepted = False
        for _ in range(config.max_backtracks):
            x_new = x + t * d
            f_new = f(x_new)
            if math.isnan(f_new):
                raise SolverError(
                    f"energy became NaN during line search at iteration {it}",
                    iterate=x_new)
            if f_new <= fx + config.armijo_slope * t * slope:
                accepted = True
                break
            t *= config.armijo_shrink
        if not accepted:
            return Displacement(mesh, x), it, float(np.linalg.norm(g)), False, history
        g_new = df(x_new)
        if config.lbfgs_memory > 0:
            s_vec = (x_new - x).ravel()
            y_vec = (g_new - g).ravel()
            if float(s_vec @ y_vec) > 1e-14:
                s_hist.append(s_vec)
                y_hist.append(y_vec)
                if len(s_hist) > config.lbfgs_memory:
                    s_hist.pop(0)
                    y_hist.pop(0)
        drop = fx - f_new
        x, fx, g = x_new, f_new, g_new
        history.append(fx)
        stalled = stalled + 1 if drop <= config.stall_tol * (1.0 + abs(fx)) else 0
        if stalled >= config.stall_iters:
            return Displacement(mesh, x), it, float(np.linalg.norm(g)), True, history
    return Displacement(mesh, x), it, float(np.linalg.norm(g)), False, history


def cleaved_stations(problem: CleavageProblem, n: int) -> np.ndarray:
    """Uniform grid of crack intercepts whose lines stay inside the bar.

    Targets the middle 80 percent of the bar, intersected with the
    interval of intercepts for which the tilted crack line crosses both
    horizontal sides; the tilt shrinks that interval by the horizontal
    run of the best-aligned direction over the unit height.
    """
    w = problem.cleavage.v_gamma
    run = w[0] / w[1]
    lo = max(0.0, -run)
    hi = min(problem.l, problem.l - run)
    if hi <= lo:
        raise SolverError("no interior crack line fits this bar")
    lo2 = max(lo + 0.02 * problem.l, 0.1 * problem.l)
    hi2 = min(hi - 0.02 * problem.l, 0.9 * problem.l)
    if hi2 <= lo2:
        lo2, hi2 = lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo)
    return lo2 + (hi2 - lo2) * (np.arange(n) + 0.5) / n


def _initializers(mesh: TriangleMesh, problem: CleavageProblem | None,
                  config: SolveConfig):
    """Deterministic family of starting displacements, in a fixed order."""
    rng = np.random.default_rng(config.rng_seed)
    out = []
    for tag in config.multistart:
        if tag == "zero":
            out.append(("zero", Displacement.zero(mesh)))
        elif tag == "perturbed":
            noise = config.perturb_scale * rng.standard_normal((mesh.n_points, 2))
            out.append(("perturbed", Displacement(mesh, noise)))
        elif tag == "elastic":
            if problem is None:
                continue
            out.append(("elastic", _elastic_ramp(mesh, problem)))
        elif tag == "cleaved":
            if problem is None:
                continue
            for p in cleaved_stations(problem, config.n_cleaved):
                u_cr = build_u_cr(problem, float(p))
                out.append((f"cleaved(p={p:.6g})", recovery_sequence(u_cr, mesh)))
        else:
            raise SolverError(f"unknown initializer tag {tag!r}")
    return out


def _elastic_ramp(mesh: TriangleMesh, problem: CleavageProblem) -> Displacement:
    """Admissible homogeneous stretch: linear ramp between the pinned layers."""
    eps = mesh.spec.eps
    x1 = mesh.points[:, 0]
    span = problem.l - 2.0 * eps
    ramp = np.clip((x1 - eps) / span, 0.0, 1.0)
    values = np.zeros((mesh.n_points, 2))
    values[:, 0] = problem.a * problem.l * ramp
    values[:, 1] = -(problem.a / 3.0) * (mesh.points[:, 1] - 0.5)
    return Displacement(mesh, values)


def minimize(mesh: TriangleMesh, bc: BoundaryCondition, pot: PairPotential,
             config: SolveConfig, chi: PenaltyChi | None = None,
             model: MagnetizationModel | None = None,
             problem: CleavageProblem | None = None) -> MinimizeResult:
    """Best local minimum over the configured multistart family."""
    starts = _initializers(mesh, problem, config)
    if not starts:
        raise SolverError("no starting point; check the multistart list")
    results = []
    best = None
    for k, (tag, u0) in enumerate(starts):
        u, iters, gnorm, conv, history = _descend(u0, bc, pot, config, chi, model)
        bd = energy_rescaled(u, pot, mode=config.mode, chi=chi, model=model,
                             domain=config.domain)
        results.append(StartResult(tag=tag, energy=bd.total, iters=iters,
                                   grad_norm=gnorm, converged=conv,
                                   history=history))
        if best is None or bd.total < best[0]:
            best = (bd.total, k, u, bd)
    _, _, u_best, bd_best = best
    return MinimizeResult(u=u_best, breakdown=bd_best,
                          best_tag=results[best[1]].tag, starts=results)


# ----------------------------------------------------------------------
# study drivers
# ----------------------------------------------------------------------

def _crack_summary(u: Displacement, beta: float):
    """(count, estimated crack energy, angle to the cleavage normal, crack set)."""
    classes = classify_broken(u)
    if classes.count == 0:
        return 0, float("nan"), float("nan"), None
    crack = build_modified(u, classes)
    est = crack_energy_estimate(crack, beta, u.mesh.vecs)
    ref = cleavage_direction(u.mesh.spec.phi)
    angle = angle_between_lines_deg(principal_normal(crack), ref.v_gamma_perp)
    return classes.count, est, angle, crack


def _mesh_for(problem: CleavageProblem, eps: float) -> TriangleMesh:
    return build_mesh(LatticeSpec(phi=problem.phi, eps=eps, l=problem.l,
                                  eta=problem.eta, margin="cleavage"))


def convergence_study(problem: CleavageProblem, eps_list, mode: str = "chi",
                      config: SolveConfig | None = None,
                      pot: PairPotential | None = None,
                      chi: PenaltyChi | None = None,
                      with_minimize: bool = True) -> list:
    """Track discrete energies along an eps ladder against the limit value.

    Per eps the table gets a sampled-crack row, a sampled-elastic row and
    (optionally) a best-of-multistart minimization row.  The sampled-crack
    gaps are checked to shrink monotonically up to 10 percent slack.
    """
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise SolverError("eps_list must be strictly decreasing")
    pot = pot or PairPotential(alpha=problem.alpha, beta=problem.beta)
    chi = chi or PenaltyChi()
    config = config or SolveConfig(mode=mode)
    target = min_energy(problem)
    rows = []
    crack_gaps = []
    p_mid = float(cleaved_stations(problem, 1)[0])
    for eps in eps_list:
        mesh = _mesh_for(problem, eps)
        u_cr = recovery_sequence(build_u_cr(problem, p_mid), mesh)
        bd = energy_rescaled(u_cr, pot, mode=mode, chi=chi, domain=config.domain)
        n, est, ang, _ = _crack_summary(u_cr, problem.beta)
        rows.append(ConvergenceRow(eps, f"{mode}/recovery-crack", bd.total,
                                   crack_branch_energy(problem), n, est, ang))
        crack_gaps.append(abs(bd.total - crack_branch_energy(problem)))

        u_el = recovery_sequence(build_u_el(problem), mesh)
        bd_el = energy_rescaled(u_el, pot, mode=mode, chi=chi, domain=config.domain)
        rows.append(ConvergenceRow(eps, f"{mode}/recovery-elastic", bd_el.total,
                                   elastic_branch_energy(problem)))

        if with_minimize:
            bc = bc_cleavage(problem.a, problem.l)
            res = minimize(mesh, bc, pot, replace(config, mode=mode), chi=chi,
                           problem=problem)
            n, est, ang, _ = _crack_summary(res.u, problem.beta)
            rows.append(ConvergenceRow(eps, f"{mode}/minimize", res.breakdown.total,
                                       target, n, est, ang))
    check_gap_ladder(crack_gaps, eps_list, pot.beta)
    return rows


def check_gap_ladder(gaps, eps_list, beta: float):
    """Flag gap growth along a refinement ladder beyond slack and quantum.

    The sampled energy moves in quanta of eps * beta (one bond), so a gap
    may rebound by that much off an accidentally tight rung; only growth
    beyond 10 percent slack plus one quantum is an error.
    """
    for (g0, g1), eps in zip(zip(gaps, gaps[1:]), eps_list[1:]):
        if g1 > 1.1 * g0 + eps * beta + 1e-12:
            raise SolverError(
                f"sampled-crack gaps fail to shrink along the ladder: {list(gaps)}")


# ----------------------------------------------------------------------
# demonstration configurations
# ----------------------------------------------------------------------

def three_piece_rotation(mesh: TriangleMesh, theta: float, p: float,
                         q: float) -> Displacement:
    """Bar cut at x1 = p and x1 = q with the middle band rigidly rotated.

    The rotation is anchored at mid-height of the left cut and the right
    piece is translated to match the band at mid-height of the right cut.
    Returns the rescaled displacement of this deformation.
    """
    if not 0.0 < p < q:
        raise SolverError("cuts must satisfy 0 < p < q")
    R = rotation_matrix(theta)
    z0 = np.array([p, 0.5])
    z1 = np.array([q, 0.5])
    c = z0 - R @ z0
    d = (R @ z1 + c) - z1
    pts = mesh.points
    y = pts.copy()
    band = (pts[:, 0] >= p) & (pts[:, 0] <= q)
    right = pts[:, 0] > q
    y[band] = pts[band] @ R.T + c
    y[right] = pts[right] + d
    return Displacement(mesh, (y - pts) / math.sqrt(mesh.spec.eps))


def fit_loglog_slope(eps_values, quantities) -> float:
    """Least-squares slope of log(quantity) against log(eps)."""
    x = np.log(np.asarray(eps_values, dtype=float))
    y = np.log(np.asarray(quantities, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def nonequicoercivity_demo(eps_list, theta: float, p: float, q: float,
                           l: float = 1.0, eta: float = 0.25,
                           pot: PairPotential | None = None) -> dict:
    """Energy and gradient mass of the rotated-band configuration per eps.

    The energy stays of order one while the L1 norm of the displacement
    gradient grows like eps^(-1/2); the fitted log-log slope is returned.
    """
    if not 0.0 < p < q < l:
        raise SolverError("need 0 < p < q < l")
    pot = pot or PairPotential()
    rows = []
    for eps in eps_list:
        mesh = build_mesh(LatticeSpec(phi=0.0, eps=eps, l=l, eta=eta))
        u = three_piece_rotation(mesh, theta, p, q)
        bd = energy_rescaled(u, pot, mode="plain", domain="omega")
        rows.append((eps, bd.total, gradient_l1_norm(u, "omega"),
                     _band_l1(u, p, q)))
    eps_arr = [r[0] for r in rows]
    slope_total = fit_loglog_slope(eps_arr, [r[2] for r in rows])
    slope_band = fit_loglog_slope(eps_arr, [r[3] for r in rows])
    energies = [r[1] for r in rows]
    return {"rows": rows, "slope_total": slope_total, "slope_band": slope_band,
            "energy_ratio": max(energies) / min(energies)}


def _band_l1(u: Displacement, p: float, q: float) -> float:
    """L1 gradient mass restricted to triangles fully inside the band."""
    grad_u, _ = interpolate_gradients(u)
    mesh = u.mesh
    x1 = mesh.points[mesh.triangles][:, :, 0]
    inside = (x1 >= p).all(axis=1) & (x1 <= q).all(axis=1) & mesh.tri_in_omega
    frob = np.linalg.norm(grad_u[inside], axis=(1, 2))
    return float(mesh.triangle_area * frob.sum())


def rotated_band_displacement(mesh: TriangleMesh, w: float, p: float,
                              q: float) -> Displacement:
    """Band rotated by the scaled angle sqrt(eps) * w and lifted by one unit.

    The scaled angle keeps the displacement gradient bounded on the band
    (the deformation gradient there is exactly the rotation), so the
    configuration probes the quadratic field term: the field energy
    exceeds the penalized one by about (kappa/2) w^2 per unit band area.
    The constant offset keeps every cut triangle beyond the field cutoff
    at all lattice spacings, where the field term vanishes identically.
    """
    eps = mesh.spec.eps
    R = rotation_matrix(math.sqrt(eps) * w)
    z0 = np.array([0.5 * (p + q), 0.5])
    pts = mesh.points
    band = (pts[:, 0] >= p) & (pts[:, 0] <= q)
    values = np.zeros_like(pts)
    values[band] = (pts[band] - z0) @ (R - np.eye(2)).T / math.sqrt(eps) \
        + np.array([0.0, 1.0])
    return Displacement(mesh, values)


def magnet_demo(problem: CleavageProblem, model: MagnetizationModel, eps_list,
                pot: PairPotential | None = None, chi: PenaltyChi | None = None,
                n_random: int = 20, seed: int = 0,
                band_angle: float = 0.4) -> dict:
    """Renormalization identity checks and field-term convergence rows."""
    pot = pot or PairPotential(alpha=problem.alpha, beta=problem.beta)
    chi = chi or PenaltyChi()
    rng = np.random.default_rng(seed)
    identity_gaps = []
    mesh0 = _mesh_for(problem, eps_list[0])
    for _ in range(n_random):
        u = _random_admissible(mesh0, model, rng)
        lhs, rhs = renormalization_sides(u, pot, chi, model)
        identity_gaps.append(abs(lhs - rhs) / (1.0 + abs(lhs)))

    el_rows = []
    band_rows = []
    for eps in eps_list:
        mesh = _mesh_for(problem, eps)
        u_el = recovery_sequence(build_u_el(problem), mesh)
        f_el = energy_rescaled(u_el, pot, mode="f", chi=chi, model=model).total
        el_rows.append(ConvergenceRow(eps, "f/recovery-elastic", f_el,
                                      elastic_branch_energy(problem)))
        p, q = 0.3 * problem.l, 0.7 * problem.l
        u_band = rotated_band_displacement(mesh, band_angle, p, q)
        f_band = energy_rescaled(u_band, pot, mode="f", chi=chi, model=model).total
        e_band = energy_rescaled(u_band, pot, mode="chi", chi=chi).total
        band_area = (q - p) * 1.0
        band_rows.append({"eps": eps, "field_minus_plain": f_band - e_band,
                          "limit": 0.5 * model.kappa * band_angle ** 2 * band_area})
    return {"identity_gaps": identity_gaps, "elastic_rows": el_rows,
            "band_rows": band_rows}


def _random_admissible(mesh: TriangleMesh, model: MagnetizationModel,
                       rng: np.random.Generator) -> Displacement:
    """Random admissible displacement with every triangle inside |F| <= T."""
    values = rng.standard_normal((mesh.n_points, 2))
    u = apply_bc(Displacement(mesh, values), bc_zero())
    for _ in range(60):
        _, F = interpolate_gradients(u)
        det = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
        norm = np.linalg.norm(F, axis=(1, 2))
        if norm.max() <= 0.95 * model.T and det.min() > 0.2:
            return u
        u = Displacement(mesh, 0.5 * u.values)
    raise SolverError("could not scale a random configuration into |F| <= T")
