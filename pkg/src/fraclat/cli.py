"""Command-line front end.

Experiments are configured by a flat plain-text file with one
``key = value`` assignment per line and ``#`` comments.  Unknown keys are
rejected with the offending line number; omitted keys fall back to the
defaults listed in ``CONFIG_KEYS`` (a handful of physical inputs such as
``material.alpha`` have no default and must be given).  Every command
writes its CSV tables plus a manifest echoing the fully resolved
configuration with 17 significant digits, so a table can be reproduced
from its manifest alone.  Partial outputs are deleted when a command
fails, and any failure exits nonzero.

The single environment variable ``FRACLAT_NUM_THREADS``, when set,
bounds the thread count of the underlying linear-algebra backend; the
code itself is sequential and deterministic.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .continuum import CleavageProblem, a_crit, build_u_cr, build_u_el
from .crack_extraction import (build_modified, classify_broken,
                               crack_energy_estimate)
from .discrete_energy import (ENERGY_HEADER, bc_cleavage,
                              displacement_from_csv, displacement_to_csv,
                              energy_rescaled, format_float)
from .lattice import (PHI_MAX, LatticeSpec, build_mesh, cleavage_direction)
from .material import MagnetizationModel, PairPotential, PenaltyChi
from .solver import (CONVERGENCE_HEADER, SolveConfig, convergence_study,
                     magnet_demo, minimize, nonequicoercivity_demo,
                     recovery_sequence)

CRACK_HEADER = ["seg_id", "x0", "y0", "x1", "y1", "nu_x", "nu_y", "jump1", "jump2"]
GAMMA_HEADER = ["phi", "gamma", "vgamma_x", "vgamma_y", "unique", "a_crit"]

_REQUIRED = object()

# key -> (parser, default); _REQUIRED defaults must be supplied by the user
CONFIG_KEYS = {
    "lattice.phi": (float, 0.0),
    "lattice.eps": (float, 1.0 / 32.0),
    "lattice.l": (float, 1.0),
    "lattice.eta": (float, 0.25),
    "lattice.margin": (str, "cleavage"),
    "material.family": (str, "exp-well"),
    "material.alpha": (float, _REQUIRED),
    "material.beta": (float, _REQUIRED),
    "material.kappa": (float, 1.0),
    "material.T": (float, 2.0),
    "chi.c": (float, 1.0),
    "chi.delta_det": (float, 0.1),
    "chi.cutoff": (float, 20.0),
    "chi.width": (float, 1.0),
    "load.a": (float, 0.0),
    "solve.eps_list": (str, "1/16,1/32,1/64"),
    "solve.max_iters": (int, 400),
    "solve.grad_tol": (float, 1e-6),
    "solve.seed": (int, 0),
    "solve.mode": (str, "chi"),
    "solve.domain": (str, "omega"),
    "solve.multistart": (str, "zero,elastic,cleaved,perturbed"),
    "solve.n_cleaved": (int, 9),
    "recovery.p": (float, float("nan")),  # nan means l/2
    "recovery.kind": (str, "crack"),
    "noneq.theta": (float, 1.2),
    "noneq.p": (float, 0.125),
    "noneq.q": (float, 0.875),
    "magnet.band_angle": (float, 0.4),
    "magnet.n_random": (int, 20),
    "out.dir": (str, "."),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict
    path: str = "<defaults>"

    @classmethod
    def parse(cls, path: str) -> "RunConfig":
        values = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, val = line.partition("=")
                key, val = key.strip(), val.strip()
                if key not in CONFIG_KEYS:
                    raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
                parser = CONFIG_KEYS[key][0]
                try:
                    values[key] = parser(val)
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: bad value for '{key}': {exc}")
        return cls(values=values, path=path)

    def get(self, key: str):
        if key not in CONFIG_KEYS:
            raise ConfigError(f"internal: unregistered key '{key}'")
        if key in self.values:
            return self.values[key]
        default = CONFIG_KEYS[key][1]
        if default is _REQUIRED:
            raise ConfigError(f"{self.path}: missing required key '{key}'")
        return default

    def resolved(self) -> dict:
        out = {}
        for key, (_, default) in CONFIG_KEYS.items():
            if key in self.values:
                out[key] = self.values[key]
            elif default is not _REQUIRED:
                out[key] = default
        return out

    def eps_list(self) -> list:
        out = []
        for token in str(self.get("solve.eps_list")).split(","):
            token = token.strip()
            if "/" in token:
                num, den = token.split("/")
                out.append(float(num) / float(den))
            else:
                out.append(float(token))
        if not out:
            raise ConfigError("solve.eps_list is empty")
        return out


class OutputSet:
    """Tracks files written by a command and removes them on failure."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.paths = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        p = os.path.join(self.out_dir, name)
        self.paths.append(p)
        return p

    def discard(self):
        for p in self.paths:
            if os.path.exists(p):
                os.unlink(p)


def _fmt(value) -> str:
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def write_csv(path: str, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_manifest(path: str, config: RunConfig | None, extra: dict):
    items = dict(config.resolved()) if config is not None else {}
    items.update(extra)
    items["fraclat.version"] = __version__
    with open(path, "w") as fh:
        for key in sorted(items):
            fh.write(f"{key} = {_fmt(items[key])}\n")


# ----------------------------------------------------------------------
# shared builders
# ----------------------------------------------------------------------

def _potential(cfg: RunConfig) -> PairPotential:
    family = cfg.get("material.family")
    beta = cfg.get("material.beta")
    if family == "shifted-lj":
        return PairPotential.shifted_lj(beta)
    return PairPotential(family=family, alpha=cfg.get("material.alpha"), beta=beta)


def _chi(cfg: RunConfig) -> PenaltyChi:
    return PenaltyChi(c_chi=cfg.get("chi.c"), delta_det=cfg.get("chi.delta_det"),
                      cutoff_norm=cfg.get("chi.cutoff"), width=cfg.get("chi.width"))


def _problem(cfg: RunConfig) -> CleavageProblem:
    return CleavageProblem(alpha=cfg.get("material.alpha"),
                           beta=cfg.get("material.beta"),
                           l=cfg.get("lattice.l"), phi=cfg.get("lattice.phi"),
                           a=cfg.get("load.a"), eta=cfg.get("lattice.eta"))


def _solve_config(cfg: RunConfig) -> SolveConfig:
    return SolveConfig(max_iters=cfg.get("solve.max_iters"),
                       grad_tol=cfg.get("solve.grad_tol"),
                       multistart=tuple(s.strip() for s in
                                        cfg.get("solve.multistart").split(",")),
                       n_cleaved=cfg.get("solve.n_cleaved"),
                       rng_seed=cfg.get("solve.seed"),
                       mode=cfg.get("solve.mode"),
                       domain=cfg.get("solve.domain"))


def _spec(cfg: RunConfig, eps: float) -> LatticeSpec:
    return LatticeSpec(phi=cfg.get("lattice.phi"), eps=eps, l=cfg.get("lattice.l"),
                       eta=cfg.get("lattice.eta"), margin=cfg.get("lattice.margin"))


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_gamma_scan(args) -> int:
    if args.phi_steps < 2:
        raise ConfigError("--phi-steps must be at least 2")
    phis = np.linspace(0.0, PHI_MAX * (1.0 - 1e-9), args.phi_steps)
    rows = []
    for phi in phis:
        data = cleavage_direction(float(phi))
        prob = CleavageProblem(alpha=args.alpha, beta=args.beta, l=args.l,
                               phi=float(phi), a=0.0)
        rows.append([float(phi), data.gamma, data.v_gamma[0], data.v_gamma[1],
                     "true" if data.unique else "false", a_crit(prob)])
    write_csv(args.out, GAMMA_HEADER, rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def cmd_cleavage(args) -> int:
    cfg = RunConfig.parse(args.config)
    out = OutputSet(cfg.get("out.dir"))
    try:
        problem = _problem(cfg)
        rows = convergence_study(problem, cfg.eps_list(),
                                 mode=cfg.get("solve.mode"),
                                 config=_solve_config(cfg), pot=_potential(cfg),
                                 chi=_chi(cfg), with_minimize=not args.no_minimize)
        write_csv(out.path("convergence.csv"), CONVERGENCE_HEADER,
                  [r.row() for r in rows])
        write_manifest(out.path("cleavage_manifest.txt"), cfg, {
            "derived.gamma": problem.gamma,
            "derived.a_crit": a_crit(problem),
            "derived.target": min(problem.alpha * problem.l * problem.a ** 2
                                  / math.sqrt(3.0), 2 * problem.beta / problem.gamma),
        })
    except Exception:
        out.discard()
        raise
    print(f"wrote {out.paths[0]}")
    return 0


def cmd_minimize(args) -> int:
    cfg = RunConfig.parse(args.config)
    out = OutputSet(cfg.get("out.dir"))
    try:
        problem = _problem(cfg)
        eps = cfg.eps_list()[-1]
        mesh = build_mesh(_spec(cfg, eps))
        bc = bc_cleavage(problem.a, problem.l)
        res = minimize(mesh, bc, _potential(cfg), _solve_config(cfg),
                       chi=_chi(cfg), problem=problem)
        displacement_to_csv(res.u, out.path("displacement.csv"))
        write_csv(out.path("energy.csv"), ENERGY_HEADER, [res.breakdown.row()])
        write_manifest(out.path("minimize_manifest.txt"), cfg, {
            "derived.eps": eps,
            "derived.best_start": res.best_tag,
            "derived.energy": res.breakdown.total,
            "derived.a_crit": a_crit(problem),
        })
    except Exception:
        out.discard()
        raise
    print(f"wrote {out.paths[0]} (best start: {res.best_tag})")
    return 0


def cmd_recovery(args) -> int:
    cfg = RunConfig.parse(args.config)
    out = OutputSet(cfg.get("out.dir"))
    try:
        problem = _problem(cfg)
        pot, chi = _potential(cfg), _chi(cfg)
        p = cfg.get("recovery.p")
        if math.isnan(p):
            from .solver import cleaved_stations
            p = float(cleaved_stations(problem, 1)[0])
        rows = []
        last_u = None
        for eps in cfg.eps_list():
            mesh = build_mesh(_spec(cfg, eps))
            if cfg.get("recovery.kind") == "elastic":
                u_cont, target = build_u_el(problem), \
                    problem.alpha * problem.l * problem.a ** 2 / math.sqrt(3.0)
            else:
                u_cont, target = build_u_cr(problem, p), 2 * problem.beta / problem.gamma
            u = recovery_sequence(u_cont, mesh)
            bd = energy_rescaled(u, pot, mode=cfg.get("solve.mode"), chi=chi,
                                 domain=cfg.get("solve.domain"))
            rows.append([eps, cfg.get("solve.mode") + "/recovery", bd.total, target,
                         bd.total - target, 0, float("nan"), float("nan")])
            last_u = u
        write_csv(out.path("recovery.csv"), CONVERGENCE_HEADER, rows)
        displacement_to_csv(last_u, out.path("recovery_displacement.csv"))
        write_manifest(out.path("recovery_manifest.txt"), cfg, {
            "derived.p": p, "derived.a_crit": a_crit(problem)})
    except Exception:
        out.discard()
        raise
    print(f"wrote {out.paths[0]}")
    return 0


def cmd_crack_extract(args) -> int:
    cfg = RunConfig.parse(args.config)
    out = OutputSet(cfg.get("out.dir"))
    try:
        eps = cfg.eps_list()[-1]
        mesh = build_mesh(_spec(cfg, eps))
        u = displacement_from_csv(args.infile, mesh)
        classes = classify_broken(u)
        crack = build_modified(u, classes, variant=args.variant)
        write_csv(out.path(args.out), CRACK_HEADER, crack.rows())
        write_manifest(out.path("crack_manifest.txt"), cfg, {
            "derived.n_broken": classes.count,
            "derived.crack_energy_est": crack_energy_estimate(
                crack, cfg.get("material.beta"), mesh.vecs),
            "derived.total_length": crack.total_length(),
        })
    except Exception:
        out.discard()
        raise
    print(f"wrote {out.paths[0]} ({classes.count} broken triangles)")
    return 0


def cmd_magnet_demo(args) -> int:
    cfg = RunConfig.parse(args.config)
    out = OutputSet(cfg.get("out.dir"))
    try:
        problem = _problem(cfg)
        model = MagnetizationModel(kappa=cfg.get("material.kappa"),
                                   T=cfg.get("material.T"))
        result = magnet_demo(problem, model, cfg.eps_list(), pot=_potential(cfg),
                             chi=_chi(cfg), n_random=cfg.get("magnet.n_random"),
                             seed=cfg.get("solve.seed"),
                             band_angle=cfg.get("magnet.band_angle"))
        rows = [r.row() for r in result["elastic_rows"]]
        for b in result["band_rows"]:
            rows.append([b["eps"], "f/rotated-band", b["field_minus_plain"],
                         b["limit"], b["field_minus_plain"] - b["limit"],
                         0, float("nan"), float("nan")])
        write_csv(out.path("magnet.csv"), CONVERGENCE_HEADER, rows)
        write_manifest(out.path("magnet_manifest.txt"), cfg, {
            "derived.max_identity_gap": max(result["identity_gaps"]),
        })
    except Exception:
        out.discard()
        raise
    print(f"wrote {out.paths[0]} (max renormalization gap "
          f"{max(result['identity_gaps']):.3e})")
    return 0


def cmd_noneq_demo(args) -> int:
    cfg = RunConfig.parse(args.config)
    out = OutputSet(cfg.get("out.dir"))
    try:
        result = nonequicoercivity_demo(cfg.eps_list(), cfg.get("noneq.theta"),
                                        cfg.get("noneq.p"), cfg.get("noneq.q"),
                                        l=cfg.get("lattice.l"),
                                        eta=cfg.get("lattice.eta"),
                                        pot=_potential(cfg))
        write_csv(out.path("noneq.csv"),
                  ["eps", "energy", "grad_l1_total", "grad_l1_band"],
                  result["rows"])
        write_manifest(out.path("noneq_manifest.txt"), cfg, {
            "derived.slope_total": result["slope_total"],
            "derived.slope_band": result["slope_band"],
            "derived.energy_ratio": result["energy_ratio"],
        })
    except Exception:
        out.discard()
        raise
    print(f"wrote {out.paths[0]} (slope {result['slope_total']:.4f})")
    return 0


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fraclat",
        description="lattice fracture laboratory: discrete spring energies, "
                    "their Griffith limit and the cleavage predictions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gamma-scan", help="sweep the cleavage data over phi")
    p.add_argument("--phi-steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--l", type=float, default=1.0)
    p.set_defaults(func=cmd_gamma_scan)

    p = sub.add_parser("cleavage", help="convergence study of the bar problem")
    p.add_argument("--config", required=True)
    p.add_argument("--no-minimize", action="store_true",
                   help="only evaluate sampled configurations")
    p.set_defaults(func=cmd_cleavage)

    p = sub.add_parser("minimize", help="best-of-multistart minimization")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("recovery", help="sample a limit configuration on the lattice")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_recovery)

    p = sub.add_parser("crack-extract", help="extract the crack polyline of a displacement")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="crack.csv")
    p.add_argument("--variant", type=int, default=1)
    p.set_defaults(func=cmd_crack_extract)

    p = sub.add_parser("magnet-demo", help="field term checks and renormalization identity")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_magnet_demo)

    p = sub.add_parser("noneq-demo", help="rotated-band growth of the gradient mass")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_noneq_demo)
    return parser


def _apply_thread_env():
    n = os.environ.get("FRACLAT_NUM_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def main(argv=None) -> int:
    _apply_thread_env()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # uniform nonzero exit with a clean message
        print(f"fraclat: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
