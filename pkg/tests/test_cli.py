import csv
import math
import os

import numpy as np
import pytest

from fraclat.cli import CONFIG_KEYS, ConfigError, RunConfig, main

SQRT3 = math.sqrt(3.0)


def write_config(path, text):
    path.write_text(text)
    return str(path)


BASE = """
material.alpha = 1.0
material.beta = 1.0
lattice.phi = 0.3
lattice.l = 2.0
load.a = 2.0
solve.eps_list = 1/16,1/32
"""


def read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


# ----------------------------------------------------------------------
# configuration parsing
# ----------------------------------------------------------------------

def test_unknown_key_reports_line(tmp_path):
    cfg = write_config(tmp_path / "c.cfg", "material.alpha = 1\nmaterial.betta = 2\n")
    with pytest.raises(ConfigError, match=r"c\.cfg:2.*material\.betta"):
        RunConfig.parse(cfg)


def test_missing_required_key_named(tmp_path):
    cfg = RunConfig.parse(write_config(tmp_path / "c.cfg", "material.beta = 1\n"))
    with pytest.raises(ConfigError, match="material.alpha"):
        cfg.get("material.alpha")


def test_defaults_and_comments(tmp_path):
    cfg = RunConfig.parse(write_config(
        tmp_path / "c.cfg", "# comment\nmaterial.alpha = 2.0  # inline\n\n"))
    assert cfg.get("material.alpha") == 2.0
    assert cfg.get("lattice.eta") == CONFIG_KEYS["lattice.eta"][1]


def test_eps_list_fractions(tmp_path):
    cfg = RunConfig.parse(write_config(
        tmp_path / "c.cfg", "solve.eps_list = 1/8, 0.0625,1/32\n"))
    assert cfg.eps_list() == [0.125, 0.0625, 0.03125]


def test_bad_value_reports_key(tmp_path):
    with pytest.raises(ConfigError, match="lattice.eps"):
        RunConfig.parse(write_config(tmp_path / "c.cfg", "lattice.eps = fast\n"))


# ----------------------------------------------------------------------
# gamma scan
# ----------------------------------------------------------------------

def test_gamma_scan_endpoints_and_columns(tmp_path):
    out = tmp_path / "gamma.csv"
    assert main(["gamma-scan", "--phi-steps", "2", "--out", str(out)]) == 0
    header, rows = read_rows(out)
    assert header == ["phi", "gamma", "vgamma_x", "vgamma_y", "unique", "a_crit"]
    assert len(rows) == 2
    assert float(rows[0][0]) == 0.0
    assert float(rows[1][0]) == pytest.approx(math.pi / 3.0, rel=1e-6)
    assert rows[0][4] == "false" and rows[1][4] == "true"
    # unit parameters: the critical load at phi = 0 is exactly 2
    assert float(rows[0][5]) == pytest.approx(2.0, abs=1e-12)


def test_gamma_scan_range(tmp_path):
    out = tmp_path / "gamma.csv"
    assert main(["gamma-scan", "--phi-steps", "40", "--out", str(out)]) == 0
    _, rows = read_rows(out)
    gammas = [float(r[1]) for r in rows]
    assert all(SQRT3 / 2.0 - 1e-12 <= g <= 1.0 + 1e-12 for g in gammas)


def test_gamma_scan_rejects_single_step(tmp_path, capsys):
    assert main(["gamma-scan", "--phi-steps", "1", "--out", str(tmp_path / "g.csv")]) == 1
    assert "phi-steps" in capsys.readouterr().err


# ----------------------------------------------------------------------
# experiment commands
# ----------------------------------------------------------------------

def test_cleavage_command_and_manifest(tmp_path):
    cfg = write_config(tmp_path / "c.cfg", BASE + f"out.dir = {tmp_path}/out\n")
    assert main(["cleavage", "--config", cfg, "--no-minimize"]) == 0
    header, rows = read_rows(tmp_path / "out" / "convergence.csv")
    assert header == ["eps", "mode", "energy", "target", "gap",
                      "n_broken", "crack_energy_est", "crack_angle_deg"]
    assert len(rows) == 4
    manifest = (tmp_path / "out" / "cleavage_manifest.txt").read_text()
    assert "derived.a_crit" in manifest
    assert "solve.seed = 0" in manifest


def test_manifest_records_critical_load_unit_parameters(tmp_path):
    text = """
material.alpha = 1.0
material.beta = 1.0
lattice.phi = 0.0
lattice.l = 1.0
load.a = 0.5
solve.eps_list = 1/16
"""
    cfg = write_config(tmp_path / "c.cfg", text + f"out.dir = {tmp_path}/out\n")
    assert main(["cleavage", "--config", cfg, "--no-minimize"]) == 0
    manifest = (tmp_path / "out" / "cleavage_manifest.txt").read_text()
    line = [ln for ln in manifest.splitlines() if ln.startswith("derived.a_crit")][0]
    assert float(line.split("=")[1]) == pytest.approx(2.0, abs=1e-12)


def test_recovery_roundtrip_and_crack_extract(tmp_path):
    cfg = write_config(tmp_path / "c.cfg", BASE + f"out.dir = {tmp_path}/out\n")
    assert main(["recovery", "--config", cfg]) == 0
    disp = tmp_path / "out" / "recovery_displacement.csv"
    assert disp.exists()

    assert main(["crack-extract", "--in", str(disp), "--config", cfg]) == 0
    header, rows = read_rows(tmp_path / "out" / "crack.csv")
    assert header == ["seg_id", "x0", "y0", "x1", "y1", "nu_x", "nu_y", "jump1", "jump2"]
    assert len(rows) > 0
    # normals cluster at the cleavage normal
    from fraclat.lattice import cleavage_direction
    ref = cleavage_direction(0.3).v_gamma_perp
    for r in rows:
        nu = np.array([float(r[5]), float(r[6])])
        ang = math.degrees(math.acos(min(abs(float(nu @ ref)), 1.0)))
        assert ang < 5.0


def test_failure_removes_partial_outputs(tmp_path, capsys):
    # an increasing ladder trips the convergence assertion after the table
    # would have been written; nothing must remain on disk
    bad = BASE.replace("solve.eps_list = 1/16,1/32", "solve.eps_list = 1/64,1/16")
    cfg = write_config(tmp_path / "c.cfg", bad + f"out.dir = {tmp_path}/out\n")
    assert main(["cleavage", "--config", cfg, "--no-minimize"]) == 1
    leftovers = [p for p in (tmp_path / "out").glob("*")] \
        if (tmp_path / "out").exists() else []
    assert leftovers == []


def test_displacement_csv_byte_roundtrip(tmp_path):
    cfg = write_config(tmp_path / "c.cfg", BASE + f"out.dir = {tmp_path}/out\n")
    assert main(["recovery", "--config", cfg]) == 0
    disp = tmp_path / "out" / "recovery_displacement.csv"

    from fraclat.discrete_energy import displacement_from_csv, displacement_to_csv
    from fraclat.lattice import LatticeSpec, build_mesh
    mesh = build_mesh(LatticeSpec(phi=0.3, eps=1.0 / 32.0, l=2.0, eta=0.25))
    u = displacement_from_csv(str(disp), mesh)
    again = tmp_path / "again.csv"
    displacement_to_csv(u, str(again))
    assert disp.read_bytes() == again.read_bytes()


def test_noneq_command(tmp_path):
    text = "material.alpha = 1.0\nmaterial.beta = 1.0\nsolve.eps_list = 1/16,1/32\n"
    cfg = write_config(tmp_path / "c.cfg", text + f"out.dir = {tmp_path}/out\n")
    assert main(["noneq-demo", "--config", cfg]) == 0
    header, rows = read_rows(tmp_path / "out" / "noneq.csv")
    assert header == ["eps", "energy", "grad_l1_total", "grad_l1_band"]
    assert len(rows) == 2


def test_magnet_command(tmp_path):
    text = ("material.alpha = 1.0\nmaterial.beta = 1.0\nlattice.phi = 0.3\n"
            "load.a = 0.4\nmagnet.n_random = 3\nsolve.eps_list = 1/16\n")
    cfg = write_config(tmp_path / "c.cfg", text + f"out.dir = {tmp_path}/out\n")
    assert main(["magnet-demo", "--config", cfg]) == 0
    manifest = (tmp_path / "out" / "magnet_manifest.txt").read_text()
    line = [ln for ln in manifest.splitlines()
            if ln.startswith("derived.max_identity_gap")][0]
    assert float(line.split("=")[1]) < 1e-12


def test_minimize_command_is_byte_deterministic(tmp_path):
    text = ("material.alpha = 1.0\nmaterial.beta = 1.0\nlattice.phi = 0.3\n"
            "lattice.l = 1.0\nload.a = 1.8\nsolve.eps_list = 1/8\n"
            "solve.max_iters = 25\nsolve.n_cleaved = 2\nsolve.seed = 4\n")
    outs = []
    for name in ("run1", "run2"):
        cfg = write_config(tmp_path / f"{name}.cfg",
                           text + f"out.dir = {tmp_path}/{name}\n")
        assert main(["minimize", "--config", cfg]) == 0
        outs.append((tmp_path / name / "displacement.csv").read_bytes())
    assert outs[0] == outs[1]


def test_output_set_discard_removes_written_files(tmp_path):
    from fraclat.cli import OutputSet
    out = OutputSet(str(tmp_path / "out"))
    p1 = out.path("a.csv")
    with open(p1, "w") as fh:
        fh.write("data\n")
    p2 = out.path("never_written.csv")
    out.discard()
    assert not os.path.exists(p1) and not os.path.exists(p2)


def test_unwritable_output_exits_nonzero(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.cfg", BASE + "out.dir = /proc/nowhere\n")
    assert main(["cleavage", "--config", cfg, "--no-minimize"]) == 1
    assert capsys.readouterr().err.startswith("fraclat: error:")
