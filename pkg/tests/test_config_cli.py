import json
import subprocess
import sys

import numpy as np
import pytest

from vesselmode.cli import main
from vesselmode.config import bundled_config_path, load_config, parse_config
from vesselmode.errors import ConfigError

BASE = """# units: nondimensional
[geometry]
shape = circle
radius = 1.0
n_nodes = 128
h = 0.25

[fluid]
nu = 1.0

[wall]
type = elastic
p1 = 0.2

[waveform]
period = 1.0
coefficients = 1.0, 0.5-0.2j

[scan]
beta_max = 0.5
xi_max = 4.0
n_beta = 3
n_xi = 5
h = 0.4

[output]
n_time = 16
"""


@pytest.fixture
def cfg_file(tmp_path):
    def make(text=BASE):
        p = tmp_path / "exp.ini"
        p.write_text(text)
        return p
    return make


# -- config ---------------------------------------------------------------------------


def test_bundled_config_parses():
    cfg = load_config(bundled_config_path())
    assert cfg.units.startswith("nondimensional")
    assert cfg.wall == "elastic" and cfg.fluid.nu == 0.04
    assert cfg.waveform.k_max == 5 and cfg.scan.n_xi == 129
    assert cfg.seed == 0x5EED and len(cfg.digest) == 64


def test_units_line_required():
    with pytest.raises(ConfigError) as err:
        parse_config(BASE.split("\n", 1)[1])
    assert err.value.line == 1 and "units" in str(err.value)


def test_unknown_key_reports_line():
    text = BASE.replace("nu = 1.0", "nu = 1.0\nviscosity = 2.0")
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    e = err.value
    assert (e.section, e.key) == ("fluid", "viscosity")
    assert e.line == text.splitlines().index("viscosity = 2.0") + 1
    assert f"line {e.line}" in str(e)


@pytest.mark.parametrize("old, new, section, key", [
    ("nu = 1.0", "nu = -1.0", "fluid", "nu"),
    ("n_xi = 5", "n_xi = five", "scan", "n_xi"),
    ("shape = circle", "shape = square", "geometry", "shape"),
    ("type = elastic", "type = soft", "wall", "type"),
])
def test_field_precise_diagnostics(old, new, section, key):
    with pytest.raises(ConfigError) as err:
        parse_config(BASE.replace(old, new))
    assert (err.value.section, err.value.key) == (section, key)
    assert err.value.line is not None


def test_unknown_section_and_missing_required():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(BASE + "\n[extra]\nx = 1\n")
    with pytest.raises(ConfigError, match="missing required"):
        parse_config(BASE.replace("nu = 1.0\n", ""))


def test_waveform_csv_resolves_relative_to_config(tmp_path):
    t = np.arange(16) / 16
    np.savetxt(tmp_path / "w.csv", np.c_[t, 2 + np.cos(2 * np.pi * t)], delimiter=",",
               header="t, p_star", comments="")
    text = BASE.replace("coefficients = 1.0, 0.5-0.2j", "csv = w.csv\nk_max = 2")
    cfg = parse_config(text, base_dir=tmp_path)
    assert abs(cfg.waveform.coeffs[0] - 2) < 1e-14 and abs(cfg.waveform.coeffs[1] - 0.5) < 1e-14


# -- CLI --------------------------------------------------------------------------------


@pytest.mark.parametrize("verb, artifact", [
    ("mesh", "mesh.txt"),
    ("poiseuille", "poiseuille.csv"),
    ("womersley", "womersley.csv"),
    ("static-wall", "wall_displacement.csv"),
    ("synthesize", "flux_rigid.csv"),
])
def test_cli_verbs(cfg_file, tmp_path, capsys, verb, artifact):
    out = tmp_path / "out"
    assert main([verb, "--config", str(cfg_file()), "--out", str(out)]) == 0
    assert (out / artifact).exists()
    json.loads(capsys.readouterr().out)


def test_cli_pencil_scan_rigid(cfg_file, tmp_path, capsys):
    out = tmp_path / "scan"
    code = main(["pencil-scan", "--config", str(cfg_file()), "--out", str(out),
                 "--kind", "rigid", "--omega", "1"])
    assert code == 0
    rep = json.loads((out / "spectrum.json").read_text())
    assert rep["certificate"] == "windowed discrete certificate"
    assert (out / "landscape.csv").read_text().startswith("re_lambda,im_lambda,sigma_min")


def test_cli_elastic_zero_frequency_refused(cfg_file, tmp_path, capsys):
    code = main(["pencil-scan", "--config", str(cfg_file()), "--out", str(tmp_path),
                 "--kind", "elastic", "--omega", "0"])
    assert code == 4
    assert "static-wall" in capsys.readouterr().err


def test_cli_config_error_exit_2(cfg_file, tmp_path, capsys):
    bad = cfg_file(BASE.replace("nu = 1.0", "nu = 1.0\nviscosity = 2"))
    assert main(["mesh", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "line" in capsys.readouterr().err


def test_cli_certificate_failure_exit_3(cfg_file, tmp_path):
    text = BASE.replace("n_xi = 5", "n_xi = 5\nthreshold = 10")
    assert main(["certify", "--config", str(cfg_file(text)), "--out", str(tmp_path)]) == 3
    assert (tmp_path / "certificate.csv").exists()


def test_cli_solver_failure_exit_4(cfg_file, tmp_path, capsys):
    bad = cfg_file(BASE.replace("h = 0.25", "h = 5.0"))
    assert main(["mesh", "--config", str(bad), "--out", str(tmp_path)]) == 4
    assert "RefinementError" in capsys.readouterr().err


def test_cli_compare_and_bad_seed(cfg_file, tmp_path, capsys):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(cfg_file()), "--out", str(out),
                 "--seed", "BEEF"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == "0xbeef" and manifest["status"] == 0
    with pytest.raises(SystemExit):
        main(["compare", "--seed", "xyz"])


def test_cli_module_entry_point(cfg_file, tmp_path):
    r = subprocess.run([sys.executable, "-m", "vesselmode.cli", "mesh", "--config",
                        str(cfg_file()), "--out", str(tmp_path)],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["triangles"] > 0
