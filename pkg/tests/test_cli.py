import csv
import io
import json
import math
import subprocess
import sys

import pytest

from appsim import cli, specfun

SMALL = """
[crystal]
a = 5.32
b = [-0.0814, -0.0024, -0.0048, -0.0003, -0.0009]
L = 100

[laser]
g0 = 4e-8
omega_L = 0.005
photon_number = 7.35e11
n_cycles = 20
samples_per_cycle = 128

[run]
harmonics = [1, 3, 5]
sweep_L = [100, 1000]
spectrum_points = 150
seed = 7
{extra}
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def test_default_config_is_the_bundled_parameter_set():
    cfg = cli.load_config()
    assert cfg.crystal.a == 5.32 and cfg.crystal.L == 100
    assert cfg.laser.alpha_abs == pytest.approx(math.sqrt(7.35e11))
    assert cfg.laser.g0 == 4e-8 and cfg.laser.omega_L == 0.005 and cfg.laser.n_cycles == 20
    assert cfg.fig2_harmonic == 3
    assert len(cfg.states) == 5


@pytest.mark.parametrize(
    "extra,needle",
    [
        ("[[state]]\nkind = 'cat'", "[[state]] #0"),
        ("[[state]]\nkind = 'fock'\nn = -2", "[[state]] #0"),
        ("[wigner]\nmap = 'sideways'", "[wigner].map"),
        ("[bogus]\nx = 1", "unknown section"),
    ],
)
def test_config_errors_name_the_field(tmp_path, capsys, extra, needle):
    path = write(tmp_path, SMALL.format(extra=extra))
    assert cli.main(["driving-compare", "--config", path, "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert needle in capsys.readouterr().err


def test_config_errors_for_laser_and_run(tmp_path, capsys):
    bad = SMALL.format(extra="").replace("g0 = 4e-8", "g0 = 'big'")
    assert cli.main(["fig2", "--config", write(tmp_path, bad)]) == cli.EXIT_CONFIG
    assert "[laser].g0" in capsys.readouterr().err
    bad = SMALL.format(extra="").replace("harmonics = [1, 3, 5]", "harmonics = [1, 2]")
    assert cli.main(["fig2", "--config", write(tmp_path, bad)]) == cli.EXIT_CONFIG
    assert "[run].harmonics" in capsys.readouterr().err
    bad = SMALL.format(extra="").replace("sweep_L = [100, 1000]", "sweep_L = [1000, 100]")
    assert cli.main(["fig2", "--config", write(tmp_path, bad)]) == cli.EXIT_CONFIG


def test_toml_syntax_error_reports_line(tmp_path, capsys):
    path = write(tmp_path, "[crystal]\na = = 1\n")
    assert cli.main(["fig2", "--config", path]) == cli.EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["fig2", "--config", str(tmp_path / "nope.toml")]) == cli.EXIT_CONFIG


def test_driving_compare_report(tmp_path):
    extra = "[[state]]\nkind = 'fock'\nn = 1\n[[state]]\nkind = 'coherent'\nalpha = [2.0, 0.0]\n"
    path = write(tmp_path, SMALL.format(extra=extra))
    assert cli.main(["driving-compare", "--config", path, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "driving_compare.json").read_text())
    fock, coh = rep["states"]
    assert fock["g2_exact"] == 0.0
    assert fock["g2_app"] == pytest.approx(1.5, abs=1e-9)
    assert coh["variance_exact"]["var_min"] == pytest.approx(0.25)
    assert coh["variance_app"]["var_min"] == pytest.approx(0.75, abs=1e-9)
    assert abs(coh["residuals"]["n_app_minus_n_exact_minus_1"]) < 1e-9


def test_driving_compare_empty(tmp_path):
    path = write(tmp_path, SMALL.format(extra=""))
    assert cli.main(["driving-compare", "--config", path, "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "driving_compare.json").read_text())["states"] == []


def test_hhg_spectrum_outputs(tmp_path):
    path = write(tmp_path, SMALL.format(extra=""))
    assert cli.main(["hhg-spectrum", "--config", path, "--out", str(tmp_path)]) == 0
    text = (tmp_path / "spectrum.csv").read_text()
    assert text.startswith("# appsim ") and "# config sha256 " in text
    header, rows = read_csv(tmp_path / "spectrum.csv")
    assert header == ["omega_over_omegaL", "abs_gamma_sq", "re_gamma", "im_gamma"]
    power = {round(float(r[0]), 6): float(r[1]) for r in rows}
    assert float(rows[-1][0]) == pytest.approx(15.0)
    peak = max(power[k] for k in (1.0, 3.0, 5.0))
    for even in (2.0, 4.0, 6.0):
        assert power[even] < 1e-5 * peak
    h = json.loads((tmp_path / "harmonics.json").read_text())["harmonics"]
    assert [e["n"] for e in h] == [1, 3, 5]
    assert all(e["G_n"] > 0 and e["error"] is None for e in h)
    # every number printed with 17 significant digits
    assert len(rows[5][1].replace("-", "").replace(".", "").split("e")[0].lstrip("0")) >= 16


def test_hhg_spectrum_zero_field(tmp_path):
    text = SMALL.format(extra="").replace("photon_number = 7.35e11", "photon_number = 0.0")
    path = write(tmp_path, text)
    assert cli.main(["hhg-spectrum", "--config", path, "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "spectrum.csv")
    assert all(float(r[1]) == 0.0 for r in rows)
    h = json.loads((tmp_path / "harmonics.json").read_text())["harmonics"]
    assert all(e["G_n"] is None and "vanishes" in e["error"] for e in h)


def test_fig2_outputs(tmp_path):
    path = write(tmp_path, SMALL.format(extra=""))
    assert cli.main(["fig2", "--config", path, "--out", str(tmp_path), "--threads", "2"]) == 0
    header, rows = read_csv(tmp_path / "fig2.csv")
    assert header == ["L", "err_max", "err_min", "theta_max", "theta_min", "err_second_order"]
    assert [int(r[0]) for r in rows] == [100, 1000]
    assert all(float(r[2]) > 0 for r in rows)
    summary = json.loads((tmp_path / "fig2.json").read_text())
    assert summary["slope_err_max"] == pytest.approx(2.0, abs=0.05)


def test_fig2_single_L(tmp_path):
    text = SMALL.format(extra="").replace("sweep_L = [100, 1000]", "sweep_L = [100]")
    assert cli.main(["fig2", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "fig2.csv")
    assert len(rows) == 1
    assert json.loads((tmp_path / "fig2.json").read_text())["slope_err_max"] is None


def test_wigner_fock_identity(tmp_path):
    extra = "[[state]]\nkind = 'fock'\nn = 1\n[wigner]\nstate = 0\npoints = 64\n"
    assert cli.main(["wigner", "--config", write(tmp_path, SMALL.format(extra=extra)), "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "wigner.json").read_text())
    assert s["min_W"] >= -1e-12
    assert s["integral"] == pytest.approx(1.0, abs=1e-6)
    assert s["coverage_warnings"] == []
    _, rows = read_csv(tmp_path / "wigner.csv")
    assert len(rows) == 64 * 64


def test_wigner_vacuum_peak_at_origin(tmp_path):
    extra = "[[state]]\nkind = 'coherent'\nalpha = 0.0\n[wigner]\npoints = 41\n"
    assert cli.main(["wigner", "--config", write(tmp_path, SMALL.format(extra=extra)), "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "wigner.csv")
    best = max(rows, key=lambda r: float(r[2]))
    assert abs(float(best[0])) < 1e-12 and abs(float(best[1])) < 1e-12


def test_wigner_oneband_map(tmp_path):
    extra = "[[state]]\nkind = 'fock'\nn = 1\n[wigner]\nmap = 'oneband'\nharmonic = 3\n"
    assert cli.main(["wigner", "--config", write(tmp_path, SMALL.format(extra=extra)), "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "wigner.json").read_text())
    assert s["G_n"] > 0 and s["min_W"] >= -1e-12
    assert s["integral"] == pytest.approx(1.0, abs=1e-6)


def test_wigner_state_index_out_of_range(tmp_path):
    assert cli.main(["wigner", "--config", write(tmp_path, SMALL.format(extra="")), "--out", str(tmp_path)]) == 1


def test_numerical_failure_exit_code(tmp_path):
    extra = "[[state]]\nkind = 'fock'\nn = 1\n[wigner]\nmap = 'oneband'\n"
    text = SMALL.format(extra=extra).replace("photon_number = 7.35e11", "photon_number = 0.0")
    assert cli.main(["wigner", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == cli.EXIT_NUMERIC


def test_outputs_are_byte_identical(tmp_path):
    extra = "[[state]]\nkind = 'thermal'\nnbar = 0.4\n"
    path = write(tmp_path, SMALL.format(extra=extra))
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        for cmd in ("driving-compare", "hhg-spectrum", "fig2", "wigner"):
            assert cli.main([cmd, "--config", path, "--out", str(out), "--seed", "3"]) == 0
    for f in sorted(p.name for p in first.iterdir()):
        assert (first / f).read_bytes() == (second / f).read_bytes()


def test_selftest_passes_and_is_deterministic():
    a, b = io.StringIO(), io.StringIO()
    assert cli.cmd_selftest(seed=5, stream=a) == 0
    assert cli.cmd_selftest(seed=5, stream=b) == 0
    assert a.getvalue() == b.getvalue()
    assert "FAIL" not in a.getvalue()


def test_selftest_detects_perturbed_s_function(monkeypatch):
    original = specfun.s_func_finite
    monkeypatch.setattr(specfun, "s_func_finite", lambda i, j, x: original(i, j, x) * (1 + 1e-6))
    out = io.StringIO()
    assert cli.cmd_selftest(seed=0, stream=out) == cli.EXIT_SELFTEST
    assert "FAIL  specfun S finite vs series" in out.getvalue()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "appsim", "selftest"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "6/6 suites passed" in res.stdout
