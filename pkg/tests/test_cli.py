import csv
import json
import subprocess
import sys
import textwrap
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from spectral_lvm.cli import main
from spectral_lvm.model import FittedModel
from spectral_lvm.signal_io import Signal, diagonal_average


def write_signal(path, x):
    path.write_text("\n".join(repr(float(v)) for v in x) + "\n")
    return str(path)


@pytest.fixture
def sine(tmp_path):
    t = np.arange(1500) / 200.0
    rng = np.random.default_rng(0)
    x = np.sin(2 * np.pi * 10 * t) + 0.5 * np.sin(2 * np.pi * 31 * t) + 0.2 * rng.standard_normal(t.size)
    return write_signal(tmp_path / "sine.csv", x)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def run(*argv):
    return main([str(a) for a in argv])


# --- fit ---------------------------------------------------------------------------------


def test_fit_writes_model(sine, tmp_path, capsys):
    out = tmp_path / "m.json"
    code = run("fit", "--input", sine, "--window", 64, "--components", 4, "--objective", "pca", "--seed", 42, "--out", out)
    assert code == 0
    m = FittedModel.load(out)
    assert m.W.shape == (4, 64)
    np.testing.assert_allclose(np.linalg.norm(m.W, axis=1), 1.0, atol=1e-12)
    table = capsys.readouterr().out
    assert "converged" in table and table.count("yes") == 4


def test_too_many_components(sine, tmp_path, capsys):
    code = run("fit", "--input", sine, "--components", 100, "--window", 64, "--out", tmp_path / "m.json")
    assert code == 1
    assert "components" in capsys.readouterr().err
    assert not (tmp_path / "m.json").exists()


def test_fit_is_byte_deterministic(sine, tmp_path):
    args = ["fit", "--input", sine, "--window", 16, "--components", 3, "--seed", 5, "--sumt-iters", 3]
    assert run(*args, "--out", tmp_path / "a.json") == 0
    assert run(*args, "--out", tmp_path / "b.json") == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_not_converged_exit_code(sine, tmp_path):
    code = run("fit", "--input", sine, "--window", 16, "--components", 2, "--optimiser", "sd", "--lr", 1e-6,
               "--max-iter", 2, "--out", tmp_path / "m.json")
    assert code == 2
    assert (tmp_path / "m.json").exists()


def test_missing_input(tmp_path, capsys):
    assert run("fit", "--out", tmp_path / "m.json") == 1
    assert "--input" in capsys.readouterr().err


def test_bad_flag_value_exits_one(sine):
    with pytest.raises(SystemExit) as info:
        run("fit", "--input", sine, "--optimiser", "adam")
    assert info.value.code == 1


def test_pipeline_error_names_stage(tmp_path, capsys):
    flat = write_signal(tmp_path / "flat.csv", np.ones(100))
    assert run("fit", "--input", flat, "--window", 4, "--whiten", "--out", tmp_path / "m.json") == 1
    assert "preprocess" in capsys.readouterr().err


def test_config_file_and_override(sine, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(textwrap.dedent(f"""
        input = "{sine}"
        window = 12
        components = 2
        objective = "pca"
        no_regularisation = true
        gram_schmidt = true
        out = "{tmp_path / 'from_config.json'}"
    """))
    assert run("fit", "--config", cfg) == 0
    m = FittedModel.load(tmp_path / "from_config.json")
    assert m.W.shape == (2, 12) and m.objective == "pca"
    assert m.optim_config["gram_schmidt"] is True and m.diagnostics.alpha_trace == [0.0]
    # command-line flags win over the file
    assert run("fit", "--config", cfg, "--window", 8, "--out", tmp_path / "override.json") == 0
    assert FittedModel.load(tmp_path / "override.json").W.shape == (2, 8)


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("windw = 8\n")
    assert run("fit", "--config", cfg) == 1
    assert "windw" in capsys.readouterr().err


def test_config_invalid_value(sine, tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("tol = -1.0\n")
    assert run("fit", "--input", sine, "--config", cfg, "--out", tmp_path / "m.json") == 1


# --- transform / reconstruct -----------------------------------------------------------------


@pytest.fixture
def model_file(sine, tmp_path):
    out = tmp_path / "model.json"
    assert run("fit", "--input", sine, "--window", 16, "--components", 3, "--sumt-iters", 2, "--out", out) == 0
    return str(out)


def test_transform_matches_in_process(sine, model_file, tmp_path):
    out = tmp_path / "z.csv"
    assert run("transform", "--input", sine, "--model", model_file, "--out", out) == 0
    header, rows = read_csv(out)
    assert header == ["z1", "z2", "z3"]
    Z = np.array(rows, dtype=float)
    m = FittedModel.load(model_file)
    signal = Signal(np.loadtxt(sine))
    np.testing.assert_array_equal(Z, m.transform(signal))
    assert Z.shape == (1500 - 16 + 1, 3)
    assert b"\r" not in out.read_bytes()


def test_transform_zero_signal(model_file, tmp_path):
    zero = write_signal(tmp_path / "zero.csv", np.zeros(40))
    out = tmp_path / "z.csv"
    assert run("transform", "--input", zero, "--model", model_file, "--out", out) == 0
    Z = np.array(read_csv(out)[1], dtype=float)
    # every row maps to the same point -W (mean / scale)
    np.testing.assert_allclose(Z, np.tile(Z[0], (len(Z), 1)), rtol=0, atol=0)


def test_transform_window_mismatch(model_file, tmp_path, capsys):
    short = write_signal(tmp_path / "short.csv", np.ones(10))
    assert run("transform", "--input", short, "--model", model_file) == 1
    assert "error" in capsys.readouterr().err


def test_transform_bad_model(sine, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 1}')
    assert run("transform", "--input", sine, "--model", bad) == 1
    assert "window_length" in capsys.readouterr().err


def test_reconstruct_full_rank_diagonal(tmp_path):
    x = np.random.default_rng(1).standard_normal(400).cumsum()
    sig = write_signal(tmp_path / "x.csv", x)
    model = tmp_path / "m.json"
    assert run("fit", "--input", sig, "--window", 8, "--components", 8, "--objective", "pca",
               "--no-regularisation", "--gram-schmidt", "--out", model) == 0
    out = tmp_path / "r.csv"
    assert run("reconstruct", "--input", sig, "--model", model, "--collapse", "diagonal", "--out", out) == 0
    r = np.loadtxt(out)
    assert r.shape == x.shape
    assert np.linalg.norm(r - x) <= 1e-6 * np.linalg.norm(x)


def test_reconstruct_matrix_by_default(sine, model_file, tmp_path):
    out = tmp_path / "r.csv"
    assert run("reconstruct", "--input", sine, "--model", model_file, "--out", out) == 0
    header, rows = read_csv(out)
    assert header == [f"x{i}" for i in range(1, 17)]
    assert len(rows) == 1500 - 16 + 1


def test_reconstruct_zero_latent(model_file, tmp_path):
    latent = tmp_path / "zero.csv"
    latent.write_text("z1,z2,z3\n" + "0,0,0\n" * 5)
    out = tmp_path / "r.csv"
    assert run("reconstruct", "--model", model_file, "--latent", latent, "--collapse", "diagonal", "--out", out) == 0
    m = FittedModel.load(model_file)
    np.testing.assert_array_equal(np.loadtxt(out), diagonal_average(np.tile(m.mean, (5, 1))))


def test_reconstruct_from_transform_output(sine, model_file, tmp_path):
    z = tmp_path / "z.csv"
    assert run("transform", "--input", sine, "--model", model_file, "--out", z) == 0
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("reconstruct", "--model", model_file, "--latent", z, "--out", a) == 0
    assert run("reconstruct", "--model", model_file, "--input", sine, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()


# --- spectra ------------------------------------------------------------------------------


def test_spectra_csv_and_svg(sine, model_file, tmp_path):
    out, svg = tmp_path / "s.csv", tmp_path / "s.svg"
    assert run("spectra", "--input", sine, "--sample-rate", 200, "--model", model_file, "--out", out, "--svg", svg) == 0
    header, rows = read_csv(out)
    assert header == ["component", "bin", "frequency_hz", "power"]
    n = 1500 - 16 + 1
    assert len(rows) == 3 * (n // 2 + 1)
    first = [r for r in rows if r[0] == "1"]
    k = np.array([int(r[1]) for r in first])
    np.testing.assert_allclose([float(r[2]) for r in first], k * 200.0 / n)
    m = FittedModel.load(model_file)
    power, _ = m.source_spectra(Signal(np.loadtxt(sine), 200.0))
    np.testing.assert_array_equal([float(r[3]) for r in first], power[0, : n // 2 + 1])
    root = ET.parse(svg).getroot()
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 3


def test_spectra_without_rate(sine, model_file, tmp_path):
    out = tmp_path / "s.csv"
    assert run("spectra", "--input", sine, "--model", model_file, "--out", out) == 0
    _, rows = read_csv(out)
    assert all(r[2] == "" for r in rows)


def test_spectra_zero_signal(model_file, tmp_path):
    zero = write_signal(tmp_path / "zero.csv", np.zeros(64))
    out = tmp_path / "s.csv"
    # a zero signal centred by a non-zero training mean is a constant latent: DC only
    assert run("spectra", "--input", zero, "--model", model_file, "--out", out) == 0
    _, rows = read_csv(out)
    dc = max(float(r[3]) for r in rows if r[1] == "0")
    assert dc > 0
    assert all(float(r[3]) <= 1e-20 * dc for r in rows if r[1] != "0")
    # with a zero stored mean every bin vanishes
    doc = json.loads(open(model_file).read())
    doc["mean"] = [0.0] * len(doc["mean"])
    zero_mean = tmp_path / "zero_mean.json"
    zero_mean.write_text(json.dumps(doc))
    assert run("spectra", "--input", zero, "--model", zero_mean, "--out", out) == 0
    _, rows = read_csv(out)
    assert all(float(r[3]) == 0.0 for r in rows)


# --- check-grad -----------------------------------------------------------------------------


@pytest.mark.parametrize("objective", ["pca", "negentropy"])
def test_check_grad_passes(objective, capsys):
    assert run("check-grad", "--objective", objective, "--window", 16) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 2 and "FAIL" not in out


@pytest.mark.parametrize("gfunc", ["exp", "quartic"])
def test_check_grad_gfuncs(gfunc):
    assert run("check-grad", "--objective", "negentropy", "--gfunc", gfunc, "--window", 8) == 0


def test_check_grad_on_input(sine):
    assert run("check-grad", "--objective", "negentropy", "--input", sine, "--window", 12, "--points", 3) == 0


CORRUPT = '''
import numpy as np
from spectral_lvm.objectives import PCAObjective


class CorruptObjective(PCAObjective):
    """PCA with a gradient that is off by a factor of two."""

    name = "corrupt"

    def gradient(self, w, X):
        return 2.0 * super().gradient(w, X)
'''


def test_check_grad_negative_control(tmp_path, monkeypatch, capsys):
    (tmp_path / "corrupt_objective.py").write_text(CORRUPT)
    monkeypatch.syspath_prepend(str(tmp_path))
    code = run("check-grad", "--objective", "corrupt_objective:CorruptObjective", "--window", 8)
    assert code != 0
    assert "FAIL" in capsys.readouterr().out


def test_plugin_objective_import_error(capsys):
    assert run("check-grad", "--objective", "no_such_module:Thing") == 1
    assert "cannot import" in capsys.readouterr().err


# --- entry point ----------------------------------------------------------------------------


def test_module_entry_point(sine, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "spectral_lvm.cli", "fit", "--input", sine, "--window", "8", "--components", "2",
         "--objective", "pca", "--out", str(tmp_path / "m.json")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "model written" in proc.stdout
