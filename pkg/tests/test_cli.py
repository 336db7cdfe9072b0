import json

import numpy as np
import pytest

from nqsvmc import serialize
from nqsvmc.cli import main

BASE = """\
schema = 1
seed = 1

[system]
space = "spin"
s = 0.5
lattice = "chain"
length = 3

[system.hamiltonian]
kind = "ising"
h = 1.0

[model]
kind = "rbm"
alpha = 1
sigma = 0.2

[sampler]
kind = "full"

[driver]
n_iter = 5
learning_rate = 0.05

[driver.sr]
diag_shift = 0.01
solver = "cholesky"
"""


def write_config(tmp_path, text=BASE, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_vmc_run_is_deterministic(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["vmc", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["vmc", cfg, "--out", str(tmp_path / "b")]) == 0
    out = capsys.readouterr().out
    assert out.count("final Energy") == 2
    assert (tmp_path / "a.log").read_bytes() == (tmp_path / "b.log").read_bytes()
    assert (tmp_path / "a.params").read_bytes() == (tmp_path / "b.params").read_bytes()


def test_vmc_csv_flag(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["vmc", cfg, "--out", str(tmp_path / "a"), "--csv"]) == 0
    lines = (tmp_path / "a.csv").read_text().strip().splitlines()
    assert lines[0].startswith("iters,")
    assert len(lines) == 6  # header plus one row per iteration


def test_override_beats_config(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["vmc", cfg, "--override", "driver.n_iter=2",
                 "--out", str(tmp_path / "a")]) == 0
    data = json.loads((tmp_path / "a.log").read_text())
    assert len(data["Energy"]["Mean"]["real"]) == 2


def test_override_bad_syntax(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["vmc", cfg, "--override", "driver.n_iter", "--out",
                 str(tmp_path / "a")]) == 2
    assert "override" in capsys.readouterr().err


def test_seed_env_overrides_config(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    assert main(["vmc", cfg, "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("SEED", "2")
    assert main(["vmc", cfg, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a.log").read_bytes() != (tmp_path / "b.log").read_bytes()
    monkeypatch.setenv("SEED", "two")
    assert main(["vmc", cfg, "--out", str(tmp_path / "c")]) == 2


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE + "\n[driver.srr]\ndiag_shift = 0.1\n")
    assert main(["vmc", cfg, "--out", str(tmp_path / "a")]) == 2
    err = capsys.readouterr().err
    assert "srr" in err and "allowed" in err


def test_schema_version_checked(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE.replace("schema = 1", "schema = 2"))
    assert main(["vmc", cfg, "--out", str(tmp_path / "a")]) == 2
    assert "schema" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["vmc", str(tmp_path / "nope.toml"), "--out",
                 str(tmp_path / "a")]) == 2
    assert "cannot read config" in capsys.readouterr().err


def test_ed_prints_eigenvalues(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE + "\n[ed]\nk = 3\n")
    assert main(["ed", cfg]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["eigenvalues"]) == 3
    assert doc["eigenvalues"] == sorted(doc["eigenvalues"])
    from nqsvmc import lattice, oracle
    from nqsvmc.hilbert import Spin
    from nqsvmc.operator import ising
    w, _ = oracle.ed_spectrum(ising(Spin(0.5, N=3), lattice.chain(3), h=1.0), k=3)
    np.testing.assert_allclose(doc["eigenvalues"], w, atol=1e-10)


def test_ed_writes_json_file(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["ed", cfg, "--out", str(tmp_path / "spec")]) == 0
    capsys.readouterr()
    doc = json.loads((tmp_path / "spec.json").read_text())
    assert "eigenvalues" in doc


def test_sample_writes_configurations(tmp_path, capsys):
    text = BASE.replace('kind = "full"', 'kind = "local"\nn_samples = 64\nn_chains = 8')
    cfg = write_config(tmp_path, text)
    assert main(["sample", cfg, "--out", str(tmp_path / "s")]) == 0
    rows = np.loadtxt(tmp_path / "s.csv", delimiter=",")
    assert rows.shape == (64, 3)
    assert set(np.unique(rows)) <= {-1.0, 1.0}


def test_sample_rejects_full_summation(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["sample", cfg, "--out", str(tmp_path / "s")]) == 2
    assert "nothing to sample" in capsys.readouterr().err


def test_chartable_prints_table(tmp_path, capsys):
    text = BASE + "\n[chartable]\ngroup = \"point\"\n"
    cfg = write_config(tmp_path, text)
    assert main(["chartable", cfg]) == 0
    out = capsys.readouterr().out
    assert "point group" in out
    assert "chi" in out or "1" in out


def test_resume_with_zero_iterations_preserves_params(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["vmc", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["vmc", cfg, "--override", "driver.n_iter=0",
                 "--resume", str(tmp_path / "a.params"),
                 "--out", str(tmp_path / "b")]) == 0
    assert "0 iterations" in capsys.readouterr().out
    pa = serialize.load_params(tmp_path / "a.params")
    pb = serialize.load_params(tmp_path / "b.params")
    np.testing.assert_array_equal(pa["W"], pb["W"])


def test_resume_continues_descent(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["vmc", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["vmc", cfg, "--resume", str(tmp_path / "a.params"),
                 "--out", str(tmp_path / "b")]) == 0
    ea = json.loads((tmp_path / "a.log").read_text())["Energy"]["Mean"]["real"]
    eb = json.loads((tmp_path / "b.log").read_text())["Energy"]["Mean"]["real"]
    assert eb[0] < ea[0]


def test_resume_rejects_corrupted_snapshot(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["vmc", cfg, "--out", str(tmp_path / "a")]) == 0
    blob = bytearray((tmp_path / "a.params").read_bytes())
    blob[-1] ^= 0x01
    (tmp_path / "a.params").write_bytes(bytes(blob))
    assert main(["vmc", cfg, "--resume", str(tmp_path / "a.params"),
                 "--out", str(tmp_path / "b")]) == 2
    assert "corrupted" in capsys.readouterr().err


def test_resume_rejects_shape_mismatch(tmp_path, capsys):
    cfg3 = write_config(tmp_path)
    cfg4 = write_config(tmp_path, BASE.replace("length = 3", "length = 4"),
                        name="run4.toml")
    assert main(["vmc", cfg4, "--out", str(tmp_path / "a")]) == 0
    assert main(["vmc", cfg3, "--resume", str(tmp_path / "a.params"),
                 "--out", str(tmp_path / "b")]) == 2
    assert "incompatible" in capsys.readouterr().err


def test_divergent_run_exits_3(tmp_path, capsys):
    cfg = write_config(tmp_path)
    with np.errstate(over="ignore", invalid="ignore"):
        rc = main(["vmc", cfg, "--override", "driver.learning_rate=1e150",
                   "--override", "driver.n_iter=10",
                   "--out", str(tmp_path / "a")])
    assert rc == 3
    assert "numerical abort" in capsys.readouterr().err


def test_tdvp_imaginary_time(tmp_path, capsys):
    text = BASE.replace(
        "[driver]\nn_iter = 5\nlearning_rate = 0.05\n\n[driver.sr]\n"
        "diag_shift = 0.01\nsolver = \"cholesky\"\n",
        "[driver]\nt_end = 0.1\npropagation = \"imag\"\nsolver = \"svd\"\n"
        "rcond = 1e-10\n\n[integrator]\nscheme = \"heun\"\ndt = 0.05\n",
    )
    cfg = write_config(tmp_path, text)
    assert main(["tdvp", cfg, "--out", str(tmp_path / "t")]) == 0
    assert "tdvp: reached t = 0.1" in capsys.readouterr().out
    data = json.loads((tmp_path / "t.log").read_text())
    assert data["times"][-1] == pytest.approx(0.1)
    e = data["Energy"]["Mean"]["real"]
    assert e[-1] < e[0]


def test_missing_out_prefix(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["vmc", cfg]) == 2
    assert "output prefix" in capsys.readouterr().err
