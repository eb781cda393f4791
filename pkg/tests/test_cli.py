import numpy as np
import pytest

from switched_mpc import cli
from switched_mpc.cli import ConfigError, load_config, run


def _write(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_bad_arguments_exit_2(tmp_path):
    assert run(["example1", "--l", "0", "--out", str(tmp_path)]) == 2
    assert run(["example1", "--bogus"]) == 2
    assert run([]) == 2
    assert run(["srci"]) == 2


def test_help_exits_0(capsys):
    assert run(["--help"]) == 0


def test_config_defaults_per_model(tmp_path):
    c1 = load_config(_write(tmp_path, "[experiment]\nmodel = example1\nl = 4\n"))
    assert (c1.N, c1.dt, c1.steps, c1.x0) == (20, 0.1, 50, (-1.0, 1.0))
    assert c1.solver.soften
    c2 = load_config(_write(tmp_path, "[experiment]\nmodel = example2\nl = 5\n"))
    assert (c2.N, c2.dt, c2.steps) == (40, 0.1, 80)


def test_config_rejects_indivisible_horizon(tmp_path):
    p = _write(tmp_path, "[experiment]\nmodel = example1\nN = 21\nl = 4\n")
    with pytest.raises(ConfigError):
        load_config(p)
    assert run(["example1", "--config", str(p), "--out", str(tmp_path)]) == 2


def test_unknown_key_reports_line(tmp_path, capsys):
    p = _write(tmp_path, "[experiment]\nmodel = example1\n\n[solver]\ntol_kkt = 1e-6\nwarp = 9\n")
    with pytest.raises(ConfigError, match=r"exp.ini:6: unknown key 'warp'"):
        load_config(p)
    assert run(["sweep", "--config", str(p)]) == 2
    assert "warp" in capsys.readouterr().err


def test_unknown_section_and_bad_value(tmp_path):
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(_write(tmp_path, "[extras]\nx = 1\n"))
    with pytest.raises(ConfigError, match="soften"):
        load_config(_write(tmp_path, "[solver]\nsoften = maybe\n"))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")


def test_example1_outputs_are_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["example1", "--l", "2", "--steps", "5", "--out", str(a)]) == 0
    assert run(["example1", "--l", "2", "--steps", "5", "--out", str(b)]) == 0
    for name in ("trace.csv", "plot_trace.py"):
        assert (a / "example1_l2" / name).read_bytes() == (b / "example1_l2" / name).read_bytes()
    out = capsys.readouterr().out
    assert "E=" in out and "dwell_ok=True" in out


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SWITCHED_MPC_OUTPUT", str(tmp_path / "env"))
    assert run(["example1", "--l", "1", "--steps", "2"]) == 0
    assert (tmp_path / "env" / "example1_l1" / "trace.csv").exists()


def test_round_is_idempotent_on_binary_input(tmp_path, capsys):
    src = tmp_path / "plan.csv"
    src.write_text("0.3,0.7\n0.6,0.4\n0.5,0.5\n")
    assert run(["round", "--in", str(src), "--l", "2", "--dt", "0.1", "--Q", "2",
                "--out", str(tmp_path / "r1.csv")]) == 0
    r1 = (tmp_path / "r1.csv").read_text()
    rows = np.loadtxt(tmp_path / "r1.csv", delimiter=",", ndmin=2)
    assert set(np.unique(rows)) <= {0.0, 1.0}
    np.testing.assert_array_equal(rows.sum(axis=1), 1.0)
    assert run(["round", "--in", str(tmp_path / "r1.csv"), "--l", "2", "--dt", "0.1", "--Q", "2",
                "--out", str(tmp_path / "r2.csv")]) == 0
    assert (tmp_path / "r2.csv").read_text() == r1


def test_round_rejects_bad_rows(tmp_path):
    src = tmp_path / "plan.csv"
    src.write_text("0.3,0.3\n")
    assert run(["round", "--in", str(src), "--l", "2", "--dt", "0.1", "--Q", "2"]) == 2
    src.write_text("0.3,0.7,0.0\n")
    assert run(["round", "--in", str(src), "--l", "2", "--dt", "0.1", "--Q", "2"]) == 2


def test_srci_subcommand(tmp_path, capsys):
    p = _write(tmp_path, "[experiment]\nmodel = example1\nl = 4\n")
    assert run(["srci", "--config", str(p), "--out", str(tmp_path)]) == 0
    files = list(tmp_path.rglob("srci.csv"))
    assert len(files) == 1
    assert files[0].read_text().strip()


def test_oracle_subcommand(tmp_path, capsys):
    p = _write(tmp_path, "[experiment]\nmodel = example1\nN = 8\nl = 4\n\n[oracle]\nsamples = 2\n")
    assert run(["oracle", "--config", str(p), "--out", str(tmp_path)]) == 0
    assert "sandwich holds on all samples: True" in capsys.readouterr().out
