import json

import numpy as np
import pytest

from lyapctl import config as cfgmod
from lyapctl import experiment as ex
from lyapctl.cli import main
from lyapctl.errors import ConfigError

pytestmark = pytest.mark.filterwarnings("ignore:bound state amplitude")

SMALL = """
[grid]
points = 256
half_extent = 20.0

[propagator]
dt = 0.01

[controller]
gain = 1.0

[run]
horizon = 2.0
csv_every = 5
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def _run(*argv):
    return main([str(a) for a in argv])


def test_missing_config_exits_2(tmp_path, capsys):
    assert _run("spectrum", "--config", tmp_path / "nope.toml") == 2
    assert "configuration error" in capsys.readouterr().err


def test_unknown_subcommand_exits_2(capsys):
    assert _run("teleport") == 2


def test_unknown_key_exits_2(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[grid]\npionts = 64\n")
    assert _run("spectrum", "--config", p) == 2


def test_spectrum_command(small, tmp_path, capsys):
    assert _run("spectrum", "--config", small, "--out", tmp_path / "s") == 0
    data = json.loads((tmp_path / "s" / "spectrum.json").read_text())
    assert np.allclose(data["eigenvalues"], [-4.0, -1.0], atol=1e-3)
    assert (tmp_path / "s" / "phi_0.bin").exists()


def test_check_assumptions_command(small, tmp_path):
    assert _run("check-assumptions", "--config", small, "--out", tmp_path / "a") == 0
    rep = json.loads((tmp_path / "a" / "assumptions.json").read_text())
    assert rep["a1_ok"] and rep["a4_ok"]
    code = _run("check-assumptions", "--config", small, "--out", tmp_path / "b",
                "--override", "initial.kind=\"eigenstate\"", "--override", "initial.index=1")
    assert code == 1


def test_control_is_deterministic(small, tmp_path):
    for name in ("r1", "r2"):
        # short horizon: the threshold is not reached, which is exit 1
        assert _run("control", "--config", small, "--out", tmp_path / name) == 1
    a = (tmp_path / "r1" / "trajectory.csv").read_bytes()
    b = (tmp_path / "r2" / "trajectory.csv").read_bytes()
    assert a == b
    header = a.decode().splitlines()[0]
    assert header == ("t,lyapunov,pop_0,pop_1,target_pop,u,int_u2,int_u_r,"
                      "continuum_mass,absorbed_mass,norm")
    summary = json.loads((tmp_path / "r1" / "summary.json").read_text())
    assert summary["config"]["grid"]["points"] == 256
    assert summary["trajectory"]["samples"] == 201


def test_override_changes_run(small, tmp_path):
    ec = cfgmod.load(small, ["controller.eps=0.3"])
    assert ec["controller"]["eps"] == 0.3
    with pytest.raises(ConfigError):
        cfgmod.load(small, ["controller.nope=1"])


def test_extract_and_replay(small, tmp_path):
    ec = ex.load_experiment(small)
    res = ex.run_closed_loop(ec, tmp_path / "run")
    sig = ex.extract_open_loop_signal(tmp_path / "run")
    t, u = ex.read_signal(sig)
    assert np.array_equal(u, res.record.column("u"))
    rep = ex.replay(ec, sig, tmp_path / "replay")
    assert abs(rep.summary["difference"]) < 1e-12


def test_extract_refuses_incomplete(small, tmp_path):
    ec = ex.load_experiment(small)
    res = ex.run_closed_loop(ec, tmp_path / "run")
    res.record.complete = False
    res.record.save_npz(tmp_path / "run" / "trajectory.npz")
    assert _run("extract-signal", "--run", tmp_path / "run") == 2
    assert _run("extract-signal", "--run", tmp_path / "empty") == 2


def test_zero_signal_keeps_populations(small, tmp_path):
    ec = ex.load_experiment(small)
    sig = tmp_path / "zero.csv"
    t = 0.01 * np.arange(201)
    sig.write_text("t,u\n" + "".join(f"{x:.17g},0\n" for x in t))
    rep = ex.replay(ec, sig, tmp_path / "z")
    pops = rep.record.populations[: len(rep.record)]
    # Strang eigenvectors differ from those of H0 at O(dt^2)
    assert np.max(np.abs(pops - pops[0])) < 1e-8


def test_bad_signal(small, tmp_path):
    ec = ex.load_experiment(small)
    sig = tmp_path / "short.csv"
    sig.write_text("t,u\n0,0\n0.01,0\n")
    with pytest.raises(ConfigError):
        ex.replay(ec, sig, tmp_path / "z")
    sig.write_text("time,u\n")
    with pytest.raises(ConfigError):
        ex.read_signal(sig)


def test_initial_state_kinds(small):
    ec = ex.load_experiment(small, ["initial.kind=\"random\"", "initial.seed=4"])
    sys_ = ex.build_system(ec)
    a = ex.initial_state(ec, sys_)
    b = ex.initial_state(ex.load_experiment(small, ["initial.kind=\"random\"",
                                                    "initial.seed=4"]), sys_)
    assert np.array_equal(a.amplitudes, b.amplitudes)
    assert a.norm() == pytest.approx(1.0)
    ec = ex.load_experiment(small, ["initial.coefficients=[[1.0, 0.0], [1.0, 0.0]]"])
    with pytest.warns(UserWarning, match="normalizing"):
        psi = ex.initial_state(ec, sys_)
    assert psi.norm() == pytest.approx(1.0)


def test_auto_gain(small):
    ec = ex.load_experiment(small, ["controller.gain=\"auto\""])
    sys_ = ex.build_system(ec)
    g = ex.resolve_gain(ec, sys_.sd, sys_.mu)
    assert g == pytest.approx(min(1.0, 0.05 / (3 * sys_.mu.sup_norm() * 0.01)))
