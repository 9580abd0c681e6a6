import copy
import json

import numpy as np
import pytest

from hseom.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from hseom.cli import main
from hseom.config import ConfigError, config_hash, load_config
from hseom.io import read_series_csv
from hseom.runner import (EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_RESOURCE, Experiment, ResourceError,
                          memory_estimate)

BASE = {
    "system": {"n_spins": 3, "delta": 1.0, "epsilon0": 1.0, "coupling_kind": "Diagonal"},
    "bath": {"zeta": 0.05, "nu": 2.0, "beta": 2.0, "K": 4},
    "hierarchy": {"depth": 2},
    "integration": {"dt": 0.01, "t_max": 0.6},
    "observables": [{"kind": "loschmidt"}, {"kind": "population"},
                    {"kind": "correlator", "j": 2, "k": 2, "spectrum": {"n_omega": 11}},
                    {"kind": "three_time", "i": 2, "j": 1, "k": 2, "t_prime": 0.3, "insertion_interval": 0.1}],
    "resources": {"checkpoint_interval": 7},
}


def cfg(**changes):
    raw = copy.deepcopy(BASE)
    for path, value in changes.items():
        node = raw
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = value
    return raw


def write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


# -- configuration --------------------------------------------------------------


def test_defaults_filled():
    c = load_config({"system": {"n_spins": 5}, "bath": {"zeta": 0.01, "nu": 2.0, "beta": "inf", "K": 40},
                     "integration": {"t_max": 1.0}})
    assert c.system.coupled_sites == (3,)
    assert c.integration.dt == 0.002
    assert c.integration.stride == 25
    assert c.depth == 2
    assert c.initial_beta == float("inf")
    assert [o["kind"] for o in c.observables] == ["loschmidt", "population"]


def test_hash_ignores_output_and_resources():
    a = cfg()
    b = cfg(resources__memory_budget_gb=1.0)
    b["output"] = {"directory": "/elsewhere"}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(cfg(bath__zeta=0.02))


@pytest.mark.parametrize("changes, field", [
    ({"observables": [{"kind": "correlator", "j": 9, "k": 1}]}, "observables[0].j"),
    ({"bath__K": 5}, "bath.K"),
    ({"integration__dt": -0.1}, "integration.dt"),
    ({"observables": [{"kind": "three_time", "i": 1, "j": 1, "k": 1, "t_prime": 5.0}]}, "t_prime"),
    ({"system__coupling_kind": "Sideways"}, "system.coupling_kind"),
    ({"system__coupled_sites": [7]}, "system"),
])
def test_invalid_fields_named(changes, field):
    with pytest.raises(ConfigError, match=field.replace("[", r"\[").replace("]", r"\]")):
        load_config(cfg(**changes))


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_memory_estimate_paper_regime():
    est = memory_estimate(40, 2, 13)
    assert est == 861 * 2**14 * 2 * 16
    assert est / 1e9 == pytest.approx(0.45, abs=0.01)


def test_memory_refusal(tmp_path, capsys):
    raw = cfg(resources__memory_budget_gb=1e-5)
    with pytest.raises(ResourceError):
        Experiment(raw)
    assert main(["run", "--config", str(write(tmp_path, raw)), "--output", str(tmp_path / "o")]) == EXIT_RESOURCE
    assert "exceeds the budget" in capsys.readouterr().err


# -- checkpoint file --------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1 + 2j, 3 - 4j]), "empty": np.zeros(0)}
    p = save_checkpoint(tmp_path / "c.bin", {"x": 1}, arrays)
    header, back = load_checkpoint(p)
    assert header["x"] == 1
    for k, v in arrays.items():
        np.testing.assert_array_equal(back[k], v)
        assert back[k].dtype == v.dtype


@pytest.mark.parametrize("damage", ["truncate", "magic", "header", "payload", "version"])
def test_checkpoint_corruption_refused(tmp_path, damage):
    p = save_checkpoint(tmp_path / "c.bin", {"x": 1}, {"a": np.ones(4)})
    raw = bytearray(p.read_bytes())
    if damage == "truncate":
        raw = raw[:10]
    elif damage == "magic":
        raw[0] ^= 0xFF
    elif damage == "header":
        raw[22] ^= 0x01
    elif damage == "payload":
        raw[-40] ^= 0x01
    else:
        raw[8] = 99
    p.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


# -- end to end ---------------------------------------------------------------------


def run_straight(raw):
    exp = Experiment(raw)
    exp.run()
    return exp.series()


def test_determinism():
    a, b = run_straight(cfg()), run_straight(cfg())
    assert a.keys() == b.keys()
    for k in a:
        assert np.array_equal(a[k].values, b[k].values), k


def test_resume_is_bitwise(tmp_path):
    ref = run_straight(cfg())
    ck = tmp_path / "ck.bin"
    exp = Experiment(cfg(), checkpoint_path=ck)
    assert exp.run(max_steps=95) is False  # stops inside the correlator job
    resumed = Experiment.resume(ck)
    assert resumed.run() is True
    got = resumed.series()
    assert got.keys() == ref.keys()
    for k in ref:
        assert np.array_equal(got[k].values, ref[k].values), k


def test_resume_hash_mismatch(tmp_path, capsys):
    ck = tmp_path / "ck.bin"
    exp = Experiment(cfg(), checkpoint_path=ck)
    exp.run(max_steps=10)
    other = write(tmp_path, cfg(bath__zeta=0.02))
    with pytest.raises(CheckpointError, match="hash mismatch") as info:
        Experiment.resume(ck, load_config(other))
    assert load_config(cfg()).hash in str(info.value)
    assert load_config(other).hash in str(info.value)
    assert main(["resume", "--checkpoint", str(ck), "--config", str(other)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert load_config(cfg()).hash in err and load_config(other).hash in err


def test_resume_corrupted_header(tmp_path):
    ck = tmp_path / "ck.bin"
    Experiment(cfg(), checkpoint_path=ck).run(max_steps=10)
    raw = bytearray(ck.read_bytes())
    raw[30] ^= 0x20
    ck.write_bytes(bytes(raw))
    assert main(["resume", "--checkpoint", str(ck)]) == EXIT_CONFIG


def test_cli_run_outputs(tmp_path):
    out = tmp_path / "out"
    code = main(["--threads", "1", "run", "--config", str(write(tmp_path, cfg())), "--output", str(out)])
    assert code == EXIT_OK
    text = (out / "loschmidt_echo.csv").read_text().splitlines()
    assert text[0] == "t,re,im"
    t, L = read_series_csv(out / "loschmidt_echo.csv")
    assert t[0] == 0.0 and L[0] == 1.0
    assert np.allclose(np.diff(t), 0.05)
    meta = json.loads((out / "loschmidt_echo.json").read_text())
    assert meta["config_hash"] == load_config(cfg()).hash
    assert (out / "spectrum_C_j2_k2.csv").read_text().startswith("omega,re,im")
    for name in ("population_plus", "corr_A_j2_k2", "corr_C_j2_k2", "corr_D_i2_j1_k2", "fdt_residual_j2_k2",
                 "trace_health"):
        assert (out / f"{name}.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["hierarchy_size"] == 15
    # the checkpoint written along the way resumes to the same files
    again = tmp_path / "again"
    assert main(["resume", "--checkpoint", str(out / "checkpoint.bin"), "--output", str(again)]) == EXIT_OK
    assert (again / "loschmidt_echo.csv").read_bytes() == (out / "loschmidt_echo.csv").read_bytes()


def test_cli_validate(tmp_path, capsys):
    assert main(["validate", "--config", str(write(tmp_path, cfg()))]) == EXIT_OK
    assert "config ok" in capsys.readouterr().out
    bad = write(tmp_path, cfg(bath__K=3), "bad.json")
    assert main(["validate", "--config", str(bad)]) == EXIT_CONFIG


def test_cli_numeric_failure(tmp_path, capsys):
    raw = cfg(integration__dt=2.0, integration__t_max=600.0, integration__record_interval=2.0,
              observables=[{"kind": "loschmidt"}], resources__checkpoint_interval=0)
    code = main(["run", "--config", str(write(tmp_path, raw)), "--output", str(tmp_path / "o")])
    assert code == EXIT_NUMERIC
    assert "overflow" in capsys.readouterr().err


def test_cli_bath_table(tmp_path):
    out = tmp_path / "bath"
    assert main(["bath-table", "--zeta", "0.01", "--beta", "2", "--K", "8", "--t-max", "2",
                 "--output", str(out)]) == EXIT_OK
    coeffs = np.loadtxt(out / "bath_coefficients.csv", delimiter=",", skiprows=1)
    assert coeffs.shape == (8, 3)
    table = np.loadtxt(out / "bath_residual.csv", delimiter=",", skiprows=1)
    assert table.shape == (21, 5)
    np.testing.assert_allclose(table[:, 2], table[:, 4], atol=1e-12)
