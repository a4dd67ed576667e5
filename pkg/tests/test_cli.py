import json
import subprocess
import sys

import numpy as np
import pytest

from gbtrack.baseline import track_global_max
from gbtrack.cli import load_mines, main
from gbtrack.core import load_truth, load_volume


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--out", out, "--dims", "415x12x200", "--seed", 7, "--snow", "30:1.5",
               "--noise-sigma", 0.05) == 0
    return out


@pytest.fixture(scope="module")
def mine_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("mines")
    assert run("simulate", "--out", out, "--dims", "415x24x300", "--seed", 4, "--noise-sigma", 0.05,
               "--surface-sigma", 0.5, "--mine", "5:60", "--mine", "12:150", "--mine", "20:240") == 0
    return out


def manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_simulate_writes_three_files(sim_dir):
    names = sorted(p.name for p in sim_dir.iterdir())
    assert names == ["manifest.json", "volume.gprv", "volume_truth.csv"]
    v = load_volume(sim_dir / "volume.gprv")
    assert v.shape == (415, 12, 200)
    m = manifest(sim_dir)
    assert m["command"] == "simulate" and m["seed"] == 7
    assert set(m["outputs"]) == {"volume.gprv", "volume_truth.csv"}


def test_simulate_manifest_replay(sim_dir, tmp_path):
    assert run("simulate", "--config", sim_dir / "manifest.json", "--out", tmp_path) == 0
    assert manifest(tmp_path)["outputs"] == manifest(sim_dir)["outputs"]


def test_mines_file_is_one_based(mine_dir):
    assert load_mines(mine_dir / "volume_mines.csv") == [(4, 59), (11, 149), (19, 239)]


def test_flags_override_config(sim_dir, tmp_path):
    assert run("simulate", "--config", sim_dir / "manifest.json", "--seed", 8, "--out", tmp_path) == 0
    m = manifest(tmp_path)
    assert m["seed"] == 8 and m["config"]["n_channels"] == 12  # rest from the config
    assert m["outputs"] != manifest(sim_dir)["outputs"]


def test_validation_errors_exit_1(tmp_path, capsys):
    assert run("simulate", "--out", tmp_path, "--surface-sigma", -1) == 1
    assert "surface_sigma" in capsys.readouterr().err
    assert run("simulate", "--out", tmp_path, "--dims", "4x4") == 1
    with pytest.raises(SystemExit) as exc:
        run("track", "x.gprv", "--out", tmp_path, "--tracker", "nope")
    assert exc.value.code == 1


def test_wrong_tracker_flags_rejected(sim_dir, tmp_path, capsys):
    assert run("track", sim_dir / "volume.gprv", "--out", tmp_path, "--tracker", "gm",
               "--q-scale", 1) == 1
    assert "--q-scale" in capsys.readouterr().err


def test_track_gm_matches_library(sim_dir, tmp_path):
    assert run("track", sim_dir / "volume.gprv", "--tracker", "gm", "--out", tmp_path) == 0
    est = load_truth(tmp_path / "volume_gm.csv")
    ref = track_global_max(load_volume(sim_dir / "volume.gprv"))
    assert np.array_equal(est.gb, ref.gb)
    diag = json.loads((tmp_path / "volume_gm_diagnostics.json").read_text())
    assert diag["tracker"] == "gm"


def test_track_pf_deterministic(sim_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("track", sim_dir / "volume.gprv", "--tracker", "pf", "--seed", 3, "--out", d) == 0
    assert (a / "volume_pf.csv").read_bytes() == (b / "volume_pf.csv").read_bytes()
    assert manifest(a)["config"]["params"]["seed"] == 3


def test_track_manifest_replay(sim_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("track", sim_dir / "volume.gprv", "--tracker", "kf", "--q-scale", 0.5, "--out", a) == 0
    assert run("track", "--config", a / "manifest.json", "--out", b) == 0
    assert manifest(a)["outputs"] == manifest(b)["outputs"]
    assert manifest(b)["config"]["params"]["q_scale"] == 0.5


def test_jobs_matches_sequential(sim_dir, mine_dir, tmp_path):
    vols = [sim_dir / "volume.gprv", mine_dir / "volume.gprv"]
    # both stems are "volume": copy to distinct names
    named = []
    for i, v in enumerate(vols):
        p = tmp_path / f"v{i}.gprv"
        p.write_bytes(v.read_bytes())
        named.append(p)
    seq, par = tmp_path / "seq", tmp_path / "par"
    assert run("track", *named, "--tracker", "cm", "--out", seq) == 0
    assert run("track", *named, "--tracker", "cm", "--jobs", 2, "--out", par) == 0
    assert manifest(seq)["outputs"] == manifest(par)["outputs"]


def test_eval_identical_files(sim_dir, capsys):
    truth = sim_dir / "volume_truth.csv"
    assert run("eval", truth, truth) == 0
    err = json.loads(capsys.readouterr().out)
    assert err["bias"] == 0 and err["variance"] == 0


def test_eval_dimension_mismatch(sim_dir, mine_dir):
    assert run("eval", sim_dir / "volume_truth.csv", mine_dir / "volume_truth.csv") != 0


def test_eval_missing_truth_exit_2(sim_dir, tmp_path, capsys):
    missing = tmp_path / "nowhere.csv"
    assert run("eval", sim_dir / "volume_truth.csv", missing) == 2
    assert "nowhere.csv" in capsys.readouterr().err


def test_corrupt_volume_exit_2(tmp_path):
    bad = tmp_path / "bad.gprv"
    bad.write_bytes(b"not a volume")
    assert run("track", bad, "--tracker", "gm", "--out", tmp_path / "o") == 2


def test_roc_perfect_fixture(mine_dir, tmp_path, capsys):
    assert run("roc", mine_dir / "volume.gprv", mine_dir / "volume_truth.csv",
               mine_dir / "volume_mines.csv", "--out", tmp_path) == 0
    info = json.loads((tmp_path / "volume_truth_roc.json").read_text())
    assert info["auc_window"] == pytest.approx(0.02) and info["n_mines"] == 3
    header = (tmp_path / "volume_truth_roc.csv").read_text().splitlines()[0]
    assert header == "far,pd,threshold"


def test_roc_manifest_replay(mine_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("roc", mine_dir / "volume.gprv", mine_dir / "volume_truth.csv",
               mine_dir / "volume_mines.csv", "--halo", 3, "--out", a) == 0
    assert run("roc", "--config", a / "manifest.json", "--out", b) == 0
    assert manifest(a)["outputs"] == manifest(b)["outputs"]


def test_version_subprocess():
    res = subprocess.run([sys.executable, "-m", "gbtrack", "version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("gbtrack ")
