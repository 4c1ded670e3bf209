import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fluxmap import read_rmb, save_scene
from fluxmap.cache import MidpointCache
from fluxmap.cli import main
from fluxmap.corpus import make_scene
from fluxmap.harness import spec_to_dict
from fluxmap.scene import scene_to_dict

SCENES = Path(__file__).resolve().parent.parent / "scenes"


@pytest.fixture()
def scene_file(tmp_path):
    path = tmp_path / "scene.json"
    save_scene(make_scene(23, n=32, n_buildings=5), path)
    return path


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


def test_simulate_writes_rmb(scene_file, tmp_path, capsys):
    out = tmp_path / "map.rmb"
    code, text = run_cli(capsys, "simulate", scene_file, "-o", out)
    assert code == 0
    assert json.loads(text)["written"] == str(out)
    rmap = read_rmb(out)
    assert rmap.shape == (32, 32)


def test_simulate_writes_csv(scene_file, tmp_path, capsys):
    out = tmp_path / "map.csv"
    code, _ = run_cli(capsys, "simulate", scene_file, "-o", out)
    assert code == 0
    rows = out.read_text().strip().splitlines()
    assert len(rows) == 32


def test_simulate_invalid_scene_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n": 8, "resolution_m": 1.0, "bs": {"x": 99, "y": 0}}))
    code = main(["simulate", str(bad), "-o", str(tmp_path / "x.rmb")])
    assert code == 2


def test_missing_file_exits_2(tmp_path):
    assert main(["simulate", str(tmp_path / "none.json"), "-o", "x.rmb"]) == 2


def test_sample_reports_metrics(scene_file, tmp_path, capsys):
    out = tmp_path / "gen.rmb"
    code, text = run_cli(
        capsys, "sample", "--scene", scene_file, "--T", 20, "--seed", 3,
        "--ssim-global", "-o", out,
    )
    assert code == 0
    report = json.loads(text)
    assert report["denoiser_calls"] == 20
    assert 0 <= report["ssim"] <= 1
    assert "ssim_global" in report
    assert out.exists()


def test_sample_deterministic(scene_file, capsys):
    _, a = run_cli(capsys, "sample", "--scene", scene_file, "--T", 10, "--seed", 3)
    _, b = run_cli(capsys, "sample", "--scene", scene_file, "--T", 10, "--seed", 3)
    assert a == b


def test_reuse_sweep_and_outputs(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    from fluxmap.harness import ScenarioSpec
    from fluxmap.corpus import bs_move_pair

    initial, target = bs_move_pair(23, n=32, n_buildings=5)
    spec = ScenarioSpec(
        kind="bs_move", scene_initial=initial, scene_target=target,
        r_values=(0.5, 0.9), trials=2, T=10, master_seed=4,
    )
    spec_path.write_text(json.dumps(spec_to_dict(spec)))
    out = tmp_path / "report.json"
    code, text = run_cli(
        capsys, "reuse-sweep", "--spec", spec_path, "-o", out, "--csv", "--plot"
    )
    assert code == 0
    report = json.loads(out.read_text())
    assert len(report["rows"]) == 2
    assert report["rows"][1]["speedup"] == 10.0
    csv_text = (tmp_path / "report.csv").read_text()
    assert csv_text.startswith("r_reuse,")
    figures = [json.loads(line)["figure"] for line in text.strip().splitlines()]
    assert len(figures) == 3
    assert all(Path(f).exists() for f in figures)


def test_kl_check_cli(tmp_path, capsys):
    out = tmp_path / "kl.json"
    code, _ = run_cli(
        capsys, "kl-check", "--dims", 2, "--cases", 2, "--samples", 20000,
        "--seed", 1, "-o", out, "--plot",
    )
    assert code == 0
    report = json.loads(out.read_text())
    assert report["pass_rate"] >= 0.9
    assert (tmp_path / "kl_convergence.png").exists()


def test_calibrate_tau_cli(tmp_path, capsys):
    from fluxmap.corpus import calibration_pairs

    pairs = calibration_pairs(23, count=10, n=32, n_buildings=5)
    pairs_file = tmp_path / "pairs.json"
    pairs_file.write_text(
        json.dumps(
            {
                "pairs": [
                    {"initial": scene_to_dict(a), "target": scene_to_dict(b)}
                    for a, b in pairs
                ],
                "r_reuse": 0.9, "T": 10, "trials": 2, "master_seed": 5,
            }
        )
    )
    out = tmp_path / "calib.json"
    code, _ = run_cli(
        capsys, "calibrate-tau", "--pairs", pairs_file, "--budget", 0.01, "-o", out,
        "--plot",
    )
    assert code == 0
    report = json.loads(out.read_text())
    assert "tau" in report and len(report["pairs"]) == 10
    assert (tmp_path / "calibration_knee.png").exists()


def test_calibrate_tau_rejects_unknown_keys(tmp_path):
    pairs_file = tmp_path / "pairs.json"
    pairs_file.write_text(json.dumps({"pairs": [], "wat": 1}))
    assert main(["calibrate-tau", "--pairs", str(pairs_file), "--budget", "0.1"]) == 2


def test_cache_cli_roundtrip(tmp_path, capsys):
    cache_dir = tmp_path / "cache"
    from fluxmap import make_record
    import hashlib

    key = hashlib.sha256(b"demo").digest()
    record = make_record(key, 0.5, np.ones((4, 4, 1), np.float32))
    MidpointCache(cache_dir).put(record)

    code, text = run_cli(capsys, "cache", "ls", "--dir", cache_dir)
    assert code == 0
    listing = json.loads(text)
    assert listing["records"][0]["key"] == key.hex()

    exported = tmp_path / "out.mid"
    code, _ = run_cli(
        capsys, "cache", "get", "--dir", cache_dir, "--key", key.hex(), "-o", exported
    )
    assert code == 0

    other_dir = tmp_path / "cache2"
    moved = other_dir / f"{key.hex()}.mid"
    other_dir.mkdir()
    moved.write_bytes(exported.read_bytes())
    code, _ = run_cli(capsys, "cache", "put", "--dir", other_dir, "--file", moved)
    assert code == 0
    assert MidpointCache(other_dir).get(key).t == 0.5

    code, text = run_cli(capsys, "cache", "evict", "--dir", cache_dir)
    assert code == 0
    assert json.loads(text)["evicted"] == key.hex()


def test_cache_get_missing_exits_2(tmp_path):
    assert main(["cache", "get", "--dir", str(tmp_path), "--key", "0" * 64]) == 2


def test_cache_corrupt_record_exits_3(tmp_path, capsys):
    cache_dir = tmp_path / "cache"
    from fluxmap import make_record
    import hashlib

    key = hashlib.sha256(b"x").digest()
    MidpointCache(cache_dir).put(make_record(key, 0.5, np.ones((2, 2, 1), np.float32)))
    path = cache_dir / f"{key.hex()}.mid"
    blob = bytearray(path.read_bytes())
    blob[-1] ^= 0xFF
    path.write_bytes(bytes(blob))
    assert main(["cache", "get", "--dir", str(cache_dir), "--key", key.hex()]) == 3


def test_flops_cli(capsys):
    code, text = run_cli(
        capsys, "flops", "--k", 3, "--cin", 3, "--cin-static", 1, "--cout", 128,
        "--hw", 256,
    )
    assert code == 0
    assert json.loads(text)["flops_saved"] == 301_989_888


def test_shipped_scenario_spec_loads(capsys, tmp_path):
    # the shipped corpus drives the CLI directly (tiny trial override not
    # possible through the file, so just validate it parses)
    from fluxmap.harness import load_spec

    spec = load_spec(SCENES / "scenario_bs_move_flux.json")
    assert spec.mode == "flux"


def test_console_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "fluxmap.cli", "--version"],
        capture_output=True, text=True,
    )
    assert out.returncode == 0
    assert "fluxmap" in out.stdout
