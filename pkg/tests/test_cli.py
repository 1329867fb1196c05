import filecmp
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from boxcalib import data_io
from boxcalib.affinity import Scene
from boxcalib.cli import main
from boxcalib.geometry import Box3D
from boxcalib.synth import SynthParams, synth_scene_pair


def same_tree(a, b) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(same_tree(a / d, b / d) for d in cmp.common_dirs)


@pytest.fixture
def pair_files(tmp_path):
    rec = synth_scene_pair(SynthParams(n_common=6, seed=13))
    data_io.save_scene(rec.scene_inf, tmp_path / "inf.json")
    data_io.save_scene(rec.scene_veh, tmp_path / "veh.json")
    data_io.save_extrinsic(rec.gt_extrinsic, tmp_path / "gt.json")
    return tmp_path


class TestCalibrateCommand:
    def test_noiseless_pair(self, pair_files):
        d = pair_files
        code = main(["calibrate", "--infra", str(d / "inf.json"), "--veh", str(d / "veh.json"),
                     "--gt", str(d / "gt.json"), "--out", str(d / "res.json"), "--geometry", str(d / "m.ply")])
        assert code == 0
        out = json.loads((d / "res.json").read_text())
        assert out["status"] == "ok" and out["rte_m"] < 1e-3 and out["success"] is True
        verts, labels, faces = data_io.read_ply(d / "m.ply")
        assert len(verts) == 8 * 12 and len(faces) == 6 * 12

    def test_disjoint_scenes(self, tmp_path):
        data_io.save_scene(Scene([Box3D("car", (0, 0, 0.8), (4.5, 1.9, 1.6), 0)]), tmp_path / "a.json")
        data_io.save_scene(Scene([Box3D("pedestrian", (0, 0, 0.9), (0.6, 0.6, 1.7), 0)]), tmp_path / "b.json")
        code = main(["calibrate", "--infra", str(tmp_path / "a.json"), "--veh", str(tmp_path / "b.json"),
                     "--out", str(tmp_path / "res.json")])
        assert code == 2
        assert json.loads((tmp_path / "res.json").read_text())["status"] == "no_common_targets"

    def test_empty_scene_file(self, tmp_path, pair_files):
        (tmp_path / "empty.json").write_text("[]")
        code = main(["calibrate", "--infra", str(tmp_path / "empty.json"), "--veh",
                     str(pair_files / "veh.json"), "--out", str(tmp_path / "res.json")])
        assert code == 2

    def test_missing_file(self, tmp_path, capsys):
        missing = tmp_path / "missing_inf.json"
        code = main(["calibrate", "--infra", str(missing), "--veh", str(missing), "--out", str(tmp_path / "r.json")])
        assert code == 1
        assert "missing_inf.json" in capsys.readouterr().err
        assert not (tmp_path / "r.json").exists()

    def test_malformed_scene(self, tmp_path, pair_files):
        (tmp_path / "bad.json").write_text('[{"category": "car"}]')
        code = main(["calibrate", "--infra", str(tmp_path / "bad.json"), "--veh",
                     str(pair_files / "veh.json"), "--out", str(tmp_path / "r.json")])
        assert code == 1

    def test_unknown_preset(self, pair_files, capsys):
        d = pair_files
        with pytest.raises(SystemExit) as exc:
            main(["calibrate", "--infra", str(d / "inf.json"), "--veh", str(d / "veh.json"),
                  "--strategy", "v7", "--out", str(d / "r.json")])
        assert exc.value.code == 1
        assert "usage:" in capsys.readouterr().err

    def test_no_timings_is_reproducible(self, pair_files):
        d = pair_files
        args = ["calibrate", "--infra", str(d / "inf.json"), "--veh", str(d / "veh.json"), "--no-timings"]
        assert main(args + ["--out", str(d / "r1.json")]) == 0
        assert main(args + ["--out", str(d / "r2.json")]) == 0
        assert (d / "r1.json").read_bytes() == (d / "r2.json").read_bytes()


class TestSynthCommand:
    def test_byte_identical_runs(self, tmp_path):
        for name in ("a", "b"):
            assert main(["synth", "--n", "10", "--seed", "7", "--out", str(tmp_path / name)]) == 0
        assert same_tree(tmp_path / "a", tmp_path / "b")
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert "PCG64" in manifest["prng"] and manifest["seed"] == 7
        assert len(manifest["pairs"]) == 10

    def test_sweep(self, tmp_path):
        assert main(["synth", "--n", "3", "--out", str(tmp_path / "sw"),
                     "--sweep-noise-center", "0,0.1,0.3"]) == 0
        subdirs = sorted(p.name for p in (tmp_path / "sw").iterdir())
        assert subdirs == ["noise_center_0", "noise_center_0.1", "noise_center_0.3"]

    def test_params_file_and_overrides(self, tmp_path):
        (tmp_path / "p.json").write_text(json.dumps({"n_common": 3, "area": 40.0}))
        assert main(["synth", "--params", str(tmp_path / "p.json"), "--n", "2", "--n-vehicle-only", "2",
                     "--out", str(tmp_path / "ds")]) == 0
        recs = data_io.load_dataset(tmp_path / "ds")
        assert [len(r.scene_inf) for r in recs] == [3, 3]
        assert [len(r.scene_veh) for r in recs] == [5, 5]

    def test_placement_failure(self, tmp_path):
        assert main(["synth", "--n", "1", "--n-common", "40", "--area", "5", "--out", str(tmp_path / "x")]) == 1

    def test_zero_common_gives_zero_success(self, tmp_path):
        assert main(["synth", "--n", "5", "--n-common", "0", "--n-infra-only", "3", "--n-vehicle-only", "3",
                     "--out", str(tmp_path / "ds")]) == 0
        assert main(["benchmark", "--dataset", str(tmp_path / "ds"), "--report", str(tmp_path / "r.json")]) == 0
        report = json.loads((tmp_path / "r.json").read_text())
        assert report["aggregates"]["all"]["success_rate_pct"] == 0.0


class TestBenchmarkCommand:
    def test_hundred_pair_suite(self, tmp_path):
        ds = tmp_path / "ds"
        assert main(["synth", "--n", "100", "--seed", "1", "--n-common", "4", "--n-infra-only", "2",
                     "--n-vehicle-only", "2", "--noise-center", "0.1", "--out", str(ds)]) == 0
        assert main(["benchmark", "--dataset", str(ds), "--report", str(tmp_path / "r.json"),
                     "--jobs", "4"]) == 0
        agg = json.loads((tmp_path / "r.json").read_text())["aggregates"]
        assert agg["easy"]["n_frames"] > 0 and agg["hard"]["n_frames"] > 0
        assert agg["easy"]["n_frames"] + agg["hard"]["n_frames"] == 100
        for group in ("easy", "hard"):
            assert {"mean_rre_deg", "mean_rte_m", "success_rate_pct", "mean_time_ms"} <= set(agg[group])

    def test_empty_manifest(self, tmp_path, capsys):
        data_io.save_dataset([], tmp_path / "ds")
        assert main(["benchmark", "--dataset", str(tmp_path / "ds"), "--report", str(tmp_path / "r.json")]) == 1
        assert "no frame pairs" in capsys.readouterr().err

    def test_v1_not_worse_than_v2(self, tmp_path):
        ds = tmp_path / "ds"
        main(["synth", "--n", "30", "--seed", "3", "--n-infra-only", "2", "--n-vehicle-only", "2",
              "--noise-center", "0.2", "--noise-yaw-deg", "2", "--out", str(ds)])
        rates = {}
        for name in ("v1", "v2"):
            assert main(["benchmark", "--dataset", str(ds), "--strategy", name,
                         "--report", str(tmp_path / f"{name}.json")]) == 0
            rates[name] = json.loads((tmp_path / f"{name}.json").read_text())["aggregates"]["all"]
        assert rates["v1"]["success_rate_pct"] >= rates["v2"]["success_rate_pct"]

    def test_jobs_env_default(self, tmp_path, monkeypatch):
        ds = tmp_path / "ds"
        main(["synth", "--n", "6", "--seed", "2", "--noise-center", "0.2", "--out", str(ds)])
        main(["benchmark", "--dataset", str(ds), "--report", str(tmp_path / "a.json"), "--no-timings"])
        monkeypatch.setenv("BOXCALIB_JOBS", "3")
        main(["benchmark", "--dataset", str(ds), "--report", str(tmp_path / "b.json"), "--no-timings"])
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_strategy_file(self, tmp_path):
        ds = tmp_path / "ds"
        main(["synth", "--n", "2", "--out", str(ds)])
        (tmp_path / "s.json").write_text(json.dumps({"affinity_kind": "core_only", "refine": False}))
        assert main(["benchmark", "--dataset", str(ds), "--strategy", str(tmp_path / "s.json"),
                     "--report", str(tmp_path / "r.json")]) == 0
        assert json.loads((tmp_path / "r.json").read_text())["strategy"]["affinity_kind"] == "core_only"


class TestClassifyCommand:
    def _classify(self, tmp_path, *synth_flags):
        ds = tmp_path / "ds"
        assert main(["synth", "--n", "8", "--translation-range", "50", *synth_flags, "--out", str(ds)]) == 0
        assert main(["classify", "--dataset", str(ds), "--out", str(tmp_path / "c.json")]) == 0
        return json.loads((tmp_path / "c.json").read_text())

    def test_six_common_all_easy(self, tmp_path):
        assert self._classify(tmp_path, "--n-common", "6")["counts"] == {"easy": 8, "hard": 0}

    def test_two_common_all_hard(self, tmp_path):
        out = self._classify(tmp_path, "--n-common", "2", "--n-infra-only", "3")
        assert out["counts"] == {"easy": 0, "hard": 8}
        assert all(row["covisible_pairs"] == 2 for row in out["labels"])

    def test_no_ground_truth(self, tmp_path):
        rec = synth_scene_pair(SynthParams(seed=0))
        rec.gt_extrinsic = None
        data_io.save_dataset([rec], tmp_path / "ds")
        assert main(["classify", "--dataset", str(tmp_path / "ds"), "--out", str(tmp_path / "c.json")]) == 1


def test_verbose_flag_positions(tmp_path):
    assert main(["-v", "synth", "--n", "1", "--out", str(tmp_path / "a")]) == 0
    assert main(["synth", "--n", "1", "-v", "--out", str(tmp_path / "b")]) == 0


def test_module_entry_point_with_fallback_backend(tmp_path):
    """The pure-Python kernels give the same answer as the compiled ones."""
    rec = synth_scene_pair(SynthParams(n_common=5, seed=1))
    data_io.save_scene(rec.scene_inf, tmp_path / "inf.json")
    data_io.save_scene(rec.scene_veh, tmp_path / "veh.json")
    env = dict(os.environ, BOXCALIB_DISABLE_NUMBA="1")
    args = [sys.executable, "-m", "boxcalib", "calibrate", "--infra", str(tmp_path / "inf.json"),
            "--veh", str(tmp_path / "veh.json"), "--no-timings"]
    slow = subprocess.run(args + ["--out", str(tmp_path / "slow.json")], env=env, capture_output=True, text=True)
    assert slow.returncode == 0, slow.stderr
    assert main(args[3:] + ["--out", str(tmp_path / "fast.json")]) == 0
    a = json.loads((tmp_path / "slow.json").read_text())
    b = json.loads((tmp_path / "fast.json").read_text())
    np.testing.assert_allclose(a["extrinsic"], b["extrinsic"], atol=1e-9)
    pairs = [[(m["infra_index"], m["vehicle_index"]) for m in r["matches"]] for r in (a, b)]
    assert pairs[0] == pairs[1]

def test_fallback_kernel_parity():
    code = (
        "import json, numpy as np\n"
        "from boxcalib import backend_name, iou_3d\n"
        "from boxcalib.geometry import OrientedBox\n"
        "rng = np.random.default_rng(0)\n"
        "def rot():\n"
        "    q = rng.normal(size=4); w, x, y, z = q / np.linalg.norm(q)\n"
        "    return np.array([[1-2*(y*y+z*z), 2*(x*y-z*w), 2*(x*z+y*w)],"
        "[2*(x*y+z*w), 1-2*(x*x+z*z), 2*(y*z-x*w)], [2*(x*z-y*w), 2*(y*z+x*w), 1-2*(x*x+y*y)]])\n"
        "out = [iou_3d(OrientedBox(rot(), rng.uniform(-1, 1, 3), rng.uniform(0.5, 3, 3)),"
        " OrientedBox(rot(), rng.uniform(-1, 1, 3), rng.uniform(0.5, 3, 3))) for _ in range(40)]\n"
        "print(json.dumps({'backend': backend_name(), 'iou': out}))\n"
    )
    results = {}
    for flag in ("0", "1"):
        env = dict(os.environ, BOXCALIB_DISABLE_NUMBA=flag)
        proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        data = json.loads(proc.stdout)
        results[data["backend"]] = data["iou"]
    assert len(results) == 2, results.keys()
    a, b = results.values()
    np.testing.assert_allclose(a, b, atol=1e-12)
