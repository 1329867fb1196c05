"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The lines are printed as they are produced (visible with ``-s``) and repeated
in the pytest terminal summary under "acceptance criteria".
"""

import dataclasses
import json
import os
import time

import numpy as np
import pytest

from boxcalib import data_io
from boxcalib.affinity import Scene
from boxcalib.cli import main
from boxcalib.config import PRESETS
from boxcalib.evaluation import classify_difficulty, rre, rte, run_benchmark
from boxcalib.extrinsics import svd_fit
from boxcalib.geometry import RigidTransform, compose, iou_3d, transform_box3d
from boxcalib.matching import assignment_weight, solve_assignment
from boxcalib.pipeline import calibrate, monitor_oiou, perturbed
from boxcalib.synth import SynthParams, synth_dataset, synth_scene_pair

from .conftest import ACCEPTANCE_LINES, random_oriented_box, random_transform
from .test_evaluation import quat_to_rot, quaternion_angle_deg, random_quaternion
from .test_geometry import monte_carlo_iou
from .test_matching import brute_force_weight

pytestmark = pytest.mark.acceptance

NOISY = SynthParams(
    n_common=6,
    n_infra_only=2,
    n_vehicle_only=2,
    noise_center_sigma=0.2,
    noise_yaw_sigma=float(np.radians(2.0)),
    seed=2025,
)


def record(criterion: str, passed: bool, detail: str):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


@pytest.fixture(scope="module")
def noisy_reports():
    suite = synth_dataset(NOISY, 200)
    return {name: run_benchmark(suite, PRESETS[name]) for name in ("v1", "v2", "v3")}


def test_criterion_1_noiseless_recovery():
    base = SynthParams(translation_range=100.0, seed=101)
    start = time.perf_counter()
    rtes, rres, ok = [], [], 0
    for k in range(200):
        rec = synth_scene_pair(dataclasses.replace(base, n_common=5 + k % 6), k)
        result = calibrate(rec.scene_inf, rec.scene_veh, PRESETS["v1"])
        if result.status != "ok":
            continue
        e_t = rte(rec.gt_extrinsic.translation, result.extrinsic.translation)
        rtes.append(e_t)
        rres.append(rre(rec.gt_extrinsic.rotation, result.extrinsic.rotation))
        ok += e_t < 2.0
    elapsed = time.perf_counter() - start
    rate = 100.0 * ok / 200
    med_t = float(np.median(rtes)) if rtes else float("inf")
    med_r = float(np.median(rres)) if rres else float("inf")
    passed = rate == 100.0 and med_t < 1e-3 and med_r < 0.01 and elapsed < 60.0
    record("1 noiseless recovery", passed,
           f"success {rate:.1f}% (need 100), median RTE {med_t:.2e} m (< 1e-3), "
           f"median RRE {med_r:.2e} deg (< 0.01), runtime {elapsed:.1f} s (< 60)")


def test_criterion_2_noise_robustness(noisy_reports):
    agg = noisy_reports["v1"].aggregates["all"]
    passed = agg["success_rate_pct"] >= 90.0 and agg["mean_rte_m"] <= 0.5
    record("2 noise robustness", passed,
           f"success {agg['success_rate_pct']:.1f}% (>= 90), mean RTE {agg['mean_rte_m']:.3f} m (<= 0.5), "
           f"mean RRE {agg['mean_rre_deg']:.3f} deg")


@pytest.mark.dataset
@pytest.mark.skipif(not os.environ.get("BOXCALIB_DAIR_DATASET"),
                    reason="set BOXCALIB_DAIR_DATASET to a converted DAIR-V2X manifest directory")
def test_criterion_2_dair_v2x_easy_group():
    records = data_io.load_dataset(os.environ["BOXCALIB_DAIR_DATASET"])
    easy = [r for r in records if (r.difficulty if r.difficulty != "unknown" else classify_difficulty(r)) == "easy"]
    agg = run_benchmark(easy, PRESETS["v1"]).aggregates["all"]
    passed = agg["mean_rre_deg"] <= 1.0 and agg["mean_rte_m"] <= 0.8 and agg["success_rate_pct"] >= 90.0
    record("2 (DAIR-V2X easy group)", passed,
           f"{len(easy)} pairs, mean RRE {agg['mean_rre_deg']:.2f} deg (<= 1.0), "
           f"mean RTE {agg['mean_rte_m']:.2f} m (<= 0.8), success {agg['success_rate_pct']:.1f}% (>= 90)")


def test_criterion_3_ablation_ordering(noisy_reports):
    a = {k: r.aggregates["all"] for k, r in noisy_reports.items()}
    s1, s2, s3 = (a[k]["success_rate_pct"] for k in ("v1", "v2", "v3"))
    r1, r2 = a["v1"]["mean_rte_m"], a["v2"]["mean_rte_m"]
    passed = s1 >= s2 and s1 >= s3 and r1 <= r2
    record("3 ablation ordering", passed,
           f"success v1 {s1:.1f}% / v2 {s2:.1f}% / v3 {s3:.1f}%, "
           f"mean RTE v1 {r1:.3f} m <= v2 {r2:.3f} m (v3 {a['v3']['mean_rte_m']:.3f} m)")


def test_criterion_4_runtime_budget():
    params = SynthParams(n_common=12, n_infra_only=3, n_vehicle_only=3, area=80.0,
                         noise_center_sigma=0.1, seed=4)
    records = synth_dataset(params, 50)
    assert all(len(r.scene_inf) == 15 and len(r.scene_veh) == 15 for r in records)
    calibrate(records[0].scene_inf, records[0].scene_veh)  # exclude one-off kernel compilation
    times = []
    for rec in records:
        start = time.perf_counter()
        calibrate(rec.scene_inf, rec.scene_veh, PRESETS["v1"])
        times.append(time.perf_counter() - start)
    med = float(np.median(times))
    record("4 runtime budget", med <= 0.35,
           f"median {med * 1e3:.1f} ms per pair at m = n = 15 (<= 350 ms), max {max(times) * 1e3:.1f} ms")


def test_criterion_5_oracle_suites():
    rng = np.random.default_rng(55)
    iou_err = 0.0
    for k in range(100):
        a, b = random_oriented_box(rng), random_oriented_box(rng)
        iou_err = max(iou_err, abs(iou_3d(a, b) - monte_carlo_iou(a, b, 10**6, seed=k)))

    assign_bad = 0
    for _ in range(200):
        m, n = rng.integers(1, 8, size=2)
        mat = rng.uniform(size=(m, n))
        if abs(assignment_weight(mat, solve_assignment(mat)) - brute_force_weight(mat)) > 1e-9:
            assign_bad += 1

    svd_err = 0.0
    for _ in range(100):
        t = random_transform(rng, 100.0)
        pts = rng.uniform(-5, 5, size=(8, 3))
        fit = svd_fit(pts, t.apply(pts))
        svd_err = max(svd_err, np.abs(fit.rotation - t.rotation).max(), np.abs(fit.translation - t.translation).max())

    rre_err = 0.0
    for _ in range(100):
        q1, q2 = random_quaternion(rng), random_quaternion(rng)
        rre_err = max(rre_err, abs(rre(quat_to_rot(q1), quat_to_rot(q2)) - quaternion_angle_deg(q1, q2)))

    passed = iou_err < 1e-2 and assign_bad == 0 and svd_err < 1e-9 and rre_err < 1e-9
    record("5 oracle suites", passed,
           f"IoU vs Monte-Carlo max err {iou_err:.1e} (< 1e-2); assignment mismatches {assign_bad}/200; "
           f"SVD max err {svd_err:.1e} (< 1e-9); RRE vs quaternion max err {rre_err:.1e} deg (< 1e-9)")


def test_criterion_6_equivariance_and_determinism(tmp_path):
    rng = np.random.default_rng(66)
    params = SynthParams(n_common=6, n_infra_only=1, n_vehicle_only=1, seed=606)
    worst_t, worst_o = 0.0, 0.0
    for k in range(50):
        rec = synth_scene_pair(params, k)
        g = RigidTransform.from_yaw(rng.uniform(-np.pi, np.pi), rng.uniform(-100, 100, 3))
        moved = Scene([transform_box3d(g, b) for b in rec.scene_veh.boxes])
        base = calibrate(rec.scene_inf, rec.scene_veh)
        other = calibrate(rec.scene_inf, moved)
        if base.status != "ok" or other.status != "ok":
            worst_t = float("inf")
            continue
        worst_t = max(worst_t, np.abs(other.extrinsic.matrix() - compose(g, base.extrinsic).matrix()).max())
        worst_o = max(worst_o, abs(other.scene_oiou - base.scene_oiou))

    ds = tmp_path / "ds"
    main(["synth", "--n", "40", "--seed", "6", "--n-infra-only", "2", "--n-vehicle-only", "2",
          "--noise-center", "0.2", "--noise-yaw-deg", "2", "--out", str(ds)])
    outs = []
    for jobs in ("1", "8"):
        out = tmp_path / f"report_{jobs}.json"
        main(["benchmark", "--dataset", str(ds), "--jobs", jobs, "--no-timings", "--report", str(out)])
        outs.append(out.read_bytes())
    identical = outs[0] == outs[1] and len(json.loads(outs[0])["rows"]) == 40

    passed = worst_t <= 1e-6 and worst_o <= 1e-6 and identical
    record("6 equivariance and determinism", passed,
           f"50 trials max extrinsic deviation {worst_t:.1e} (<= 1e-6), max oIoU change {worst_o:.1e} "
           f"(<= 1e-6); --jobs 1 vs 8 report bytes identical: {identical}")


def test_criterion_7_degradation_monotonicity():
    # the 6 m gap keeps a 5 m shift from pushing a box into a neighbour
    params = SynthParams(n_common=6, area=100.0, min_gap=6.0, seed=707)
    rng = np.random.default_rng(77)
    offsets = (0.0, 1.0, 2.0, 5.0)
    curves = []
    for k in range(20):
        rec = synth_scene_pair(params, k)
        result = calibrate(rec.scene_inf, rec.scene_veh)
        assert result.status == "ok"
        phi = rng.uniform(-np.pi, np.pi)
        direction = np.array([np.cos(phi), np.sin(phi), 0.0])
        curve = []
        for d in offsets:
            shifted = dataclasses.replace(result, extrinsic=perturbed(result.extrinsic, d * direction))
            curve.append(monitor_oiou(shifted, rec.scene_inf, rec.scene_veh))
        curves.append(curve)
    curves = np.array(curves)
    per_scene = bool(np.all(np.diff(curves, axis=1) <= 1e-12) and np.all(curves[:, 1] < curves[:, 0]))
    mean = curves.mean(axis=0)
    strict_mean = bool(np.all(np.diff(mean) < 0))
    record("7 degradation monotonicity", per_scene and strict_mean,
           f"mean oIoU at 0/1/2/5 m = {' > '.join(f'{v:.3f}' for v in mean)}; "
           f"every scene non-increasing: {per_scene}")
