"""Time the numba kernels against the plain-Python fallback.

Each backend runs in its own interpreter because the choice is made once at
import time from ``BOXCALIB_DISABLE_NUMBA``. Usage::

    python benchmarks/bench_kernels.py [--pairs 20] [--iou 2000]

Reported numbers exclude numba compilation (one warm-up call per kernel).
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from boxcalib._accel import backend_name
from boxcalib.geometry import OrientedBox, iou_3d
from boxcalib.pipeline import calibrate
from boxcalib.synth import SynthParams, synth_dataset

n_iou, n_pairs = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)

def box():
    q = rng.normal(size=4); q /= np.linalg.norm(q)
    w, x, y, z = q
    rot = np.array([[1-2*(y*y+z*z), 2*(x*y-z*w), 2*(x*z+y*w)],
                    [2*(x*y+z*w), 1-2*(x*x+z*z), 2*(y*z-x*w)],
                    [2*(x*z-y*w), 2*(y*z+x*w), 1-2*(x*x+y*y)]])
    return OrientedBox(rot, rng.uniform(-1, 1, 3), rng.uniform(0.5, 3, 3))

pairs = [(box(), box()) for _ in range(n_iou)]
iou_3d(*pairs[0])
t0 = time.perf_counter()
for a, b in pairs:
    iou_3d(a, b)
iou_us = (time.perf_counter() - t0) / n_iou * 1e6

records = synth_dataset(SynthParams(n_common=12, n_infra_only=3, n_vehicle_only=3, area=80.0,
                                    noise_center_sigma=0.1, seed=4), n_pairs)
calibrate(records[0].scene_inf, records[0].scene_veh)
times = []
for rec in records:
    t0 = time.perf_counter()
    calibrate(rec.scene_inf, rec.scene_veh)
    times.append(time.perf_counter() - t0)
print(json.dumps({"backend": backend_name(), "iou_us": iou_us,
                  "calibrate_median_ms": float(np.median(times)) * 1e3}))
"""


def run(disable: bool, n_iou: int, n_pairs: int) -> dict:
    env = dict(os.environ, BOXCALIB_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, str(n_iou), str(n_pairs)],
                         env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=20, help="calibrations at m = n = 15")
    ap.add_argument("--iou", type=int, default=2000, help="random box pairs for the IoU kernel")
    args = ap.parse_args()
    rows = [run(False, args.iou, args.pairs), run(True, args.iou, args.pairs)]
    print(f"{'backend':<8} {'IoU (us/pair)':>14} {'calibrate m=n=15 (ms)':>22}")
    for r in rows:
        print(f"{r['backend']:<8} {r['iou_us']:>14.1f} {r['calibrate_median_ms']:>22.1f}")
    fast, slow = rows
    print(f"speed-up: IoU x{slow['iou_us'] / fast['iou_us']:.1f}, "
          f"calibrate x{slow['calibrate_median_ms'] / fast['calibrate_median_ms']:.1f}")


if __name__ == "__main__":
    main()
