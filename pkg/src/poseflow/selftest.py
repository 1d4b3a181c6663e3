"""Built-in verification suite behind ``poseflow selftest``.

Each check pits a fast implementation against an independent reference
(brute-force definition scan, dense integration, synthetic ground truth,
byte-level round trips) and reports one pass/fail line.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from . import formats, oracles, paf
from .config import PipelineConfig
from .dataflow import OperatorSpec, Packet, build_pipeline, run_pipeline
from .errors import PoseflowError
from .synth import procedural_scene, render_feature_maps
from .topology import load_topology
from .types import TensorF32


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def _check_topology(cfg: PipelineConfig) -> CheckResult:
    try:
        topo = load_topology(cfg.topology)
        topo.validate()
    except PoseflowError as exc:
        return CheckResult("topology", False, str(exc))
    return CheckResult(
        "topology",
        True,
        f"{cfg.topology}: {topo.n_keypoints} keypoints, {topo.n_limbs} limbs",
    )


def _check_formats(cfg: PipelineConfig) -> CheckResult:
    rng = np.random.default_rng(11)
    for case in range(20):
        ndim = int(rng.integers(1, 4))
        dims = tuple(int(rng.integers(1, 6)) for _ in range(ndim))
        t = TensorF32.from_array(rng.standard_normal(dims))
        buf = io.BytesIO()
        formats.write_tensor(t, buf)
        buf.seek(0)
        back = formats.read_tensor(buf)
        if back.dims != t.dims or not np.array_equal(back.array, t.array):
            return CheckResult("format-roundtrip", False, f"tensor case {case} mismatch")
    for case in range(20):
        img = TensorF32.from_array(rng.random((8, 8, 3)))
        buf = io.BytesIO()
        formats.write_ppm(img, buf)
        buf.seek(0)
        back = formats.read_ppm(buf)
        if np.abs(back.array - img.array).max() > 1.0 / 255.0 + 1e-7:
            return CheckResult("format-roundtrip", False, f"ppm case {case} off by >1/255")
    return CheckResult("format-roundtrip", True, "20 tensor + 20 image cases bit/quantization exact")


def _check_nms(cfg: PipelineConfig) -> CheckResult:
    rng = np.random.default_rng(5)
    params = cfg.parser
    for case in range(50):
        conf = rng.random((16, 16)).astype(np.float32)
        if case % 3 == 0:
            conf = np.round(conf * 4) / 4  # force plateaus to exercise tie-breaks
        got = [p.cell for p in paf.nms_peaks(conf, params)]
        want = oracles.nms_oracle(conf, params.conf_threshold, params.nms_window)
        if sorted(got) != sorted(want):
            return CheckResult("nms-oracle", False, f"case {case}: {got} != {want}")
    return CheckResult("nms-oracle", True, "50 random maps match the per-cell definition")


def _check_limb_score(cfg: PipelineConfig) -> CheckResult:
    topo = load_topology(cfg.topology)
    params = cfg.parser
    rng = np.random.default_rng(6)
    worst = 0.0
    for _case in range(20):
        field = oracles.smooth_random_field((2 * topo.n_limbs, 24, 24), rng)
        pa = paf.Peak(part=0, cell=(int(rng.integers(24)), int(rng.integers(24))), score=1.0, id=0)
        pb = paf.Peak(part=1, cell=(int(rng.integers(24)), int(rng.integers(24))), score=1.0, id=1)
        limb = int(rng.integers(topo.n_limbs))
        got, _ = paf.score_limb(field, topo, limb, pa, pb, params)
        want, _ = oracles.dense_limb_score(field, topo, limb, pa.cell, pb.cell,
                                           params.sample_dot_threshold)
        worst = max(worst, abs(got - want))
    if worst > 0.15:
        return CheckResult("limb-score-oracle", False, f"max deviation {worst:.4f} > 0.15")
    return CheckResult("limb-score-oracle", True,
                       f"20 smooth fields, max deviation {worst:.4f} <= 0.15")


def _check_roundtrip(cfg: PipelineConfig) -> CheckResult:
    topo = load_topology(cfg.topology)
    total = 0
    recovered = 0
    for seq in range(10):
        scene = procedural_scene(99, seq, cfg.input_w, cfg.input_h, cfg.synth)
        maps = render_feature_maps(scene, topo, cfg.synth, frame_ref=seq)
        poses = paf.parse(maps, topo, cfg.parser)
        for human in scene.humans:
            for part, kp in enumerate(human.keypoints):
                if kp is None:
                    continue
                total += 1
                tol = 2.0 * cfg.synth.stride
                for pose in poses:
                    got = pose.keypoints[part]
                    if got is not None and abs(got.x - kp[0]) <= tol and abs(got.y - kp[1]) <= tol:
                        recovered += 1
                        break
    rate = recovered / total if total else 0.0
    ok = rate >= 0.95
    return CheckResult("round-trip-recovery", ok,
                       f"{recovered}/{total} keypoints within 2*stride ({100 * rate:.1f}%)")


def _check_ordering(cfg: PipelineConfig) -> CheckResult:
    n = 500
    received: List[int] = []

    def gen():
        for seq in range(n):
            yield Packet(seq_id=seq, ingest_ns=0, payload=seq)

    ops = [
        OperatorSpec.source("src", gen),
        OperatorSpec.transform("a", lambda p: p),
        OperatorSpec.transform("b", lambda p: p),
        OperatorSpec.sink("sink", lambda p: received.append(p.seq_id)),
    ]
    stats = run_pipeline(build_pipeline(4, ops), watchdog_s=30.0)
    ok = received == list(range(n)) and stats.frames_in == stats.frames_out == n
    depth_ok = all(e.max_depth <= e.capacity for e in stats.edges)
    return CheckResult("pipeline-ordering", ok and depth_ok,
                       f"{n} frames in order, conservation and depth bounds hold")


CHECKS: Tuple[Tuple[str, Callable], ...] = (
    ("topology", _check_topology),
    ("format-roundtrip", _check_formats),
    ("nms-oracle", _check_nms),
    ("limb-score-oracle", _check_limb_score),
    ("round-trip-recovery", _check_roundtrip),
    ("pipeline-ordering", _check_ordering),
)


def run_selftest(cfg: PipelineConfig) -> List[CheckResult]:
    results = []
    for _name, check in CHECKS:
        try:
            results.append(check(cfg))
        except PoseflowError as exc:
            results.append(CheckResult(_name, False, str(exc)))
    return results
