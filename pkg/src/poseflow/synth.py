"""Deterministic synthetic inference backend.

Renders confidence maps and part affinity fields directly from known
ground-truth poses, so the whole pipeline can be verified end to end
without a trained network or a GPU.  An optional latency model
(per-call overhead plus per-item cost) emulates device timing for
throughput experiments.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import formats
from .errors import BackendError, ConfigError, ContractError, FormatError
from .types import FeatureMaps, SkeletonTopology, TensorF32, pixel_to_cell


@dataclass
class SynthParams:
    """Rendering and latency knobs of the synthetic backend."""

    sigma_conf: float = 2.0  # Gaussian radius in feature cells
    paf_halfwidth: float = 1.0  # limb corridor half-width in feature cells
    stride: int = 8
    service_delay_us: int = 0  # flat artificial latency per call
    batch_overhead_us: int = 0
    per_item_us: int = 0
    max_batch: int = 32

    def validate(self) -> None:
        if self.sigma_conf <= 0:
            raise ConfigError("sigma_conf must be > 0")
        if self.paf_halfwidth <= 0:
            raise ConfigError("paf_halfwidth must be > 0")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.max_batch < 1:
            raise ConfigError("max_batch must be >= 1")
        for name in ("service_delay_us", "batch_overhead_us", "per_item_us"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


@dataclass(frozen=True)
class GroundTruthHuman:
    """Known keypoint positions of one person, in input-pixel coordinates."""

    keypoints: Tuple[Optional[Tuple[float, float]], ...]

    @property
    def n_present(self) -> int:
        return sum(1 for kp in self.keypoints if kp is not None)


@dataclass(frozen=True)
class GroundTruthScene:
    humans: Tuple[GroundTruthHuman, ...]
    input_w: int
    input_h: int
    seed: int = 0

    def validate(self, n_keypoints: Optional[int] = None, min_parts: int = 1) -> None:
        for h_idx, human in enumerate(self.humans):
            if n_keypoints is not None and len(human.keypoints) != n_keypoints:
                raise ContractError(
                    f"human {h_idx} has {len(human.keypoints)} keypoint slots, "
                    f"topology has {n_keypoints}"
                )
            if human.n_present < min_parts:
                raise ContractError(f"human {h_idx} has fewer than {min_parts} keypoints")
            for k, kp in enumerate(human.keypoints):
                if kp is None:
                    continue
                x, y = kp
                if not (0 <= x < self.input_w and 0 <= y < self.input_h):
                    raise ContractError(
                        f"human {h_idx} keypoint {k} at ({x}, {y}) outside "
                        f"[0, {self.input_w}) x [0, {self.input_h})"
                    )


def render_feature_maps(
    scene: GroundTruthScene,
    topo: SkeletonTopology,
    p: SynthParams,
    frame_ref: int = 0,
) -> FeatureMaps:
    """Render confidence and PAF maps for a scene.

    Confidence channel k holds, per cell, the max over humans of
    ``exp(-d^2 / (2 sigma^2))`` with d measured to that human's keypoint k
    in cell units; the extra background channel is ``1 - max_k conf_k``.
    Each limb writes its unit direction vector into every cell within
    ``paf_halfwidth`` of the segment; cells covered by the same limb of
    several humans store the average vector, clamped to unit magnitude.
    """
    scene.validate(topo.n_keypoints)
    if scene.input_w % p.stride or scene.input_h % p.stride:
        raise ContractError("scene extents must be divisible by the stride")
    k = topo.n_keypoints
    gh, gw = scene.input_h // p.stride, scene.input_w // p.stride
    conf = np.zeros((k + 1, gh, gw), dtype=np.float64)
    paf_sum = np.zeros((2 * topo.n_limbs, gh, gw), dtype=np.float64)
    paf_count = np.zeros((topo.n_limbs, gh, gw), dtype=np.int32)

    rows = np.arange(gh, dtype=np.float64)[:, None]
    cols = np.arange(gw, dtype=np.float64)[None, :]
    inv_two_sigma_sq = 1.0 / (2.0 * p.sigma_conf * p.sigma_conf)

    for human in scene.humans:
        cells = [None] * k
        for part, kp in enumerate(human.keypoints):
            if kp is None:
                continue
            ci, cj = pixel_to_cell(kp[0], kp[1], p.stride)
            cells[part] = (ci, cj)
            d_sq = (rows - ci) ** 2 + (cols - cj) ** 2
            np.maximum(conf[part], np.exp(-d_sq * inv_two_sigma_sq), out=conf[part])
        for limb_idx, (a, b) in enumerate(topo.limbs):
            if cells[a] is None or cells[b] is None:
                continue
            _paint_limb(
                paf_sum, paf_count, limb_idx, topo.paf_channels[limb_idx],
                cells[a], cells[b], p.paf_halfwidth, rows, cols,
            )

    conf[k] = 1.0 - conf[:k].max(axis=0, initial=0.0)
    paf = np.zeros_like(paf_sum)
    for limb_idx, (cx, cy) in enumerate(topo.paf_channels):
        covered = paf_count[limb_idx] > 0
        if not covered.any():
            continue
        n = paf_count[limb_idx][covered]
        vx = paf_sum[cx][covered] / n
        vy = paf_sum[cy][covered] / n
        mag = np.sqrt(vx * vx + vy * vy)
        over = mag > 1.0
        vx[over] /= mag[over]
        vy[over] /= mag[over]
        paf[cx][covered] = vx
        paf[cy][covered] = vy

    maps = FeatureMaps(
        conf=TensorF32.from_array(conf),
        paf=TensorF32.from_array(paf),
        stride=p.stride,
        frame_ref=frame_ref,
    )
    maps.validate(topo, scene.input_w, scene.input_h)
    return maps


def _paint_limb(paf_sum, paf_count, limb_idx, channels, cell_a, cell_b,
                halfwidth, rows, cols) -> None:
    ai, aj = cell_a
    bi, bj = cell_b
    di, dj = bi - ai, bj - aj
    length_sq = di * di + dj * dj
    if length_sq == 0.0:
        return  # degenerate limb carries no direction
    length = np.sqrt(length_sq)
    # unit vector in (x, y) = (col, row) axes
    vx, vy = dj / length, di / length
    # distance from each cell center to the segment
    t = ((rows - ai) * di + (cols - aj) * dj) / length_sq
    t = np.clip(t, 0.0, 1.0)
    d_sq = (rows - (ai + t * di)) ** 2 + (cols - (aj + t * dj)) ** 2
    covered = d_sq <= halfwidth * halfwidth
    cx, cy = channels
    paf_sum[cx][covered] += vx
    paf_sum[cy][covered] += vy
    paf_count[limb_idx][covered] += 1


# Canonical stick figure for procedural scenes: 18 (x, y) offsets in figure
# units (y grows downward), scaled by the figure height at placement time.
# Offsets keep every limb at least ~0.14 units long so peaks of connected
# parts land on distinct feature cells at the scales used.
_CANONICAL_FIGURE: Tuple[Tuple[float, float], ...] = (
    (0.00, -0.40),  # nose
    (0.00, -0.25),  # neck
    (-0.15, -0.25),  # right_shoulder
    (-0.21, -0.09),  # right_elbow
    (-0.25, 0.07),  # right_wrist
    (0.15, -0.25),  # left_shoulder
    (0.21, -0.09),  # left_elbow
    (0.25, 0.07),  # left_wrist
    (-0.09, 0.05),  # right_hip
    (-0.11, 0.28),  # right_knee
    (-0.13, 0.50),  # right_ankle
    (0.09, 0.05),  # left_hip
    (0.11, 0.28),  # left_knee
    (0.13, 0.50),  # left_ankle
    (-0.14, -0.54),  # right_eye
    (0.14, -0.54),  # left_eye
    (-0.28, -0.46),  # right_ear
    (0.28, -0.46),  # left_ear
)

_PLACEMENT_ATTEMPTS = 300


def _height_range(n_humans: int) -> Tuple[float, float]:
    if n_humans <= 1:
        return 120.0, 170.0
    if n_humans == 2:
        return 100.0, 150.0
    if n_humans == 3:
        return 85.0, 130.0
    return 70.0, 105.0


def procedural_scene(
    seed: int,
    seq_id: int,
    input_w: int,
    input_h: int,
    params: SynthParams,
    min_separation_px: Optional[float] = None,
) -> GroundTruthScene:
    """Deterministically generate a scene of 1-5 stick figures.

    Figures are scaled, jittered, optionally mirrored copies of a canonical
    18-keypoint template.  Placements are rejection-sampled so that every
    cross-human keypoint pair is at least ``min_separation_px`` apart
    (default ``6 * sigma_conf * stride``); if the canvas cannot fit another
    figure the scene simply ends up with fewer humans.
    """
    if min_separation_px is None:
        min_separation_px = 6.0 * params.sigma_conf * params.stride
    rng = np.random.default_rng([int(seed), int(seq_id)])
    target = int(rng.integers(1, 6))
    lo, hi = _height_range(target)
    # fit the figure envelope (1.12h tall, 0.64h wide) inside the canvas
    max_h = min(input_h / 1.2, input_w / 0.75)
    hi = min(hi, max_h)
    lo = min(lo, 0.75 * hi)
    template = np.array(_CANONICAL_FIGURE, dtype=np.float64)

    placed: List[np.ndarray] = []
    for _ in range(target):
        for _attempt in range(_PLACEMENT_ATTEMPTS):
            height = rng.uniform(lo, hi)
            mirror = -1.0 if rng.random() < 0.5 else 1.0
            pts = template * height
            pts[:, 0] *= mirror
            pts += rng.normal(0.0, 0.01 * height, size=pts.shape)
            margin_x = 0.32 * height
            margin_top, margin_bot = 0.58 * height, 0.54 * height
            cx = rng.uniform(margin_x, input_w - margin_x)
            cy = rng.uniform(margin_top, input_h - margin_bot)
            pts = pts + np.array([cx, cy])
            pts[:, 0] = np.clip(pts[:, 0], 0.0, input_w - 1e-3)
            pts[:, 1] = np.clip(pts[:, 1], 0.0, input_h - 1e-3)
            if all(_min_cross_dist(pts, other) >= min_separation_px for other in placed):
                placed.append(pts)
                break
        # else: canvas is too crowded at this separation; stop adding

    humans = tuple(
        GroundTruthHuman(tuple((float(x), float(y)) for x, y in pts))
        for pts in placed
    )
    return GroundTruthScene(humans=humans, input_w=input_w, input_h=input_h, seed=seed)


def _min_cross_dist(a: np.ndarray, b: np.ndarray) -> float:
    d = a[:, None, :] - b[None, :, :]
    return float(np.sqrt((d * d).sum(axis=2)).min())


def load_scene_corpus(path: Union[str, Path]) -> Tuple[List[GroundTruthScene], Optional[int], int, int]:
    """Load a TOML scene corpus.

    Returns (scenes in seq order, optional procedural fallback seed,
    input_w, input_h).  A keypoint entry is an ``[x, y]`` pair or an empty
    list for an absent part.
    """
    p = Path(path)
    if not p.is_file():
        raise FormatError(f"scene corpus not found: {p}")
    try:
        doc = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise FormatError(f"invalid corpus TOML: {exc}") from exc
    try:
        input_w = int(doc["input_w"])
        input_h = int(doc["input_h"])
    except KeyError as exc:
        raise FormatError(f"corpus missing key: {exc}") from exc
    seed = int(doc["seed"]) if "seed" in doc else None
    scenes = []
    for s_idx, scene_doc in enumerate(doc.get("scenes", [])):
        humans = []
        for human_doc in scene_doc.get("humans", []):
            kps = []
            for entry in human_doc.get("keypoints", []):
                if len(entry) == 0:
                    kps.append(None)
                elif len(entry) == 2:
                    kps.append((float(entry[0]), float(entry[1])))
                else:
                    raise FormatError(
                        f"scene {s_idx}: keypoint entry must be [x, y] or [], got {entry}"
                    )
            humans.append(GroundTruthHuman(tuple(kps)))
        scenes.append(
            GroundTruthScene(
                humans=tuple(humans), input_w=input_w, input_h=input_h,
                seed=seed if seed is not None else 0,
            )
        )
    return scenes, seed, input_w, input_h


def _sleep_us(us: float) -> None:
    if us > 0:
        time.sleep(us / 1e6)


class SyntheticBackend:
    """Backend that renders maps from registered or procedural scenes.

    Input pixels are ignored by design: frames may be blank, the parser
    consumes maps.  Per-frame outputs depend only on the frame's scene, so
    results are bit-identical for every batch composition.
    """

    kind = "synth"

    def __init__(
        self,
        topo: SkeletonTopology,
        params: SynthParams,
        input_w: int,
        input_h: int,
        scenes: Optional[Dict[int, GroundTruthScene]] = None,
        procedural_seed: Optional[int] = None,
    ):
        params.validate()
        self.topo = topo
        self.params = params
        self.input_w = input_w
        self.input_h = input_h
        self.scenes = dict(scenes) if scenes else {}
        self.procedural_seed = procedural_seed

    @property
    def max_batch(self) -> int:
        return self.params.max_batch

    def scene_for(self, seq_id: int) -> GroundTruthScene:
        scene = self.scenes.get(seq_id)
        if scene is not None:
            return scene
        if self.procedural_seed is None:
            raise BackendError(
                f"no scene registered for seq_id {seq_id} and no procedural fallback"
            )
        return procedural_scene(
            self.procedural_seed, seq_id, self.input_w, self.input_h, self.params
        )

    def infer(self, batch: TensorF32, seq_ids: Sequence[int]) -> List[FeatureMaps]:
        b = len(seq_ids)
        if b < 1:
            raise BackendError("empty batch")
        if batch.dims[0] != b:
            raise BackendError(f"batch dim {batch.dims[0]} != {b} seq ids")
        out = [
            render_feature_maps(self.scene_for(seq), self.topo, self.params, frame_ref=seq)
            for seq in seq_ids
        ]
        p = self.params
        _sleep_us(p.service_delay_us + p.batch_overhead_us + b * p.per_item_us)
        return out


def dump_feature_maps(maps: FeatureMaps, directory: Union[str, Path]) -> Path:
    """Write one frame's maps as two tensor records in a per-seq file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{maps.frame_ref:06d}.hpt"
    with open(path, "wb") as f:
        formats.write_tensor(maps.conf, f)
        formats.write_tensor(maps.paf, f)
    return path


class FileBackend:
    """Replays feature maps dumped by :func:`dump_feature_maps`."""

    kind = "file"

    def __init__(self, directory: Union[str, Path], stride: int, max_batch: int = 64):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ConfigError(f"tensor directory not found: {self.directory}")
        self.stride = stride
        self.max_batch = max_batch

    def _load(self, seq_id: int) -> FeatureMaps:
        path = self.directory / f"{seq_id:06d}.hpt"
        if not path.is_file():
            raise BackendError(f"no stored maps for seq_id {seq_id} ({path})")
        try:
            with open(path, "rb") as f:
                conf = formats.read_tensor(f)
                paf = formats.read_tensor(f)
        except FormatError as exc:
            raise BackendError(f"corrupt tensor file {path}: {exc}") from exc
        return FeatureMaps(conf=conf, paf=paf, stride=self.stride, frame_ref=seq_id)

    def infer(self, batch: TensorF32, seq_ids: Sequence[int]) -> List[FeatureMaps]:
        if batch.dims[0] != len(seq_ids):
            raise BackendError(f"batch dim {batch.dims[0]} != {len(seq_ids)} seq ids")
        return [self._load(seq) for seq in seq_ids]
