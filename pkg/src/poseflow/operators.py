"""Concrete operator set for the pose pipeline.

The standard chain has five operators: a decoding source (image files or
synthetic frames), resize/layout preprocessing, batched inference via a
backend, PAF parsing, and an export stage that optionally rasterizes
overlays and writes results.  Packets carry ``(frame, stage output)``
payloads so the original image stays available for visualization.
"""

from __future__ import annotations

import colorsys
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import formats
from .dataflow import OperatorSpec, Packet
from .errors import ContractError, PipelineError
from .paf import ParserParams, parse
from .scheduler import SchedulerPolicy, make_batching_operator
from .types import Frame, HumanPose, SkeletonTopology, TensorF32


def _sleep_us(us: int) -> None:
    if us > 0:
        time.sleep(us / 1e6)


def make_ppm_source(directory: Union[str, Path], frames: Optional[int] = None,
                    latency_us: int = 0) -> OperatorSpec:
    """Source reading PPM files from a directory in lexicographic order."""
    directory = Path(directory)

    def gen():
        paths = sorted(directory.glob("*.ppm"))
        count = 0
        for path in paths:
            if frames is not None and count >= frames:
                return
            _sleep_us(latency_us)
            try:
                with open(path, "rb") as f:
                    image = formats.read_ppm(f)
            except Exception as exc:
                raise PipelineError(f"unreadable frame file {path}: {exc}") from exc
            frame = Frame(seq_id=count, image=image, ingest_ns=time.monotonic_ns())
            yield Packet(seq_id=count, ingest_ns=frame.ingest_ns, payload=frame)
            count += 1

    return OperatorSpec.source("decode", gen)


def make_synthetic_source(input_w: int, input_h: int, frames: int,
                          latency_us: int = 0) -> OperatorSpec:
    """Source emitting blank frames at the network input size.

    The synthetic backend derives maps from scenes, not pixels, so a shared
    zero image is enough; operators treat payloads as immutable.
    """
    blank = TensorF32.from_array(np.zeros((input_h, input_w, 3), dtype=np.float32))
    blank.array.setflags(write=False)

    def gen():
        for seq in range(frames):
            _sleep_us(latency_us)
            now = time.monotonic_ns()
            yield Packet(seq_id=seq, ingest_ns=now,
                         payload=Frame(seq_id=seq, image=blank, ingest_ns=now))

    return OperatorSpec.source("decode", gen)


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-center alignment, edges clamped."""
    in_h, in_w = image.shape[:2]
    if in_h < 1 or in_w < 1 or out_h < 1 or out_w < 1:
        raise ContractError("resize requires positive extents")
    if (in_h, in_w) == (out_h, out_w):
        return image.copy()
    src = image.astype(np.float64, copy=False)
    sy = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    sx = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    ty = sy - y0
    tx = sx - x0
    y0c = np.clip(y0, 0, in_h - 1)
    y1c = np.clip(y0 + 1, 0, in_h - 1)
    x0c = np.clip(x0, 0, in_w - 1)
    x1c = np.clip(x0 + 1, 0, in_w - 1)
    if image.ndim == 3:
        ty = ty[:, None, None]
        tx = tx[None, :, None]
        top = src[y0c][:, x0c] * (1 - tx) + src[y0c][:, x1c] * tx
        bot = src[y1c][:, x0c] * (1 - tx) + src[y1c][:, x1c] * tx
    else:
        ty = ty[:, None]
        tx = tx[None, :]
        top = src[y0c][:, x0c] * (1 - tx) + src[y0c][:, x1c] * tx
        bot = src[y1c][:, x0c] * (1 - tx) + src[y1c][:, x1c] * tx
    return (top * (1 - ty) + bot * ty).astype(image.dtype, copy=False)


def hwc_to_chw(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.transpose(image, (2, 0, 1)))


def make_preprocess(input_w: int, input_h: int,
                    latency_us: int = 0) -> OperatorSpec:
    """Resize to the network input extents and switch to channel-first."""

    def fn(pkt: Packet) -> Packet:
        frame: Frame = pkt.payload
        img = frame.image.array
        if img.shape[0] < 1 or img.shape[1] < 1:
            raise ContractError("zero-area frame")
        if (img.shape[0], img.shape[1]) == (input_h, input_w):
            chw = hwc_to_chw(img)  # layout permutation only, values untouched
        else:
            resized = bilinear_resize(img, input_h, input_w).astype(np.float32)
            chw = hwc_to_chw(resized)
        _sleep_us(latency_us)
        return Packet(pkt.seq_id, pkt.ingest_ns, (frame, TensorF32(chw)))

    return OperatorSpec.transform("preprocess", fn)


def make_inference(backend, policy: SchedulerPolicy) -> OperatorSpec:
    """Batched inference stage; payloads go (frame, chw) -> (frame, maps)."""
    policy.validate(backend_max=backend.max_batch)

    def backend_call(batch: Sequence[Packet]):
        frames = [pkt.payload[0] for pkt in batch]
        stacked = TensorF32(np.stack([pkt.payload[1].array for pkt in batch]))
        maps_list = backend.infer(stacked, [pkt.seq_id for pkt in batch])
        return list(zip(frames, maps_list))

    return make_batching_operator("inference", backend_call, policy)


def make_postprocess(topo: SkeletonTopology, params: ParserParams,
                     latency_us: int = 0) -> OperatorSpec:
    """Parse feature maps into humans; payloads go (frame, maps) -> (frame, poses)."""

    def fn(pkt: Packet) -> Packet:
        frame, maps = pkt.payload
        poses = parse(maps, topo, params)
        _sleep_us(latency_us)
        return Packet(pkt.seq_id, pkt.ingest_ns, (frame, poses))

    return OperatorSpec.transform("postprocess", fn)


@dataclass
class OverlayStyle:
    keypoint_radius: int = 3
    limb_thickness: int = 2
    score_label: bool = False

    def validate(self) -> None:
        if self.keypoint_radius < 1:
            raise ContractError("keypoint_radius must be >= 1")
        if self.limb_thickness < 1:
            raise ContractError("limb_thickness must be >= 1")


def part_color(part: int) -> Tuple[float, float, float]:
    """Deterministic per-part color: golden-ratio hue stepping."""
    hue = (part * 0.6180339887498949) % 1.0
    return colorsys.hsv_to_rgb(hue, 0.85, 1.0)


def _draw_disc(img: np.ndarray, cx: int, cy: int, radius: int,
               color: Tuple[float, float, float]) -> None:
    h, w = img.shape[:2]
    for dy in range(-radius, radius + 1):
        y = cy + dy
        if not (0 <= y < h):
            continue
        for dx in range(-radius, radius + 1):
            x = cx + dx
            if 0 <= x < w and dx * dx + dy * dy <= radius * radius:
                img[y, x] = color


def _draw_line(img: np.ndarray, x0: int, y0: int, x1: int, y1: int,
               thickness: int, color: Tuple[float, float, float]) -> None:
    """Bresenham line, stamped with a disc of radius thickness//2."""
    radius = thickness // 2
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        if radius == 0:
            h, w = img.shape[:2]
            if 0 <= y < h and 0 <= x < w:
                img[y, x] = color
        else:
            _draw_disc(img, x, y, radius, color)
        if x == x1 and y == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


# 3x5 bitmaps for score labels, row-major, '1' = lit.
_GLYPHS = {
    "0": "111101101101111", "1": "010110010010111", "2": "111001111100111",
    "3": "111001111001111", "4": "101101111001001", "5": "111100111001111",
    "6": "111100111101111", "7": "111001001001001", "8": "111101111101111",
    "9": "111101111001111", ".": "000000000000010",
}


def _draw_label(img: np.ndarray, x: int, y: int, text: str,
                color: Tuple[float, float, float]) -> None:
    h, w = img.shape[:2]
    for ch in text:
        glyph = _GLYPHS.get(ch)
        if glyph is None:
            continue
        for row in range(5):
            for col in range(3):
                if glyph[row * 3 + col] == "1":
                    py, px = y + row, x + col
                    if 0 <= py < h and 0 <= px < w:
                        img[py, px] = color
        x += 4


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def visualize(frame: Frame, poses: Sequence[HumanPose], style: OverlayStyle,
              topo: SkeletonTopology, input_w: int, input_h: int) -> TensorF32:
    """Rasterize poses onto a copy of the frame.

    Keypoints arrive in network-input coordinates and are scaled to the
    frame extents.  Drawing order is fixed: limbs in topology order, then
    keypoints by part index, later draws overwriting earlier ones; all
    raster writes are clipped to the image.
    """
    style.validate()
    img = frame.image.array.copy()
    if not poses:
        return TensorF32(img)
    h, w = img.shape[:2]
    scale_x = w / input_w
    scale_y = h / input_h
    placed = []
    for pose in poses:
        pts: List[Optional[Tuple[int, int]]] = []
        for kp in pose.keypoints:
            if kp is None:
                pts.append(None)
            else:
                fx = (kp.x + 0.5) * scale_x - 0.5
                fy = (kp.y + 0.5) * scale_y - 0.5
                pts.append((_round_half_up(fx), _round_half_up(fy)))
        placed.append(pts)
    for pose, pts in zip(poses, placed):
        for limb, (a, b) in enumerate(topo.limbs):
            if pts[a] is None or pts[b] is None:
                continue
            _draw_line(img, pts[a][0], pts[a][1], pts[b][0], pts[b][1],
                       style.limb_thickness, part_color(b))
        for part, pt in enumerate(pts):
            if pt is not None:
                _draw_disc(img, pt[0], pt[1], style.keypoint_radius, part_color(part))
        if style.score_label:
            anchor = next((pt for pt in pts if pt is not None), None)
            if anchor is not None:
                _draw_label(img, anchor[0] + style.keypoint_radius + 2, anchor[1],
                            f"{pose.score:.2f}", (1.0, 1.0, 1.0))
    return TensorF32(img)


def pose_record(seq_id: int, poses: Sequence[HumanPose],
                topo: SkeletonTopology) -> str:
    """One poses.jsonl line; key order and float formatting are contractual."""
    humans = []
    for pose in poses:
        keypoints = []
        for part, kp in enumerate(pose.keypoints):
            if kp is None:
                continue
            keypoints.append({
                "part": topo.keypoint_names[part],
                "x": float(kp.x),
                "y": float(kp.y),
                "score": float(kp.score),
            })
        humans.append({"score": float(pose.score), "keypoints": keypoints})
    return json.dumps({"frame_id": seq_id, "humans": humans},
                      separators=(",", ":"))


class PoseSink:
    """Writes poses.jsonl (and optional overlay PPMs) in seq order."""

    def __init__(self, out_dir: Union[str, Path], topo: SkeletonTopology,
                 input_w: int, input_h: int, overlay: bool = False,
                 style: Optional[OverlayStyle] = None):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.topo = topo
        self.input_w = input_w
        self.input_h = input_h
        self.overlay = overlay
        self.style = style or OverlayStyle()
        self._file = open(self.out_dir / "poses.jsonl", "w", encoding="ascii")
        self._last_seq = -1

    def __call__(self, pkt: Packet) -> None:
        if pkt.seq_id <= self._last_seq:
            raise ContractError(
                f"sink received seq {pkt.seq_id} after {self._last_seq}"
            )
        self._last_seq = pkt.seq_id
        frame, poses, overlay_img = pkt.payload
        self._file.write(pose_record(pkt.seq_id, poses, self.topo) + "\n")
        if overlay_img is not None:
            with open(self.out_dir / f"frame_{pkt.seq_id:06d}.ppm", "wb") as f:
                formats.write_ppm(overlay_img, f)

    def close(self) -> None:
        self._file.close()


def make_export(sink: PoseSink) -> OperatorSpec:
    """Final stage: optional overlay rasterization plus result files."""

    def fn(pkt: Packet) -> None:
        frame, poses = pkt.payload
        overlay_img = None
        if sink.overlay:
            overlay_img = visualize(frame, poses, sink.style, sink.topo,
                                    sink.input_w, sink.input_h)
        sink(Packet(pkt.seq_id, pkt.ingest_ns, (frame, poses, overlay_img)))

    return OperatorSpec.sink("export", fn)
