"""Brute-force reference implementations.

These deliberately re-derive results from first principles (per-cell
definition checks, dense integration, repeated global-max selection,
direct interpolation formulas) instead of sharing code with the engine,
so they can arbitrate correctness in tests and the CLI selftest.
"""

from __future__ import annotations

import math
from typing import List, Sequence, Tuple

import numpy as np

from .paf import Peak
from .types import SkeletonTopology


def nms_oracle(conf: np.ndarray, conf_threshold: float, nms_window: int) -> List[Tuple[int, int]]:
    """Check the peak definition at every cell; returns (row, col) list."""
    h, w = conf.shape
    half = nms_window // 2
    peaks = []
    for i in range(h):
        for j in range(w):
            v = conf[i, j]
            if v < conf_threshold:
                continue
            is_peak = True
            for di in range(-half, half + 1):
                for dj in range(-half, half + 1):
                    if di == 0 and dj == 0:
                        continue
                    ni, nj = i + di, j + dj
                    if not (0 <= ni < h and 0 <= nj < w):
                        continue
                    nv = conf[ni, nj]
                    if nv > v or (nv == v and (ni, nj) < (i, j)):
                        is_peak = False
                        break
                if not is_peak:
                    break
            if is_peak:
                peaks.append((i, j))
    return peaks


def dense_limb_score(
    paf: np.ndarray,
    topo: SkeletonTopology,
    limb: int,
    cell_a: Tuple[int, int],
    cell_b: Tuple[int, int],
    sample_dot_threshold: float,
    n_samples: int = 1000,
) -> Tuple[float, float]:
    """Line-integral score with a dense sample count."""
    ai, aj = cell_a
    bi, bj = cell_b
    if (ai, aj) == (bi, bj):
        return 0.0, 0.0
    di, dj = bi - ai, bj - aj
    norm = math.sqrt(di * di + dj * dj)
    vx, vy = dj / norm, di / norm
    cx, cy = topo.paf_channels[limb]
    total = 0.0
    good = 0
    for u in range(n_samples):
        t = u / (n_samples - 1)
        ci = int(math.floor(ai + t * di + 0.5))
        cj = int(math.floor(aj + t * dj + 0.5))
        d = float(paf[cx, ci, cj]) * vx + float(paf[cy, ci, cj]) * vy
        total += d
        if d >= sample_dot_threshold:
            good += 1
    return total / n_samples, good / n_samples


def greedy_connect_oracle(
    candidates: Sequence[Tuple[Peak, Peak, float, float]],
) -> List[Tuple[Peak, Peak, float, float]]:
    """Repeatedly take the global best compatible pair.

    Total order: score descending, then (id_a, id_b) ascending.  A pair is
    compatible while neither endpoint has been used by an accepted pair.
    """
    remaining = list(candidates)
    used_a, used_b = set(), set()
    accepted = []
    while remaining:
        best = None
        for cand in remaining:
            if cand[0].id in used_a or cand[1].id in used_b:
                continue
            if best is None:
                best = cand
                continue
            key_best = (-best[2], best[0].id, best[1].id)
            key_cand = (-cand[2], cand[0].id, cand[1].id)
            if key_cand < key_best:
                best = cand
        if best is None:
            break
        accepted.append(best)
        used_a.add(best[0].id)
        used_b.add(best[1].id)
        remaining.remove(best)
    return accepted


def bilinear_oracle(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Direct-formula bilinear resize with half-pixel-center alignment."""
    in_h, in_w = image.shape[:2]
    channels = image.shape[2] if image.ndim == 3 else 1
    src = image.reshape(in_h, in_w, channels).astype(np.float64)
    out = np.zeros((out_h, out_w, channels), dtype=np.float64)
    for oy in range(out_h):
        sy = (oy + 0.5) * in_h / out_h - 0.5
        y0 = int(math.floor(sy))
        ty = sy - y0
        y0c = min(max(y0, 0), in_h - 1)
        y1c = min(max(y0 + 1, 0), in_h - 1)
        for ox in range(out_w):
            sx = (ox + 0.5) * in_w / out_w - 0.5
            x0 = int(math.floor(sx))
            tx = sx - x0
            x0c = min(max(x0, 0), in_w - 1)
            x1c = min(max(x0 + 1, 0), in_w - 1)
            for c in range(channels):
                top = src[y0c, x0c, c] * (1 - tx) + src[y0c, x1c, c] * tx
                bot = src[y1c, x0c, c] * (1 - tx) + src[y1c, x1c, c] * tx
                out[oy, ox, c] = top * (1 - ty) + bot * ty
    return out if image.ndim == 3 else out[:, :, 0]


def _box_blur_axis(field: np.ndarray, axis: int) -> np.ndarray:
    padded = np.concatenate(
        [field.take([0], axis=axis), field, field.take([-1], axis=axis)], axis=axis
    )
    n = field.shape[axis]
    lo = padded.take(range(0, n), axis=axis)
    mid = padded.take(range(1, n + 1), axis=axis)
    hi = padded.take(range(2, n + 2), axis=axis)
    return (lo + mid + hi) / 3.0


def smooth_random_field(shape: Tuple[int, ...], rng: np.random.Generator,
                        passes: int = 8) -> np.ndarray:
    """Random field smoothed by repeated 3x3 box blurs, scaled to [-1, 1]."""
    field = rng.uniform(-1.0, 1.0, size=shape)
    for _ in range(passes):
        field = _box_blur_axis(field, -1)
        field = _box_blur_axis(field, -2)
    peak = np.abs(field).max()
    if peak > 0:
        field = field / peak
    return field
