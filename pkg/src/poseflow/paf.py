"""Part-affinity-field pose parsing.

Turns feature maps into per-person keypoint sets in three steps: local-max
peak extraction on each confidence channel, line-integral scoring of
candidate limb connections against the PAF, and greedy assembly of accepted
connections into humans.  Every tie-break is a stated total order, so the
output is a pure function of (maps, topology, params) — identical bytes
across runs, platforms, and thread schedules.

Peaks stay on integer cells (no sub-pixel refinement) and PAF sampling uses
nearest-cell lookup; both choices keep results exactly reproducible and let
brute-force oracles check the implementation cell for cell.  Unlike some
PAF variants, the connection score carries no long-limb distance penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError
from .types import (
    FeatureMaps,
    HumanPose,
    Keypoint,
    SkeletonTopology,
    cell_to_pixel,
)


@dataclass
class ParserParams:
    conf_threshold: float = 0.10
    nms_window: int = 3
    n_samples: int = 10
    sample_dot_threshold: float = 0.05
    good_fraction_min: float = 0.8
    min_parts: int = 4
    min_human_score: float = 0.2

    def validate(self) -> None:
        if self.nms_window < 3 or self.nms_window % 2 == 0:
            raise ConfigError("nms_window must be odd and >= 3")
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        for name in ("conf_threshold", "sample_dot_threshold", "good_fraction_min"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.min_parts < 1:
            raise ConfigError("min_parts must be >= 1")


@dataclass(frozen=True)
class Peak:
    part: int
    cell: Tuple[int, int]  # (row, col)
    score: float
    id: int


@dataclass(frozen=True)
class LimbConnection:
    limb: int
    peak_a: int  # Peak ids
    peak_b: int
    score: float
    good_fraction: float


def nms_peaks(conf: np.ndarray, params: ParserParams, part: int = 0,
              id_base: int = 0) -> List[Peak]:
    """Extract local maxima of one confidence channel.

    A cell is a peak iff its value is at least ``conf_threshold`` and no
    cell in the centered ``nms_window`` square beats it; among equal-valued
    neighbors the lexicographically smallest (row, col) survives and
    suppresses the rest.  Peaks are returned sorted by score descending,
    then (row, col) ascending, with ids assigned in that order from
    ``id_base``.
    """
    h, w = conf.shape
    half = params.nms_window // 2
    padded = np.full((h + 2 * half, w + 2 * half), -np.inf, dtype=conf.dtype)
    padded[half:half + h, half:half + w] = conf
    keep = conf >= params.conf_threshold
    for di in range(-half, half + 1):
        for dj in range(-half, half + 1):
            if di == 0 and dj == 0:
                continue
            shifted = padded[half + di:half + di + h, half + dj:half + dj + w]
            if di > 0 or (di == 0 and dj > 0):
                # center precedes this neighbor lexicographically: wins ties
                keep &= conf >= shifted
            else:
                keep &= conf > shifted
    ii, jj = np.nonzero(keep)
    if ii.size == 0:
        return []
    scores = conf[ii, jj]
    order = np.lexsort((jj, ii, -scores))
    return [
        Peak(part=part, cell=(int(ii[o]), int(jj[o])), score=float(scores[o]),
             id=id_base + rank)
        for rank, o in enumerate(order)
    ]


def score_limb(
    paf: np.ndarray,
    topo: SkeletonTopology,
    limb: int,
    peak_a: Peak,
    peak_b: Peak,
    params: ParserParams,
) -> Tuple[float, float]:
    """Line-integral score of a candidate connection.

    Samples ``n_samples`` points evenly from peak_a to peak_b, reads the
    PAF at the nearest cell of each, and dots it with the a->b unit vector.
    Returns (mean dot, fraction of samples with dot >= threshold).
    Coincident peak cells score (0, 0).
    """
    ai, aj = peak_a.cell
    bi, bj = peak_b.cell
    if ai == bi and aj == bj:
        return 0.0, 0.0
    di, dj = bi - ai, bj - aj
    norm = math.sqrt(di * di + dj * dj)
    vx, vy = dj / norm, di / norm  # x along columns, y along rows
    cx, cy = topo.paf_channels[limb]
    n = params.n_samples
    total = 0.0
    good = 0
    for u in range(n):
        t = u / (n - 1)
        ci = int(math.floor(ai + t * di + 0.5))
        cj = int(math.floor(aj + t * dj + 0.5))
        d = float(paf[cx, ci, cj]) * vx + float(paf[cy, ci, cj]) * vy
        total += d
        if d >= params.sample_dot_threshold:
            good += 1
    return total / n, good / n


def _score_candidates(
    peaks_by_part: Sequence[Sequence[Peak]],
    paf: np.ndarray,
    topo: SkeletonTopology,
    params: ParserParams,
) -> List[List[Tuple[Peak, Peak, float, float]]]:
    """All candidate pairs per limb that pass the score and coverage gates."""
    out = []
    for limb, (a_part, b_part) in enumerate(topo.limbs):
        candidates = []
        for pa in peaks_by_part[a_part]:
            for pb in peaks_by_part[b_part]:
                score, good = score_limb(paf, topo, limb, pa, pb, params)
                if good >= params.good_fraction_min and score > 0.0:
                    candidates.append((pa, pb, score, good))
        out.append(candidates)
    return out


def _greedy_select(
    candidates: Sequence[Tuple[Peak, Peak, float, float]],
) -> List[Tuple[Peak, Peak, float, float]]:
    """Accept pairs by score descending (ties: lower (id_a, id_b) first),
    skipping pairs whose endpoints are already used."""
    ranked = sorted(candidates, key=lambda c: (-c[2], c[0].id, c[1].id))
    used_a, used_b = set(), set()
    accepted = []
    for pa, pb, score, good in ranked:
        if pa.id in used_a or pb.id in used_b:
            continue
        used_a.add(pa.id)
        used_b.add(pb.id)
        accepted.append((pa, pb, score, good))
    return accepted


def connect_limbs(
    peaks_by_part: Sequence[Sequence[Peak]],
    paf: np.ndarray,
    topo: SkeletonTopology,
    params: ParserParams,
) -> List[LimbConnection]:
    """Score all candidate pairs per limb type and greedily match them."""
    connections = []
    for limb, candidates in enumerate(_score_candidates(peaks_by_part, paf, topo, params)):
        for pa, pb, score, good in _greedy_select(candidates):
            connections.append(
                LimbConnection(limb=limb, peak_a=pa.id, peak_b=pb.id,
                               score=score, good_fraction=good)
            )
    return connections


class _Builder:
    __slots__ = ("parts", "conn_score")

    def __init__(self):
        self.parts: Dict[int, int] = {}  # part index -> peak id
        self.conn_score = 0.0


def assemble_humans(
    connections: Sequence[LimbConnection],
    peaks_by_part: Sequence[Sequence[Peak]],
    topo: SkeletonTopology,
    params: ParserParams,
    stride: int,
) -> List[HumanPose]:
    """Group accepted connections into humans.

    Connections are processed in limb-topology order.  A connection with
    exactly one endpoint in an existing human appends the other endpoint
    (unless that part slot is already taken); one whose endpoints lie in
    two humans with disjoint parts merges them; one internal to a human
    just adds its score.  Otherwise, when neither endpoint is assigned
    yet, it seeds a new human.  Each peak ends up in at most one human.

    A human's score is (sum of keypoint scores + sum of connection scores)
    divided by its part count.  Humans below ``min_parts`` or
    ``min_human_score`` are dropped; the rest are returned sorted by score
    descending, with keypoints converted to input-pixel coordinates.
    """
    peak_by_id: Dict[int, Peak] = {
        p.id: p for plist in peaks_by_part for p in plist
    }
    humans: List[_Builder] = []
    owner: Dict[int, _Builder] = {}  # peak id -> builder

    by_limb: Dict[int, List[LimbConnection]] = {}
    for conn in connections:
        by_limb.setdefault(conn.limb, []).append(conn)

    for limb in range(topo.n_limbs):
        a_part, b_part = topo.limbs[limb]
        for conn in by_limb.get(limb, ()):
            ha = owner.get(conn.peak_a)
            hb = owner.get(conn.peak_b)
            if ha is None and hb is None:
                builder = _Builder()
                builder.parts[a_part] = conn.peak_a
                builder.parts[b_part] = conn.peak_b
                builder.conn_score = conn.score
                humans.append(builder)
                owner[conn.peak_a] = builder
                owner[conn.peak_b] = builder
            elif ha is not None and hb is not None:
                if ha is hb:
                    ha.conn_score += conn.score
                elif not (ha.parts.keys() & hb.parts.keys()):
                    ha.parts.update(hb.parts)
                    ha.conn_score += hb.conn_score + conn.score
                    for pid in hb.parts.values():
                        owner[pid] = ha
                    humans.remove(hb)
                # else: merging would duplicate a part; leave both humans as-is
            else:
                builder = ha if ha is not None else hb
                part, pid = (b_part, conn.peak_b) if ha is not None else (a_part, conn.peak_a)
                if part not in builder.parts:
                    builder.parts[part] = pid
                    builder.conn_score += conn.score
                    owner[pid] = builder
                # else: part slot already claimed by another peak; skip

    poses = []
    for builder in humans:
        n_parts = len(builder.parts)
        if n_parts < params.min_parts:
            continue
        kp_score_sum = sum(peak_by_id[pid].score for pid in builder.parts.values())
        score = (kp_score_sum + builder.conn_score) / n_parts
        if score < params.min_human_score:
            continue
        keypoints: List[Optional[Keypoint]] = [None] * topo.n_keypoints
        for part, pid in builder.parts.items():
            peak = peak_by_id[pid]
            x, y = cell_to_pixel(peak.cell[0], peak.cell[1], stride)
            keypoints[part] = Keypoint(x=x, y=y, score=peak.score)
        poses.append(HumanPose(keypoints=tuple(keypoints), score=score, n_parts=n_parts))
    poses.sort(key=lambda hp: -hp.score)  # stable: assembly order breaks ties
    return poses


def parse(maps: FeatureMaps, topo: SkeletonTopology,
          params: ParserParams) -> List[HumanPose]:
    """Full pipeline: peak NMS -> limb scoring/matching -> assembly."""
    params.validate()
    maps.validate(topo)
    conf = maps.conf.array
    peaks_by_part: List[List[Peak]] = []
    next_id = 0
    for part in range(topo.n_keypoints):
        peaks = nms_peaks(conf[part], params, part=part, id_base=next_id)
        next_id += len(peaks)
        peaks_by_part.append(peaks)
    connections = connect_limbs(peaks_by_part, maps.paf.array, topo, params)
    return assemble_humans(connections, peaks_by_part, topo, params, maps.stride)
