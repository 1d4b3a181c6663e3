"""Core domain types shared by every stage of the engine.

Coordinate conventions used throughout:

* Images are row-major ``[H, W, 3]`` float32 with values in ``[0, 1]``.
* Feature maps live on a grid of cells; cell ``(i, j)`` (row, column) maps
  to the input-pixel center ``x = (j + 0.5) * stride - 0.5`` and
  ``y = (i + 0.5) * stride - 0.5``.
* ``x`` runs along columns (width), ``y`` along rows (height).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError

# Element-count bound for serialized tensors; dims are u32 each but their
# product must stay a valid u64.
MAX_TENSOR_ELEMS = 2**64 - 1


@dataclass(frozen=True, eq=False)
class TensorF32:
    """Dense row-major float32 tensor."""

    array: np.ndarray

    @staticmethod
    def from_array(a) -> "TensorF32":
        arr = np.ascontiguousarray(np.asarray(a, dtype=np.float32))
        return TensorF32(arr)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(int(d) for d in self.array.shape)

    @property
    def n_elems(self) -> int:
        return int(self.array.size)

    def validate(self, require_finite: bool = True) -> None:
        if self.array.dtype != np.float32:
            raise ContractError(f"tensor dtype must be float32, got {self.array.dtype}")
        if not self.array.flags["C_CONTIGUOUS"]:
            raise ContractError("tensor must be C-contiguous (row-major)")
        if self.n_elems > MAX_TENSOR_ELEMS:
            raise ContractError("tensor element count exceeds u64 range")
        if require_finite and self.array.size and not np.isfinite(self.array).all():
            raise ContractError("tensor contains non-finite values")


@dataclass(frozen=True, eq=False)
class Frame:
    """One input image with its stream position and ingest timestamp."""

    seq_id: int
    image: TensorF32  # [H, W, 3], values in [0, 1]
    ingest_ns: int

    def validate(self) -> None:
        dims = self.image.dims
        if len(dims) != 3 or dims[2] != 3:
            raise ContractError(f"frame image must be [H, W, 3], got {dims}")
        if dims[0] < 1 or dims[1] < 1:
            raise ContractError("frame image must be at least 1x1")
        if self.seq_id < 0:
            raise ContractError("seq_id must be non-negative")


class Keypoint(NamedTuple):
    x: float
    y: float
    score: float


@dataclass(frozen=True)
class SkeletonTopology:
    """Keypoint names, limb list, and the PAF channel pair of each limb."""

    keypoint_names: Tuple[str, ...]
    limbs: Tuple[Tuple[int, int], ...]
    paf_channels: Tuple[Tuple[int, int], ...]

    @staticmethod
    def create(
        keypoint_names: Sequence[str],
        limbs: Sequence[Sequence[int]],
        paf_channels: Optional[Sequence[Sequence[int]]] = None,
    ) -> "SkeletonTopology":
        """Build a topology, defaulting limb ``l`` to PAF channels ``(2l, 2l+1)``."""
        limb_t = tuple((int(a), int(b)) for a, b in limbs)
        if paf_channels is None:
            paf_t = tuple((2 * l, 2 * l + 1) for l in range(len(limb_t)))
        else:
            paf_t = tuple((int(cx), int(cy)) for cx, cy in paf_channels)
        topo = SkeletonTopology(tuple(str(n) for n in keypoint_names), limb_t, paf_t)
        topo.validate()
        return topo

    @property
    def n_keypoints(self) -> int:
        return len(self.keypoint_names)

    @property
    def n_limbs(self) -> int:
        return len(self.limbs)

    def validate(self) -> None:
        k = self.n_keypoints
        if k < 1:
            raise ContractError("topology needs at least one keypoint")
        if len(set(self.keypoint_names)) != k:
            raise ContractError("keypoint names must be unique")
        if len(self.paf_channels) != self.n_limbs:
            raise ContractError(
                f"paf_channels length {len(self.paf_channels)} != limb count {self.n_limbs}"
            )
        for idx, (a, b) in enumerate(self.limbs):
            if a == b:
                raise ContractError(f"limb {idx} connects keypoint {a} to itself")
            if not (0 <= a < k and 0 <= b < k):
                raise ContractError(f"limb {idx} endpoint out of range: ({a}, {b})")
        seen = {}
        for idx, (cx, cy) in enumerate(self.paf_channels):
            for c in (cx, cy):
                if not (0 <= c < 2 * self.n_limbs):
                    raise ContractError(f"paf channel {c} of limb {idx} out of range")
                if c in seen:
                    raise ContractError(
                        f"paf channel {c} shared by limbs {seen[c]} and {idx}"
                    )
                seen[c] = idx
            if cx == cy:
                raise ContractError(f"limb {idx} maps both components to channel {cx}")
        self._warn_if_disconnected()

    def _warn_if_disconnected(self) -> None:
        # Connectivity over the keypoints the limbs touch; a split skeleton is
        # legal but usually a topology-file mistake.
        touched = sorted({v for limb in self.limbs for v in limb})
        if len(touched) <= 1:
            return
        adj = {v: set() for v in touched}
        for a, b in self.limbs:
            adj[a].add(b)
            adj[b].add(a)
        seen = {touched[0]}
        stack = [touched[0]]
        while stack:
            for n in adj[stack.pop()]:
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
        if len(seen) != len(touched):
            warnings.warn(
                "limb graph is disconnected over the keypoints it touches",
                stacklevel=3,
            )

    def part_index(self, name: str) -> int:
        return self.keypoint_names.index(name)


@dataclass(frozen=True, eq=False)
class FeatureMaps:
    """Inference output: confidence maps plus part affinity fields.

    ``conf`` has one channel per keypoint type plus a trailing background
    channel; ``paf`` has two channels per limb as mapped by the topology.
    """

    conf: TensorF32  # [K + 1, H', W'] in [0, 1]
    paf: TensorF32  # [2L, H', W'] in [-1, 1]
    stride: int
    frame_ref: int

    def grid_shape(self) -> Tuple[int, int]:
        return self.conf.dims[1], self.conf.dims[2]

    def validate(self, topo: SkeletonTopology, input_w: Optional[int] = None,
                 input_h: Optional[int] = None) -> None:
        cd, pd = self.conf.dims, self.paf.dims
        if len(cd) != 3 or cd[0] != topo.n_keypoints + 1:
            raise ContractError(
                f"conf dims {cd} inconsistent with {topo.n_keypoints} keypoints"
            )
        if len(pd) != 3 or pd[0] != 2 * topo.n_limbs:
            raise ContractError(f"paf dims {pd} inconsistent with {topo.n_limbs} limbs")
        if cd[1:] != pd[1:]:
            raise ContractError(f"conf grid {cd[1:]} != paf grid {pd[1:]}")
        if self.stride < 1:
            raise ContractError("stride must be >= 1")
        if input_h is not None and cd[1] * self.stride != input_h:
            raise ContractError(
                f"grid height {cd[1]} * stride {self.stride} != input height {input_h}"
            )
        if input_w is not None and cd[2] * self.stride != input_w:
            raise ContractError(
                f"grid width {cd[2]} * stride {self.stride} != input width {input_w}"
            )


@dataclass(frozen=True)
class HumanPose:
    """One parsed person in input-pixel coordinates."""

    keypoints: Tuple[Optional[Keypoint], ...]
    score: float
    n_parts: int

    def validate(self, input_w: Optional[int] = None, input_h: Optional[int] = None) -> None:
        present = sum(1 for kp in self.keypoints if kp is not None)
        if present != self.n_parts:
            raise ContractError(f"n_parts {self.n_parts} != present keypoints {present}")
        if self.n_parts < 1:
            raise ContractError("a pose needs at least one keypoint")
        for kp in self.keypoints:
            if kp is None:
                continue
            if kp.score <= 0:
                raise ContractError("present keypoints must have positive score")
            if input_w is not None and not (0 <= kp.x < input_w):
                raise ContractError(f"keypoint x {kp.x} outside [0, {input_w})")
            if input_h is not None and not (0 <= kp.y < input_h):
                raise ContractError(f"keypoint y {kp.y} outside [0, {input_h})")


def cell_to_pixel(i: float, j: float, stride: int) -> Tuple[float, float]:
    """Map feature-cell coordinates (row, col) to the input-pixel center (x, y)."""
    return (j + 0.5) * stride - 0.5, (i + 0.5) * stride - 0.5


def pixel_to_cell(x: float, y: float, stride: int) -> Tuple[float, float]:
    """Map input-pixel coordinates (x, y) to fractional cell coordinates (row, col)."""
    return (y + 0.5) / stride - 0.5, (x + 0.5) / stride - 0.5
