"""Assembly of the standard five-operator pose pipeline from a config.

Chain: decode source -> resize/layout -> batched inference -> PAF parsing
-> export (overlay + result files).  The backend is resolved from the
config's backend spec: ``synth`` (procedural scenes from the run seed),
``synth:<corpus.toml>`` (scenes from a file, with procedural fallback when
the corpus carries a seed), or ``file:<dir>`` (replay of dumped tensors).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Tuple, Union

from .config import PipelineConfig
from .dataflow import PipelineGraph, PipelineStats, build_pipeline, run_pipeline
from .errors import ConfigError
from .operators import (
    OverlayStyle,
    PoseSink,
    make_export,
    make_inference,
    make_postprocess,
    make_ppm_source,
    make_preprocess,
    make_synthetic_source,
)
from .scheduler import SchedulerPolicy
from .synth import FileBackend, SyntheticBackend, load_scene_corpus
from .topology import load_topology
from .types import SkeletonTopology


def build_backend(cfg: PipelineConfig, topo: SkeletonTopology):
    kind, arg = cfg.backend_spec()
    if kind == "synth":
        scenes = {}
        procedural_seed: Optional[int] = cfg.seed
        input_w, input_h = cfg.input_w, cfg.input_h
        if arg is not None:
            scene_list, corpus_seed, input_w, input_h = load_scene_corpus(arg)
            if (input_w, input_h) != (cfg.input_w, cfg.input_h):
                raise ConfigError(
                    f"corpus extents {input_w}x{input_h} differ from configured "
                    f"{cfg.input_w}x{cfg.input_h}"
                )
            scenes = {i: s for i, s in enumerate(scene_list)}
            procedural_seed = corpus_seed  # None disables the fallback
        return SyntheticBackend(
            topo, cfg.synth, input_w, input_h,
            scenes=scenes, procedural_seed=procedural_seed,
        )
    if kind == "file":
        return FileBackend(arg, stride=cfg.synth.stride)
    raise ConfigError(f"unknown backend kind {kind!r}")


def build_pose_pipeline(
    cfg: PipelineConfig,
    out_dir: Union[str, Path],
    overlay: bool = False,
    source_dir: Optional[Union[str, Path]] = None,
    style: Optional[OverlayStyle] = None,
) -> Tuple[PipelineGraph, PoseSink]:
    """Build the standard chain; returns the graph and the (open) sink."""
    cfg.validate()
    topo = load_topology(cfg.topology)
    backend = build_backend(cfg, topo)
    policy = SchedulerPolicy(
        enabled=cfg.scheduler_enabled,
        batch_max=cfg.batch_max,
        linger_us=cfg.batch_linger_us,
    )
    policy.validate(backend_max=backend.max_batch)
    if source_dir is not None:
        source = make_ppm_source(source_dir, frames=cfg.frames,
                                 latency_us=cfg.source_latency_us)
    else:
        source = make_synthetic_source(cfg.input_w, cfg.input_h, cfg.frames,
                                       latency_us=cfg.source_latency_us)
    sink = PoseSink(out_dir, topo, cfg.input_w, cfg.input_h,
                    overlay=overlay, style=style)
    ops = [
        source,
        make_preprocess(cfg.input_w, cfg.input_h),
        make_inference(backend, policy),
        make_postprocess(topo, cfg.parser),
        make_export(sink),
    ]
    graph = build_pipeline(cfg.channel_capacity, ops)
    return graph, sink


def run_pose_pipeline(
    cfg: PipelineConfig,
    out_dir: Union[str, Path],
    overlay: bool = False,
    source_dir: Optional[Union[str, Path]] = None,
    watchdog_s: Optional[float] = 30.0,
    progress: bool = False,
    style: Optional[OverlayStyle] = None,
) -> PipelineStats:
    """Run the chain to completion and write stats.json next to poses.jsonl."""
    graph, sink = build_pose_pipeline(cfg, out_dir, overlay=overlay,
                                      source_dir=source_dir, style=style)
    try:
        stats = run_pipeline(graph, watchdog_s=watchdog_s, progress=progress)
    finally:
        sink.close()
    with open(Path(out_dir) / "stats.json", "w") as f:
        json.dump(stats.to_dict(), f, indent=2)
    return stats
