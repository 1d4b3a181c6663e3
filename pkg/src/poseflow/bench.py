"""Benchmark harness with analytic and discrete-event oracles.

Profiles describe a pipeline purely by its timing: per-stage fixed
latencies plus an optional overhead+per-item inference model.  Each swept
configuration is measured live (the real engine running sleep-calibrated
operators), predicted analytically (bottleneck formula), and simulated by
a deterministic discrete-event model of the exact dispatch rules, so
measured numbers always have two independent references.

The report path writes ``report.json``, a ``report.csv`` table, and PNG
figures next to them, and prints a human-readable table to stdout.
"""

from __future__ import annotations

import csv
import heapq
import json
import time
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .dataflow import (
    OperatorSpec,
    Packet,
    PipelineStats,
    build_pipeline,
    run_pipeline,
    run_sequential,
)
from .errors import ConfigError, PipelineError
from .scheduler import SchedulerPolicy, make_batching_operator

MIN_FRAMES = 100
MIN_REPETITIONS = 3


@dataclass
class StageModel:
    name: str
    latency_us: int


@dataclass
class InferenceModel:
    overhead_us: int
    per_item_us: int


@dataclass
class SourceModel:
    kind: str = "fixed"  # "fixed" | "poisson"
    interval_us: int = 0  # fixed interval, or the Poisson mean
    seed: int = 1


@dataclass
class BenchConfig:
    name: str
    mode: str = "pipelined"  # "pipelined" | "sequential"
    scheduler: bool = False
    batch_max: int = 1
    linger_us: int = 0
    baseline: Optional[str] = None
    source_latency_us: Optional[int] = None  # overrides the profile source


@dataclass
class BenchProfile:
    name: str
    frames: int
    repetitions: int
    channel_capacity: int = 16
    source: SourceModel = field(default_factory=SourceModel)
    stages: List[StageModel] = field(default_factory=list)
    inference: Optional[InferenceModel] = None
    configs: List[BenchConfig] = field(default_factory=list)

    def validate(self) -> None:
        if self.frames < MIN_FRAMES:
            raise ConfigError(f"frames must be >= {MIN_FRAMES} for FPS measurements")
        if self.repetitions < MIN_REPETITIONS:
            raise ConfigError(f"repetitions must be >= {MIN_REPETITIONS}")
        if self.channel_capacity < 1:
            raise ConfigError("channel_capacity must be >= 1")
        if self.source.kind not in ("fixed", "poisson"):
            raise ConfigError(f"unknown source kind {self.source.kind!r}")
        if not self.configs:
            raise ConfigError("profile needs at least one configuration")
        names = [c.name for c in self.configs]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate config names: {names}")
        for c in self.configs:
            if c.mode not in ("pipelined", "sequential"):
                raise ConfigError(f"config {c.name}: unknown mode {c.mode!r}")
            if c.batch_max < 1:
                raise ConfigError(f"config {c.name}: batch_max must be >= 1")
            if c.scheduler and c.batch_max > 1 and self.inference is None:
                raise ConfigError(
                    f"config {c.name}: batching needs an inference model"
                )
            if c.baseline is not None and c.baseline not in names:
                raise ConfigError(f"config {c.name}: unknown baseline {c.baseline!r}")

    def arrival_intervals_us(self, config: BenchConfig) -> np.ndarray:
        """Per-frame source sleep times, identical for live runs and the simulator."""
        if config.source_latency_us is not None:
            return np.full(self.frames, float(config.source_latency_us))
        if self.source.kind == "fixed":
            return np.full(self.frames, float(self.source.interval_us))
        rng = np.random.default_rng(self.source.seed)
        return rng.exponential(float(self.source.interval_us), size=self.frames)


def load_profile(path: Union[str, Path]) -> BenchProfile:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"profile not found: {p}")
    try:
        doc = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid profile TOML: {exc}") from exc
    try:
        source = SourceModel(**doc.get("source", {}))
        stages = [StageModel(**s) for s in doc.get("stages", [])]
        inference = InferenceModel(**doc["inference"]) if "inference" in doc else None
        configs = [BenchConfig(**c) for c in doc.get("configs", [])]
        profile = BenchProfile(
            name=doc.get("name", p.stem),
            frames=doc["frames"],
            repetitions=doc["repetitions"],
            channel_capacity=doc.get("channel_capacity", 16),
            source=source,
            stages=stages,
            inference=inference,
            configs=configs,
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad profile structure: {exc}") from exc
    profile.validate()
    return profile


def scheduler_gain_profile(frames: int = 1000, repetitions: int = 3) -> BenchProfile:
    """Saturating source against an inference model with high per-call overhead.

    The batching win comes from amortizing the 8 ms call overhead over up
    to eight frames; the non-batching run pays it per frame.
    """
    return BenchProfile(
        name="scheduler-gain",
        frames=frames,
        repetitions=repetitions,
        channel_capacity=16,
        source=SourceModel(kind="fixed", interval_us=0),
        stages=[StageModel("pre", 2000), StageModel("post", 2000)],
        inference=InferenceModel(overhead_us=8000, per_item_us=1000),
        configs=[
            BenchConfig(name="scheduler-off", scheduler=False, batch_max=1),
            BenchConfig(name="scheduler-on", scheduler=True, batch_max=8,
                        baseline="scheduler-off"),
        ],
    )


def pipelining_profile(frames: int = 1000, repetitions: int = 3) -> BenchProfile:
    """Three fixed stages of 3/6/9 ms: pipelined vs sequential execution."""
    return BenchProfile(
        name="pipelining-gain",
        frames=frames,
        repetitions=repetitions,
        channel_capacity=16,
        source=SourceModel(kind="fixed", interval_us=0),
        stages=[StageModel("a", 3000), StageModel("b", 6000), StageModel("c", 9000)],
        configs=[
            BenchConfig(name="sequential", mode="sequential"),
            BenchConfig(name="pipelined", mode="pipelined", baseline="sequential"),
        ],
    )


def io_masking_profile(frames: int = 500, repetitions: int = 3) -> BenchProfile:
    """A 9 ms bottleneck stage fed by a 0 ms vs 5 ms source."""
    return BenchProfile(
        name="io-masking",
        frames=frames,
        repetitions=repetitions,
        channel_capacity=16,
        source=SourceModel(kind="fixed", interval_us=0),
        stages=[StageModel("bottleneck", 9000)],
        configs=[
            BenchConfig(name="instant-source", source_latency_us=0),
            BenchConfig(name="slow-source", source_latency_us=5000,
                        baseline="instant-source"),
        ],
    )


def default_profile() -> BenchProfile:
    return scheduler_gain_profile(frames=300, repetitions=3)


def _config_batch(profile: BenchProfile, config: BenchConfig) -> int:
    if profile.inference is None:
        return 1
    return config.batch_max if config.scheduler else 1


def predict_throughput(profile: BenchProfile, config: BenchConfig) -> float:
    """Analytic FPS bound from the stage latency models.

    Sequential throughput is the reciprocal of the summed per-frame cost;
    pipelined throughput is the reciprocal of the slowest stage, with the
    inference stage amortized as ``(overhead + b * per_item) / b`` at the
    configured batch cap.
    """
    src_us = (config.source_latency_us if config.source_latency_us is not None
              else profile.source.interval_us)
    stage_us = [float(s.latency_us) for s in profile.stages]
    b = _config_batch(profile, config)
    inf_us = []
    if profile.inference is not None:
        inf_us = [(profile.inference.overhead_us + b * profile.inference.per_item_us) / b]
    if config.mode == "sequential":
        total = float(src_us) + sum(stage_us)
        if profile.inference is not None:
            total += profile.inference.overhead_us + profile.inference.per_item_us
        return 1e6 / total if total > 0 else float("inf")
    bottleneck = max([float(src_us)] + stage_us + inf_us + [0.0])
    return 1e6 / bottleneck if bottleneck > 0 else float("inf")


@dataclass
class SimResult:
    fps: float
    latency_ms_p50: float
    latency_ms_p95: float
    latency_ms_p99: float
    batch_hist: Dict[int, int]


class _SimEdge:
    __slots__ = ("capacity", "items", "blocked", "closed", "consumer")

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: deque = deque()
        self.blocked: Optional[Tuple[Any, Any]] = None  # (item, resume_cb)
        self.closed = False
        self.consumer = None


class _Simulator:
    """Event-driven model of the tandem chain with blocking sends.

    Mirrors the worker loops: receive, serve, send (blocking while the
    downstream queue is full), with the batching stage draining its queue
    between backend calls exactly like the live accumulator.
    """

    def __init__(self, profile: BenchProfile, config: BenchConfig):
        self.profile = profile
        self.config = config
        self.events: List[Tuple[float, int, Any]] = []
        self._seq = 0
        self.completions: List[float] = []
        self.ready_time: Dict[int, float] = {}
        self.batch_hist: Counter = Counter()

    def schedule(self, t: float, fn) -> None:
        heapq.heappush(self.events, (t, self._seq, fn))
        self._seq += 1

    def run(self) -> SimResult:
        profile, config = self.profile, self.config
        intervals = profile.arrival_intervals_us(config) / 1e6
        n_frames = profile.frames
        cap = profile.channel_capacity

        stage_specs: List[Tuple[str, float]] = [
            (s.name, s.latency_us / 1e6) for s in profile.stages
        ]
        has_inference = profile.inference is not None
        n_edges = len(stage_specs) + (1 if has_inference else 0) + 1
        edges = [_SimEdge(cap) for _ in range(n_edges)]

        sim = self

        class Source:
            def __init__(self, out: _SimEdge):
                self.out = out
                self.n = 0

            def start(self):
                if n_frames == 0:
                    self._close(0.0)
                    return
                sim.schedule(intervals[0], lambda t: self.ready(t))

            def ready(self, t):
                sim.ready_time[self.n] = t
                _put(self.out, self.n, t, self.sent)

            def sent(self, t):
                self.n += 1
                if self.n >= n_frames:
                    self._close(t)
                    return
                sim.schedule(t + intervals[self.n], lambda tt: self.ready(tt))

            def _close(self, t):
                self.out.closed = True
                c = self.out.consumer
                if c is not None and c.waiting:
                    c.waiting = False
                    sim.schedule(t, lambda tt: c.pull(tt))

        class Fixed:
            def __init__(self, inp: _SimEdge, out: _SimEdge, service: float):
                self.inp, self.out, self.service = inp, out, service
                self.waiting = False
                inp.consumer = self

            def pull(self, t):
                if self.inp.items:
                    item = _pop(self.inp, t)
                    sim.schedule(t + self.service, lambda tt: self.finish(tt, item))
                elif self.inp.closed:
                    self.out.closed = True
                    c = self.out.consumer
                    if c is not None and c.waiting:
                        c.waiting = False
                        sim.schedule(t, lambda tt: c.pull(tt))
                else:
                    self.waiting = True

            def finish(self, t, item):
                _put(self.out, item, t, lambda tt: self.pull(tt))

        class Batcher:
            def __init__(self, inp: _SimEdge, out: _SimEdge, model: InferenceModel,
                         policy: SchedulerPolicy):
                self.inp, self.out = inp, out
                self.model = model
                self.policy = policy
                self.waiting = False
                self.lingering = False
                self.linger_id = 0
                self.batch: List[Any] = []
                inp.consumer = self

            @property
            def cap_items(self) -> int:
                return self.policy.batch_max if self.policy.enabled else 1

            def pull(self, t):
                if self.lingering:
                    # new arrival during the linger window
                    while self.inp.items and len(self.batch) < self.cap_items:
                        self.batch.append(_pop(self.inp, t))
                    if len(self.batch) >= self.cap_items or self.inp.closed:
                        self.lingering = False
                        self.linger_id += 1
                        self.serve(t)
                    else:
                        self.waiting = True
                    return
                if not self.inp.items:
                    if self.inp.closed:
                        self.out.closed = True
                        c = self.out.consumer
                        if c is not None and c.waiting:
                            c.waiting = False
                            sim.schedule(t, lambda tt: c.pull(tt))
                    else:
                        self.waiting = True
                    return
                self.batch = [_pop(self.inp, t)]
                while (self.inp.items and len(self.batch) < self.cap_items
                       and self.policy.enabled):
                    self.batch.append(_pop(self.inp, t))
                if (self.policy.enabled and self.policy.linger_us > 0
                        and len(self.batch) < self.cap_items and not self.inp.closed):
                    self.lingering = True
                    self.waiting = True
                    my_id = self.linger_id
                    sim.schedule(t + self.policy.linger_us / 1e6,
                                 lambda tt: self.linger_expired(tt, my_id))
                    return
                self.serve(t)

            def linger_expired(self, t, my_id):
                if not self.lingering or my_id != self.linger_id:
                    return
                self.lingering = False
                self.waiting = False
                self.linger_id += 1
                self.serve(t)

            def serve(self, t):
                batch = self.batch
                self.batch = []
                sim.batch_hist[len(batch)] += 1
                dur = (self.model.overhead_us + len(batch) * self.model.per_item_us) / 1e6
                sim.schedule(t + dur, lambda tt: self.emit(tt, batch, 0))

            def emit(self, t, batch, idx):
                if idx >= len(batch):
                    self.pull(t)
                    return
                _put(self.out, batch[idx], t, lambda tt: self.emit(tt, batch, idx + 1))

        class Sink:
            def __init__(self, inp: _SimEdge):
                self.inp = inp
                self.waiting = False
                self.done = False
                inp.consumer = self

            def pull(self, t):
                if self.inp.items:
                    item = _pop(self.inp, t)
                    sim.completions.append(t)
                    self.pull(t)
                elif self.inp.closed:
                    self.done = True
                else:
                    self.waiting = True

        def _put(edge: _SimEdge, item, t, on_complete):
            if len(edge.items) < edge.capacity:
                edge.items.append(item)
                c = edge.consumer
                if c is not None and c.waiting:
                    c.waiting = False
                    sim.schedule(t, lambda tt: c.pull(tt))
                sim.schedule(t, lambda tt: on_complete(tt))
            else:
                edge.blocked = (item, on_complete)

        def _pop(edge: _SimEdge, t):
            item = edge.items.popleft()
            if edge.blocked is not None:
                bitem, cb = edge.blocked
                edge.blocked = None
                edge.items.append(bitem)
                sim.schedule(t, lambda tt: cb(tt))
            return item

        source = Source(edges[0])
        stages = []
        for idx, (_name, service) in enumerate(stage_specs):
            stages.append(Fixed(edges[idx], edges[idx + 1], service))
        if has_inference:
            policy = SchedulerPolicy(enabled=config.scheduler,
                                     batch_max=config.batch_max,
                                     linger_us=config.linger_us)
            stages.append(Batcher(edges[len(stage_specs)],
                                  edges[len(stage_specs) + 1],
                                  profile.inference, policy))
        sink = Sink(edges[-1])
        for s in stages + [sink]:
            s.waiting = True
        source.start()

        guard = 0
        limit = 200 * n_frames + 10_000
        while self.events:
            t, _, fn = heapq.heappop(self.events)
            fn(t)
            guard += 1
            if guard > limit:
                raise PipelineError("simulator failed to converge (internal bug)")

        lat_ms = [
            (self.completions[i] - self.ready_time[i]) * 1e3
            for i in range(len(self.completions))
        ]
        t_end = self.completions[-1] if self.completions else 0.0
        fps = len(self.completions) / t_end if t_end > 0 else float("inf")
        arr = np.asarray(lat_ms) if lat_ms else np.asarray([0.0])
        return SimResult(
            fps=fps,
            latency_ms_p50=float(np.percentile(arr, 50)),
            latency_ms_p95=float(np.percentile(arr, 95)),
            latency_ms_p99=float(np.percentile(arr, 99)),
            batch_hist=dict(self.batch_hist),
        )


def simulate_policy(profile: BenchProfile, config: BenchConfig) -> SimResult:
    """Discrete-event prediction of one configuration; deterministic given the seed."""
    if config.mode == "sequential":
        fps = predict_throughput(profile, config)
        per_frame_ms = 1e3 / fps
        return SimResult(fps=fps, latency_ms_p50=per_frame_ms,
                         latency_ms_p95=per_frame_ms, latency_ms_p99=per_frame_ms,
                         batch_hist={})
    return _Simulator(profile, config).run()


def _live_operators(profile: BenchProfile, config: BenchConfig) -> List[OperatorSpec]:
    intervals_s = profile.arrival_intervals_us(config) / 1e6

    def gen():
        for seq in range(profile.frames):
            if intervals_s[seq] > 0:
                time.sleep(intervals_s[seq])
            yield Packet(seq_id=seq, ingest_ns=time.monotonic_ns(), payload=None)

    ops = [OperatorSpec.source("source", gen)]
    for stage in profile.stages:
        delay_s = stage.latency_us / 1e6

        def make_fn(d=delay_s):
            def fn(pkt):
                if d > 0:
                    time.sleep(d)
                return pkt
            return fn

        ops.append(OperatorSpec.transform(stage.name, make_fn()))
    if profile.inference is not None:
        model = profile.inference

        def backend_call(batch):
            time.sleep((model.overhead_us + len(batch) * model.per_item_us) / 1e6)
            return [pkt.payload for pkt in batch]

        policy = SchedulerPolicy(enabled=config.scheduler, batch_max=config.batch_max,
                                 linger_us=config.linger_us)
        ops.append(make_batching_operator("inference", backend_call, policy))
    ops.append(OperatorSpec.sink("sink", lambda pkt: None))
    return ops


def run_live(profile: BenchProfile, config: BenchConfig,
             watchdog_s: Optional[float] = 30.0) -> PipelineStats:
    ops = _live_operators(profile, config)
    graph = build_pipeline(profile.channel_capacity, ops)
    if config.mode == "sequential":
        return run_sequential(graph)
    return run_pipeline(graph, watchdog_s=watchdog_s)


@dataclass
class ConfigResult:
    config: BenchConfig
    fps_runs: List[float]
    fps_mean: float
    fps_min: float
    fps_max: float
    latency_ms_p50: float
    latency_ms_p95: float
    latency_ms_p99: float
    predicted_fps: float
    simulated_fps: float
    live_vs_sim: float  # signed relative deviation
    live_vs_predicted: float
    speedup_vs_baseline: Optional[float]
    batch_hist: Dict[int, int]
    failed: bool = False

    def to_dict(self) -> Dict[str, Any]:
        d = dict(self.__dict__)
        d["config"] = dict(self.config.__dict__)
        return d


@dataclass
class BenchReport:
    profile: BenchProfile
    results: List[ConfigResult]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "profile": {
                "name": self.profile.name,
                "frames": self.profile.frames,
                "repetitions": self.profile.repetitions,
                "channel_capacity": self.profile.channel_capacity,
                "source": dict(self.profile.source.__dict__),
                "stages": [dict(s.__dict__) for s in self.profile.stages],
                "inference": (dict(self.profile.inference.__dict__)
                              if self.profile.inference else None),
            },
            "results": [r.to_dict() for r in self.results],
        }


def run_bench(profile: BenchProfile, report_dir: Optional[Union[str, Path]] = None,
              watchdog_s: float = 30.0, quiet: bool = False) -> BenchReport:
    """Measure every configuration of a profile and write the report."""
    profile.validate()
    results: List[ConfigResult] = []
    means: Dict[str, float] = {}
    for config in profile.configs:
        predicted = predict_throughput(profile, config)
        sim = simulate_policy(profile, config)
        fps_runs: List[float] = []
        lat: List[Tuple[float, float, float]] = []
        hist: Counter = Counter()
        failed = False
        for _rep in range(profile.repetitions):
            try:
                stats = run_live(profile, config, watchdog_s=watchdog_s)
            except PipelineError:
                failed = True
                break
            fps_runs.append(stats.fps)
            lat.append((stats.latency_ms_p50, stats.latency_ms_p95,
                        stats.latency_ms_p99))
            hist.update(stats.batch_hist)
        if failed or not fps_runs:
            results.append(ConfigResult(
                config=config, fps_runs=fps_runs, fps_mean=0.0, fps_min=0.0,
                fps_max=0.0, latency_ms_p50=0.0, latency_ms_p95=0.0,
                latency_ms_p99=0.0, predicted_fps=predicted,
                simulated_fps=sim.fps, live_vs_sim=0.0, live_vs_predicted=0.0,
                speedup_vs_baseline=None, batch_hist=dict(hist), failed=True,
            ))
            continue
        mean = float(np.mean(fps_runs))
        means[config.name] = mean
        baseline_mean = means.get(config.baseline) if config.baseline else None
        results.append(ConfigResult(
            config=config,
            fps_runs=fps_runs,
            fps_mean=mean,
            fps_min=float(np.min(fps_runs)),
            fps_max=float(np.max(fps_runs)),
            latency_ms_p50=float(np.mean([l[0] for l in lat])),
            latency_ms_p95=float(np.mean([l[1] for l in lat])),
            latency_ms_p99=float(np.mean([l[2] for l in lat])),
            predicted_fps=predicted,
            simulated_fps=sim.fps,
            live_vs_sim=(mean - sim.fps) / sim.fps if sim.fps else 0.0,
            live_vs_predicted=(mean - predicted) / predicted if predicted else 0.0,
            speedup_vs_baseline=(mean / baseline_mean if baseline_mean else None),
            batch_hist=dict(hist),
        ))
    report = BenchReport(profile=profile, results=results)
    if not quiet:
        print(format_table(report))
    if report_dir is not None:
        write_report(report, report_dir)
    return report


def format_table(report: BenchReport) -> str:
    header = (f"{'config':<18} {'mode':<11} {'batch':>5} {'fps':>9} {'min':>9} "
              f"{'max':>9} {'sim':>9} {'pred':>9} {'dev%':>7} {'speedup':>8}")
    lines = [f"profile: {report.profile.name} "
             f"({report.profile.frames} frames x {report.profile.repetitions} reps)",
             header, "-" * len(header)]
    for r in report.results:
        if r.failed:
            lines.append(f"{r.config.name:<18} {r.config.mode:<11} "
                         f"{_config_batch(report.profile, r.config):>5} "
                         f"{'FAILED':>9}")
            continue
        speedup = f"{r.speedup_vs_baseline:.2f}x" if r.speedup_vs_baseline else "-"
        lines.append(
            f"{r.config.name:<18} {r.config.mode:<11} "
            f"{_config_batch(report.profile, r.config):>5} "
            f"{r.fps_mean:>9.2f} {r.fps_min:>9.2f} {r.fps_max:>9.2f} "
            f"{r.simulated_fps:>9.2f} {r.predicted_fps:>9.2f} "
            f"{100 * r.live_vs_sim:>6.1f}% {speedup:>8}"
        )
    return "\n".join(lines)


def write_report(report: BenchReport, report_dir: Union[str, Path]) -> None:
    out = Path(report_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as f:
        json.dump(report.to_dict(), f, indent=2)
    with open(out / "report.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([
            "config", "mode", "scheduler", "batch_max", "failed",
            "fps_mean", "fps_min", "fps_max",
            "latency_ms_p50", "latency_ms_p95", "latency_ms_p99",
            "fps_simulated", "fps_predicted", "live_vs_sim",
            "speedup_vs_baseline",
        ])
        for r in report.results:
            writer.writerow([
                r.config.name, r.config.mode, r.config.scheduler,
                r.config.batch_max, r.failed,
                f"{r.fps_mean:.4f}", f"{r.fps_min:.4f}", f"{r.fps_max:.4f}",
                f"{r.latency_ms_p50:.4f}", f"{r.latency_ms_p95:.4f}",
                f"{r.latency_ms_p99:.4f}",
                f"{r.simulated_fps:.4f}", f"{r.predicted_fps:.4f}",
                f"{r.live_vs_sim:.4f}",
                f"{r.speedup_vs_baseline:.4f}" if r.speedup_vs_baseline else "",
            ])
    _render_figures(report, out)


def _render_figures(report: BenchReport, out: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ok = [r for r in report.results if not r.failed]
    if not ok:
        return
    names = [r.config.name for r in ok]
    x = np.arange(len(ok))

    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(ok), 4.0))
    means = [r.fps_mean for r in ok]
    err_lo = [r.fps_mean - r.fps_min for r in ok]
    err_hi = [r.fps_max - r.fps_mean for r in ok]
    ax.bar(x, means, width=0.55, color="#4878a8", yerr=[err_lo, err_hi],
           capsize=4, label="measured (mean, min-max)")
    ax.plot(x, [r.simulated_fps for r in ok], "D", color="#d1495b",
            label="simulated", markersize=7)
    ax.plot(x, [r.predicted_fps for r in ok], "_", color="#2f2f2f",
            label="analytic bound", markersize=18, markeredgewidth=2)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=15, ha="right")
    ax.set_ylabel("frames / s")
    ax.set_title(f"throughput: {report.profile.name}")
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(out / "fps_by_config.png", dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(ok), 4.0))
    width = 0.25
    for off, (attr, label) in enumerate([
        ("latency_ms_p50", "p50"), ("latency_ms_p95", "p95"),
        ("latency_ms_p99", "p99"),
    ]):
        ax.bar(x + (off - 1) * width, [getattr(r, attr) for r in ok],
               width=width, label=label)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=15, ha="right")
    ax.set_ylabel("ingest-to-sink latency (ms)")
    ax.set_title(f"latency percentiles: {report.profile.name}")
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(out / "latency_percentiles.png", dpi=120)
    plt.close(fig)
