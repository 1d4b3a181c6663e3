"""Streaming execution engine.

Operators form a static linear chain connected by bounded FIFO channels.
Each operator runs on its own worker thread; producers block when their
output channel is full (backpressure, items are never dropped) and
consumers park on a condition variable when their input is empty, so an
idle pipeline burns no CPU.  End-of-stream is a channel state, not a
sentinel item: once the source closes its output, closure cascades down
the chain and ``run_pipeline`` returns after the sink drains.
"""

from __future__ import annotations

import sys
import threading
import time
from collections import Counter, deque
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Optional

import numpy as np

from .errors import ChannelClosed, ContractError, GraphError, PipelineError


class _Sentinel:
    __slots__ = ("_name",)

    def __init__(self, name):
        self._name = name

    def __repr__(self):
        return self._name


END_OF_STREAM = _Sentinel("END_OF_STREAM")
NO_ITEM = _Sentinel("NO_ITEM")  # returned by non-blocking/timed receives


@dataclass(frozen=True)
class Packet:
    """Envelope flowing through a pipeline: stream position, ingest time, payload."""

    seq_id: int
    ingest_ns: int
    payload: Any


class Channel:
    """Bounded FIFO for one producer and one consumer on distinct workers.

    ``send`` blocks while the channel is full and raises ChannelClosed once
    the channel is closed; ``receive`` blocks (parked, never spinning)
    while empty and returns END_OF_STREAM after close-and-drain.
    """

    def __init__(self, capacity: int, name: str = ""):
        if capacity < 1:
            raise GraphError(f"channel capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.name = name
        self._q: deque = deque()
        self._lock = threading.Lock()
        self._not_empty = threading.Condition(self._lock)
        self._not_full = threading.Condition(self._lock)
        self._closed = False
        # instrumentation (read after the run, or as monotone progress counters)
        self.send_parks = 0
        self.recv_parks = 0
        self.max_depth = 0
        self.total_items = 0
        self.depth_hist = [0] * (capacity + 1)

    def send(self, item: Any) -> None:
        with self._not_full:
            parked = False
            while len(self._q) >= self.capacity and not self._closed:
                if not parked:
                    self.send_parks += 1
                    parked = True
                self._not_full.wait()
            if self._closed:
                raise ChannelClosed(f"send on closed channel {self.name!r}")
            self._q.append(item)
            depth = len(self._q)
            self.total_items += 1
            if depth > self.max_depth:
                self.max_depth = depth
            self.depth_hist[depth] += 1
            self._not_empty.notify()

    def receive(self) -> Any:
        with self._not_empty:
            parked = False
            while not self._q and not self._closed:
                if not parked:
                    self.recv_parks += 1
                    parked = True
                self._not_empty.wait()
            if self._q:
                item = self._q.popleft()
                self._not_full.notify()
                return item
            return END_OF_STREAM

    def receive_timeout(self, timeout_s: float) -> Any:
        """Like receive, but gives up after ``timeout_s`` returning NO_ITEM."""
        deadline = time.monotonic() + timeout_s
        with self._not_empty:
            parked = False
            while not self._q and not self._closed:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return NO_ITEM
                if not parked:
                    self.recv_parks += 1
                    parked = True
                self._not_empty.wait(remaining)
            if self._q:
                item = self._q.popleft()
                self._not_full.notify()
                return item
            return END_OF_STREAM

    def try_receive(self) -> Any:
        """Non-blocking receive: item, NO_ITEM, or END_OF_STREAM."""
        with self._not_empty:
            if self._q:
                item = self._q.popleft()
                self._not_full.notify()
                return item
            return END_OF_STREAM if self._closed else NO_ITEM

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._not_empty.notify_all()
            self._not_full.notify_all()

    @property
    def depth(self) -> int:
        return len(self._q)


@dataclass
class OperatorSpec:
    """One stage of the chain.

    ``fn`` is the per-item callable (an iterator factory for sources); an
    operator may instead provide ``runner(ctx, in_ch, out_ch)`` to own its
    channel loop (used by the batching inference stage), in which case
    ``fn`` is the per-item equivalent used by sequential execution.
    """

    name: str
    kind: str  # "source" | "transform" | "sink"
    fn: Optional[Callable] = None
    runner: Optional[Callable] = None

    @staticmethod
    def source(name: str, make_iter: Callable[[], Iterator]) -> "OperatorSpec":
        return OperatorSpec(name=name, kind="source", fn=make_iter)

    @staticmethod
    def transform(name: str, fn: Callable[[Any], Any]) -> "OperatorSpec":
        return OperatorSpec(name=name, kind="transform", fn=fn)

    @staticmethod
    def sink(name: str, fn: Callable[[Any], None]) -> "OperatorSpec":
        return OperatorSpec(name=name, kind="sink", fn=fn)


@dataclass
class PipelineGraph:
    operators: List[OperatorSpec]
    channels: List[Channel]
    channel_capacity: int


@dataclass
class OpStats:
    name: str
    kind: str
    items_in: int = 0
    items_out: int = 0
    busy_ns: int = 0
    idle_ns: int = 0
    park_count: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class EdgeStats:
    upstream: str
    downstream: str
    capacity: int
    max_depth: int
    total_items: int
    depth_hist: List[int]

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class PipelineStats:
    ops: List[OpStats]
    edges: List[EdgeStats]
    frames_in: int
    frames_out: int
    wall_ns: int
    fps: float
    latency_ms_p50: float
    latency_ms_p95: float
    latency_ms_p99: float
    latency_ms_mean: float
    ordered: bool
    batch_hist: Dict[int, int]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "frames_in": self.frames_in,
            "frames_out": self.frames_out,
            "wall_s": self.wall_ns / 1e9,
            "fps": self.fps,
            "latency_ms": {
                "p50": self.latency_ms_p50,
                "p95": self.latency_ms_p95,
                "p99": self.latency_ms_p99,
                "mean": self.latency_ms_mean,
            },
            "ordered": self.ordered,
            "batch_hist": {str(k): v for k, v in sorted(self.batch_hist.items())},
            "operators": [o.to_dict() for o in self.ops],
            "edges": [e.to_dict() for e in self.edges],
        }


class OpContext:
    """Per-worker accounting plus timed channel helpers for runners."""

    def __init__(self, stats: OpStats):
        self.stats = stats
        self.batch_hist: Counter = Counter()

    def recv(self, ch: Channel) -> Any:
        t0 = time.monotonic_ns()
        item = ch.receive()
        self.stats.idle_ns += time.monotonic_ns() - t0
        if item is not END_OF_STREAM:
            self.stats.items_in += 1
        return item

    def recv_timeout(self, ch: Channel, timeout_s: float) -> Any:
        t0 = time.monotonic_ns()
        item = ch.receive_timeout(timeout_s)
        self.stats.idle_ns += time.monotonic_ns() - t0
        if item is not END_OF_STREAM and item is not NO_ITEM:
            self.stats.items_in += 1
        return item

    def try_recv(self, ch: Channel) -> Any:
        item = ch.try_receive()
        if item is not END_OF_STREAM and item is not NO_ITEM:
            self.stats.items_in += 1
        return item

    def send(self, ch: Channel, item: Any) -> None:
        t0 = time.monotonic_ns()
        ch.send(item)
        self.stats.idle_ns += time.monotonic_ns() - t0
        self.stats.items_out += 1

    def timed(self, fn: Callable, *args) -> Any:
        t0 = time.monotonic_ns()
        out = fn(*args)
        self.stats.busy_ns += time.monotonic_ns() - t0
        return out


def build_pipeline(channel_capacity: int, operators: List[OperatorSpec]) -> PipelineGraph:
    """Validate the chain and allocate its channels; no threads start here."""
    if not operators:
        raise GraphError("pipeline needs at least a source and a sink")
    names = [op.name for op in operators]
    if len(set(names)) != len(names):
        raise GraphError(f"duplicate operator names: {names}")
    sources = [op for op in operators if op.kind == "source"]
    sinks = [op for op in operators if op.kind == "sink"]
    if len(sources) != 1 or operators[0].kind != "source":
        raise GraphError("pipeline needs exactly one source, first in the chain")
    if len(sinks) != 1 or operators[-1].kind != "sink":
        raise GraphError("pipeline needs exactly one sink, last in the chain")
    for op in operators[1:-1]:
        if op.kind != "transform":
            raise GraphError(f"interior operator {op.name!r} must be a transform")
    channels = [
        Channel(channel_capacity, name=f"{operators[i].name}->{operators[i + 1].name}")
        for i in range(len(operators) - 1)
    ]
    return PipelineGraph(operators=list(operators), channels=channels,
                         channel_capacity=channel_capacity)


def _source_runner(ctx: OpContext, in_ch, out_ch: Channel, make_iter: Callable):
    it = iter(ctx.timed(make_iter))
    while True:
        t0 = time.monotonic_ns()
        try:
            item = next(it)
        except StopIteration:
            ctx.stats.busy_ns += time.monotonic_ns() - t0
            break
        ctx.stats.busy_ns += time.monotonic_ns() - t0
        ctx.send(out_ch, item)
    out_ch.close()


def _transform_runner(ctx: OpContext, in_ch: Channel, out_ch: Channel, fn: Callable):
    while True:
        item = ctx.recv(in_ch)
        if item is END_OF_STREAM:
            out_ch.close()
            return
        out = ctx.timed(fn, item)
        ctx.send(out_ch, out)


class _SinkRecorder:
    """Sink-side frame accounting: order check and ingest-to-sink latency."""

    def __init__(self):
        self.last_seq = -1
        self.ordered = True
        self.latencies_ns: List[int] = []

    def record(self, item: Any) -> None:
        if isinstance(item, Packet):
            if item.seq_id <= self.last_seq:
                self.ordered = False
            self.last_seq = item.seq_id
            self.latencies_ns.append(time.monotonic_ns() - item.ingest_ns)


def _sink_runner(ctx: OpContext, in_ch: Channel, out_ch, fn: Callable,
                 recorder: _SinkRecorder):
    while True:
        item = ctx.recv(in_ch)
        if item is END_OF_STREAM:
            return
        ctx.timed(fn, item)
        recorder.record(item)


class _Monitor(threading.Thread):
    """Once-a-second progress line on stderr."""

    def __init__(self, graph: PipelineGraph, sink_stats: OpStats, done: threading.Event):
        super().__init__(name="poseflow-progress", daemon=True)
        self.graph = graph
        self.sink_stats = sink_stats
        self.done = done

    def run(self):
        started = time.monotonic()
        while not self.done.wait(1.0):
            frames = self.sink_stats.items_in
            elapsed = time.monotonic() - started
            fps = frames / elapsed if elapsed > 0 else 0.0
            depths = ",".join(str(ch.depth) for ch in self.graph.channels)
            print(f"frames={frames} fps={fps:.1f} depth={depths}",
                  file=sys.stderr, flush=True)


def _percentile(values_ms: List[float], q: float) -> float:
    if not values_ms:
        return 0.0
    return float(np.percentile(np.asarray(values_ms), q))


def run_pipeline(graph: PipelineGraph, watchdog_s: Optional[float] = None,
                 progress: bool = False) -> PipelineStats:
    """Run the chain to completion; one worker thread per operator.

    Every ingested frame reaches the sink exactly once and in seq order.
    An operator failure aborts the run: all channels are closed so blocked
    workers unwind, every worker is joined, and a PipelineError naming the
    operator is raised (with partial stats attached).  The optional
    watchdog aborts runs that fail to drain in time.
    """
    ops = graph.operators
    op_stats = [OpStats(name=op.name, kind=op.kind) for op in ops]
    contexts = [OpContext(s) for s in op_stats]
    recorder = _SinkRecorder()
    errors: List[tuple] = []
    errors_lock = threading.Lock()
    done = threading.Event()

    def abort():
        for ch in graph.channels:
            ch.close()

    def make_worker(idx: int):
        op = ops[idx]
        ctx = contexts[idx]
        in_ch = graph.channels[idx - 1] if idx > 0 else None
        out_ch = graph.channels[idx] if idx < len(graph.channels) else None

        def work():
            try:
                if op.runner is not None:
                    op.runner(ctx, in_ch, out_ch)
                elif op.kind == "source":
                    _source_runner(ctx, in_ch, out_ch, op.fn)
                elif op.kind == "transform":
                    _transform_runner(ctx, in_ch, out_ch, op.fn)
                else:
                    _sink_runner(ctx, in_ch, out_ch, op.fn, recorder)
            except ChannelClosed:
                pass  # normal unwind during an abort
            except Exception as exc:  # noqa: BLE001 - reported via PipelineError
                with errors_lock:
                    errors.append((op.name, exc))
                abort()

        return threading.Thread(target=work, name=f"poseflow-{op.name}", daemon=True)

    watchdog_fired = threading.Event()

    def watchdog():
        if not done.wait(watchdog_s):
            watchdog_fired.set()
            abort()

    t_start = time.monotonic_ns()
    workers = [make_worker(i) for i in range(len(ops))]
    for w in workers:
        w.start()
    wd_thread = None
    if watchdog_s is not None:
        wd_thread = threading.Thread(target=watchdog, name="poseflow-watchdog", daemon=True)
        wd_thread.start()
    monitor = None
    if progress:
        monitor = _Monitor(graph, op_stats[-1], done)
        monitor.start()

    for w in workers:
        w.join()
    done.set()
    wall_ns = time.monotonic_ns() - t_start
    if wd_thread is not None:
        wd_thread.join()
    if monitor is not None:
        monitor.join()

    for idx, ch in enumerate(graph.channels):
        op_stats[idx].park_count += ch.send_parks
        op_stats[idx + 1].park_count += ch.recv_parks
    edge_stats = [
        EdgeStats(
            upstream=ops[i].name, downstream=ops[i + 1].name,
            capacity=ch.capacity, max_depth=ch.max_depth,
            total_items=ch.total_items, depth_hist=list(ch.depth_hist),
        )
        for i, ch in enumerate(graph.channels)
    ]
    lat_ms = [ns / 1e6 for ns in recorder.latencies_ns]
    frames_out = op_stats[-1].items_in
    batch_hist: Dict[int, int] = {}
    for ctx in contexts:
        for size, count in ctx.batch_hist.items():
            batch_hist[size] = batch_hist.get(size, 0) + count
    stats = PipelineStats(
        ops=op_stats,
        edges=edge_stats,
        frames_in=op_stats[0].items_out,
        frames_out=frames_out,
        wall_ns=wall_ns,
        fps=frames_out / (wall_ns / 1e9) if wall_ns > 0 else 0.0,
        latency_ms_p50=_percentile(lat_ms, 50),
        latency_ms_p95=_percentile(lat_ms, 95),
        latency_ms_p99=_percentile(lat_ms, 99),
        latency_ms_mean=float(np.mean(lat_ms)) if lat_ms else 0.0,
        ordered=recorder.ordered,
        batch_hist=batch_hist,
    )
    if watchdog_fired.is_set():
        raise PipelineError(
            f"pipeline failed to drain within {watchdog_s}s watchdog",
            op_name="watchdog", stats=stats,
        )
    if errors:
        name, cause = errors[0]
        raise PipelineError(f"operator {name!r} failed: {cause}",
                            op_name=name, stats=stats) from cause
    return stats


def run_sequential(graph: PipelineGraph) -> PipelineStats:
    """Execute the same chain one item at a time on the calling thread.

    The unpipelined baseline: per-frame cost is the sum of all stage
    costs, so throughput is ``1 / sum(stage times)``.
    """
    ops = graph.operators
    op_stats = [OpStats(name=op.name, kind=op.kind) for op in ops]
    recorder = _SinkRecorder()
    t_start = time.monotonic_ns()
    source_iter = ops[0].fn()
    for item in source_iter:
        op_stats[0].items_out += 1
        for idx, op in enumerate(ops[1:], start=1):
            op_stats[idx].items_in += 1
            if op.kind == "sink":
                op.fn(item)
                recorder.record(item)
            else:
                if op.fn is None:
                    raise ContractError(
                        f"operator {op.name!r} has no per-item fn for sequential mode"
                    )
                item = op.fn(item)
                op_stats[idx].items_out += 1
    wall_ns = time.monotonic_ns() - t_start
    lat_ms = [ns / 1e6 for ns in recorder.latencies_ns]
    frames_out = op_stats[-1].items_in
    return PipelineStats(
        ops=op_stats,
        edges=[],
        frames_in=op_stats[0].items_out,
        frames_out=frames_out,
        wall_ns=wall_ns,
        fps=frames_out / (wall_ns / 1e9) if wall_ns > 0 else 0.0,
        latency_ms_p50=_percentile(lat_ms, 50),
        latency_ms_p95=_percentile(lat_ms, 95),
        latency_ms_p99=_percentile(lat_ms, 99),
        latency_ms_mean=float(np.mean(lat_ms)) if lat_ms else 0.0,
        ordered=recorder.ordered,
        batch_hist={},
    )
