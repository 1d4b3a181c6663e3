"""Adaptive batching in front of the inference stage.

The batch slot is owned by the inference worker and keeps the per-frame
latency / throughput trade-off automatic: when the inference stage is idle
an arriving item dispatches immediately (batch of one, zero added delay);
while the stage is busy in a backend call, arrivals accumulate in its input
channel and the next dispatch drains them as one batch, up to
``batch_max``.  An optional linger window keeps accumulating after the
first item for bursty sources.  At end-of-stream, whatever is pending is
flushed as a final batch so no frame is lost.

Worker parking is inherited from the channel layer: a waiting worker
sleeps on a condition variable and is notified on enqueue, so starved
stages cost no CPU.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple

from .dataflow import (
    END_OF_STREAM,
    NO_ITEM,
    Channel,
    OpContext,
    OperatorSpec,
    Packet,
)
from .errors import BackendError, ConfigError


@dataclass
class SchedulerPolicy:
    enabled: bool = True
    batch_max: int = 8
    linger_us: int = 0

    def validate(self, backend_max: Optional[int] = None) -> None:
        if self.batch_max < 1:
            raise ConfigError("batch_max must be >= 1")
        if self.linger_us < 0:
            raise ConfigError("linger_us must be >= 0")
        if backend_max is not None and self.batch_max > backend_max:
            raise ConfigError(
                f"batch_max {self.batch_max} exceeds backend max batch {backend_max}"
            )

    @property
    def effective_batch_max(self) -> int:
        return self.batch_max if self.enabled else 1


def accumulate_batch(ctx: OpContext, in_ch: Channel,
                     policy: SchedulerPolicy) -> Tuple[List[Any], bool]:
    """Collect the next batch from the input channel.

    Blocks for the first item (the stage is idle, so that item dispatches
    with whatever else is already queued); then drains without waiting up
    to ``batch_max``, or keeps waiting within the linger window when one
    is configured.  Returns (batch, saw_end); the batch is empty only when
    the stream ended with nothing pending.
    """
    first = ctx.recv(in_ch)
    if first is END_OF_STREAM:
        return [], True
    batch = [first]
    if not policy.enabled:
        return batch, False
    deadline = time.monotonic() + policy.linger_us / 1e6 if policy.linger_us else None
    while len(batch) < policy.batch_max:
        item = ctx.try_recv(in_ch)
        if item is NO_ITEM:
            if deadline is None:
                break
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            item = ctx.recv_timeout(in_ch, remaining)
            if item is NO_ITEM:
                break
        if item is END_OF_STREAM:
            return batch, True
        batch.append(item)
    return batch, False


def split_batch_results(outputs: Sequence[Any], batch: Sequence[Packet]) -> List[Packet]:
    """Re-wrap per-item backend outputs, preserving ascending seq order."""
    if len(outputs) != len(batch):
        seqs = [p.seq_id for p in batch]
        raise BackendError(
            f"backend returned {len(outputs)} outputs for batch of {len(batch)} "
            f"(seq_ids {seqs})"
        )
    for prev, cur in zip(batch, batch[1:]):
        if cur.seq_id <= prev.seq_id:
            raise BackendError(
                f"batch seq_ids not ascending: {prev.seq_id} then {cur.seq_id}"
            )
    return [
        Packet(seq_id=pkt.seq_id, ingest_ns=pkt.ingest_ns, payload=out)
        for pkt, out in zip(batch, outputs)
    ]


def make_batching_operator(
    name: str,
    backend_call: Callable[[Sequence[Packet]], Sequence[Any]],
    policy: SchedulerPolicy,
) -> OperatorSpec:
    """Transform operator that feeds the backend whole batches.

    ``backend_call`` maps a list of packets to one output payload per
    packet; downstream always observes items in ascending seq order, so
    results are identical for every batch_max and scheduler setting.
    """
    policy.validate()

    def runner(ctx: OpContext, in_ch: Channel, out_ch: Channel):
        while True:
            batch, saw_end = accumulate_batch(ctx, in_ch, policy)
            if batch:
                ctx.batch_hist[len(batch)] += 1
                outputs = ctx.timed(backend_call, batch)
                for pkt in split_batch_results(outputs, batch):
                    ctx.send(out_ch, pkt)
            if saw_end:
                out_ch.close()
                return

    def item_fn(pkt: Packet) -> Packet:
        return split_batch_results(backend_call([pkt]), [pkt])[0]

    return OperatorSpec(name=name, kind="transform", fn=item_fn, runner=runner)
