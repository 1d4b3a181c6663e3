import threading
import time

import pytest

from poseflow.dataflow import (
    END_OF_STREAM,
    Channel,
    OperatorSpec,
    OpContext,
    OpStats,
    Packet,
    build_pipeline,
    run_pipeline,
)
from poseflow.errors import BackendError, ConfigError, PipelineError
from poseflow.scheduler import (
    SchedulerPolicy,
    accumulate_batch,
    make_batching_operator,
    split_batch_results,
)


def ctx():
    return OpContext(OpStats(name="test", kind="transform"))


def pkt(seq):
    return Packet(seq_id=seq, ingest_ns=0, payload=seq)


class TestAccumulateBatch:
    def test_idle_dispatch_is_immediate_batch_of_one(self):
        ch = Channel(16)
        ch.send(pkt(0))
        batch, end = accumulate_batch(ctx(), ch, SchedulerPolicy(batch_max=8))
        assert [p.seq_id for p in batch] == [0]
        assert not end

    def test_accumulates_while_busy(self):
        # items queued during a 20ms backend call come out as one batch
        ch = Channel(16)
        ch.send(pkt(0))
        policy = SchedulerPolicy(batch_max=8)
        c = ctx()
        first, _ = accumulate_batch(c, ch, policy)
        assert len(first) == 1
        time.sleep(0.02)  # "busy" in the backend
        for seq in range(1, 5):
            ch.send(pkt(seq))
        batch, end = accumulate_batch(c, ch, policy)
        assert [p.seq_id for p in batch] == [1, 2, 3, 4]
        assert not end

    def test_batch_max_respected(self):
        ch = Channel(32)
        for seq in range(20):
            ch.send(pkt(seq))
        batch, _ = accumulate_batch(ctx(), ch, SchedulerPolicy(batch_max=8))
        assert len(batch) == 8

    def test_disabled_policy_always_single(self):
        ch = Channel(32)
        for seq in range(5):
            ch.send(pkt(seq))
        batch, _ = accumulate_batch(ctx(), ch, SchedulerPolicy(enabled=False, batch_max=8))
        assert len(batch) == 1

    def test_end_of_stream_flushes_partial(self):
        ch = Channel(16)
        ch.send(pkt(0))
        ch.send(pkt(1))
        ch.close()
        batch, end = accumulate_batch(ctx(), ch, SchedulerPolicy(batch_max=8))
        assert [p.seq_id for p in batch] == [0, 1]
        assert end

    def test_empty_stream(self):
        ch = Channel(4)
        ch.close()
        batch, end = accumulate_batch(ctx(), ch, SchedulerPolicy())
        assert batch == [] and end

    def test_linger_collects_bursty_arrivals(self):
        ch = Channel(16)
        policy = SchedulerPolicy(batch_max=4, linger_us=200_000)

        def producer():
            for seq in range(4):
                ch.send(pkt(seq))
                time.sleep(0.02)

        t = threading.Thread(target=producer)
        t.start()
        batch, _ = accumulate_batch(ctx(), ch, policy)
        t.join()
        assert len(batch) == 4

    def test_linger_deadline_expires(self):
        ch = Channel(16)
        ch.send(pkt(0))
        policy = SchedulerPolicy(batch_max=4, linger_us=30_000)
        t0 = time.monotonic()
        batch, _ = accumulate_batch(ctx(), ch, policy)
        elapsed = time.monotonic() - t0
        assert len(batch) == 1
        assert 0.02 <= elapsed < 0.5


class TestSplitBatchResults:
    def test_order_preserved(self):
        batch = [pkt(5), pkt(6), pkt(7)]
        out = split_batch_results(["a", "b", "c"], batch)
        assert [(p.seq_id, p.payload) for p in out] == [(5, "a"), (6, "b"), (7, "c")]

    def test_count_mismatch(self):
        with pytest.raises(BackendError, match="2 outputs for batch of 3"):
            split_batch_results(["a", "b"], [pkt(0), pkt(1), pkt(2)])

    def test_non_ascending_batch_rejected(self):
        with pytest.raises(BackendError, match="ascending"):
            split_batch_results(["a", "b"], [pkt(3), pkt(2)])


class TestPolicy:
    def test_batch_max_validated_against_backend(self):
        with pytest.raises(ConfigError, match="backend"):
            SchedulerPolicy(batch_max=64).validate(backend_max=32)

    def test_effective_batch(self):
        assert SchedulerPolicy(enabled=False, batch_max=8).effective_batch_max == 1
        assert SchedulerPolicy(enabled=True, batch_max=8).effective_batch_max == 8


def run_batched_pipeline(n_frames, policy, backend_delay_s=0.0, record_batches=None):
    seqs = []

    def backend_call(batch):
        if record_batches is not None:
            record_batches.append(len(batch))
        if backend_delay_s:
            time.sleep(backend_delay_s)
        return [p.payload for p in batch]

    def gen():
        for seq in range(n_frames):
            yield Packet(seq_id=seq, ingest_ns=time.monotonic_ns(), payload=seq)

    ops = [
        OperatorSpec.source("src", gen),
        make_batching_operator("inference", backend_call, policy),
        OperatorSpec.sink("sink", lambda p: seqs.append(p.seq_id)),
    ]
    stats = run_pipeline(build_pipeline(8, ops), watchdog_s=30)
    return seqs, stats


class TestBatchingOperator:
    def test_sink_sequence_invariant_across_batch_sizes(self):
        base, _ = run_batched_pipeline(1000, SchedulerPolicy(enabled=False, batch_max=1))
        for batch_max in (2, 8):
            got, _ = run_batched_pipeline(
                1000, SchedulerPolicy(enabled=True, batch_max=batch_max),
                backend_delay_s=0.0005,
            )
            assert got == base == list(range(1000))

    def test_batches_grow_under_busy_backend(self):
        sizes = []
        _, stats = run_batched_pipeline(
            200, SchedulerPolicy(enabled=True, batch_max=8),
            backend_delay_s=0.005, record_batches=sizes,
        )
        assert max(sizes) > 1  # accumulation happened
        assert sum(sizes) == 200
        assert stats.batch_hist and max(stats.batch_hist) <= 8

    def test_disabled_scheduler_never_batches(self):
        sizes = []
        run_batched_pipeline(
            100, SchedulerPolicy(enabled=False, batch_max=8),
            backend_delay_s=0.002, record_batches=sizes,
        )
        assert set(sizes) == {1}

    def test_backend_count_mismatch_aborts_pipeline(self):
        def bad_backend(batch):
            return [p.payload for p in batch[:-1]] if len(batch) > 1 else [batch[0].payload]

        def gen():
            for seq in range(50):
                yield Packet(seq_id=seq, ingest_ns=0, payload=seq)

        ops = [
            OperatorSpec.source("src", gen),
            make_batching_operator("inference", bad_backend,
                                   SchedulerPolicy(enabled=True, batch_max=4)),
            OperatorSpec.sink("sink", lambda p: time.sleep(0.002)),
        ]
        with pytest.raises(PipelineError) as excinfo:
            run_pipeline(build_pipeline(8, ops), watchdog_s=10)
        assert excinfo.value.op_name == "inference"
        assert isinstance(excinfo.value.__cause__, BackendError)


class TestParkNotify:
    def test_notification_latency_under_1ms(self):
        ch = Channel(4)
        wakeups = []

        def consumer():
            for _ in range(50):
                item = ch.receive()
                wakeups.append((time.monotonic_ns() - item) / 1e6)

        t = threading.Thread(target=consumer)
        t.start()
        for _ in range(50):
            time.sleep(0.005)  # let the consumer park
            ch.send(time.monotonic_ns())
        ch.close()
        t.join()
        wakeups.sort()
        assert wakeups[len(wakeups) // 2] < 1.0  # median handoff < 1ms

    def test_park_notify_storm_no_lost_wakeups(self):
        ch = Channel(1)
        n = 100_000
        count = [0]

        def consumer():
            while True:
                item = ch.receive()
                if item is END_OF_STREAM:
                    return
                count[0] += 1

        t = threading.Thread(target=consumer)
        t.start()
        for i in range(n):
            ch.send(i)
        ch.close()
        t.join()
        assert count[0] == n

    def test_starved_pipeline_low_cpu(self):
        def gen():
            for seq in range(8):
                time.sleep(0.1)
                yield Packet(seq_id=seq, ingest_ns=time.monotonic_ns(), payload=seq)

        ops = [
            OperatorSpec.source("src", gen),
            OperatorSpec.transform("t1", lambda p: p),
            OperatorSpec.transform("t2", lambda p: p),
            OperatorSpec.sink("sink", lambda p: None),
        ]
        cpu0 = time.process_time()
        wall0 = time.monotonic()
        run_pipeline(build_pipeline(4, ops), watchdog_s=30)
        cpu = time.process_time() - cpu0
        wall = time.monotonic() - wall0
        assert cpu / wall < 0.15
