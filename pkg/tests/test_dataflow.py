import threading
import time

import pytest

from poseflow.dataflow import (
    END_OF_STREAM,
    NO_ITEM,
    Channel,
    OperatorSpec,
    Packet,
    build_pipeline,
    run_pipeline,
    run_sequential,
)
from poseflow.errors import ChannelClosed, GraphError, PipelineError


def packet_source(n, latency_s=0.0, name="src"):
    def gen():
        for seq in range(n):
            if latency_s:
                time.sleep(latency_s)
            yield Packet(seq_id=seq, ingest_ns=time.monotonic_ns(), payload=seq)

    return OperatorSpec.source(name, gen)


def identity(name):
    return OperatorSpec.transform(name, lambda p: p)


def sleeper(name, delay_s):
    def fn(p):
        time.sleep(delay_s)
        return p

    return OperatorSpec.transform(name, fn)


class TestChannel:
    def test_send_receive_fifo(self):
        ch = Channel(4)
        for i in range(4):
            ch.send(i)
        assert [ch.receive() for _ in range(4)] == [0, 1, 2, 3]

    def test_send_blocks_when_full(self):
        ch = Channel(1)
        ch.send(0)
        started = time.monotonic()
        release_at = started + 0.2

        def consumer():
            while time.monotonic() < release_at:
                time.sleep(0.01)
            ch.receive()

        t = threading.Thread(target=consumer)
        t.start()
        ch.send(1)  # must block until the consumer frees a slot
        elapsed = time.monotonic() - started
        t.join()
        assert elapsed >= 0.15
        assert ch.send_parks >= 1

    def test_receive_blocks_until_send(self):
        ch = Channel(1)
        got = []

        def producer():
            time.sleep(0.1)
            ch.send(42)

        t = threading.Thread(target=producer)
        t.start()
        t0 = time.monotonic()
        got.append(ch.receive())
        assert time.monotonic() - t0 >= 0.05
        t.join()
        assert got == [42]

    def test_closed_empty_returns_end(self):
        ch = Channel(2)
        ch.close()
        assert ch.receive() is END_OF_STREAM

    def test_drain_then_end(self):
        ch = Channel(2)
        ch.send("a")
        ch.close()
        assert ch.receive() == "a"
        assert ch.receive() is END_OF_STREAM

    def test_send_on_closed_raises(self):
        ch = Channel(2)
        ch.close()
        with pytest.raises(ChannelClosed):
            ch.send(1)

    def test_try_receive(self):
        ch = Channel(2)
        assert ch.try_receive() is NO_ITEM
        ch.send(1)
        assert ch.try_receive() == 1
        ch.close()
        assert ch.try_receive() is END_OF_STREAM

    def test_receive_timeout(self):
        ch = Channel(2)
        t0 = time.monotonic()
        assert ch.receive_timeout(0.05) is NO_ITEM
        assert time.monotonic() - t0 >= 0.04

    def test_order_over_many_items(self):
        ch = Channel(16)
        n = 100_000
        seen = []

        def consumer():
            while True:
                item = ch.receive()
                if item is END_OF_STREAM:
                    return
                seen.append(item)

        t = threading.Thread(target=consumer)
        t.start()
        for i in range(n):
            ch.send(i)
        ch.close()
        t.join()
        assert seen == list(range(n))
        assert ch.max_depth <= ch.capacity

    def test_parked_receiver_uses_no_cpu(self):
        ch = Channel(1)
        t = threading.Thread(target=ch.receive)
        cpu0 = time.process_time()
        t.start()
        time.sleep(1.0)
        cpu = time.process_time() - cpu0
        ch.close()
        t.join()
        assert cpu < 0.01  # <1% of the 1s idle window

    def test_capacity_must_be_positive(self):
        with pytest.raises(GraphError):
            Channel(0)


class TestBuildPipeline:
    def test_standard_five_operator_chain(self):
        ops = [
            packet_source(10, name="decode"),
            identity("resize"),
            identity("infer"),
            identity("parse"),
            OperatorSpec.sink("visualize", lambda p: None),
        ]
        graph = build_pipeline(8, ops)
        assert len(graph.channels) == 4
        assert [op.name for op in graph.operators] == [
            "decode", "resize", "infer", "parse", "visualize"
        ]

    def test_empty_chain(self):
        with pytest.raises(GraphError):
            build_pipeline(8, [])

    def test_two_sinks(self):
        ops = [
            packet_source(1),
            OperatorSpec.sink("s1", lambda p: None),
            OperatorSpec.sink("s2", lambda p: None),
        ]
        with pytest.raises(GraphError):
            build_pipeline(8, ops)

    def test_duplicate_names(self):
        ops = [
            packet_source(1, name="x"),
            identity("x"),
            OperatorSpec.sink("sink", lambda p: None),
        ]
        with pytest.raises(GraphError):
            build_pipeline(8, ops)

    def test_source_must_lead(self):
        ops = [identity("t"), OperatorSpec.sink("s", lambda p: None)]
        with pytest.raises(GraphError):
            build_pipeline(8, ops)


class TestRunPipeline:
    def test_zero_frames(self):
        received = []
        ops = [
            packet_source(0),
            identity("t"),
            OperatorSpec.sink("sink", received.append),
        ]
        stats = run_pipeline(build_pipeline(4, ops), watchdog_s=10)
        assert received == []
        assert all(o.items_out == 0 for o in stats.ops[:-1])
        assert stats.frames_in == stats.frames_out == 0

    def test_thousand_frames_ordered(self):
        seqs = []
        ops = [
            packet_source(1000),
            identity("a"),
            identity("b"),
            OperatorSpec.sink("sink", lambda p: seqs.append(p.seq_id)),
        ]
        stats = run_pipeline(build_pipeline(8, ops), watchdog_s=30)
        assert seqs == list(range(1000))
        assert stats.ordered
        assert stats.frames_in == stats.frames_out == 1000
        # conservation between adjacent stages
        for upstream, downstream in zip(stats.ops, stats.ops[1:]):
            assert upstream.items_out == downstream.items_in
        for edge in stats.edges:
            assert edge.max_depth <= edge.capacity

    def test_failing_operator_aborts_with_name(self):
        def boom(p):
            if p.seq_id == 5:
                raise ValueError("bad frame")
            return p

        ops = [
            packet_source(100),
            OperatorSpec.transform("exploder", boom),
            OperatorSpec.sink("sink", lambda p: None),
        ]
        with pytest.raises(PipelineError) as excinfo:
            run_pipeline(build_pipeline(4, ops), watchdog_s=10)
        assert excinfo.value.op_name == "exploder"
        assert isinstance(excinfo.value.__cause__, ValueError)
        stats = excinfo.value.stats
        assert stats is not None
        # after abort every ingested frame is emitted, in flight, or was held
        # by a worker when it unwound; none can appear out of thin air
        in_flight = sum(e.capacity for e in stats.edges) + len(stats.ops)
        assert stats.frames_out <= stats.frames_in <= stats.frames_out + in_flight

    def test_watchdog_aborts_stuck_pipeline(self):
        ops = [
            packet_source(50),
            sleeper("slow", 0.1),
            OperatorSpec.sink("sink", lambda p: None),
        ]
        with pytest.raises(PipelineError) as excinfo:
            run_pipeline(build_pipeline(4, ops), watchdog_s=0.3)
        assert excinfo.value.op_name == "watchdog"

    def test_bottleneck_throughput_and_io_masking(self):
        # stage latencies 3/6/9 ms: pipelined rate ~ 1 / 9ms
        def build(src_latency):
            return build_pipeline(8, [
                packet_source(120, latency_s=src_latency),
                sleeper("a", 0.003),
                sleeper("b", 0.006),
                sleeper("c", 0.009),
                OperatorSpec.sink("sink", lambda p: None),
            ])

        fast = run_pipeline(build(0.0), watchdog_s=30)
        assert fast.fps == pytest.approx(111.1, rel=0.25)
        masked = run_pipeline(build(0.005), watchdog_s=30)
        assert abs(masked.fps - fast.fps) / fast.fps <= 0.10

    def test_interior_must_be_transform(self):
        ops = [
            packet_source(1),
            OperatorSpec.sink("mid", lambda p: None),
            OperatorSpec.sink("sink", lambda p: None),
        ]
        with pytest.raises(GraphError):
            build_pipeline(4, ops)

    def test_progress_line_format(self, capfd):
        ops = [
            packet_source(20, latency_s=0.06),
            OperatorSpec.sink("sink", lambda p: None),
        ]
        run_pipeline(build_pipeline(4, ops), watchdog_s=30, progress=True)
        err = capfd.readouterr().err
        lines = [l for l in err.splitlines() if l.startswith("frames=")]
        assert lines, err
        assert all(" fps=" in l and " depth=" in l for l in lines)


class TestRunSequential:
    def test_matches_sum_of_stages(self):
        graph = build_pipeline(4, [
            packet_source(60),
            sleeper("a", 0.003),
            sleeper("b", 0.006),
            OperatorSpec.sink("sink", lambda p: None),
        ])
        stats = run_sequential(graph)
        assert stats.frames_out == 60
        assert stats.fps == pytest.approx(1000 / 9.0, rel=0.25)

    def test_latency_recorded(self):
        graph = build_pipeline(4, [
            packet_source(20),
            sleeper("a", 0.002),
            OperatorSpec.sink("sink", lambda p: None),
        ])
        stats = run_sequential(graph)
        assert stats.latency_ms_p50 >= 1.5
