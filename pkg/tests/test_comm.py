import struct
import threading

import numpy as np
import pytest

from newton_admm.admm import AdmmCoordinator, StoppingConfig
from newton_admm.baselines import SgdConfig, sync_sgd
from newton_admm.comm import (CONTROL, GATHER, HEADER, SCATTER, VERSION, Envelope,
                              InProcessTransport, TcpTransport, admm_messages, decode_vectors,
                              encode_vectors, message_count_per_iteration, recv_frame,
                              serve_worker, sgd_messages, sgd_steps_per_epoch, tcp_loopback)
from newton_admm.data import PartitionPlan, SyntheticSpec, generate_synthetic, partition
from newton_admm.errors import ProtocolError, TransportError
from newton_admm.workers import AdmmWorker, SgdWorker, SoftmaxShard


class Echo:
    """Returns z as x; optionally tags replies with a fixed (wrong) iteration."""

    def __init__(self, worker_id, tag_offset=0, fail=False):
        self.worker_id = worker_id
        self.tag_offset = tag_offset
        self.fail = fail
        self.received = []

    def handle(self, env):
        if self.fail:
            raise RuntimeError("boom")
        self.received.append(env)
        return Envelope.gather(env.iteration + self.tag_offset, self.worker_id, env.z, [1, 0, 0])


def scatter_all(transport, k, d=3):
    transport.scatter([Envelope.scatter(k, i, np.full(d, i + 0.5), np.zeros(d), 1.0)
                       for i in range(transport.n_workers)])


# --------------------------------------------------------------- codec

VALUES = [0.1, -3.5e300, 7.0, 5e-324, -0.0, np.inf, np.nan, np.finfo(float).max]


def test_vector_codec_bit_exact():
    v = np.array(VALUES)
    (back,) = decode_vectors(encode_vectors([v]))
    assert back.tobytes() == v.tobytes()


def test_frame_layout():
    env = Envelope.scatter(7, 3, [1.0, 2.0], [3.0, 4.0], 0.5)
    frame = env.to_bytes()
    version, kind, it, wid, length = HEADER.unpack(frame[:HEADER.size])
    assert (version, kind, it, wid) == (VERSION, SCATTER, 7, 3)
    assert length == len(frame) - HEADER.size == 4 + 3 * 8 + 8 * 5
    assert struct.unpack_from("<I", frame, HEADER.size)[0] == 3


@pytest.mark.parametrize("env", [
    Envelope.scatter(1, 0, [0.1, -3.5e300, 7.0], [1.0, 2.0, 3.0], 2.5),
    Envelope.gather(4, 2, np.linspace(-1, 1, 9), [3, 17, 5]),
    Envelope.make_control("register", 5, answer=42),
])
def test_envelope_round_trip(env):
    back = Envelope.from_bytes(env.to_bytes())
    assert (back.kind, back.iteration, back.worker_id) == (env.kind, env.iteration, env.worker_id)
    assert back.control == env.control
    for a, b in zip(back.vectors, env.vectors):
        assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("mutate,msg", [
    (lambda f: bytes([9]) + f[1:], "version"),
    (lambda f: f[:1] + bytes([8]) + f[2:], "kind"),
    (lambda f: f[:-8], "length"),
    (lambda f: f[:5], "shorter"),
])
def test_malformed_frames(mutate, msg):
    frame = Envelope.scatter(1, 0, [1.0], [2.0], 1.0).to_bytes()
    with pytest.raises(ProtocolError, match=msg):
        Envelope.from_bytes(mutate(frame))


def test_vector_payload_truncated_length_header():
    payload = struct.pack("<IQ", 1, 5) + b"\0" * 16
    with pytest.raises(ProtocolError):
        decode_vectors(payload)


def test_envelope_immutable():
    env = Envelope.gather(0, 0, [1.0])
    with pytest.raises(AttributeError):
        env.iteration = 3


# ------------------------------------------------------------ in-process

def test_inprocess_single_mailbox():
    w = Echo(0)
    t = InProcessTransport([w])
    scatter_all(t, 0)
    assert len(t.mailboxes[0]) == 1
    out = t.gather(0)
    assert len(out) == 1 and t.stats.rounds == 1 and len(w.received) == 1


def test_scatter_counts_messages():
    t = InProcessTransport([Echo(i) for i in range(4)])
    scatter_all(t, 0)
    assert t.stats.messages_sent == 4
    t.gather(0)
    assert t.stats.messages_sent == 8


def test_gather_sorted_by_id():
    t = InProcessTransport([Echo(i) for i in range(3)])
    scatter_all(t, 0)
    assert [env.worker_id for env in t.gather(0)] == [0, 1, 2]


def test_stale_envelope_rejected():
    t = InProcessTransport([Echo(0), Echo(1, tag_offset=-1)])
    scatter_all(t, 5)
    with pytest.raises(ProtocolError, match="stale"):
        t.gather(5)


def test_scatter_requires_one_per_worker():
    t = InProcessTransport([Echo(0), Echo(1)])
    with pytest.raises(ProtocolError):
        t.scatter([Envelope.scatter(0, 0, [1.0], [0.0], 1.0)])


def test_double_scatter_rejected():
    t = InProcessTransport([Echo(0)])
    scatter_all(t, 0)
    with pytest.raises(ProtocolError):
        scatter_all(t, 1)


def test_gather_wrong_iteration():
    t = InProcessTransport([Echo(0)])
    scatter_all(t, 0)
    with pytest.raises(ProtocolError):
        t.gather(1)


def test_message_count_helpers():
    assert admm_messages(4, 10) == 80
    assert admm_messages(1, 1) == 2
    assert sgd_steps_per_epoch(1000, 100, 2) == 5
    assert sgd_messages(2, 1000, 100) == 20


# ------------------------------------------------------------------ TCP

def test_tcp_round_trip_bit_exact():
    workers = [Echo(0), Echo(1)]
    t = tcp_loopback(workers, timeout=10)
    try:
        v = np.array([0.1, -3.5e300, 7.0])
        t.scatter([Envelope.scatter(0, i, v, v, 1.0) for i in range(2)])
        out = t.gather(0)
    finally:
        t.close()
    for env in out:
        assert env.x.tobytes() == v.tobytes()
    assert workers[1].received[0].z.tobytes() == v.tobytes()
    assert t.stats.messages_sent == 4 and t.stats.rounds == 1


def test_tcp_gather_timeout_names_missing_worker():
    t = TcpTransport(2, timeout=0.5)
    host, port = t.address

    class Silent(Echo):
        def handle(self, env):
            threading.Event().wait(2.0)
            return super().handle(env)

    threads = [threading.Thread(target=serve_worker, args=(h, host, port, i, 5), daemon=True)
               for i, h in enumerate([Echo(0), Silent(1)])]
    for th in threads:
        th.start()
    t.accept_workers()
    try:
        scatter_all(t, 0)
        with pytest.raises(TransportError, match=r"\[1\]"):
            t.gather(0)
    finally:
        t.close()


def test_tcp_worker_error_propagates():
    t = tcp_loopback([Echo(0), Echo(1, fail=True)], timeout=10)
    try:
        scatter_all(t, 0)
        with pytest.raises(TransportError, match="worker 1 failed"):
            t.gather(0)
    finally:
        t.close()


def test_tcp_register_timeout():
    t = TcpTransport(1, timeout=0.3)
    try:
        with pytest.raises(TransportError, match=r"\[0\]"):
            t.accept_workers()
    finally:
        t.close()


def test_unreachable_coordinator():
    with pytest.raises(TransportError):
        serve_worker(Echo(0), "127.0.0.1", 1, 0, timeout=0.3)


# ------------------------------------------------------- run accounting

def small_problem(n=2000):
    train, _ = generate_synthetic(SyntheticSpec(n=n, p=5, num_classes=3, separation=5.0,
                                                noise=1.0, seed=1))
    return train


@pytest.mark.parametrize("N", [1, 2, 4])
def test_admm_two_n_messages_per_iteration(N):
    train = small_problem()
    parts = partition(train, PartitionPlan(N))
    t = InProcessTransport([AdmmWorker(i, p) for i, p in enumerate(parts)])
    res = AdmmCoordinator(t, train.d, 1e-5, stopping=StoppingConfig(max_outer_iters=10)).run()
    assert len(res.history) == 10
    assert t.stats.rounds == 10
    assert t.stats.messages_sent == 2 * N * 10
    assert message_count_per_iteration(t.stats) == 2 * N


def test_sgd_message_count():
    train = small_problem(1000)
    N, m = 2, 100
    parts = partition(train, PartitionPlan(N))
    steps = sgd_steps_per_epoch(train.n, m, N)
    t = InProcessTransport([SgdWorker(i, SoftmaxShard(p), m, steps) for i, p in enumerate(parts)])
    sync_sgd(t, np.zeros(train.d), SgdConfig(0.1, m, 1), train.n)
    assert t.stats.messages_sent == sgd_messages(N, train.n, m) == 2 * N * steps
    assert message_count_per_iteration(t.stats, steps) == 2 * N * steps


def test_transports_agree_bitwise():
    train = small_problem(1200)
    parts = partition(train, PartitionPlan(3))
    results = []
    for make in (InProcessTransport, lambda ws: tcp_loopback(ws, timeout=20)):
        t = make([AdmmWorker(i, p) for i, p in enumerate(parts)])
        try:
            res = AdmmCoordinator(t, train.d, 1e-5, stopping=StoppingConfig(max_outer_iters=8)).run()
        finally:
            t.close()
        results.append(res)
    a, b = results
    assert a.z.tobytes() == b.z.tobytes()
    for ha, hb in zip(a.history, b.history):
        assert ha.primal.tobytes() == hb.primal.tobytes()
        assert ha.dual.tobytes() == hb.dual.tobytes()


def test_control_frames_not_counted():
    t = tcp_loopback([Echo(0)], timeout=10)
    scatter_all(t, 0)
    t.gather(0)
    t.close()
    assert t.stats.messages_sent == 2
    assert t.stats.control_messages == 2  # register + stop


def test_recv_frame_kinds():
    import socket
    a, b = socket.socketpair()
    with a, b:
        a.sendall(Envelope.make_control("stop", 2).to_bytes())
        a.sendall(Envelope.gather(1, 2, [1.0]).to_bytes())
        env1, _ = recv_frame(b)
        env2, size = recv_frame(b)
    assert env1.kind == CONTROL and env1.control["action"] == "stop"
    assert env2.kind == GATHER and size == len(Envelope.gather(1, 2, [1.0]).to_bytes())
