"""Scatter/gather transport between the coordinator and its workers.

Frame layout (little-endian)::

    u8 version | u8 kind | u32 iteration | u32 worker_id | u64 payload_len | payload

Vector payloads are ``u32 field_count`` followed by, per field,
``u64 length`` and ``length`` float64 values. Control payloads are UTF-8
JSON. Only scatter and gather frames count as data-plane messages; control
frames (register, stop) are tallied separately.
"""
import json
import logging
import select
import socket
import struct
import threading
import time
from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError, TransportError

logger = logging.getLogger(__name__)

VERSION = 1
SCATTER, GATHER, CONTROL = 1, 2, 3
_KIND_NAMES = {SCATTER: "scatter", GATHER: "gather", CONTROL: "control"}
HEADER = struct.Struct("<BBIIQ")
DEFAULT_TIMEOUT = 60.0


def encode_vectors(vectors):
    out = [struct.pack("<I", len(vectors))]
    for v in vectors:
        v = np.ascontiguousarray(v, dtype="<f8").ravel()
        out.append(struct.pack("<Q", v.size))
        out.append(v.tobytes())
    return b"".join(out)


def decode_vectors(payload):
    try:
        (count,) = struct.unpack_from("<I", payload, 0)
        offset = 4
        vectors = []
        for _ in range(count):
            (length,) = struct.unpack_from("<Q", payload, offset)
            offset += 8
            end = offset + 8 * length
            if end > len(payload):
                raise ProtocolError("vector payload shorter than its length header")
            vectors.append(np.frombuffer(payload[offset:end], dtype="<f8").astype(np.float64))
            offset = end
    except struct.error as exc:
        raise ProtocolError(f"malformed vector payload: {exc}") from None
    if offset != len(payload):
        raise ProtocolError(f"{len(payload) - offset} trailing bytes in vector payload")
    return tuple(vectors)


@dataclass(frozen=True)
class Envelope:
    """One protocol message; immutable once built."""

    kind: int
    iteration: int
    worker_id: int
    vectors: tuple = ()
    control: dict = None

    @classmethod
    def scatter(cls, iteration, worker_id, z, y, rho):
        return cls(SCATTER, iteration, worker_id,
                   (np.array(z, dtype=np.float64), np.array(y, dtype=np.float64),
                    np.array([rho], dtype=np.float64)))

    @classmethod
    def gather(cls, iteration, worker_id, x, stats=()):
        return cls(GATHER, iteration, worker_id,
                   (np.array(x, dtype=np.float64), np.array(stats, dtype=np.float64)))

    @classmethod
    def make_control(cls, action, worker_id=0, iteration=0, **config):
        return cls(CONTROL, iteration, worker_id, (), dict(action=action, **config))

    @property
    def z(self):
        return self.vectors[0]

    @property
    def y(self):
        return self.vectors[1]

    @property
    def rho(self):
        return float(self.vectors[2][0])

    @property
    def x(self):
        return self.vectors[0]

    @property
    def stats(self):
        return self.vectors[1]

    @property
    def kind_name(self):
        return _KIND_NAMES.get(self.kind, str(self.kind))

    def payload(self):
        if self.kind == CONTROL:
            return json.dumps(self.control, sort_keys=True).encode("utf-8")
        return encode_vectors(self.vectors)

    def to_bytes(self):
        body = self.payload()
        return HEADER.pack(VERSION, self.kind, self.iteration, self.worker_id, len(body)) + body

    @classmethod
    def from_parts(cls, header, body):
        version, kind, iteration, worker_id, length = HEADER.unpack(header)
        if version != VERSION:
            raise ProtocolError(f"unsupported frame version {version}")
        if kind not in _KIND_NAMES:
            raise ProtocolError(f"unknown frame kind {kind}")
        if length != len(body):
            raise ProtocolError(f"payload length {len(body)} != header {length}")
        if kind == CONTROL:
            return cls(kind, iteration, worker_id, (), json.loads(body.decode("utf-8")))
        return cls(kind, iteration, worker_id, decode_vectors(body))

    @classmethod
    def from_bytes(cls, frame):
        if len(frame) < HEADER.size:
            raise ProtocolError("frame shorter than header")
        return cls.from_parts(frame[:HEADER.size], frame[HEADER.size:])


@dataclass
class TransportStats:
    messages_sent: int = 0
    bytes_sent: int = 0
    rounds: int = 0
    control_messages: int = 0


def message_count_per_iteration(stats, rounds_per_iteration=1):
    """Data-plane messages per outer iteration (ADMM) or per epoch (SGD).

    For SGD pass the number of steps per epoch as ``rounds_per_iteration``.
    """
    if stats.rounds < rounds_per_iteration:
        raise ValueError("no completed iteration recorded")
    return stats.messages_sent * rounds_per_iteration / stats.rounds


def admm_messages(n_workers, iterations):
    return 2 * n_workers * iterations


def sgd_steps_per_epoch(n, batch_size, n_workers):
    return -(-n // (batch_size * n_workers))


def sgd_messages(n_workers, n, batch_size, epochs=1):
    return 2 * n_workers * sgd_steps_per_epoch(n, batch_size, n_workers) * epochs


class Transport:
    """Common bookkeeping: one scatter phase then one gather phase per round."""

    def __init__(self, n_workers):
        self.n_workers = n_workers
        self.stats = TransportStats()
        self._pending = None

    def scatter(self, envelopes):
        if self._pending is not None:
            raise ProtocolError(f"scatter for iteration {self._pending} still awaiting gather")
        ids = [env.worker_id for env in envelopes]
        if sorted(ids) != list(range(self.n_workers)):
            raise ProtocolError(f"need exactly one scatter per worker 0..{self.n_workers - 1}, got {ids}")
        iterations = {env.iteration for env in envelopes}
        if len(iterations) != 1:
            raise ProtocolError(f"mixed iteration tags in one scatter: {sorted(iterations)}")
        for env in sorted(envelopes, key=lambda e: e.worker_id):
            frame = env.to_bytes()
            self._send(env.worker_id, frame)
            self.stats.messages_sent += 1
            self.stats.bytes_sent += len(frame)
        self._pending = iterations.pop()

    def gather(self, iteration):
        if self._pending is None:
            raise ProtocolError("gather without a preceding scatter")
        if iteration != self._pending:
            raise ProtocolError(f"gather for iteration {iteration} but scatter was {self._pending}")
        replies = self._collect(iteration)
        out = []
        for wid in range(self.n_workers):
            env, size = replies[wid]
            if env.kind == CONTROL and env.control.get("action") == "error":
                raise TransportError(f"worker {wid} failed: {env.control.get('message')}")
            if env.kind != GATHER:
                raise ProtocolError(f"worker {wid} answered with a {env.kind_name} frame")
            if env.iteration != iteration:
                raise ProtocolError(
                    f"stale envelope from worker {wid}: tagged {env.iteration}, expected {iteration}")
            if env.worker_id != wid:
                raise ProtocolError(f"worker {wid} answered as worker {env.worker_id}")
            self.stats.messages_sent += 1
            self.stats.bytes_sent += size
            out.append(env)
        self._pending = None
        self.stats.rounds += 1
        return out

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class InProcessTransport(Transport):
    """Workers live in this process; frames still go through the codec.

    Worker 0 runs on the coordinator's thread, matching a master node that
    also holds a data shard. Workers are handled in id order.
    """

    def __init__(self, workers):
        super().__init__(len(workers))
        self.workers = list(workers)
        self.mailboxes = [[] for _ in self.workers]

    def _send(self, worker_id, frame):
        self.mailboxes[worker_id].append(frame)

    def _collect(self, iteration):
        replies = {}
        for wid, worker in enumerate(self.workers):
            box = self.mailboxes[wid]
            if not box:
                raise TransportError(f"worker {wid} has no pending scatter")
            env = Envelope.from_bytes(box.pop(0))
            frame = worker.handle(env).to_bytes()
            replies[wid] = (Envelope.from_bytes(frame), len(frame))
        return replies


def _recv_exact(sock, n):
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock):
    header = _recv_exact(sock, HEADER.size)
    length = HEADER.unpack(header)[4]
    body = _recv_exact(sock, length)
    return Envelope.from_parts(header, body), HEADER.size + length


class TcpTransport(Transport):
    """Coordinator side of the TCP backend (flat star topology).

    Listens on ``host:port``; each worker connects and sends a control frame
    ``{"action": "register"}`` carrying its worker id.
    """

    def __init__(self, n_workers, host="127.0.0.1", port=0, timeout=DEFAULT_TIMEOUT):
        super().__init__(n_workers)
        self.timeout = timeout
        self._server = socket.create_server((host, port))
        self._server.settimeout(timeout)
        self.address = self._server.getsockname()[:2]
        self._socks = {}

    def accept_workers(self):
        deadline = time.monotonic() + self.timeout
        while len(self._socks) < self.n_workers:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                missing = sorted(set(range(self.n_workers)) - set(self._socks))
                raise TransportError(f"timed out waiting for workers {missing} to register")
            self._server.settimeout(remaining)
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn.settimeout(self.timeout)
            env, _ = recv_frame(conn)
            if env.kind != CONTROL or env.control.get("action") != "register":
                conn.close()
                raise ProtocolError("first frame from a worker must be a register control frame")
            wid = env.worker_id
            if wid >= self.n_workers or wid in self._socks:
                conn.close()
                raise ProtocolError(f"unexpected or duplicate worker id {wid}")
            self._socks[wid] = conn
            self.stats.control_messages += 1
        return self

    def _send(self, worker_id, frame):
        try:
            self._socks[worker_id].sendall(frame)
        except (OSError, KeyError) as exc:
            raise TransportError(f"worker {worker_id} unreachable: {exc}") from None

    def _collect(self, iteration):
        replies = {}
        waiting = {sock: wid for wid, sock in self._socks.items()}
        deadline = time.monotonic() + self.timeout
        while waiting:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportError(f"gather timed out; missing workers {sorted(waiting.values())}")
            ready, _, _ = select.select(list(waiting), [], [], remaining)
            for sock in ready:
                wid = waiting.pop(sock)
                try:
                    replies[wid] = recv_frame(sock)
                except (OSError, ConnectionError) as exc:
                    raise TransportError(f"worker {wid} unreachable: {exc}") from None
        return replies

    def close(self):
        for wid, sock in sorted(self._socks.items()):
            try:
                sock.sendall(Envelope.make_control("stop", wid).to_bytes())
                self.stats.control_messages += 1
            except OSError:
                pass
            sock.close()
        self._socks.clear()
        self._server.close()


def serve_worker(handler, host, port, worker_id, timeout=DEFAULT_TIMEOUT):
    """Worker side: connect, register, answer scatters until told to stop."""
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
            break
        except ConnectionRefusedError:
            if time.monotonic() > deadline:
                raise TransportError(f"worker {worker_id}: coordinator {host}:{port} unreachable")
            time.sleep(0.05)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    sock.settimeout(None)
    with sock:
        sock.sendall(Envelope.make_control("register", worker_id).to_bytes())
        while True:
            try:
                env, _ = recv_frame(sock)
            except ConnectionError:
                logger.info("worker %d: coordinator closed the connection", worker_id)
                return
            if env.kind == CONTROL:
                if env.control.get("action") == "stop":
                    return
                continue
            try:
                reply = handler.handle(env)
            except Exception as exc:
                logger.exception("worker %d failed on iteration %d", worker_id, env.iteration)
                reply = Envelope.make_control("error", worker_id, env.iteration,
                                              message=f"{type(exc).__name__}: {exc}")
            sock.sendall(reply.to_bytes())


def tcp_loopback(handlers, timeout=DEFAULT_TIMEOUT):
    """TCP transport on 127.0.0.1 with each handler served from a thread."""
    transport = TcpTransport(len(handlers), timeout=timeout)
    host, port = transport.address
    threads = []
    for wid, handler in enumerate(handlers):
        t = threading.Thread(target=serve_worker, args=(handler, host, port, wid, timeout),
                             name=f"worker-{wid}", daemon=True)
        t.start()
        threads.append(t)
    transport.accept_workers()
    transport.threads = threads
    return transport
