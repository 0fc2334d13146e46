"""In-memory simulation of one-round aggregation: dealer, K users, server.

Actors talk only through framed byte messages on per-link channels:
dealer -> user k (key dispatch), user k -> server (message), and
server -> outside (result). The dealer is the only holder of the source key.
Each user sees its own input and key block and nothing else.

Frame layout (little-endian)::

    u32 round | u16 sender | u8 kind | u32 count | count x u32 elements

Sender ids: 0 = dealer, 1..K = users, K+1 = server.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .linalg import MatrixGF
from .gf import matmul_mod
from .scheme import LinearScheme

_HEADER = struct.Struct("<IHBI")
HEADER_SIZE = _HEADER.size  # 11


class Kind(IntEnum):
    KEY = 0
    MESSAGE = 1
    RESULT = 2


class FrameError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class IsolationError(AssertionError):
    """An actor holds state it is not entitled to."""


@dataclass(frozen=True)
class Frame:
    round: int
    sender: int
    kind: Kind
    payload: tuple[int, ...] = ()

    @property
    def count(self) -> int:
        return len(self.payload)


def serialize_frame(frame: Frame) -> bytes:
    head = _HEADER.pack(frame.round, frame.sender, int(frame.kind), frame.count)
    return head + struct.pack(f"<{frame.count}I", *frame.payload)


def parse_frame(data: bytes, q: int | None = None, offset: int = 0) -> tuple[Frame, int]:
    """Parse one frame starting at ``offset``; returns the frame and the next offset."""
    if len(data) - offset < HEADER_SIZE:
        raise FrameError(f"truncated header: need {HEADER_SIZE} bytes, have {len(data) - offset}", offset)
    rnd, sender, kind, count = _HEADER.unpack_from(data, offset)
    try:
        kind = Kind(kind)
    except ValueError:
        raise FrameError(f"unknown frame kind {kind}", offset + 6) from None
    body = offset + HEADER_SIZE
    end = body + 4 * count
    if len(data) < end:
        raise FrameError(f"truncated payload: {count} elements need {4 * count} bytes, have {len(data) - body}", body)
    payload = struct.unpack_from(f"<{count}I", data, body)
    if q is not None:
        for i, v in enumerate(payload):
            if v >= q:
                raise FrameError(f"element {v} is not below q={q}", body + 4 * i)
    return Frame(rnd, sender, kind, tuple(payload)), end


def parse_frames(data: bytes, q: int | None = None) -> list[Frame]:
    frames, pos = [], 0
    while pos < len(data):
        fr, pos = parse_frame(data, q, pos)
        frames.append(fr)
    return frames


class Channel:
    """One-directional FIFO of serialized frames."""

    def __init__(self, src: int, dst: int):
        self.src, self.dst = src, dst
        self._q: deque[bytes] = deque()

    def send(self, frame: Frame) -> None:
        if frame.sender != self.src:
            raise IsolationError(f"actor {frame.sender} wrote on channel owned by {self.src}")
        self._q.append(serialize_frame(frame))

    def recv(self, q: int) -> Frame:
        return parse_frame(self._q.popleft(), q)[0]


class Dealer:
    def __init__(self, scheme: LinearScheme, seed: int):
        self.scheme = scheme
        self.keys = scheme.keygen(seed)

    def dispatch(self, rnd: int, links: list[Channel]) -> None:
        for k, ch in enumerate(links):
            z = self.keys.per_user[k]
            ch.send(Frame(rnd, 0, Kind.KEY, tuple(z.entries)))


class User:
    _OWN = {"uid", "W", "Z", "_encode"}

    def __init__(self, scheme: LinearScheme, k: int, W_k: MatrixGF):
        self.uid = k + 1
        self.W = W_k
        self.Z: MatrixGF | None = None
        self._encode = lambda w, z: scheme.encode(k, w, z)

    def receive_key(self, frame: Frame) -> None:
        if frame.kind != Kind.KEY or frame.sender != 0:
            raise IsolationError(f"user {self.uid} got unexpected frame {frame}")
        self.Z = MatrixGF(self.W.field, np.array(frame.payload, dtype=np.int64).reshape(1, frame.count))

    def send_message(self, rnd: int, link: Channel) -> None:
        X = self._encode(self.W, self.Z)
        link.send(Frame(rnd, self.uid, Kind.MESSAGE, tuple(X.entries)))

    def assert_isolated(self) -> None:
        extra = set(vars(self)) - self._OWN
        if extra:
            raise IsolationError(f"user {self.uid} holds foreign state {sorted(extra)}")
        if self.Z is not None and self.Z.cols not in (0, self.W.cols):
            raise IsolationError(f"user {self.uid} key block has wrong size")


class Server:
    def __init__(self, scheme: LinearScheme):
        self.scheme = scheme
        self.uid = scheme.K + 1
        self.X: list[MatrixGF | None] = [None] * scheme.K

    def receive(self, frame: Frame) -> None:
        if frame.kind != Kind.MESSAGE or not 1 <= frame.sender <= self.scheme.K:
            raise IsolationError(f"server got unexpected frame {frame}")
        self.X[frame.sender - 1] = MatrixGF(
            self.scheme.spec.field, np.array(frame.payload, dtype=np.int64).reshape(1, frame.count)
        )

    def result(self, rnd: int) -> Frame:
        return Frame(rnd, self.uid, Kind.RESULT, tuple(self.scheme.decode(self.X).entries))


@dataclass
class RunLog:
    round: int
    seed: int
    W: MatrixGF
    frames: list[Frame]
    decoded: MatrixGF
    truth: MatrixGF

    @property
    def correct(self) -> bool:
        return self.decoded == self.truth

    def frame_bytes(self) -> bytes:
        return b"".join(serialize_frame(f) for f in self.frames)

    def message_symbols(self) -> int:
        return sum(f.count for f in self.frames if f.kind == Kind.MESSAGE)

    def text(self) -> str:
        lines = [
            f"round={self.round} user={f.sender} X={' '.join(map(str, f.payload))}"
            for f in self.frames
            if f.kind == Kind.MESSAGE
        ]
        lines.append(f"decoded={' '.join(map(str, self.decoded.entries))}")
        lines.append(f"truth={' '.join(map(str, self.truth.entries))}")
        return "\n".join(lines)


def run_round(scheme: LinearScheme, W: MatrixGF, seed: int, round_id: int = 0, check_isolation: bool = True) -> RunLog:
    """One protocol round: dealer -> users -> server, in that order."""
    K, L, q = scheme.K, scheme.L, scheme.q
    if W.shape != (K, L):
        raise ValueError(f"W must be {K} x {L}, got {W.shape}")
    dealer = Dealer(scheme, seed)
    users = [User(scheme, k, W.take_rows([k])) for k in range(K)]
    server = Server(scheme)
    key_links = [Channel(0, k + 1) for k in range(K)]
    msg_links = [Channel(k + 1, K + 1) for k in range(K)]
    log: list[Frame] = []

    dealer.dispatch(round_id, key_links)
    for user, ch in zip(users, key_links):
        fr = ch.recv(q)
        log.append(fr)
        user.receive_key(fr)
    for user, ch in zip(users, msg_links):
        user.send_message(round_id, ch)
        if check_isolation:
            user.assert_isolated()
    for ch in msg_links:
        fr = ch.recv(q)
        log.append(fr)
        server.receive(fr)
    res = server.result(round_id)
    log.append(res)

    decoded = MatrixGF(scheme.spec.field, np.array(res.payload, dtype=np.int64).reshape(scheme.M, L))
    truth = MatrixGF._wrap(scheme.spec.field, matmul_mod(scheme.spec.F.array, W.array, q))
    return RunLog(round_id, seed, W, log, decoded, truth)


@dataclass
class RunSummary:
    rounds: int
    passed: int
    message_symbols: int
    seed: int
    logs: list[RunLog] = field(default_factory=list, repr=False)

    def text(self) -> str:
        return (
            f"rounds={self.rounds} correct={self.passed}/{self.rounds} "
            f"message_symbols={self.message_symbols} seed={self.seed}"
        )


def run_many(scheme: LinearScheme, rounds: int, seed: int = 0, keep_logs: bool = False) -> RunSummary:
    """Fresh inputs and a fresh key seed each round, all drawn from ``seed``."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    rng = np.random.default_rng(seed)
    passed = symbols = 0
    logs = []
    for r in range(rounds):
        W = MatrixGF._wrap(scheme.spec.field, rng.integers(0, scheme.q, size=(scheme.K, scheme.L), dtype=np.int64))
        key_seed = int(rng.integers(0, 2**63 - 1))
        log = run_round(scheme, W, key_seed, round_id=r)
        passed += log.correct
        symbols += log.message_symbols()
        if keep_logs:
            logs.append(log)
    return RunSummary(rounds, passed, symbols, seed, logs)
