"""Transports driving party programs, the frame trace and the taint audit.

A party program is a generator yielding :class:`Send` and :class:`Recv`
effects. Both transports deliver FIFO per ordered pair of parties, encode
every message to its wire frame and decode it with the recipient's keyring,
and refuse round tags that do not strictly increase on a channel.
"""
from __future__ import annotations

import socket
import struct
import threading
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Generator, Iterable

from ..dgk import DgkPublicKey, DGKCiphertext
from ..errors import ProtocolOrderViolation
from ..labhe import LabCollapsed, LabPair
from ..paillier import AHECiphertext, AhePublicKey
from .messages import PartyMessage, Recv, RoundTag, Send, Taint, check_expected, parse_frame, register_keys

CLOUD = "cloud"
ACTUATOR = "actuator"

_KIND = {
    AHECiphertext: "ahe",
    DGKCiphertext: "dgk",
    LabPair: "lab",
    LabCollapsed: "lab",
    AhePublicKey: "ahe_pk",
    DgkPublicKey: "dgk_pk",
    bytes: "bytes",
}


def item_kinds(payload) -> frozenset:
    kinds = set()
    stack = [payload]
    while stack:
        x = stack.pop()
        if isinstance(x, (list, tuple)):
            stack.extend(x)
        elif isinstance(x, int):
            kinds.add("int")
        else:
            kinds.add(_KIND.get(type(x), type(x).__name__))
    return frozenset(kinds)


@dataclass(frozen=True)
class TraceRow:
    t: int
    k: int
    phase: int
    src: str
    dst: str
    msg_type: str
    nbytes: int
    taint: Taint
    blind_bits: int
    kinds: frozenset


class Trace:
    """One row per transmitted frame; thread safe."""

    def __init__(self):
        self.rows: list[TraceRow] = []
        self._lock = threading.Lock()

    @property
    def frames(self) -> int:
        return len(self.rows)

    @property
    def total_bytes(self) -> int:
        return sum(r.nbytes for r in self.rows)

    def record(self, msg: PartyMessage, nbytes: int) -> None:
        row = TraceRow(msg.tag.t, msg.tag.k, msg.tag.phase, msg.src, msg.dst, msg.msg_type.name,
                       nbytes, msg.taint, msg.blind_bits, item_kinds(msg.payload))
        with self._lock:
            self.rows.append(row)


class _OrderGuard:
    def __init__(self):
        self._last: dict[tuple[str, str], RoundTag] = {}
        self._lock = threading.Lock()

    def check(self, msg: PartyMessage) -> None:
        key = (msg.src, msg.dst)
        with self._lock:
            last = self._last.get(key)
            if last is not None and not msg.tag > last:
                raise ProtocolOrderViolation(
                    f"round tag {msg.tag} on {msg.src}->{msg.dst} does not follow {last}"
                )
            self._last[key] = msg.tag


def _keyrings(names: Iterable[str], public_keys: Iterable) -> dict[str, dict]:
    shared = {pk.fingerprint: pk for pk in public_keys}
    return {n: dict(shared) for n in names}


class InProcTransport:
    """Deterministic lockstep scheduler: parties run round-robin until they block."""

    def __init__(self, trace: Trace | None = None, public_keys: Iterable = ()):
        self.trace = trace if trace is not None else Trace()
        self._queues: dict[tuple[str, str], deque] = defaultdict(deque)
        self._guard = _OrderGuard()
        self._public = list(public_keys)
        self._keyrings: dict[str, dict] = {}

    def _deliver(self, msg: PartyMessage) -> None:
        self._guard.check(msg)
        register_keys(msg.payload, self._keyrings[msg.src])
        frame = msg.to_frame()
        self.trace.record(msg, len(frame))
        ring = self._keyrings.setdefault(msg.dst, {pk.fingerprint: pk for pk in self._public})
        self._queues[(msg.src, msg.dst)].append(parse_frame(frame, ring, msg.src, msg.dst))

    def run(self, programs: dict[str, Generator]) -> dict[str, object]:
        for name in programs:
            self._keyrings.setdefault(name, {pk.fingerprint: pk for pk in self._public})
        results: dict[str, object] = {}
        waiting: dict[str, Recv | None] = {name: None for name in programs}
        while waiting:
            progressed = False
            for name in list(waiting):
                gen = programs[name]
                want = waiting[name]
                value = None
                if want is not None:
                    q = self._queues[(want.src, name)]
                    if not q:
                        continue
                    value = q.popleft()
                    check_expected(value, want)
                while True:
                    try:
                        eff = gen.send(value)
                    except StopIteration as stop:
                        results[name] = stop.value
                        del waiting[name]
                        break
                    progressed = True
                    value = None
                    if isinstance(eff, Send):
                        if eff.message.src != name:
                            raise ProtocolOrderViolation(f"{name} sent a message as {eff.message.src}")
                        self._deliver(eff.message)
                        continue
                    q = self._queues[(eff.src, name)]
                    if q:
                        value = q.popleft()
                        check_expected(value, eff)
                        continue
                    waiting[name] = eff
                    break
                progressed = progressed or want is not None
            if waiting and not progressed:
                blocked = ", ".join(f"{n} waits for {w.msg_type.name} from {w.src}" for n, w in waiting.items())
                raise ProtocolOrderViolation(f"deadlock: {blocked}")
        leftover = [(k, len(q)) for k, q in self._queues.items() if q]
        if leftover:
            raise ProtocolOrderViolation(f"undelivered messages: {leftover}")
        return results


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ProtocolOrderViolation("connection closed mid-frame")
        buf += chunk
    return bytes(buf)


class TcpTransport:
    """One thread per party, one loopback TCP connection per pair of parties."""

    def __init__(self, names: Iterable[str], trace: Trace | None = None, public_keys: Iterable = (),
                 timeout: float = 600.0):
        self.names = list(names)
        self.trace = trace if trace is not None else Trace()
        self._guard = _OrderGuard()
        self._keyrings = _keyrings(self.names, public_keys)
        self._socks: dict[tuple[str, str], socket.socket] = {}
        for i, a in enumerate(self.names):
            for b in self.names[i + 1 :]:
                with socket.create_server(("127.0.0.1", 0)) as srv:
                    client = socket.create_connection(srv.getsockname())
                    server, _ = srv.accept()
                for s in (client, server):
                    s.settimeout(timeout)
                    s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._socks[(a, b)] = client
                self._socks[(b, a)] = server

    def close(self) -> None:
        for s in self._socks.values():
            try:
                s.close()
            except OSError:
                pass
        self._socks.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _drive(self, name: str, gen: Generator, results: dict, errors: list) -> None:
        value = None
        try:
            while True:
                try:
                    eff = gen.send(value)
                except StopIteration as stop:
                    results[name] = stop.value
                    return
                value = None
                if isinstance(eff, Send):
                    msg = eff.message
                    self._guard.check(msg)
                    register_keys(msg.payload, self._keyrings[name])
                    frame = msg.to_frame()
                    self.trace.record(msg, len(frame))
                    self._socks[(name, msg.dst)].sendall(frame)
                else:
                    sock = self._socks[(name, eff.src)]
                    head = _read_exact(sock, 4)
                    (length,) = struct.unpack(">I", head)
                    frame = head + _read_exact(sock, length)
                    value = parse_frame(frame, self._keyrings[name], eff.src, name)
                    check_expected(value, eff)
        except BaseException as exc:  # surfaced by run()
            errors.append(exc)
            self.close()

    def run(self, programs: dict[str, Generator]) -> dict[str, object]:
        results: dict[str, object] = {}
        errors: list[BaseException] = []
        threads = [threading.Thread(target=self._drive, args=(n, g, results, errors), daemon=True)
                   for n, g in programs.items()]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if errors:
            primary = [e for e in errors if not isinstance(e, OSError)]
            raise (primary or errors)[0]
        return results


# -- taint audit -------------------------------------------------------------

_CLOUD_KINDS = frozenset({"ahe", "dgk", "lab", "ahe_pk", "dgk_pk"})


def audit(trace: Trace, lambda_stat: int, final_k: int | None = None) -> list[str]:
    """Structural confidentiality checks; returns one string per violation.

    * Cloud receives only ciphertexts and public keys.
    * The actuator receives keys, comparison bits, the final output, or
      values blinded with at least ``lambda_stat`` bits; outputs only in the
      last iteration (``final_k``) when given.
    """
    bad = []
    for r in trace.rows:
        where = f"{r.msg_type} {r.src}->{r.dst} at t={r.t} k={r.k}"
        if r.taint is Taint.PLAINTEXT:
            bad.append(f"plaintext payload: {where}")
        if r.dst == CLOUD:
            if not r.kinds <= _CLOUD_KINDS:
                bad.append(f"non-ciphertext items {sorted(r.kinds - _CLOUD_KINDS)} to cloud: {where}")
            if r.taint not in (Taint.CIPHERTEXT, Taint.KEY):
                bad.append(f"cloud receives {r.taint.value} data: {where}")
        elif r.dst == ACTUATOR:
            if r.taint in (Taint.BLINDED, Taint.UNIFORM):
                if r.blind_bits < lambda_stat:
                    bad.append(f"only {r.blind_bits} blinding bits: {where}")
            elif r.taint is Taint.OUTPUT:
                if final_k is not None and r.k != final_k:
                    bad.append(f"output outside the final iteration: {where}")
            elif r.taint not in (Taint.KEY, Taint.BIT):
                bad.append(f"actuator receives {r.taint.value} data: {where}")
    return bad
