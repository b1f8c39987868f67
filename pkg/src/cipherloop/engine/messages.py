"""Party messages, payload codec and frame format.

Frame layout (identical in-process and over TCP)::

    4-byte big-endian length of the rest | 1-byte message type |
    t (4 bytes) | k (2 bytes) | phase (1 byte) | payload bytes

Round tags order the traffic on each channel. ``t`` is 0 for initialization
and s + 1 for time step s; ``k`` is 0 before the iterations of a step and
k + 1 inside FGM iteration k; ``phase`` orders the messages of one round.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any

from .. import labhe
from ..crypto_core import decode_int, encode_int
from ..dgk import DgkPublicKey, DGKCiphertext
from ..errors import DecodeError, ProtocolOrderViolation
from ..labhe import LabCollapsed, LabPair
from ..paillier import AHECiphertext, AhePublicKey


class MsgType(IntEnum):
    MPK = 1
    UPK = 2
    DGK_PK = 3
    MODEL_CT = 4
    BOX_CT = 5
    MEAS_CT = 10
    INIT_ITERATE = 11
    WARM_BLINDED = 12
    WARM_REFRESHED = 13
    TRUNC_BLINDED = 20
    TRUNC_RESULT = 21
    DGK_BITS = 30
    DGK_MASKED = 31
    CMP_Z = 40
    CMP_CARRY = 41
    CMP_RESULT = 42
    OTP_MASKED = 50
    OTP_REPLY = 51
    OT_MASKED = 52
    OT_SELECT = 53
    OT_MASK = 54
    REFRESH_BLINDED = 60
    REFRESH_REPLY = 61


class Phase(IntEnum):
    # initialization (t = 0)
    MPK = 1
    UPK = 2
    DGK_PK = 3
    MODEL = 4
    BOX = 5
    # before the iterations of a step (k = 0)
    MEAS = 1
    INIT_ITERATE = 2
    WARM_BLINDED = 3
    WARM_REFRESHED = 4
    # inside an iteration; comparison and OT sub-protocols add small offsets
    TRUNC = 10
    UPPER = 20
    LOWER = 30
    REFRESH = 45
    # two-party runs outside the MPC loop
    STANDALONE = 100


class Taint(str, Enum):
    """What the recipient can learn from a message."""

    KEY = "key"  # public key material or user key handles
    CIPHERTEXT = "ciphertext"  # recipient holds no decryption key
    BLINDED = "blinded"  # recipient decrypts a statistically blinded value
    UNIFORM = "uniform"  # recipient decrypts a value masked uniformly at random
    BIT = "bit"  # a comparison output bit
    OUTPUT = "output"  # the final control input
    PLAINTEXT = "plaintext"  # unprotected data


@dataclass(frozen=True, order=True)
class RoundTag:
    t: int
    k: int
    phase: int


@dataclass
class PartyMessage:
    src: str
    dst: str
    msg_type: MsgType
    tag: RoundTag
    payload: list
    taint: Taint = Taint.CIPHERTEXT
    blind_bits: int = 0
    _wire: bytes | None = field(default=None, repr=False, compare=False)

    def payload_bytes(self) -> bytes:
        if self._wire is None:
            self._wire = encode_payload(self.payload)
        return self._wire

    def to_frame(self) -> bytes:
        body = bytes([int(self.msg_type)]) + struct.pack(">IHB", self.tag.t, self.tag.k, self.tag.phase)
        body += self.payload_bytes()
        return struct.pack(">I", len(body)) + body


def parse_frame(frame: bytes, keyring: dict, src: str = "", dst: str = "") -> PartyMessage:
    if len(frame) < 4 + 8:
        raise DecodeError("frame too short")
    (length,) = struct.unpack_from(">I", frame, 0)
    if length != len(frame) - 4:
        raise DecodeError("frame length mismatch")
    try:
        mtype = MsgType(frame[4])
    except ValueError:
        raise DecodeError(f"unknown message type {frame[4]}") from None
    t, k, phase = struct.unpack_from(">IHB", frame, 5)
    payload, end = decode_payload(frame, keyring, 12)
    if end != len(frame):
        raise DecodeError("trailing bytes after payload")
    return PartyMessage(src, dst, mtype, RoundTag(t, k, phase), payload)


# -- payload codec -----------------------------------------------------------

_T_INT, _T_BYTES, _T_LIST = 0x01, 0x02, 0x03
_T_AHE, _T_DGK, _T_LAB = 0x10, 0x11, 0x12
_T_AHE_PK, _T_DGK_PK = 0x20, 0x21


def _encode_item(x: Any, out: bytearray) -> None:
    if isinstance(x, bool) or (isinstance(x, int) and x >= 0):
        out.append(_T_INT)
        out += encode_int(int(x))
    elif isinstance(x, bytes):
        out.append(_T_BYTES)
        out += struct.pack(">I", len(x)) + x
    elif isinstance(x, (list, tuple)):
        out.append(_T_LIST)
        out += struct.pack(">I", len(x))
        for y in x:
            _encode_item(y, out)
    elif isinstance(x, AHECiphertext):
        out.append(_T_AHE)
        out += x.to_bytes()
    elif isinstance(x, DGKCiphertext):
        out.append(_T_DGK)
        out += x.to_bytes()
    elif isinstance(x, (LabPair, LabCollapsed)):
        out.append(_T_LAB)
        out += labhe.to_bytes(x)
    elif isinstance(x, AhePublicKey):
        out.append(_T_AHE_PK)
        out += x.to_bytes()
    elif isinstance(x, DgkPublicKey):
        out.append(_T_DGK_PK)
        out += x.to_bytes()
    else:
        raise TypeError(f"cannot encode payload item of type {type(x).__name__}")


def encode_payload(items: list) -> bytes:
    out = bytearray()
    _encode_item(list(items), out)
    return bytes(out)


def _decode_item(buf, keyring: dict, off: int) -> tuple[Any, int]:
    if off >= len(buf):
        raise DecodeError("truncated payload")
    tag = buf[off]
    off += 1
    if tag == _T_INT:
        return decode_int(buf, off)
    if tag == _T_BYTES:
        (n,) = struct.unpack_from(">I", buf, off)
        return bytes(buf[off + 4 : off + 4 + n]), off + 4 + n
    if tag == _T_LIST:
        (n,) = struct.unpack_from(">I", buf, off)
        off += 4
        items = []
        for _ in range(n):
            x, off = _decode_item(buf, keyring, off)
            items.append(x)
        return items, off
    if tag == _T_AHE:
        return AHECiphertext.from_bytes(buf, keyring, off)
    if tag == _T_DGK:
        return DGKCiphertext.from_bytes(buf, keyring, off)
    if tag == _T_LAB:
        return labhe.from_bytes(buf, keyring, off)
    if tag == _T_AHE_PK:
        N, off = decode_int(buf, off)
        pk = AhePublicKey(N)
        keyring.setdefault(pk.fingerprint, pk)
        return pk, off
    if tag == _T_DGK_PK:
        pk, off = DgkPublicKey.from_bytes(buf, off)
        keyring.setdefault(pk.fingerprint, pk)
        return pk, off
    raise DecodeError(f"unknown payload tag {tag:#x}")


def decode_payload(buf, keyring: dict, offset: int = 0) -> tuple[list, int]:
    items, off = _decode_item(buf, keyring, offset)
    if not isinstance(items, list):
        raise DecodeError("payload must be a list")
    return items, off


def register_keys(payload, keyring: dict) -> None:
    """Add the public keys appearing in ``payload`` to ``keyring`` (senders know their own keys)."""
    for x in payload:
        if isinstance(x, (list, tuple)):
            register_keys(x, keyring)
        elif isinstance(x, (AhePublicKey, DgkPublicKey)):
            keyring.setdefault(x.fingerprint, x)


# -- generator effects -------------------------------------------------------


@dataclass(frozen=True)
class Send:
    message: PartyMessage


@dataclass(frozen=True)
class Recv:
    src: str
    msg_type: MsgType
    phase: int | None = None


class PartyIO:
    """Builds the effects a party program yields; carries the current round."""

    def __init__(self, name: str, t: int = 0, k: int = 0):
        self.name = name
        self.t = t
        self.k = k

    def at(self, t: int, k: int) -> PartyIO:
        self.t, self.k = t, k
        return self

    def send(self, dst: str, mtype: MsgType, payload: list, phase: int,
             taint: Taint = Taint.CIPHERTEXT, blind_bits: int = 0) -> Send:
        return Send(PartyMessage(self.name, dst, mtype, RoundTag(self.t, self.k, int(phase)),
                                 list(payload), taint, blind_bits))

    def recv(self, src: str, mtype: MsgType, phase: int | None = None) -> Recv:
        return Recv(src, mtype, phase)


def check_expected(msg: PartyMessage, want: Recv) -> None:
    if msg.msg_type != want.msg_type or (want.phase is not None and msg.tag.phase != want.phase):
        raise ProtocolOrderViolation(
            f"{msg.dst} expected {want.msg_type.name} from {want.src}, got {msg.msg_type.name} "
            f"at {msg.tag}"
        )
