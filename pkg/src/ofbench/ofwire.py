"""OpenFlow 1.0 wire codec for the message subset used by the controller and harness.

Two layers live here:

* value types (``Hello``, ``PacketIn``, ``FlowMod`` ...) with ``decode_message`` /
  ``encode_into`` / ``encode`` for exact round trips;
* flat struct helpers (``peek_packet_in``, ``pack_flow_mod_into``) that read and
  write the benchmark messages straight from/to a byte region without building
  any intermediate objects.  The engine's pooled path uses these.

All multi-byte fields are big-endian.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Iterator, Union

OFP_VERSION = 1
OFP_HEADER_LEN = 8

OFPP_MAX = 0xFF00
OFPP_IN_PORT = 0xFFF8
OFPP_FLOOD = 0xFFFB
OFPP_ALL = 0xFFFC
OFPP_CONTROLLER = 0xFFFD
OFPP_NONE = 0xFFFF

NO_BUFFER = 0xFFFFFFFF
OFP_DEFAULT_PRIORITY = 0x8000

OFPFW_IN_PORT = 1 << 0
OFPFW_DL_SRC = 1 << 2
OFPFW_DL_DST = 1 << 3
OFPFW_ALL = (1 << 22) - 1
# exact match on in_port/dl_src/dl_dst, everything else wildcarded
LEARNING_WILDCARDS = OFPFW_ALL & ~(OFPFW_IN_PORT | OFPFW_DL_SRC | OFPFW_DL_DST)

OFPAT_OUTPUT = 0


class OfType(enum.IntEnum):
    HELLO = 0
    ERROR = 1
    ECHO_REQUEST = 2
    ECHO_REPLY = 3
    VENDOR = 4
    FEATURES_REQUEST = 5
    FEATURES_REPLY = 6
    GET_CONFIG_REQUEST = 7
    GET_CONFIG_REPLY = 8
    SET_CONFIG = 9
    PACKET_IN = 10
    FLOW_REMOVED = 11
    PORT_STATUS = 12
    PACKET_OUT = 13
    FLOW_MOD = 14
    PORT_MOD = 15
    STATS_REQUEST = 16
    STATS_REPLY = 17
    BARRIER_REQUEST = 18
    BARRIER_REPLY = 19


class PacketInReason(enum.IntEnum):
    NO_MATCH = 0
    ACTION = 1


class FlowModCommand(enum.IntEnum):
    ADD = 0
    MODIFY = 1
    MODIFY_STRICT = 2
    DELETE = 3
    DELETE_STRICT = 4


class OfWireError(Exception):
    """Base class for codec failures."""


class MalformedLength(OfWireError):
    pass


class BadVersion(OfWireError):
    pass


class TruncatedBody(OfWireError):
    pass


class FieldOutOfRange(OfWireError):
    pass


class InsufficientCapacity(OfWireError):
    def __init__(self, needed: int, available: int):
        super().__init__(f"need {needed} bytes, sink has {available}")
        self.needed = needed
        self.available = available


HEADER = struct.Struct("!BBHI")
_PACKET_IN_FIXED = struct.Struct("!IHHBx")  # after header: 10 bytes
_FEATURES_FIXED = struct.Struct("!QIB3xII")  # 24 bytes
_PHY_PORT = struct.Struct("!H6s16sIIIIII")  # 48 bytes
_MATCH = struct.Struct("!IH6s6sHBxHBBxxIIHH")  # 40 bytes
_FLOW_MOD_FIXED = struct.Struct("!QHHHHIHH")  # 24 bytes
_ACTION_OUTPUT = struct.Struct("!HHHH")  # 8 bytes
_PACKET_OUT_FIXED = struct.Struct("!IHH")  # 8 bytes
_ERROR_FIXED = struct.Struct("!HH")

PACKET_IN_FIXED_LEN = OFP_HEADER_LEN + _PACKET_IN_FIXED.size  # 18
FLOW_MOD_FIXED_LEN = OFP_HEADER_LEN + _MATCH.size + _FLOW_MOD_FIXED.size  # 72
PACKET_OUT_FIXED_LEN = OFP_HEADER_LEN + _PACKET_OUT_FIXED.size  # 16
FEATURES_REPLY_FIXED_LEN = OFP_HEADER_LEN + _FEATURES_FIXED.size  # 32
ACTION_OUTPUT_LEN = _ACTION_OUTPUT.size


@dataclass(frozen=True)
class OfHeader:
    version: int
    msg_type: int
    length: int
    xid: int

    def serialize(self) -> bytes:
        return HEADER.pack(self.version, self.msg_type, self.length, self.xid)


def parse_header(data, offset: int = 0) -> OfHeader:
    """Decode and validate the 8-byte header at ``offset``.

    A length below 8 can never be skipped over safely, so it is always an error.
    """
    if len(data) - offset < OFP_HEADER_LEN:
        raise TruncatedBody(f"header needs 8 bytes, got {len(data) - offset}")
    version, msg_type, length, xid = HEADER.unpack_from(data, offset)
    if length < OFP_HEADER_LEN:
        raise MalformedLength(f"header length {length} < {OFP_HEADER_LEN}")
    if version != OFP_VERSION:
        raise BadVersion(f"version {version}")
    try:
        msg_type = OfType(msg_type)
    except ValueError:
        pass
    return OfHeader(version, msg_type, length, xid)


def mac_to_int(mac: bytes) -> int:
    return int.from_bytes(mac, "big")


def int_to_mac(value: int) -> bytes:
    return value.to_bytes(6, "big")


def _check(name: str, value: int, bits: int) -> None:
    if not 0 <= value < (1 << bits):
        raise FieldOutOfRange(f"{name}={value} does not fit in {bits} bits")


# --------------------------------------------------------------------------
# message values


@dataclass(frozen=True)
class Hello:
    xid: int = 0
    body: bytes = b""
    msg_type = OfType.HELLO


@dataclass(frozen=True)
class EchoRequest:
    xid: int = 0
    data: bytes = b""
    msg_type = OfType.ECHO_REQUEST


@dataclass(frozen=True)
class EchoReply:
    xid: int = 0
    data: bytes = b""
    msg_type = OfType.ECHO_REPLY


@dataclass(frozen=True)
class ErrorMsg:
    xid: int = 0
    err_type: int = 0
    code: int = 0
    data: bytes = b""
    msg_type = OfType.ERROR


@dataclass(frozen=True)
class FeaturesRequest:
    xid: int = 0
    msg_type = OfType.FEATURES_REQUEST


@dataclass(frozen=True)
class PhyPort:
    port_no: int
    hw_addr: bytes = b"\x00" * 6
    name: bytes = b"\x00" * 16
    config: int = 0
    state: int = 0
    curr: int = 0
    advertised: int = 0
    supported: int = 0
    peer: int = 0


@dataclass(frozen=True)
class FeaturesReply:
    xid: int = 0
    datapath_id: int = 0
    n_buffers: int = 256
    n_tables: int = 1
    capabilities: int = 0
    actions: int = 1 << OFPAT_OUTPUT
    ports: tuple[PhyPort, ...] = ()
    msg_type = OfType.FEATURES_REPLY

    @property
    def n_ports(self) -> int:
        return len(self.ports)


@dataclass(frozen=True)
class PacketIn:
    xid: int = 0
    buffer_id: int = NO_BUFFER
    total_len: int = 0
    in_port: int = 0
    reason: int = PacketInReason.NO_MATCH
    frame: bytes = b""
    msg_type = OfType.PACKET_IN

    @property
    def dst_mac(self) -> bytes:
        return self.frame[0:6]

    @property
    def src_mac(self) -> bytes:
        return self.frame[6:12]

    @property
    def ethertype(self) -> int | None:
        if len(self.frame) < 14:
            return None
        return int.from_bytes(self.frame[12:14], "big")


@dataclass(frozen=True)
class Match:
    wildcards: int = OFPFW_ALL
    in_port: int = 0
    dl_src: bytes = b"\x00" * 6
    dl_dst: bytes = b"\x00" * 6


@dataclass(frozen=True)
class OutputAction:
    port: int
    max_len: int = 0


@dataclass(frozen=True)
class FlowMod:
    xid: int = 0
    match: Match = field(default_factory=Match)
    cookie: int = 0
    command: int = FlowModCommand.ADD
    idle_timeout: int = 0
    hard_timeout: int = 0
    priority: int = OFP_DEFAULT_PRIORITY
    buffer_id: int = NO_BUFFER
    out_port: int = OFPP_NONE
    flags: int = 0
    actions: tuple[OutputAction, ...] = ()
    msg_type = OfType.FLOW_MOD


@dataclass(frozen=True)
class PacketOut:
    xid: int = 0
    buffer_id: int = NO_BUFFER
    in_port: int = OFPP_NONE
    actions: tuple[OutputAction, ...] = ()
    data: bytes = b""
    msg_type = OfType.PACKET_OUT


@dataclass(frozen=True)
class UnknownMessage:
    """Any message type this codec does not model; kept as raw bytes."""

    header: OfHeader
    raw: bytes = b""

    @property
    def xid(self) -> int:
        return self.header.xid

    @property
    def msg_type(self) -> int:
        return self.header.msg_type


OfMessage = Union[
    Hello, EchoRequest, EchoReply, ErrorMsg, FeaturesRequest, FeaturesReply,
    PacketIn, FlowMod, PacketOut, UnknownMessage,
]


def header_of(message: OfMessage) -> OfHeader:
    if isinstance(message, UnknownMessage):
        return message.header
    return OfHeader(OFP_VERSION, message.msg_type, encoded_size(message), message.xid)


# --------------------------------------------------------------------------
# decoding


def _decode_actions(body, offset: int, end: int) -> tuple[OutputAction, ...]:
    actions = []
    while offset < end:
        if end - offset < ACTION_OUTPUT_LEN:
            raise TruncatedBody("partial action")
        atype, alen, port, max_len = _ACTION_OUTPUT.unpack_from(body, offset)
        if atype != OFPAT_OUTPUT or alen != ACTION_OUTPUT_LEN:
            raise FieldOutOfRange(f"unsupported action type={atype} len={alen}")
        actions.append(OutputAction(port, max_len))
        offset += alen
    return tuple(actions)


def decode_message(header: OfHeader, body) -> OfMessage:
    """Materialize the message whose header has already been parsed.

    ``body`` must hold exactly ``header.length - 8`` bytes.
    """
    body = bytes(body)
    expected = header.length - OFP_HEADER_LEN
    if len(body) != expected:
        raise TruncatedBody(f"body has {len(body)} bytes, header says {expected}")
    t = header.msg_type
    xid = header.xid

    if t == OfType.HELLO:
        return Hello(xid, body)
    if t == OfType.ECHO_REQUEST:
        return EchoRequest(xid, body)
    if t == OfType.ECHO_REPLY:
        return EchoReply(xid, body)
    if t == OfType.FEATURES_REQUEST:
        if body:
            raise FieldOutOfRange("features request carries a body")
        return FeaturesRequest(xid)
    if t == OfType.ERROR:
        if len(body) < _ERROR_FIXED.size:
            raise TruncatedBody("error message")
        etype, code = _ERROR_FIXED.unpack_from(body)
        return ErrorMsg(xid, etype, code, body[_ERROR_FIXED.size:])
    if t == OfType.FEATURES_REPLY:
        if len(body) < _FEATURES_FIXED.size:
            raise TruncatedBody("features reply")
        rest = len(body) - _FEATURES_FIXED.size
        if rest % _PHY_PORT.size:
            raise TruncatedBody("partial port description")
        dpid, n_buffers, n_tables, caps, acts = _FEATURES_FIXED.unpack_from(body)
        ports = tuple(
            PhyPort(*_PHY_PORT.unpack_from(body, off))
            for off in range(_FEATURES_FIXED.size, len(body), _PHY_PORT.size)
        )
        return FeaturesReply(xid, dpid, n_buffers, n_tables, caps, acts, ports)
    if t == OfType.PACKET_IN:
        if len(body) < _PACKET_IN_FIXED.size:
            raise TruncatedBody("packet-in")
        buffer_id, total_len, in_port, reason = _PACKET_IN_FIXED.unpack_from(body)
        if reason not in (PacketInReason.NO_MATCH, PacketInReason.ACTION):
            raise FieldOutOfRange(f"packet-in reason {reason}")
        return PacketIn(xid, buffer_id, total_len, in_port, reason, body[_PACKET_IN_FIXED.size:])
    if t == OfType.FLOW_MOD:
        fixed = _MATCH.size + _FLOW_MOD_FIXED.size
        if len(body) < fixed:
            raise TruncatedBody("flow-mod")
        (wildcards, in_port, dl_src, dl_dst, *_others) = _MATCH.unpack_from(body)
        if any(_others):
            raise FieldOutOfRange("flow-mod match uses fields outside in_port/dl_src/dl_dst")
        (cookie, command, idle, hard, prio, buffer_id, out_port, flags) = (
            _FLOW_MOD_FIXED.unpack_from(body, _MATCH.size))
        if command > FlowModCommand.DELETE_STRICT:
            raise FieldOutOfRange(f"flow-mod command {command}")
        actions = _decode_actions(body, fixed, len(body))
        return FlowMod(xid, Match(wildcards, in_port, dl_src, dl_dst), cookie, command,
                       idle, hard, prio, buffer_id, out_port, flags, actions)
    if t == OfType.PACKET_OUT:
        if len(body) < _PACKET_OUT_FIXED.size:
            raise TruncatedBody("packet-out")
        buffer_id, in_port, actions_len = _PACKET_OUT_FIXED.unpack_from(body)
        end = _PACKET_OUT_FIXED.size + actions_len
        if end > len(body):
            raise TruncatedBody("packet-out actions")
        actions = _decode_actions(body, _PACKET_OUT_FIXED.size, end)
        return PacketOut(xid, buffer_id, in_port, actions, body[end:])
    return UnknownMessage(header, body)


def decode(data, offset: int = 0) -> OfMessage:
    """Parse one complete message starting at ``offset``."""
    header = parse_header(data, offset)
    end = offset + header.length
    if len(data) < end:
        raise TruncatedBody(f"message needs {header.length} bytes")
    return decode_message(header, data[offset + OFP_HEADER_LEN:end])


# --------------------------------------------------------------------------
# encoding


def encoded_size(message: OfMessage) -> int:
    if isinstance(message, (Hello,)):
        return OFP_HEADER_LEN + len(message.body)
    if isinstance(message, (EchoRequest, EchoReply)):
        return OFP_HEADER_LEN + len(message.data)
    if isinstance(message, FeaturesRequest):
        return OFP_HEADER_LEN
    if isinstance(message, ErrorMsg):
        return OFP_HEADER_LEN + _ERROR_FIXED.size + len(message.data)
    if isinstance(message, FeaturesReply):
        return FEATURES_REPLY_FIXED_LEN + _PHY_PORT.size * len(message.ports)
    if isinstance(message, PacketIn):
        return PACKET_IN_FIXED_LEN + len(message.frame)
    if isinstance(message, FlowMod):
        return FLOW_MOD_FIXED_LEN + ACTION_OUTPUT_LEN * len(message.actions)
    if isinstance(message, PacketOut):
        return PACKET_OUT_FIXED_LEN + ACTION_OUTPUT_LEN * len(message.actions) + len(message.data)
    if isinstance(message, UnknownMessage):
        return OFP_HEADER_LEN + len(message.raw)
    raise TypeError(f"not an OpenFlow message: {message!r}")


def _pack_actions(sink, offset: int, actions) -> int:
    for action in actions:
        _check("action.port", action.port, 16)
        _check("action.max_len", action.max_len, 16)
        _ACTION_OUTPUT.pack_into(sink, offset, OFPAT_OUTPUT, ACTION_OUTPUT_LEN,
                                 action.port, action.max_len)
        offset += ACTION_OUTPUT_LEN
    return offset


def _mac(name: str, value: bytes) -> bytes:
    if len(value) != 6:
        raise FieldOutOfRange(f"{name} must be 6 bytes")
    return value


def encode_into(message: OfMessage, sink, offset: int = 0) -> int:
    """Write the wire form of ``message`` into ``sink`` at ``offset``.

    Returns the number of bytes written.  Raises ``InsufficientCapacity`` rather
    than growing the sink; resizing is the owner's decision.
    """
    size = encoded_size(message)
    available = len(sink) - offset
    if size > available:
        raise InsufficientCapacity(size, available)
    if size > 0xFFFF:
        raise FieldOutOfRange(f"message length {size} exceeds 16 bits")
    _check("xid", message.xid, 32)
    msg_type = message.msg_type
    _check("msg_type", int(msg_type), 8)
    HEADER.pack_into(sink, offset, OFP_VERSION, msg_type, size, message.xid)
    pos = offset + OFP_HEADER_LEN

    if isinstance(message, (Hello, EchoRequest, EchoReply, UnknownMessage)):
        payload = message.body if isinstance(message, Hello) else (
            message.raw if isinstance(message, UnknownMessage) else message.data)
        sink[pos:pos + len(payload)] = payload
    elif isinstance(message, ErrorMsg):
        _check("err_type", message.err_type, 16)
        _check("code", message.code, 16)
        _ERROR_FIXED.pack_into(sink, pos, message.err_type, message.code)
        pos += _ERROR_FIXED.size
        sink[pos:pos + len(message.data)] = message.data
    elif isinstance(message, FeaturesReply):
        _check("datapath_id", message.datapath_id, 64)
        _check("n_buffers", message.n_buffers, 32)
        _check("n_tables", message.n_tables, 8)
        _check("capabilities", message.capabilities, 32)
        _check("actions", message.actions, 32)
        _FEATURES_FIXED.pack_into(sink, pos, message.datapath_id, message.n_buffers,
                                  message.n_tables, message.capabilities, message.actions)
        pos += _FEATURES_FIXED.size
        for port in message.ports:
            _check("port_no", port.port_no, 16)
            if len(port.hw_addr) != 6 or len(port.name) != 16:
                raise FieldOutOfRange("phy port hw_addr/name width")
            for name in ("config", "state", "curr", "advertised", "supported", "peer"):
                _check(name, getattr(port, name), 32)
            _PHY_PORT.pack_into(sink, pos, port.port_no, port.hw_addr, port.name,
                                port.config, port.state, port.curr, port.advertised,
                                port.supported, port.peer)
            pos += _PHY_PORT.size
    elif isinstance(message, PacketIn):
        _check("buffer_id", message.buffer_id, 32)
        _check("total_len", message.total_len, 16)
        _check("in_port", message.in_port, 16)
        if message.reason not in (PacketInReason.NO_MATCH, PacketInReason.ACTION):
            raise FieldOutOfRange(f"packet-in reason {message.reason}")
        _PACKET_IN_FIXED.pack_into(sink, pos, message.buffer_id, message.total_len,
                                   message.in_port, message.reason)
        pos += _PACKET_IN_FIXED.size
        sink[pos:pos + len(message.frame)] = message.frame
    elif isinstance(message, FlowMod):
        m = message.match
        _check("wildcards", m.wildcards, 32)
        _check("match.in_port", m.in_port, 16)
        _MATCH.pack_into(sink, pos, m.wildcards, m.in_port, _mac("dl_src", m.dl_src),
                         _mac("dl_dst", m.dl_dst), 0, 0, 0, 0, 0, 0, 0, 0, 0)
        pos += _MATCH.size
        _check("cookie", message.cookie, 64)
        _check("command", message.command, 16)
        if message.command > FlowModCommand.DELETE_STRICT:
            raise FieldOutOfRange(f"flow-mod command {message.command}")
        for name in ("idle_timeout", "hard_timeout", "priority", "out_port", "flags"):
            _check(name, getattr(message, name), 16)
        _check("buffer_id", message.buffer_id, 32)
        _FLOW_MOD_FIXED.pack_into(sink, pos, message.cookie, message.command,
                                  message.idle_timeout, message.hard_timeout,
                                  message.priority, message.buffer_id,
                                  message.out_port, message.flags)
        pos += _FLOW_MOD_FIXED.size
        _pack_actions(sink, pos, message.actions)
    elif isinstance(message, PacketOut):
        _check("buffer_id", message.buffer_id, 32)
        _check("in_port", message.in_port, 16)
        _PACKET_OUT_FIXED.pack_into(sink, pos, message.buffer_id, message.in_port,
                                    ACTION_OUTPUT_LEN * len(message.actions))
        pos = _pack_actions(sink, pos + _PACKET_OUT_FIXED.size, message.actions)
        sink[pos:pos + len(message.data)] = message.data
    # FeaturesRequest: header only
    return size


def encode(message: OfMessage) -> bytes:
    buf = bytearray(encoded_size(message))
    encode_into(message, buf)
    return bytes(buf)


# --------------------------------------------------------------------------
# framing


def iter_messages(data) -> Iterator[OfMessage]:
    """Split a byte stream of complete messages.

    Stops at the first malformed header by raising; nothing after it is read.
    A trailing partial message raises ``TruncatedBody``.
    """
    offset = 0
    end = len(data)
    while offset < end:
        header = parse_header(data, offset)
        stop = offset + header.length
        if stop > end:
            raise TruncatedBody(f"stream ends inside a {header.length}-byte message")
        yield decode_message(header, data[offset + OFP_HEADER_LEN:stop])
        offset = stop


class FrameReader:
    """Incremental framer: feed arbitrary chunks, get whole messages back.

    Once a malformed header has been seen the reader refuses further input,
    so a corrupt length field can never make a caller spin on the same bytes.
    """

    def __init__(self) -> None:
        self._buf = bytearray()
        self.failed: OfWireError | None = None

    def feed(self, chunk) -> list[OfMessage]:
        if self.failed is not None:
            raise self.failed
        self._buf += chunk
        out = []
        offset = 0
        try:
            while len(self._buf) - offset >= OFP_HEADER_LEN:
                header = parse_header(self._buf, offset)
                stop = offset + header.length
                if stop > len(self._buf):
                    break
                out.append(decode_message(header, self._buf[offset + OFP_HEADER_LEN:stop]))
                offset = stop
        except OfWireError as exc:
            self.failed = exc
            raise
        finally:
            del self._buf[:offset]
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


# --------------------------------------------------------------------------
# benchmark fast path: flat struct access, no message objects

# header + packet-in fixed part + dst(hi16, lo32) + src(hi16, lo32)
_PEEK_PACKET_IN = struct.Struct("!BBHIIHHBxHIHI")
PEEK_PACKET_IN_LEN = _PEEK_PACKET_IN.size  # 30

_FLOW_MOD_FLAT = struct.Struct("!BBHI" "IHHIHIHBxHBBxxIIHH" "QHHHHIHH" "HHHH")
assert _FLOW_MOD_FLAT.size == FLOW_MOD_FIXED_LEN + ACTION_OUTPUT_LEN == 80

_PACKET_IN_FLAT = struct.Struct("!BBHIIHHBxHIHIH")  # through ethertype
CANONICAL_FRAME_LEN = 64
# IPv4/UDP-shaped filler after the ethertype, 50 bytes
_CANONICAL_BODY = bytes.fromhex(
    "4500003200000000401100000a0000010a000002"  # IPv4 header, 20 bytes
    "04000500001e0000"  # UDP header, 8 bytes
) + bytes(22)
assert len(_CANONICAL_BODY) == CANONICAL_FRAME_LEN - 14
CANONICAL_PACKET_IN_LEN = PACKET_IN_FIXED_LEN + CANONICAL_FRAME_LEN  # 82
ETHERTYPE_IPV4 = 0x0800


def peek_packet_in(data, offset: int = 0):
    """Return ``(xid, buffer_id, in_port, src_mac, dst_mac)`` of a packet-in at ``offset``.

    MACs come back as 48-bit ints.  Caller has already validated the header and
    checked that at least ``PEEK_PACKET_IN_LEN`` bytes are present.
    """
    (_v, _t, _l, xid, buffer_id, _total, in_port, _reason,
     dst_hi, dst_lo, src_hi, src_lo) = _PEEK_PACKET_IN.unpack_from(data, offset)
    return xid, buffer_id, in_port, (src_hi << 32) | src_lo, (dst_hi << 32) | dst_lo


def pack_flow_mod_into(sink, offset: int, xid: int, in_port: int, src_mac: int,
                       dst_mac: int, buffer_id: int, out_port: int,
                       idle_timeout: int = 0, hard_timeout: int = 0,
                       priority: int = OFP_DEFAULT_PRIORITY) -> int:
    """Write the single-output learning-switch flow-mod (80 bytes) at ``offset``."""
    _FLOW_MOD_FLAT.pack_into(
        sink, offset,
        OFP_VERSION, OfType.FLOW_MOD, 80, xid,
        LEARNING_WILDCARDS, in_port, src_mac >> 32, src_mac & 0xFFFFFFFF,
        dst_mac >> 32, dst_mac & 0xFFFFFFFF, 0, 0, 0, 0, 0, 0, 0, 0, 0,
        0, FlowModCommand.ADD, idle_timeout, hard_timeout, priority, buffer_id,
        OFPP_NONE, 0,
        OFPAT_OUTPUT, ACTION_OUTPUT_LEN, out_port, 0,
    )
    return 80


def pack_packet_in_into(sink, offset: int, xid: int, buffer_id: int, in_port: int,
                        src_mac: int, dst_mac: int) -> int:
    """Write the canonical 82-byte benchmark packet-in at ``offset``."""
    _PACKET_IN_FLAT.pack_into(
        sink, offset,
        OFP_VERSION, OfType.PACKET_IN, CANONICAL_PACKET_IN_LEN, xid,
        buffer_id, CANONICAL_FRAME_LEN, in_port, PacketInReason.NO_MATCH,
        dst_mac >> 32, dst_mac & 0xFFFFFFFF, src_mac >> 32, src_mac & 0xFFFFFFFF,
        ETHERTYPE_IPV4,
    )
    body_at = offset + _PACKET_IN_FLAT.size
    sink[body_at:body_at + len(_CANONICAL_BODY)] = _CANONICAL_BODY
    return CANONICAL_PACKET_IN_LEN


def canonical_frame(src_mac: bytes, dst_mac: bytes) -> bytes:
    return dst_mac + src_mac + ETHERTYPE_IPV4.to_bytes(2, "big") + _CANONICAL_BODY


def canonical_packet_in(xid: int, buffer_id: int, in_port: int, src_mac: bytes,
                        dst_mac: bytes) -> PacketIn:
    return PacketIn(xid, buffer_id, CANONICAL_FRAME_LEN, in_port, PacketInReason.NO_MATCH,
                    canonical_frame(src_mac, dst_mac))


def learning_flow_mod(xid: int, in_port: int, src_mac: bytes, dst_mac: bytes,
                      buffer_id: int, out_port: int, idle_timeout: int = 0,
                      hard_timeout: int = 0,
                      priority: int = OFP_DEFAULT_PRIORITY) -> FlowMod:
    """Object-form twin of ``pack_flow_mod_into``."""
    return FlowMod(
        xid=xid,
        match=Match(LEARNING_WILDCARDS, in_port, src_mac, dst_mac),
        idle_timeout=idle_timeout,
        hard_timeout=hard_timeout,
        priority=priority,
        buffer_id=buffer_id,
        actions=(OutputAction(out_port),),
    )
