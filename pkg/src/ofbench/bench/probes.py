"""Deterministic probe generation.

A switch's probe ``seq`` is a pure function of ``(switch_id, seq, unique_macs)``,
so replays are bit-identical.  MACs carry the switch id in their high 16 bits
and a per-switch index in the low 32, keeping switches disjoint.
"""

from __future__ import annotations

from ..ofwire import CANONICAL_PACKET_IN_LEN, NO_BUFFER, pack_packet_in_into

PROBE_LEN = CANONICAL_PACKET_IN_LEN
PORTS_PER_SWITCH = 48


def encode_mac(switch_id: int, index: int) -> int:
    return (switch_id << 32) | index


def gen_macs(switch_id: int, sequence_index: int, unique_macs: int) -> tuple[int, int]:
    """Return ``(src, dst)`` as 48-bit ints; dst is the next probe's src."""
    if unique_macs < 2:
        raise ValueError("unique_macs must be >= 2")
    base = switch_id << 32
    return (base | (sequence_index % unique_macs),
            base | ((sequence_index + 1) % unique_macs))


def probe_fields(switch_id: int, seq: int, unique_macs: int) -> tuple[int, int, int, int, int]:
    """``(xid, buffer_id, in_port, src, dst)`` for probe ``seq``."""
    src_index = seq % unique_macs
    base = switch_id << 32
    return (seq & 0xFFFFFFFF, seq % NO_BUFFER, 1 + src_index % PORTS_PER_SWITCH,
            base | src_index, base | ((seq + 1) % unique_macs))


def write_probes(sink: bytearray, switch_id: int, start: int, count: int,
                 unique_macs: int) -> None:
    """Append ``count`` probes starting at sequence ``start`` to ``sink``."""
    offset = len(sink)
    sink.extend(bytes(PROBE_LEN * count))
    base = switch_id << 32
    for seq in range(start, start + count):
        i = seq % unique_macs
        pack_packet_in_into(sink, offset, seq & 0xFFFFFFFF, seq % NO_BUFFER,
                            1 + i % PORTS_PER_SWITCH, base | i,
                            base | ((seq + 1) % unique_macs))
        offset += PROBE_LEN


def probe_stream(switch_id: int, start: int, count: int, unique_macs: int) -> bytes:
    buf = bytearray()
    write_probes(buf, switch_id, start, count, unique_macs)
    return bytes(buf)
