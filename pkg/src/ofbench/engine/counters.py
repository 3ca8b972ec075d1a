"""Per-thread engine counters, merged only when a snapshot is taken."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from ..bufferpool import AllocStats


@dataclass
class Counters:
    packet_ins: int = 0
    flow_mods: int = 0
    packet_outs: int = 0
    handoffs: int = 0
    conn_migrations: int = 0
    protocol_errors: int = 0
    malformed_closes: int = 0
    backpressure_pauses: int = 0
    # phase timing over sampled packets, nanoseconds
    samples: int = 0
    decode_ns: int = 0
    app_ns: int = 0
    encode_ns: int = 0
    io_ns: int = 0
    wall_ns: int = 0
    io_samples: int = 0
    recv_ns: int = 0
    recv_samples: int = 0
    alloc: AllocStats = field(default_factory=AllocStats)

    def merge(self, other: "Counters") -> None:
        for f in fields(self):
            if f.name == "alloc":
                self.alloc.add(other.alloc)
            else:
                setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "alloc"}
        out["alloc"] = self.alloc.as_dict()
        return out


def merge_all(parts) -> Counters:
    total = Counters()
    for part in parts:
        total.merge(part)
    return total
