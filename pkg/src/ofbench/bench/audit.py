"""Classify controller responses and flag non-conformant ones."""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import ofwire
from ..ofwire import HEADER, OFP_HEADER_LEN, OfType

_FLOW_MOD = int(OfType.FLOW_MOD)
_PACKET_OUT = int(OfType.PACKET_OUT)


@dataclass
class AuditReport:
    flow_mods: int = 0
    packet_outs: int = 0
    other: int = 0
    flow_mod_bytes: int = 0
    packet_out_bytes: int = 0
    probes: int | None = None

    @property
    def responses(self) -> int:
        return self.flow_mods + self.packet_outs

    @property
    def packet_out_violation(self) -> bool:
        """Probes answered with packet-out instead of flow-mod."""
        return self.packet_outs > 0

    @property
    def excess_responses(self) -> bool:
        return self.probes is not None and self.responses > self.probes

    @property
    def conformant_fraction(self) -> float:
        return self.flow_mods / self.responses if self.responses else 1.0

    @property
    def byte_ratio(self) -> float | None:
        """packet-out bytes per flow-mod byte; None without flow-mods."""
        if not self.flow_mod_bytes:
            return None
        return self.packet_out_bytes / self.flow_mod_bytes

    @property
    def violations(self) -> list[str]:
        out = []
        if self.packet_out_violation:
            out.append(f"packet_out_responses={self.packet_outs}")
        if self.excess_responses:
            out.append(f"responses {self.responses} exceed probes {self.probes}")
        return out

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, other: "AuditReport") -> None:
        self.flow_mods += other.flow_mods
        self.packet_outs += other.packet_outs
        self.other += other.other
        self.flow_mod_bytes += other.flow_mod_bytes
        self.packet_out_bytes += other.packet_out_bytes
        if other.probes is not None:
            self.probes = (self.probes or 0) + other.probes

    def as_dict(self) -> dict:
        return {
            "flow_mods": self.flow_mods,
            "packet_outs": self.packet_outs,
            "other": self.other,
            "flow_mod_bytes": self.flow_mod_bytes,
            "packet_out_bytes": self.packet_out_bytes,
            "probes": self.probes,
            "conformant_fraction": self.conformant_fraction,
            "byte_ratio": self.byte_ratio,
            "violations": self.violations,
        }


def _classify(report: AuditReport, msg_type: int, length: int) -> None:
    if msg_type == _FLOW_MOD:
        report.flow_mods += 1
        report.flow_mod_bytes += length
    elif msg_type == _PACKET_OUT:
        report.packet_outs += 1
        report.packet_out_bytes += length
    else:
        report.other += 1


def audit_responses(stream, probes: int | None = None) -> AuditReport:
    """Audit a raw byte stream or an iterable of decoded messages."""
    report = AuditReport(probes=probes)
    if isinstance(stream, (bytes, bytearray, memoryview)):
        data = bytes(stream)
        pos = 0
        while len(data) - pos >= OFP_HEADER_LEN:
            _v, msg_type, length, _x = HEADER.unpack_from(data, pos)
            if length < OFP_HEADER_LEN:
                raise ofwire.MalformedLength(f"header length {length}")
            _classify(report, msg_type, length)
            pos += length
        return report
    for msg in stream:
        _classify(report, int(msg.msg_type), ofwire.encoded_size(msg))
    return report
