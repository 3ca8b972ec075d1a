"""Minimal controller-side handshake: HELLO -> HELLO + FEATURES_REQUEST -> FEATURES_REPLY."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .. import ofwire
from ..ofwire import OfType


class Phase(enum.Enum):
    EXPECT_HELLO = "expect_hello"
    EXPECT_FEATURES_REQ_SENT = "expect_features_reply"
    READY = "ready"


class ProtocolError(Exception):
    """The peer sent a message the current phase does not allow."""


@dataclass(frozen=True)
class ConnState:
    phase: Phase = Phase.EXPECT_HELLO
    datapath_id: int | None = None


# controller-originated xids for handshake messages
HELLO_XID = 1
FEATURES_XID = 2


def handshake_step(state: ConnState, msg) -> tuple[ConnState, list]:
    """Advance the handshake by one inbound message.

    Returns the new state and the messages to send back.  Echo requests are
    answered in any phase; message types this codec does not model are ignored.
    """
    if state.phase is Phase.READY:
        raise ProtocolError("handshake already complete")
    t = msg.msg_type
    if t == OfType.ECHO_REQUEST:
        return state, [ofwire.EchoReply(msg.xid, msg.data)]
    if isinstance(msg, ofwire.UnknownMessage):
        return state, []
    if state.phase is Phase.EXPECT_HELLO:
        if t == OfType.HELLO:
            return (replace(state, phase=Phase.EXPECT_FEATURES_REQ_SENT),
                    [ofwire.Hello(HELLO_XID), ofwire.FeaturesRequest(FEATURES_XID)])
        raise ProtocolError(f"{OfType(t).name} before HELLO")
    if t == OfType.FEATURES_REPLY:
        return ConnState(Phase.READY, msg.datapath_id), []
    if t in (OfType.HELLO, OfType.ECHO_REPLY, OfType.ERROR):
        return state, []
    raise ProtocolError(f"{OfType(t).name} before FEATURES_REPLY")
