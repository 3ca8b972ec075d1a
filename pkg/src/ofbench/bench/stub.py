"""A deliberately slow controller that answers each packet-in after a fixed delay.

Used as a known-latency reference for the harness: every measured latency
must be at least the injected delay.  With ``packet_out_every=k`` every k-th
answer is a packet-out instead of a flow-mod, which the audit must flag.
"""

from __future__ import annotations

import logging
import socket
import threading
import time

from .. import ofwire
from ..engine.handshake import ConnState, Phase, handshake_step
from ..ofwire import OfType

log = logging.getLogger(__name__)


class DelayStub:
    def __init__(self, delay_s: float = 0.001, host: str = "127.0.0.1", port: int = 0,
                 packet_out_every: int = 0):
        self.delay_s = delay_s
        self.packet_out_every = packet_out_every
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(64)
        self._sock.settimeout(0.1)
        self._running = False
        self._threads: list[threading.Thread] = []
        self.answered = 0

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()[:2]

    def start(self) -> "DelayStub":
        self._running = True
        t = threading.Thread(target=self._accept_loop, name="ofbench-stub", daemon=True)
        t.start()
        self._threads.append(t)
        return self

    def stop(self) -> None:
        self._running = False
        for t in self._threads:
            t.join(2)
        self._sock.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _accept_loop(self) -> None:
        while self._running:
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            t = threading.Thread(target=self._serve, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve(self, conn: socket.socket) -> None:
        conn.settimeout(0.1)
        reader = ofwire.FrameReader()
        state = ConnState()
        dpid = None
        with conn:
            while self._running:
                try:
                    chunk = conn.recv(65536)
                except socket.timeout:
                    continue
                except OSError:
                    return
                if not chunk:
                    return
                try:
                    msgs = reader.feed(chunk)
                except ofwire.OfWireError:
                    return
                for msg in msgs:
                    if msg.msg_type == OfType.PACKET_IN and dpid is not None:
                        if self.delay_s:
                            time.sleep(self.delay_s)
                        self.answered += 1
                        k = self.packet_out_every
                        if k and self.answered % k == 0:
                            reply = ofwire.PacketOut(msg.xid, msg.buffer_id, msg.in_port,
                                                     (ofwire.OutputAction(ofwire.OFPP_FLOOD),))
                        else:
                            reply = ofwire.learning_flow_mod(
                                msg.xid, msg.in_port, msg.src_mac, msg.dst_mac, msg.buffer_id,
                                ofwire.OFPP_FLOOD)
                        conn.sendall(ofwire.encode(reply))
                    elif state.phase is not Phase.READY:
                        state, replies = handshake_step(state, msg)
                        for r in replies:
                            conn.sendall(ofwire.encode(r))
                        if state.phase is Phase.READY:
                            dpid = state.datapath_id
                    elif msg.msg_type == OfType.ECHO_REQUEST:
                        conn.sendall(ofwire.encode(ofwire.EchoReply(msg.xid, msg.data)))
