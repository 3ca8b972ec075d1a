"""Reactive OF-1.0 learning switch on os-ken.

Runs inside an interpreter that has os-ken installed and is independent of the
rest of this package.  Each packet-in gets exactly one flow-mod echoing its xid;
unknown destinations go to the flood pseudo-port inside the flow-mod.
"""

from __future__ import annotations

import argparse
import sys

from os_ken.lib import hub

hub.patch(thread=False)

from os_ken import cfg  # noqa: E402
from os_ken.base import app_manager  # noqa: E402
from os_ken.controller import ofp_event  # noqa: E402
from os_ken.controller.handler import MAIN_DISPATCHER, set_ev_cls  # noqa: E402
from os_ken.ofproto import ofproto_v1_0  # noqa: E402


class LearningSwitch(app_manager.OSKenApp):
    OFP_VERSIONS = [ofproto_v1_0.OFP_VERSION]

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.mac_to_port: dict[int, dict[bytes, int]] = {}

    @set_ev_cls(ofp_event.EventOFPPacketIn, MAIN_DISPATCHER)
    def packet_in(self, ev):
        msg = ev.msg
        dp = msg.datapath
        ofp = dp.ofproto
        parser = dp.ofproto_parser
        data = msg.data
        if len(data) < 12:
            return
        dst, src = data[0:6], data[6:12]
        table = self.mac_to_port.setdefault(dp.id, {})
        out_port = table.get(dst, ofp.OFPP_FLOOD)
        table[src] = msg.in_port

        match = parser.OFPMatch(
            wildcards=ofp.OFPFW_ALL & ~(ofp.OFPFW_IN_PORT | ofp.OFPFW_DL_SRC | ofp.OFPFW_DL_DST),
            in_port=msg.in_port, dl_src=src, dl_dst=dst)
        mod = parser.OFPFlowMod(
            datapath=dp, match=match, cookie=0, command=ofp.OFPFC_ADD,
            idle_timeout=0, hard_timeout=0, priority=ofp.OFP_DEFAULT_PRIORITY,
            buffer_id=msg.buffer_id, flags=0,
            actions=[parser.OFPActionOutput(out_port)])
        mod.xid = msg.xid  # send_msg keeps a preset xid
        dp.send_msg(mod)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=6633)
    args = ap.parse_args(argv)
    cfg.CONF([f"--ofp-listen-host={args.host}", f"--ofp-tcp-listen-port={args.port}"],
             project="os_ken")
    print(f"OSKEN_READY port={args.port}", flush=True)
    app_manager.AppManager.run_apps([__name__, "os_ken.controller.ofp_handler"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
