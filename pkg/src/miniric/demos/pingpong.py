"""Two chained xApps talking over custom message types.

``ping`` is a general xApp: every period it collects acknowledgements and
sends one PING. ``pong`` is reactive and answers each PING with an ACK via
return-to-sender, so the ACK carries the PING's transaction id.
"""

from __future__ import annotations

import json
from typing import Optional

from ..framework import RMRXapp, Xapp
from ..messages import RMR_MS_MSG_TYPE

PING = 30001
ACK = 30002
PERIOD_MS = 1000


class Ping(Xapp):
    def __init__(self, period_ms: int = PERIOD_MS, count: Optional[int] = None, **kwargs):
        super().__init__(Ping._loop, **kwargs)
        self.period_ms = period_ms
        self.count = count
        self.sent: dict[int, int] = {}  # transaction id -> sequence number
        self.acked: list[int] = []  # transaction ids, in arrival order
        self.unmatched = 0
        self.send_failures = 0

    @property
    def acks(self) -> int:
        return len(self.acked)

    def collect(self) -> None:
        for _summary, msg in self.rmr_get_messages():
            if msg.mtype != ACK:
                continue
            if msg.transaction_id in self.sent and msg.transaction_id not in self.acked:
                self.acked.append(msg.transaction_id)
            else:
                self.unmatched += 1
                self.logger.warning(f"ack with unknown transaction id {msg.transaction_id}")

    @staticmethod
    def _loop(xapp: "Ping"):
        seq = 0
        while not xapp.shutdown and (xapp.count is None or seq < xapp.count):
            xapp.collect()
            seq += 1
            if xapp.rmr_send(json.dumps({"seq": seq}), PING):
                xapp.sent[xapp.last_transaction_id] = seq
            else:
                xapp.send_failures += 1
            yield xapp.period_ms
        xapp.collect()


def _answer(xapp, summary, msg) -> None:
    xapp.received += 1
    try:
        seq = json.loads(msg.payload).get("seq")
    except (ValueError, AttributeError):
        seq = None
    xapp.rmr_rts(msg, json.dumps({"ack": seq}), new_mtype=ACK)


def _default(xapp, summary, msg) -> None:
    xapp.logger.debug(f"unhandled mtype {summary[RMR_MS_MSG_TYPE]}")


class Pong(RMRXapp):
    def __init__(self, **kwargs):
        self.received = 0
        super().__init__(_default, **kwargs)
        self.register_callback(_answer, PING)


def create_ping() -> Ping:
    return Ping()


def create_pong() -> Pong:
    return Pong()
