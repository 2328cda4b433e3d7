"""KPM monitor: periodic measurement reports from a gNodeB into the SDL.

On start the app looks up the RNIB for a gNodeB whose RAN functions
include the KPM service model OID, subscribes to a REPORT action with the
configured period and measurements, and stores every decoded indication
under ``<sdl_namespace>/meas_<collection start ms>``. Readiness fails until
the subscription is confirmed.
"""

from __future__ import annotations

from typing import Optional

from ..e2 import Action
from ..e2sm import (
    DEFAULT_MEAS,
    KPM_OID,
    decode_indication,
    encode_action_definition,
    encode_event_trigger,
    kpm_action,
    kpm_trigger,
)
from ..errors import MiniRicError, NotFound
from ..framework import RMRXapp
from ..messages import RIC_INDICATION, RMR_MS_MSG_TYPE
from ..rest import READY_URI, init_response

SDL_NAMESPACE = "kpm_monitor_ns"
KEY_PREFIX = "meas_"
REPORT_ACTION_ID = 1


def find_kpm_node(xapp) -> Optional[tuple[str, int]]:
    """First gNodeB offering the KPM OID, with the RAN function id it uses."""
    for nb in xapp.get_list_gnb_ids():
        try:
            info = xapp.GetNodeb(nb.inventory_name)
        except NotFound:
            continue
        for fn in info.ran_functions:
            if fn.oid == KPM_OID:
                return nb.inventory_name, fn.ran_function_id
    return None


class KpmMonitor(RMRXapp):
    def __init__(self, **kwargs):
        self.meid: Optional[str] = None
        self.not_ready_reason = "starting"
        self.records_written = 0
        super().__init__(_default, post_init=KpmMonitor._start, subscription_callback=self._on_notification, **kwargs)
        self.register_callback(KpmMonitor._on_indication, RIC_INDICATION)
        self.rest_add_handler("GET", "ready", READY_URI, self._ready)

    @property
    def controls(self) -> dict:
        return self._config_data.get("controls") or {}

    @property
    def sdl_namespace(self) -> str:
        return self.controls.get("sdl_namespace", SDL_NAMESPACE)

    def _ready(self, name, path, data, ctype):
        if self.subscriptions:
            return init_response(200, {"status": "ok", "meid": self.meid})
        return init_response(503, {"status": "not ready", "reason": self.not_ready_reason})

    @staticmethod
    def _start(xapp: "KpmMonitor") -> None:
        found = find_kpm_node(xapp)
        if found is None:
            xapp.not_ready_reason = "no gNodeB offers the KPM service model"
            xapp.logger.error(xapp.not_ready_reason)
            return
        xapp.meid, ran_function_id = found
        period = int(xapp.controls.get("report_period_ms", 1000))
        meas = list(xapp.controls.get("meas_names") or [DEFAULT_MEAS])
        action = Action(
            REPORT_ACTION_ID,
            "report",
            encode_action_definition(kpm_action(meas, period)),
        )
        try:
            xapp.subscribe(xapp.meid, ran_function_id, encode_event_trigger(kpm_trigger(period)), [action])
        except MiniRicError as exc:
            xapp.not_ready_reason = f"subscription rejected: {exc.name}"
            return
        xapp.not_ready_reason = "waiting for subscription notification"

    def _on_notification(self, name, path, data, ctype) -> None:
        if not self.subscriptions:
            self.not_ready_reason = "subscription failed"

    @staticmethod
    def _on_indication(xapp: "KpmMonitor", summary, msg) -> None:
        try:
            ind = decode_indication(msg.payload)
        except MiniRicError as exc:
            xapp.logger.error(f"undecodable indication: {exc}")
            return
        key = f"{KEY_PREFIX}{ind.header.collection_start}"
        xapp.sdl.set(xapp.sdl_namespace, key, ind.to_json())
        xapp.records_written += 1


def _default(xapp, summary, msg) -> None:
    xapp.logger.debug(f"unhandled mtype {summary[RMR_MS_MSG_TYPE]}")


def create() -> KpmMonitor:
    return KpmMonitor()
