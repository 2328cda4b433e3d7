"""The tutorial xApp: consumes type-1 policies and keeps its controls live.

It subscribes to nothing on its own; the controls section (``meid``,
``ran_function_id``, ...) is exposed as ``xapp.controls`` and refreshed
whenever the configuration is edited.
"""

from __future__ import annotations

from ..framework import RMRXapp
from ..messages import A1_POLICY_REQ, RIC_INDICATION, RMR_MS_MSG_TYPE
from .a1_consumer import handle_policy_request


def _on_config(xapp, content: dict) -> None:
    xapp.controls = dict(content.get("controls") or {})
    xapp.logger.info(f"controls now {sorted(xapp.controls)}")


def _on_indication(xapp, summary, msg) -> None:
    xapp.indications += 1


def _default(xapp, summary, msg) -> None:
    xapp.logger.debug(f"unhandled mtype {summary[RMR_MS_MSG_TYPE]}")


class ExampleXapp(RMRXapp):
    def __init__(self, **kwargs):
        self.controls: dict = {}
        self.policies: dict = {}
        self.indications = 0
        super().__init__(_default, config_handler=_on_config, **kwargs)
        self.register_callback(handle_policy_request, A1_POLICY_REQ)
        self.register_callback(_on_indication, RIC_INDICATION)


def create() -> ExampleXapp:
    return ExampleXapp()
