"""A reactive xApp that consumes A1 policies of the types its descriptor lists.

Every request is checked for the keys a policy request must carry, applied
to (or removed from) the app's policy table and acknowledged to the
mediator with the app's own name as ``handler_id``.
"""

from __future__ import annotations

import json

from ..framework import RMRXapp
from ..messages import A1_POLICY_QUERY, A1_POLICY_REQ, A1_POLICY_RESP, RMR_MS_MSG_TYPE

REQUIRED_KEYS = ("operation", "policy_type_id", "policy_instance_id")
OPERATIONS = ("CREATE", "UPDATE", "DELETE")


def handle_policy_request(xapp, summary, msg) -> None:
    """Shared A1 handler; ``xapp.policies`` maps (type, instance) to payload."""
    try:
        req = json.loads(msg.payload)
    except (UnicodeDecodeError, json.JSONDecodeError):
        xapp.logger.error("Invalid JSON")
        return
    if not isinstance(req, dict):
        xapp.logger.error("Invalid JSON")
        return
    missing = [k for k in REQUIRED_KEYS if k not in req]
    if missing:
        xapp.logger.error(f"policy request missing {', '.join(missing)}")
        return

    op = str(req["operation"]).upper()
    key = (int(req["policy_type_id"]), str(req["policy_instance_id"]))
    status = "OK"
    if op in ("CREATE", "UPDATE"):
        xapp.policies[key] = req.get("payload")
    elif op == "DELETE":
        xapp.policies.pop(key, None)
    else:
        xapp.logger.error(f"unknown policy operation {req['operation']!r}")
        status = "ERROR"
    xapp.logger.info(f"policy {op} {key[0]}/{key[1]} -> {status}")

    resp = {
        "policy_type_id": key[0],
        "policy_instance_id": key[1],
        "handler_id": xapp.name,
        "status": status,
    }
    xapp.rmr_rts(msg, json.dumps(resp), new_mtype=A1_POLICY_RESP)


def _default(xapp, summary, msg) -> None:
    xapp.logger.debug(f"ignoring mtype {summary[RMR_MS_MSG_TYPE]}")


def _ask_for_existing(xapp) -> None:
    types = xapp.descriptor.policies if xapp.descriptor else []
    for type_id in types:
        xapp.rmr_send(json.dumps({"policy_type_id": type_id}), A1_POLICY_QUERY)


class A1Consumer(RMRXapp):
    def __init__(self, **kwargs):
        super().__init__(_default, post_init=_ask_for_existing, **kwargs)
        self.policies: dict[tuple[int, str], object] = {}
        self.register_callback(handle_policy_request, A1_POLICY_REQ)


def create() -> A1Consumer:
    return A1Consumer()
