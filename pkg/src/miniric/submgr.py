"""Subscription manager: REST intake, subid allocation, merge, E2 retries, notifications.

Requests arrive as camel-case JSON on ``POST /ric/v1/subscriptions`` and are
answered with 201 right away; the E2 side runs asynchronously on the
simulated clock and the outcome is POSTed to the subscriber's
``/ric/v1/subscriptions/response`` callback.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import threading
from dataclasses import dataclass, field
from typing import Optional

from .bus import MessageBus
from .e2sm import parse_time_to_wait
from .errors import (
    BackendUnavailable,
    MalformedBody,
    MiniRicError,
    NotASubscriber,
    UnknownMeid,
    UnknownRanFunction,
    UnknownSubid,
)
from .messages import (
    RIC_CONTROL_REQ,
    RIC_HEALTH_CHECK_REQ,
    RIC_HEALTH_CHECK_RESP,
    RIC_INDICATION,
    RIC_SUB_DEL_FAILURE,
    RIC_SUB_DEL_REQ,
    RIC_SUB_DEL_RESP,
    RIC_SUB_FAILURE,
    RIC_SUB_REQ,
    RIC_SUB_RESP,
    Message,
    make_reply,
)
from .rest import HttpFabric, HttpRequest, RestRouter, json_response
from .routes import MEID_ROUTE, add_subscription_entries, remove_subid
from .sdl import Rnib

log = logging.getLogger(__name__)

SUBMGR_ENDPOINT = "service-ricplt-submgr-rmr.ricplt"
SUBMGR_HTTP_ADDRESS = "service-ricplt-submgr-http.ricplt:8088"
SUBSCRIPTIONS_URI = "/ric/v1/subscriptions"
NOTIFICATION_URI = "/ric/v1/subscriptions/response"
QUERY_URI = "/ric/v1/get_xapp_rest_restsubscriptions/{xapp_url}"
CLIENT_HEADER = "X-Client-Host"

DEFAULT_TIMEOUT_S = 2
DEFAULT_RETRIES = 2
TIMEOUT_TYPE = "E2-Timeout"


@dataclass(frozen=True)
class ClientEndpoint:
    Host: str
    HTTPPort: int
    RMRPort: int

    @property
    def address(self) -> str:
        return f"{self.Host}:{self.HTTPPort}"

    @property
    def rmr_endpoint(self) -> str:
        # the xApp's RMR service sits next to its HTTP service
        if "-http." in self.Host:
            return self.Host.replace("-http.", "-rmr.", 1)
        return self.Host

    def matches(self, caller: str) -> bool:
        return caller in (self.Host, self.address)


@dataclass(frozen=True)
class Directives:
    E2TimeoutTimerValue: int = DEFAULT_TIMEOUT_S
    E2RetryCount: int = DEFAULT_RETRIES
    RMRRoutingNeeded: bool = True


@dataclass
class SubscriptionRequest:
    SubscriptionId: str
    ClientEndpoint: ClientEndpoint
    Meid: str
    RANFunctionID: int
    Directives: Directives
    XappEventInstanceId: int
    EventTriggers: list
    ActionToBeSetupList: list

    def details_hash(self) -> str:
        canonical = json.dumps(
            {"EventTriggers": self.EventTriggers, "ActionToBeSetupList": self.ActionToBeSetupList},
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class Subscriber:
    client: ClientEndpoint
    xapp_event_instance_id: int
    routed: bool = True
    notified: bool = False

    @property
    def endpoint(self) -> str:
        return self.client.rmr_endpoint


@dataclass
class SubscriptionRecord:
    subid: int
    meid: str
    ran_function_id: int
    canonical_details_hash: str
    event_triggers: list
    actions: list
    directives: Directives
    subscribers: list[Subscriber] = field(default_factory=list)
    state: str = "pending"  # pending | active
    attempts: int = 0
    timer: object = None

    def to_json(self) -> dict:
        return {
            "SubscriptionId": self.subid,
            "Meid": self.meid,
            "RANFunctionID": self.ran_function_id,
            "state": self.state,
            "hash": self.canonical_details_hash,
            "subscribers": [
                {"Host": s.client.Host, "HTTPPort": s.client.HTTPPort, "XappEventInstanceId": s.xapp_event_instance_id}
                for s in self.subscribers
            ],
        }


def _need(body: dict, key: str, kind, where: str = ""):
    if not isinstance(body, dict) or key not in body:
        raise MalformedBody(f"missing field {where}{key}")
    value = body[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise MalformedBody(f"field {where}{key} must be an integer")
    if kind is not int and not isinstance(value, kind):
        raise MalformedBody(f"field {where}{key} has the wrong type")
    return value


def _byte_list(value, where: str) -> list:
    if not isinstance(value, list) or not all(isinstance(b, int) and not isinstance(b, bool) and 0 <= b < 256 for b in value):
        raise MalformedBody(f"{where} must be a list of byte values")
    return list(value)


def parse_subscription_request(body) -> SubscriptionRequest:
    """Strict camel-case parse; anything else is a :class:`MalformedBody`."""
    if not isinstance(body, dict):
        raise MalformedBody("subscription request must be a JSON object")
    sub_id = body.get("SubscriptionId", "")
    if sub_id is None:
        sub_id = ""
    if not isinstance(sub_id, (str, int)) or isinstance(sub_id, bool):
        raise MalformedBody("SubscriptionId must be a string")
    ce = _need(body, "ClientEndpoint", dict)
    client = ClientEndpoint(
        _need(ce, "Host", str, "ClientEndpoint."),
        _need(ce, "HTTPPort", int, "ClientEndpoint."),
        _need(ce, "RMRPort", int, "ClientEndpoint."),
    )
    meid = _need(body, "Meid", str)
    ran_function = _need(body, "RANFunctionID", int)
    raw_dir = body.get("E2SubscriptionDirectives") or {}
    if not isinstance(raw_dir, dict):
        raise MalformedBody("E2SubscriptionDirectives must be an object")
    directives = Directives(
        raw_dir.get("E2TimeoutTimerValue", DEFAULT_TIMEOUT_S),
        raw_dir.get("E2RetryCount", DEFAULT_RETRIES),
        raw_dir.get("RMRRoutingNeeded", True),
    )
    if not isinstance(directives.E2TimeoutTimerValue, int) or directives.E2TimeoutTimerValue <= 0:
        raise MalformedBody("E2TimeoutTimerValue must be a positive integer")
    if not isinstance(directives.E2RetryCount, int) or directives.E2RetryCount < 0:
        raise MalformedBody("E2RetryCount must be a non-negative integer")
    if not isinstance(directives.RMRRoutingNeeded, bool):
        raise MalformedBody("RMRRoutingNeeded must be a boolean")
    details = _need(body, "SubscriptionDetails", list)
    if len(details) != 1:
        raise MalformedBody("exactly one SubscriptionDetails entry is supported")
    d = details[0]
    xid = _need(d, "XappEventInstanceId", int, "SubscriptionDetails[0].")
    if xid < 0:
        raise MalformedBody("XappEventInstanceId must be >= 0")
    triggers = _byte_list(_need(d, "EventTriggers", list, "SubscriptionDetails[0]."), "EventTriggers")
    actions = []
    for i, a in enumerate(_need(d, "ActionToBeSetupList", list, "SubscriptionDetails[0].")):
        where = f"ActionToBeSetupList[{i}]."
        action = {
            "ActionID": _need(a, "ActionID", int, where),
            "ActionType": _need(a, "ActionType", str, where).lower(),
            "ActionDefinition": _byte_list(a.get("ActionDefinition", []), where + "ActionDefinition"),
        }
        sub = a.get("SubsequentAction")
        if sub is not None:
            kind = _need(sub, "SubsequentActionType", str, where + "SubsequentAction.")
            wait = _need(sub, "TimeToWait", str, where + "SubsequentAction.")
            if kind not in ("continue", "wait"):
                raise MalformedBody(f"{where}SubsequentActionType must be continue or wait")
            try:
                parse_time_to_wait(wait)
            except ValueError as exc:
                raise MalformedBody(str(exc)) from None
            action["SubsequentAction"] = {"SubsequentActionType": kind, "TimeToWait": wait}
        actions.append(action)
    if not actions:
        raise MalformedBody("ActionToBeSetupList must not be empty")
    if len({a["ActionID"] for a in actions}) != len(actions):
        raise MalformedBody("ActionIDs must be unique")
    return SubscriptionRequest(str(sub_id), client, meid, ran_function, directives, xid, triggers, actions)


class SubMgr:
    def __init__(self, bus: MessageBus, rnib: Rnib, fabric: HttpFabric, endpoint: str = SUBMGR_ENDPOINT):
        self.bus = bus
        self.clock = bus.clock
        self.rnib = rnib
        self.fabric = fabric
        self.endpoint = endpoint
        self.records: dict[int, SubscriptionRecord] = {}
        self._ids = itertools.count(1)
        self._lock = threading.RLock()
        self.sent_requests: list[tuple[int, int]] = []  # (time, subid) of every RIC_SUB_REQ
        self.notifications: list[dict] = []
        self.undelivered: list[dict] = []
        self.mailbox = bus.register_endpoint(endpoint)
        self.mailbox.listener = lambda _mb: self.clock.call_soon(self._drain)
        bus.register_listeners.append(self._on_endpoint_registered)
        self.router = self._build_router()

    # -- REST ----------------------------------------------------------------

    def _build_router(self) -> RestRouter:
        r = RestRouter("submgr")
        r.add_handler("POST", "subscribe", SUBSCRIPTIONS_URI, self._post, raw=True)
        r.add_handler("GET", "list", SUBSCRIPTIONS_URI, lambda req: json_response(200, self.list_records()), raw=True)
        r.add_handler("DELETE", "unsubscribe", SUBSCRIPTIONS_URI + "/{subid}", self._delete, raw=True)
        r.add_handler("GET", "query", QUERY_URI, lambda req: json_response(200, self.query_subscriptions(req.params["xapp_url"])), raw=True)
        return r

    def _post(self, req: HttpRequest):
        try:
            try:
                body = req.json()
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise MalformedBody("request body is not JSON") from None
            subid = self.handle_subscription_request(body)
        except MiniRicError as exc:
            return json_response(exc.code, exc.to_json())
        return json_response(201, {"SubscriptionId": subid})

    def _delete(self, req: HttpRequest):
        try:
            subid = int(req.params["subid"])
        except ValueError:
            return json_response(404, UnknownSubid(f"no subscription {req.params['subid']!r}").to_json())
        caller = req.headers.get(CLIENT_HEADER)
        try:
            self.delete_subscription(subid, caller)
        except MiniRicError as exc:
            return json_response(exc.code, exc.to_json())
        return json_response(204)

    # -- operations ------------------------------------------------------------

    def handle_subscription_request(self, body) -> int:
        """Validate and accept a request; returns the subid. E2 work happens later."""
        req = parse_subscription_request(body)
        if not self.rnib.has(req.Meid):
            raise UnknownMeid(f"invalid meid {req.Meid!r}")
        functions = {f.ran_function_id for f in self.rnib.get_nodeb(req.Meid).ran_functions}
        if req.RANFunctionID not in functions:
            raise UnknownRanFunction(f"RAN function {req.RANFunctionID} not offered by {req.Meid}")
        with self._lock:
            if req.SubscriptionId:
                return self._modify(req)
            subid, _ = self.merge_or_create(req)
            return subid

    def merge_or_create(self, req: SubscriptionRequest) -> tuple[int, bool]:
        with self._lock:
            key = (req.Meid, req.RANFunctionID, req.details_hash())
            subscriber = Subscriber(req.ClientEndpoint, req.XappEventInstanceId, req.Directives.RMRRoutingNeeded)
            for rec in self.records.values():
                if (rec.meid, rec.ran_function_id, rec.canonical_details_hash) == key:
                    rec.subscribers.append(subscriber)
                    self._route_subscriber(rec, subscriber)
                    if rec.state == "active":
                        self.clock.call_soon(lambda r=rec: self._notify_pending(r, ""))
                    return rec.subid, True
            rec = SubscriptionRecord(
                next(self._ids), req.Meid, req.RANFunctionID, key[2], req.EventTriggers, req.ActionToBeSetupList, req.Directives
            )
            rec.subscribers.append(subscriber)
            self.records[rec.subid] = rec
            self._route_subscriber(rec, subscriber)
            self.bus.update_routes(lambda m: add_subscription_entries(m, [RIC_CONTROL_REQ], rec.subid, MEID_ROUTE))
            self.clock.call_soon(lambda: self._send_setup(rec))
            return rec.subid, False

    def _modify(self, req: SubscriptionRequest) -> int:
        try:
            subid = int(req.SubscriptionId)
        except ValueError:
            raise UnknownSubid(f"no subscription {req.SubscriptionId!r}") from None
        rec = self.records.get(subid)
        if rec is None:
            raise UnknownSubid(f"no subscription {subid}")
        mine = [s for s in rec.subscribers if s.client == req.ClientEndpoint]
        if not mine:
            raise NotASubscriber(f"{req.ClientEndpoint.Host} is not subscribed to {subid}")
        if len(rec.subscribers) == len(mine):
            # sole subscriber: change the node-side actions in place
            rec.event_triggers = req.EventTriggers
            rec.actions = req.ActionToBeSetupList
            rec.canonical_details_hash = req.details_hash()
            rec.directives = req.Directives
            rec.state = "pending"
            rec.attempts = 0
            for s in rec.subscribers:
                s.notified = False
                s.xapp_event_instance_id = req.XappEventInstanceId
            self.clock.call_soon(lambda: self._send_setup(rec))
            return subid
        for s in mine:
            self._detach(rec, s)
        new_subid, _ = self.merge_or_create(req)
        return new_subid

    def delete_subscription(self, subid: int, caller: Optional[str] = None) -> None:
        """Remove ``caller`` from the record (the whole record if no caller)."""
        with self._lock:
            rec = self.records.get(subid)
            if rec is None:
                raise UnknownSubid(f"no subscription {subid}")
            if caller is None:
                doomed = list(rec.subscribers)
            else:
                doomed = [s for s in rec.subscribers if s.client.matches(caller)]
                if not doomed:
                    raise NotASubscriber(f"{caller} is not subscribed to {subid}")
            for s in doomed[:1] if caller is not None else doomed:
                self._detach(rec, s)

    def _detach(self, rec: SubscriptionRecord, sub: Subscriber) -> None:
        rec.subscribers.remove(sub)
        if sub.routed and not any(s.endpoint == sub.endpoint and s.routed for s in rec.subscribers):
            self.bus.update_routes(lambda m: remove_subid(m, rec.subid, sub.endpoint))
        if rec.subscribers:
            return
        # last one out: tear down node side and every route of the subid
        if rec.timer is not None:
            rec.timer.cancel()
        del self.records[rec.subid]
        self.bus.update_routes(lambda m: remove_subid(m, rec.subid))
        body = json.dumps({"subid": rec.subid}).encode()
        try:
            self.bus.send(Message(RIC_SUB_DEL_REQ, body, subid=rec.subid, meid=rec.meid, source=self.endpoint))
        except MiniRicError as exc:
            log.warning("could not send delete for subid %s: %s", rec.subid, exc)

    def purge_client(self, rmr_endpoint: str) -> list[int]:
        """Detach every subscriber reached at ``rmr_endpoint`` (used after a force-kill)."""
        touched = []
        with self._lock:
            for rec in list(self.records.values()):
                for sub in [s for s in rec.subscribers if s.endpoint == rmr_endpoint]:
                    self._detach(rec, sub)
                    if rec.subid not in touched:
                        touched.append(rec.subid)
        return touched

    def query_subscriptions(self, xapp_url: str) -> list[int]:
        with self._lock:
            return sorted(sid for sid, rec in self.records.items() if any(s.client.matches(xapp_url) for s in rec.subscribers))

    def list_records(self) -> list[dict]:
        with self._lock:
            return [rec.to_json() for _, rec in sorted(self.records.items())]

    # -- routes ----------------------------------------------------------------

    def _route_subscriber(self, rec: SubscriptionRecord, sub: Subscriber) -> None:
        if sub.routed:
            self.bus.update_routes(lambda m: add_subscription_entries(m, [RIC_INDICATION], rec.subid, sub.endpoint))

    def _on_endpoint_registered(self, name: str) -> None:
        # a restarted subscriber gets its routes back; records outlive instances
        with self._lock:
            for rec in self.records.values():
                for sub in rec.subscribers:
                    if sub.endpoint == name:
                        self._route_subscriber(rec, sub)

    # -- E2 side -----------------------------------------------------------------

    def _send_setup(self, rec: SubscriptionRecord) -> None:
        if self.records.get(rec.subid) is not rec:
            return
        rec.attempts += 1
        body = {
            "subid": rec.subid,
            "ranFunctionId": rec.ran_function_id,
            "eventTrigger": rec.event_triggers,
            "actions": rec.actions,
        }
        self.sent_requests.append((self.clock.now, rec.subid))
        try:
            self.bus.send(Message(RIC_SUB_REQ, json.dumps(body).encode(), subid=rec.subid, meid=rec.meid, source=self.endpoint))
        except MiniRicError as exc:
            log.warning("subscription request for subid %s not routable: %s", rec.subid, exc)
        rec.timer = self.clock.call_later(rec.directives.E2TimeoutTimerValue * 1000, lambda: self._on_timeout(rec))

    def _on_timeout(self, rec: SubscriptionRecord) -> None:
        if self.records.get(rec.subid) is not rec or rec.state != "pending":
            return
        if rec.attempts <= rec.directives.E2RetryCount:
            log.info("retrying subscription %s (attempt %d)", rec.subid, rec.attempts + 1)
            self._send_setup(rec)
            return
        self._fail(rec, "E2 subscription request timed out", "E2Node", TIMEOUT_TYPE)

    def _fail(self, rec: SubscriptionRecord, cause: str, source: str, timeout_type: str = "") -> None:
        if rec.timer is not None:
            rec.timer.cancel()
        self.records.pop(rec.subid, None)
        self.bus.update_routes(lambda m: remove_subid(m, rec.subid))
        for sub in rec.subscribers:
            self._notify(rec, sub, cause, source, timeout_type)

    def _notify_pending(self, rec: SubscriptionRecord, cause: str) -> None:
        for sub in rec.subscribers:
            if not sub.notified:
                self._notify(rec, sub, cause, "", "")

    def _notify(self, rec: SubscriptionRecord, sub: Subscriber, cause: str, source: str, timeout_type: str) -> None:
        sub.notified = True
        body = {
            "SubscriptionId": rec.subid,
            "SubscriptionInstances": [
                {
                    "XappEventInstanceId": sub.xapp_event_instance_id,
                    "E2EventInstanceId": rec.subid,
                    "ErrorCause": cause,
                    "ErrorSource": source,
                    "TimeoutType": timeout_type,
                }
            ],
        }
        self.notifications.append(body)
        try:
            resp = self.fabric.post(f"http://{sub.client.address}{NOTIFICATION_URI}", body)
            if not resp.ok:
                log.warning("notification to %s answered %s", sub.client.address, resp.status)
        except BackendUnavailable as exc:
            self.undelivered.append(body)
            log.warning("notification to %s not delivered: %s", sub.client.address, exc)

    def _drain(self) -> None:
        for msg in self.mailbox.drain():
            try:
                self._handle(msg)
            except Exception:  # a bad reply must not stall the manager
                log.exception("SubMgr failed to handle mtype %s", msg.mtype)

    def _handle(self, msg: Message) -> None:
        if msg.mtype == RIC_HEALTH_CHECK_REQ:
            self.bus.send(make_reply(msg, b"OK", RIC_HEALTH_CHECK_RESP).with_fields(source=self.endpoint))
            return
        if msg.mtype in (RIC_SUB_DEL_RESP, RIC_SUB_DEL_FAILURE):
            log.info("E2 delete for subid %s: %s", msg.subid, msg.text())
            return
        if msg.mtype not in (RIC_SUB_RESP, RIC_SUB_FAILURE):
            log.warning("SubMgr ignoring mtype %s", msg.mtype)
            return
        body = json.loads(msg.text())
        with self._lock:
            rec = self.records.get(body.get("subid"))
            if rec is None or rec.state != "pending":
                return  # late answer to a retried or withdrawn request
            if rec.timer is not None:
                rec.timer.cancel()
            if msg.mtype == RIC_SUB_RESP:
                rec.state = "active"
                self._notify_pending(rec, "")
            else:
                self._fail(rec, body.get("cause", "E2 subscription failure"), body.get("source", "E2Node"))
