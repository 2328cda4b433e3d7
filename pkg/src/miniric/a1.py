"""A1 mediator: northbound policy intake and RMR distribution to xApps.

Policy requests travel as ``A1_POLICY_REQ`` with the policy type id in the
subid field; the app manager installs one route per (type, consumer) pair,
so only xApps that list the type receive its instances. Acknowledgements
come back as ``A1_POLICY_RESP`` and land in the ack ledger.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from typing import Optional

from .bus import MessageBus
from .errors import (
    DuplicateInstance,
    MalformedResponse,
    MiniRicError,
    NoRoute,
    UnknownInstance,
    UnknownPolicyType,
    ValidationFailed,
)
from .messages import (
    A1_POLICY_QUERY,
    A1_POLICY_REQ,
    A1_POLICY_RESP,
    RIC_HEALTH_CHECK_REQ,
    RIC_HEALTH_CHECK_RESP,
    Message,
    make_reply,
)
from .rest import HttpRequest, RestRouter, json_response

log = logging.getLogger(__name__)

A1_ENDPOINT = "service-ricplt-a1mediator-rmr.ricplt"
A1_HTTP_ADDRESS = "service-ricplt-a1mediator-http.ricplt:10000"
RESPONSE_KEYS = ("policy_type_id", "policy_instance_id", "handler_id", "status")


@dataclass
class PolicyType:
    policy_type_id: int
    name: str = ""
    schema: dict = field(default_factory=dict)

    def check(self, payload) -> list[str]:
        """Shallow shape check: object payload carrying the schema's required keys."""
        if not isinstance(payload, dict):
            return ["policy payload must be a JSON object"]
        return [f"missing key {k!r}" for k in self.schema.get("required", []) if k not in payload]


@dataclass
class PolicyInstance:
    policy_type_id: int
    policy_instance_id: str
    payload: dict


@dataclass(frozen=True)
class PolicyResponse:
    policy_type_id: int
    policy_instance_id: str
    handler_id: str
    status: str


@dataclass
class _Tracked:
    instance: PolicyInstance
    deleting: bool = False
    pending: set = field(default_factory=set)
    statuses: dict = field(default_factory=dict)


class NoConsumers(UserWarning):
    pass


class A1Mediator:
    def __init__(self, bus: MessageBus, endpoint: str = A1_ENDPOINT):
        self.bus = bus
        self.endpoint = endpoint
        self.types: dict[int, PolicyType] = {}
        self._tracked: dict[tuple[int, str], _Tracked] = {}
        self.history: list[PolicyResponse] = []
        self.warnings: list[str] = []
        self.errors: list[str] = []
        self._lock = threading.RLock()
        self.mailbox = bus.register_endpoint(endpoint)
        self.mailbox.listener = lambda _mb: bus.clock.call_soon(self._drain)
        self.router = self._build_router()

    # -- policy types ------------------------------------------------------

    def create_policy_type(self, policy_type_id: int, name: str = "", schema: Optional[dict] = None) -> PolicyType:
        with self._lock:
            pt = PolicyType(int(policy_type_id), name, dict(schema or {}))
            self.types[pt.policy_type_id] = pt
            return pt

    def _type(self, type_id: int) -> PolicyType:
        try:
            return self.types[int(type_id)]
        except (KeyError, TypeError, ValueError):
            raise UnknownPolicyType(f"unknown policy type {type_id!r}") from None

    # -- northbound operations -----------------------------------------------

    def instances(self, policy_type_id: int) -> list[PolicyInstance]:
        self._type(policy_type_id)
        with self._lock:
            return [
                t.instance
                for (tid, _), t in sorted(self._tracked.items())
                if tid == int(policy_type_id) and not t.deleting
            ]

    def get_instance(self, policy_type_id: int, instance_id: str) -> PolicyInstance:
        t = self._tracked.get((int(policy_type_id), instance_id))
        if t is None or t.deleting:
            raise UnknownInstance(f"no policy instance {instance_id!r} of type {policy_type_id}")
        return t.instance

    def policy_create(self, policy_type_id: int, instance_id: str, payload: dict) -> list[str]:
        """Store and publish a new instance; returns the endpoints it reached."""
        with self._lock:
            pt = self._type(policy_type_id)
            key = (pt.policy_type_id, instance_id)
            cur = self._tracked.get(key)
            if cur is not None and not cur.deleting:
                raise DuplicateInstance(f"policy instance {instance_id!r} of type {policy_type_id} exists")
            self._shape(pt, payload)
            tracked = _Tracked(PolicyInstance(pt.policy_type_id, instance_id, payload))
            self._tracked[key] = tracked
            return self._publish(tracked, "CREATE")

    def policy_update(self, policy_type_id: int, instance_id: str, payload: dict) -> list[str]:
        with self._lock:
            pt = self._type(policy_type_id)
            tracked = self._live(pt.policy_type_id, instance_id)
            self._shape(pt, payload)
            tracked.instance = PolicyInstance(pt.policy_type_id, instance_id, payload)
            return self._publish(tracked, "UPDATE")

    def policy_delete(self, policy_type_id: int, instance_id: str) -> list[str]:
        with self._lock:
            pt = self._type(policy_type_id)
            tracked = self._live(pt.policy_type_id, instance_id)
            tracked.deleting = True
            reached = self._publish(tracked, "DELETE")
            self._maybe_purge((pt.policy_type_id, instance_id))
            return reached

    def _shape(self, pt: PolicyType, payload) -> None:
        problems = pt.check(payload)
        if problems:
            raise ValidationFailed(problems)

    def _live(self, type_id: int, instance_id: str) -> _Tracked:
        t = self._tracked.get((type_id, instance_id))
        if t is None or t.deleting:
            raise UnknownInstance(f"no policy instance {instance_id!r} of type {type_id}")
        return t

    def _request(self, inst: PolicyInstance, operation: str, destination: Optional[str] = None) -> Message:
        body = {
            "operation": operation,
            "policy_type_id": inst.policy_type_id,
            "policy_instance_id": inst.policy_instance_id,
            "payload": inst.payload,
        }
        return Message(
            A1_POLICY_REQ,
            json.dumps(body).encode(),
            subid=inst.policy_type_id,
            source=self.endpoint,
            destination=destination,
        )

    def _publish(self, tracked: _Tracked, operation: str) -> list[str]:
        inst = tracked.instance
        try:
            receipt = self.bus.send(self._request(inst, operation))
        except NoRoute:
            msg = f"no consumers for policy type {inst.policy_type_id} ({operation} {inst.policy_instance_id})"
            self.warnings.append(msg)
            log.warning(msg)
            tracked.pending = set()
            return []
        for failure in receipt.failures:
            self.warnings.append(f"{operation} {inst.policy_instance_id} not delivered to {failure.endpoint}: {failure.error}")
        tracked.pending = set(receipt.delivered)
        # a new operation needs a fresh acknowledgement from every consumer
        tracked.statuses = {}
        return receipt.delivered

    def _maybe_purge(self, key) -> None:
        t = self._tracked.get(key)
        if t is not None and t.deleting and not t.pending:
            del self._tracked[key]

    # -- southbound handlers ------------------------------------------------

    def handle_policy_response(self, msg: Message) -> PolicyResponse:
        try:
            body = json.loads(msg.text())
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise MalformedResponse("policy response is not JSON") from None
        if not isinstance(body, dict):
            raise MalformedResponse("policy response must be an object")
        missing = [k for k in RESPONSE_KEYS if k not in body]
        if missing:
            raise MalformedResponse(f"policy response missing {', '.join(missing)}")
        if body["status"] not in ("OK", "ERROR"):
            raise MalformedResponse(f"bad status {body['status']!r}")
        resp = PolicyResponse(int(body["policy_type_id"]), str(body["policy_instance_id"]), str(body["handler_id"]), body["status"])
        with self._lock:
            key = (resp.policy_type_id, resp.policy_instance_id)
            tracked = self._tracked.get(key)
            if tracked is None:
                raise UnknownInstance(f"response for unknown policy instance {resp.policy_instance_id!r}")
            if msg.source in tracked.pending:
                tracked.pending.discard(msg.source)
            elif tracked.pending and msg.source is None:
                tracked.pending.pop()
            tracked.statuses[resp.handler_id] = resp.status
            self.history.append(resp)
            self._maybe_purge(key)
        return resp

    def handle_policy_query(self, msg: Message) -> int:
        try:
            body = json.loads(msg.text())
            type_id = int(body["policy_type_id"])
        except (ValueError, KeyError, TypeError):
            raise MalformedResponse("policy query must carry policy_type_id") from None
        sent = 0
        for inst in self.instances(type_id):
            self.bus.send(self._request(inst, "CREATE", destination=msg.source))
            sent += 1
        return sent

    def _drain(self) -> None:
        for msg in self.mailbox.drain():
            try:
                if msg.mtype == A1_POLICY_RESP:
                    self.handle_policy_response(msg)
                elif msg.mtype == A1_POLICY_QUERY:
                    self.handle_policy_query(msg)
                elif msg.mtype == RIC_HEALTH_CHECK_REQ:
                    self.bus.send(make_reply(msg, b"OK", RIC_HEALTH_CHECK_RESP).with_fields(source=self.endpoint))
                else:
                    log.warning("A1 mediator ignoring mtype %s", msg.mtype)
            except MiniRicError as exc:
                self.errors.append(f"{exc.name}: {exc}")
                log.error("A1 mediator: %s: %s", exc.name, exc)

    # -- ledger ---------------------------------------------------------------

    def ack_ledger(self) -> list[tuple[str, str, str]]:
        """(instance id, handler id, status) for every live or deleting instance."""
        with self._lock:
            return [
                (t.instance.policy_instance_id, handler, status)
                for _, t in sorted(self._tracked.items())
                for handler, status in sorted(t.statuses.items())
            ]

    def status(self, policy_type_id: int, instance_id: str) -> dict:
        t = self._tracked.get((int(policy_type_id), instance_id))
        if t is None:
            raise UnknownInstance(f"no policy instance {instance_id!r} of type {policy_type_id}")
        return {
            "instance_status": "DELETING" if t.deleting else "IN EFFECT",
            "pending": sorted(t.pending),
            "acks": dict(sorted(t.statuses.items())),
        }

    # -- northbound REST (non-normative paths) ------------------------------

    def _build_router(self) -> RestRouter:
        r = RestRouter("a1mediator")
        base = "/a1-p/policytypes"

        def healthcheck(req: HttpRequest):
            return json_response(200, {"status": "OK"})

        def list_types(req):
            return json_response(200, sorted(self.types))

        def put_type(req):
            body = req.json() or {}
            self.create_policy_type(int(req.params["t"]), body.get("name", ""), body.get("policy_type", body.get("schema")))
            return json_response(201)

        def list_instances(req):
            return json_response(200, [i.policy_instance_id for i in self.instances(int(req.params["t"]))])

        def get_instance(req):
            return json_response(200, self.get_instance(int(req.params["t"]), req.params["i"]).payload)

        def put_instance(req):
            t, i = int(req.params["t"]), req.params["i"]
            payload = req.json()
            live = (t, i) in self._tracked and not self._tracked[(t, i)].deleting
            (self.policy_update if live else self.policy_create)(t, i, payload)
            return json_response(202)

        def delete_instance(req):
            self.policy_delete(int(req.params["t"]), req.params["i"])
            return json_response(202)

        def get_status(req):
            return json_response(200, self.status(int(req.params["t"]), req.params["i"]))

        for method, uri, fn in (
            ("GET", "/a1-p/healthcheck", healthcheck),
            ("GET", base, list_types),
            ("PUT", base + "/{t}", put_type),
            ("GET", base + "/{t}/policies", list_instances),
            ("GET", base + "/{t}/policies/{i}", get_instance),
            ("PUT", base + "/{t}/policies/{i}", put_instance),
            ("DELETE", base + "/{t}/policies/{i}", delete_instance),
            ("GET", base + "/{t}/policies/{i}/status", get_status),
        ):
            r.add_handler(method, fn.__name__, uri, _wrap(fn), raw=True)
        return r


def _wrap(fn):
    def handler(req):
        try:
            return fn(req)
        except MiniRicError as exc:
            return json_response(exc.code, exc.to_json())
        except (ValueError, TypeError) as exc:
            return json_response(400, {"error": "MalformedBody", "detail": str(exc)})

    handler.__name__ = fn.__name__
    return handler
