"""E2 termination, E2 manager and simulated E2 nodes.

SubMgr and xApps talk to nodes only through RMR: subscription and control
requests are routed by ``%meid`` to the E2 termination endpoint, which
owns every connected node and forwards to the node object. Nodes emit
RIC indications through the same endpoint.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from .bus import MessageBus
from .clock import SimClock
from .e2sm import (
    DEFAULT_MEAS,
    KPM_OID,
    KPM_RAN_FUNCTION_ID,
    ActionDefinition,
    ControlMessage,
    EventTrigger,
    IndicationHeader,
    MeasSeries,
    RicIndication,
    TraceSource,
    decode_action_definition,
    decode_control,
    decode_event_trigger,
    encode_indication,
    kpm_ran_function_definition,
    parse_time_to_wait,
    synthetic_trace,
)
from .errors import (
    DecodeError,
    DuplicateNode,
    MiniRicError,
    NoRoute,
    NotFound,
    UnknownParameter,
    UnknownRanFunction,
    UnsupportedActionType,
)
from .messages import (
    RIC_CONTROL_ACK,
    RIC_CONTROL_FAILURE,
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
from .sdl import NodebInfo, RanFunction, Rnib

log = logging.getLogger(__name__)

E2TERM_ENDPOINT = "service-ricplt-e2term-rmr-alpha.ricplt"

SUPPORTED_ACTIONS = ("report", "insert", "policy")
DEFAULT_PARAMS = {"tx_power_dbm": 20, "handover_offset_db": 0, "prb_cap_percent": 100}


@dataclass
class Action:
    """One entry of an action-to-be-setup list, as the node sees it."""

    action_id: int
    action_type: str
    definition: bytes = b""
    subsequent_type: str = "continue"
    time_to_wait: str = "w10ms"

    def to_json(self) -> dict:
        return {
            "ActionID": self.action_id,
            "ActionType": self.action_type,
            "ActionDefinition": list(self.definition),
            "SubsequentAction": {"SubsequentActionType": self.subsequent_type, "TimeToWait": self.time_to_wait},
        }

    @classmethod
    def from_json(cls, d: dict) -> "Action":
        sub = d.get("SubsequentAction") or {}
        return cls(
            int(d["ActionID"]),
            str(d["ActionType"]).lower(),
            bytes(d.get("ActionDefinition") or []),
            sub.get("SubsequentActionType", "continue"),
            sub.get("TimeToWait", "w10ms"),
        )


@dataclass
class NodeConfig:
    plmn_id: str
    nodeb_id: str
    node_type: str = "gnb"
    ran_functions: list[RanFunction] = field(default_factory=list)
    params: dict = field(default_factory=lambda: dict(DEFAULT_PARAMS))
    trace: Optional[TraceSource] = None

    def __post_init__(self):
        self.plmn_id = str(self.plmn_id)
        self.nodeb_id = str(self.nodeb_id)
        if not self.ran_functions:
            self.ran_functions = [RanFunction(KPM_RAN_FUNCTION_ID, KPM_OID, kpm_ran_function_definition())]

    def fingerprint(self) -> str:
        doc = {
            "plmn": self.plmn_id,
            "nodeb": self.nodeb_id,
            "type": self.node_type,
            "functions": sorted((f.ran_function_id, f.oid) for f in self.ran_functions),
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:8]

    def inventory_name(self) -> str:
        return f"{self.node_type}_{self.plmn_id}_{self.nodeb_id}_{self.fingerprint()}"


@dataclass
class _ArmedAction:
    action: Action
    definition: Optional[ActionDefinition]
    timer: object = None


@dataclass
class ActionSet:
    subid: int
    ran_function_id: int
    trigger_bytes: bytes
    trigger: EventTrigger
    actions: dict[int, _ArmedAction]
    signature: str

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class Procedure:
    """A RAN procedure suspended by an INSERT indication."""

    call_process_id: int
    subid: int
    action_id: int
    started_at: int
    state: str = "suspended"  # suspended | resumed | continued


class SetupFailure(MiniRicError):
    pass


class E2Node:
    """A simulated base station driven by the shared simulated clock."""

    def __init__(self, config: NodeConfig, clock: SimClock, emit: Callable[[RicIndication], None]):
        self.config = config
        self.inventory_name = config.inventory_name()
        self.clock = clock
        self._emit = emit
        self.trace = config.trace or synthetic_trace(seed=int(config.fingerprint(), 16) & 0xFFFF)
        self.params = dict(config.params)
        self.connection = "up"
        self.active_actions: dict[int, ActionSet] = {}
        self.procedures: dict[int, Procedure] = {}
        self.events: list[tuple[int, str]] = []
        self.emitted: dict[int, int] = {}
        self.setup_calls = 0
        self.responsive = True
        self._cpid = itertools.count(1)
        self._sn = itertools.count(1)

    @property
    def plmn_id(self) -> str:
        return self.config.plmn_id

    @property
    def nodeb_id(self) -> str:
        return self.config.nodeb_id

    @property
    def ran_functions(self) -> list[RanFunction]:
        return self.config.ran_functions

    def _event(self, text: str) -> None:
        self.events.append((self.clock.now, text))
        log.info("%s: %s", self.inventory_name, text)

    def active_action_count(self) -> int:
        return sum(len(s) for s in self.active_actions.values())

    @property
    def total_emitted(self) -> int:
        return sum(self.emitted.values())

    # -- services ----------------------------------------------------------

    def setup_actions(self, subid: int, ran_function_id: int, trigger: bytes, actions: list[Action]) -> ActionSet:
        """Arm the actions of one subscription. Raises on rejection."""
        self.setup_calls += 1
        if self.connection != "up":
            raise SetupFailure("E2 node is disconnected")
        if ran_function_id not in {f.ran_function_id for f in self.ran_functions}:
            raise UnknownRanFunction(f"RAN function {ran_function_id} not offered by {self.inventory_name}")
        signature = hashlib.sha256(
            json.dumps([ran_function_id, list(trigger), [a.to_json() for a in actions]], sort_keys=True).encode()
        ).hexdigest()
        existing = self.active_actions.get(subid)
        if existing is not None:
            if existing.signature == signature:
                return existing
            self.delete_actions(subid)
        decoded_trigger = decode_event_trigger(trigger)
        ids = [a.action_id for a in actions]
        if not actions or len(ids) != len(set(ids)):
            raise SetupFailure("action ids must be present and unique")
        armed = {}
        for a in actions:
            if a.action_type not in SUPPORTED_ACTIONS:
                raise UnsupportedActionType(f"action type {a.action_type!r} is not supported")
            definition = None
            if a.action_type == "report" or (a.action_type == "insert" and a.definition):
                definition = decode_action_definition(a.definition)
            if a.action_type == "insert":
                if a.subsequent_type not in ("continue", "wait"):
                    raise SetupFailure(f"bad SubsequentActionType {a.subsequent_type!r}")
                parse_time_to_wait(a.time_to_wait)
            armed[a.action_id] = _ArmedAction(a, definition)
        aset = ActionSet(subid, ran_function_id, bytes(trigger), decoded_trigger, armed, signature)
        self.active_actions[subid] = aset
        for armed_action in armed.values():
            if armed_action.action.action_type in ("report", "insert"):
                self._schedule(aset, armed_action)
        self._event(f"armed subid {subid} with {len(armed)} action(s)")
        return aset

    def _schedule(self, aset: ActionSet, armed: _ArmedAction) -> None:
        period = aset.trigger.reportingPeriod

        def fire():
            if self.active_actions.get(aset.subid) is not aset or self.connection != "up":
                return
            armed.timer = self.clock.call_later(period, fire)
            if armed.action.action_type == "report":
                self._report(aset, armed)
            else:
                self._insert(aset, armed)

        armed.timer = self.clock.call_later(period, fire)

    def _series(self, definition: Optional[ActionDefinition], window: int) -> tuple[MeasSeries, ...]:
        if definition is None:
            return ()
        now = self.clock.now
        return tuple(MeasSeries(name, self.trace.sample(name, now - window, now)) for name in definition.meas_names)

    def _report(self, aset: ActionSet, armed: _ArmedAction) -> None:
        granul = armed.definition.granulPeriod if armed.definition else aset.trigger.reportingPeriod
        ind = RicIndication(
            IndicationHeader(self.clock.now - granul, self.inventory_name),
            self._series(armed.definition, granul),
            aset.subid,
            self.inventory_name,
            armed.action.action_id,
            "report",
            next(self._sn),
        )
        self.emitted[aset.subid] = self.emitted.get(aset.subid, 0) + 1
        self._emit(ind)

    def _insert(self, aset: ActionSet, armed: _ArmedAction) -> None:
        cpid = next(self._cpid)
        proc = Procedure(cpid, aset.subid, armed.action.action_id, self.clock.now)
        self.procedures[cpid] = proc
        window = armed.definition.granulPeriod if armed.definition else aset.trigger.reportingPeriod
        ind = RicIndication(
            IndicationHeader(self.clock.now, self.inventory_name),
            self._series(armed.definition, window),
            aset.subid,
            self.inventory_name,
            armed.action.action_id,
            "insert",
            next(self._sn),
            cpid,
        )
        self.emitted[aset.subid] = self.emitted.get(aset.subid, 0) + 1
        self._event(f"procedure {cpid} suspended awaiting control")
        wait = parse_time_to_wait(armed.action.time_to_wait)
        policy = armed.action.subsequent_type

        def timeout():
            if proc.state != "suspended":
                return
            if policy == "continue":
                proc.state = "continued"
                self._event(f"procedure {cpid} continued after {armed.action.time_to_wait} without control")
            else:
                self._event(f"procedure {cpid} still waiting for control")

        self.clock.call_later(wait, timeout)
        self._emit(ind)

    def delete_actions(self, subid: int) -> bool:
        aset = self.active_actions.pop(subid, None)
        if aset is None:
            return False
        for armed in aset.actions.values():
            if armed.timer is not None:
                armed.timer.cancel()
        self._event(f"removed actions of subid {subid}")
        return True

    def handle_control(self, ctrl: ControlMessage) -> dict:
        """Apply a control command; returns a result dict or raises."""
        if ctrl.command == "resume":
            cpid = ctrl.params.get("call_process_id")
            proc = self.procedures.get(cpid)
            if proc is None or proc.state != "suspended":
                raise UnknownParameter(f"no suspended procedure {cpid!r}")
            proc.state = "resumed"
            self._event(f"procedure {cpid} resumed by control")
            return {"call_process_id": cpid, "state": proc.state}
        if ctrl.command == "set":
            unknown = sorted(k for k in ctrl.params if k not in self.params)
            if unknown:
                raise UnknownParameter(f"unknown parameter(s): {', '.join(unknown)}")
            self.params.update(ctrl.params)
            self._event(f"parameters changed: {ctrl.params}")
            return {"params": dict(self.params)}
        raise UnknownParameter(f"unknown control command {ctrl.command!r}")

    def query(self) -> dict:
        return {
            "inventory_name": self.inventory_name,
            "connection": self.connection,
            "params": dict(self.params),
            "active_subids": sorted(self.active_actions),
            "suspended": sorted(p.call_process_id for p in self.procedures.values() if p.state == "suspended"),
        }

    def tick(self, now: int) -> list[RicIndication]:
        """Drive the shared clock to ``now`` and return what this node emitted meanwhile."""
        captured: list[RicIndication] = []
        emit = self._emit

        def tap(ind):
            captured.append(ind)
            emit(ind)

        self._emit = tap
        try:
            self.clock.advance(max(0, now - self.clock.now))
        finally:
            self._emit = emit
        return captured


class E2Term:
    """The RMR endpoint owning all E2 nodes; bridges messages to node objects."""

    def __init__(self, bus: MessageBus, endpoint: str = E2TERM_ENDPOINT):
        self.bus = bus
        self.endpoint = endpoint
        self.nodes: dict[str, E2Node] = {}
        self.mailbox = bus.register_endpoint(endpoint)
        self.mailbox.listener = lambda _mb: bus.clock.call_soon(self._drain)
        self.dropped_indications = 0

    def attach(self, node: E2Node) -> None:
        self.nodes[node.inventory_name] = node
        node._emit = self._forward_indication
        self.bus.set_owner(node.inventory_name, self.endpoint)

    def detach(self, name: str) -> None:
        self.nodes.pop(name, None)
        self.bus.clear_owner(name)

    def _forward_indication(self, ind: RicIndication) -> None:
        msg = Message(RIC_INDICATION, encode_indication(ind), subid=ind.subid, meid=ind.meid, source=self.endpoint)
        try:
            receipt = self.bus.send(msg)
        except NoRoute:
            self.dropped_indications += 1
            log.warning("no route for indication of subid %s", ind.subid)
            return
        if not receipt.ok:
            self.dropped_indications += 1

    def _drain(self) -> None:
        for msg in self.mailbox.drain():
            try:
                self._handle(msg)
            except Exception:  # one bad message must not stall the terminator
                log.exception("E2Term failed to handle mtype %s", msg.mtype)

    def _reply(self, msg: Message, mtype: int, payload: dict) -> None:
        reply = make_reply(msg, json.dumps(payload).encode(), mtype).with_fields(source=self.endpoint)
        self.bus.send(reply)

    def _handle(self, msg: Message) -> None:
        if msg.mtype == RIC_HEALTH_CHECK_REQ:
            self._reply(msg, RIC_HEALTH_CHECK_RESP, {"status": "OK"})
            return
        node = self.nodes.get(msg.meid)
        if msg.mtype == RIC_SUB_REQ:
            req = json.loads(msg.text())
            if node is None or not node.responsive:
                return  # unreachable node: SubMgr's timer handles it
            if node.connection != "up":
                self._reply(msg, RIC_SUB_FAILURE, {"subid": req["subid"], "cause": "E2 node disconnected", "source": "E2Term"})
                return
            try:
                node.setup_actions(
                    req["subid"],
                    req["ranFunctionId"],
                    bytes(req["eventTrigger"]),
                    [Action.from_json(a) for a in req["actions"]],
                )
            except MiniRicError as exc:
                self._reply(msg, RIC_SUB_FAILURE, {"subid": req["subid"], "cause": f"{exc.name}: {exc}", "source": "E2Node"})
                return
            self._reply(msg, RIC_SUB_RESP, {"subid": req["subid"], "admitted": [a["ActionID"] for a in req["actions"]]})
        elif msg.mtype == RIC_SUB_DEL_REQ:
            req = json.loads(msg.text())
            if node is None or not node.responsive:
                return
            if node.delete_actions(req["subid"]):
                self._reply(msg, RIC_SUB_DEL_RESP, {"subid": req["subid"]})
            else:
                self._reply(msg, RIC_SUB_DEL_FAILURE, {"subid": req["subid"], "cause": "unknown subid"})
        elif msg.mtype == RIC_CONTROL_REQ:
            if node is None:
                self._reply(msg, RIC_CONTROL_FAILURE, {"status": "ERROR", "cause": f"unknown meid {msg.meid!r}"})
                return
            try:
                result = node.handle_control(decode_control(msg.payload))
            except (DecodeError, UnknownParameter) as exc:
                self._reply(msg, RIC_CONTROL_FAILURE, {"status": "ERROR", "cause": f"{exc.name}: {exc}"})
                return
            self._reply(msg, RIC_CONTROL_ACK, {"status": "OK", **result})
        else:
            log.warning("E2Term ignoring mtype %s", msg.mtype)


class E2Mgr:
    """E2 setup bookkeeping: node inventory in the R-NIB and meid ownership."""

    def __init__(self, term: E2Term, rnib: Rnib, clock: SimClock):
        self.term = term
        self.rnib = rnib
        self.clock = clock

    def e2_setup(self, config: NodeConfig) -> str:
        name = config.inventory_name()
        if name in self.term.nodes or self.rnib.has(name):
            raise DuplicateNode(f"E2 node already set up: {name}")
        node = E2Node(config, self.clock, lambda ind: None)
        self.term.attach(node)
        self.rnib.put_nodeb(
            NodebInfo(name, config.node_type, config.plmn_id, config.nodeb_id, "connected", list(config.ran_functions))
        )
        log.info("E2 setup complete for %s", name)
        return name

    def node(self, name: str) -> E2Node:
        try:
            return self.term.nodes[name]
        except KeyError:
            raise NotFound(f"no such E2 node: {name}") from None

    def disconnect(self, name: str) -> None:
        node = self.node(name)
        node.connection = "down"
        for subid in list(node.active_actions):
            node.delete_actions(subid)
        self.rnib.set_status(name, "disconnected")

    def reconnect(self, name: str) -> None:
        node = self.node(name)
        node.connection = "up"
        self.rnib.set_status(name, "connected")

    @property
    def nodes(self) -> list[E2Node]:
        return list(self.term.nodes.values())


def default_gnb(plmn_id: str = "734", nodeb_id: str = "733", trace: Optional[TraceSource] = None, extra_functions=()) -> NodeConfig:
    """The reference gNodeB: KPM on RAN function 200 plus any extra functions."""
    functions = [RanFunction(KPM_RAN_FUNCTION_ID, KPM_OID, kpm_ran_function_definition([DEFAULT_MEAS]))]
    functions.extend(extra_functions)
    return NodeConfig(plmn_id, nodeb_id, "gnb", functions, trace=trace)
