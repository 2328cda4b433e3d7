from __future__ import annotations

import json

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from miniric.a1 import A1_ENDPOINT, A1_HTTP_ADDRESS, A1Mediator
from miniric.bus import MessageBus
from miniric.clock import SimClock
from miniric.errors import DuplicateInstance, MalformedResponse, UnknownInstance, UnknownPolicyType, ValidationFailed
from miniric.messages import A1_POLICY_QUERY, A1_POLICY_REQ, A1_POLICY_RESP, Message, registry_seed
from miniric.routes import add_subscription_entries


class Consumer:
    """A bare endpoint that records policy requests and can acknowledge them."""

    def __init__(self, bus: MessageBus, name: str, *types: int):
        self.bus, self.name = bus, name
        self.box = bus.register_endpoint(name)
        for t in types:
            bus.update_routes(lambda m, t=t: add_subscription_entries(m, [A1_POLICY_REQ], t, name))

    def requests(self) -> list[dict]:
        return [json.loads(m.payload) for m in self.box.drain() if m.mtype == A1_POLICY_REQ]

    def ack(self, req: dict, status: str = "OK", drop=()) -> None:
        body = {
            "policy_type_id": req["policy_type_id"],
            "policy_instance_id": req["policy_instance_id"],
            "handler_id": self.name,
            "status": status,
        }
        for key in drop:
            body.pop(key)
        self.bus.send(Message(A1_POLICY_RESP, json.dumps(body), source=self.name, destination=A1_ENDPOINT))


@pytest.fixture
def bus() -> MessageBus:
    return MessageBus(registry_seed(), SimClock())


@pytest.fixture
def a1(bus) -> A1Mediator:
    med = A1Mediator(bus)
    med.create_policy_type(1, "example")
    return med


def test_create_reaches_consumer(bus, a1):
    xapp = Consumer(bus, "example_xapp", 1)
    assert a1.policy_create(1, "inst-A", {"threshold": 5}) == ["example_xapp"]
    (req,) = xapp.requests()
    assert req == {"operation": "CREATE", "policy_type_id": 1, "policy_instance_id": "inst-A", "payload": {"threshold": 5}}


def test_update_and_delete(bus, a1):
    xapp = Consumer(bus, "example_xapp", 1)
    a1.policy_create(1, "inst-A", {"v": 1})
    a1.policy_update(1, "inst-A", {"v": 2})
    a1.policy_delete(1, "inst-A")
    ops = [(r["operation"], r["policy_instance_id"]) for r in xapp.requests()]
    assert ops == [("CREATE", "inst-A"), ("UPDATE", "inst-A"), ("DELETE", "inst-A")]
    assert a1.instances(1) == []
    with pytest.raises(UnknownInstance):
        a1.get_instance(1, "inst-A")


def test_northbound_errors(a1):
    a1.policy_create(1, "inst-A", {})
    with pytest.raises(DuplicateInstance):
        a1.policy_create(1, "inst-A", {})
    with pytest.raises(UnknownInstance):
        a1.policy_update(1, "nope", {})
    with pytest.raises(UnknownInstance):
        a1.policy_delete(1, "nope")
    with pytest.raises(UnknownPolicyType):
        a1.policy_create(9, "x", {})


def test_no_consumers_is_a_warning(a1):
    assert a1.policy_create(1, "lonely", {}) == []
    assert a1.warnings and "no consumers" in a1.warnings[0]
    assert [i.policy_instance_id for i in a1.instances(1)] == ["lonely"]


def test_shape_check(a1):
    a1.create_policy_type(2, "strict", {"required": ["limit"]})
    with pytest.raises(ValidationFailed):
        a1.policy_create(2, "x", {"other": 1})
    with pytest.raises(ValidationFailed):
        a1.policy_create(2, "y", [1, 2])


def test_ack_ledger(bus, a1):
    xapp = Consumer(bus, "example_xapp", 1)
    a1.policy_create(1, "inst-A", {})
    xapp.ack(xapp.requests()[0])
    bus.clock.run_pending()
    assert a1.ack_ledger() == [("inst-A", "example_xapp", "OK")]
    assert a1.status(1, "inst-A")["pending"] == []


def test_update_needs_fresh_ack(bus, a1):
    xapp = Consumer(bus, "example_xapp", 1)
    a1.policy_create(1, "inst-A", {})
    xapp.ack(xapp.requests()[0])
    bus.clock.run_pending()
    a1.policy_update(1, "inst-A", {"v": 2})
    assert a1.ack_ledger() == []
    assert a1.status(1, "inst-A")["pending"] == ["example_xapp"]
    xapp.ack(xapp.requests()[0], status="ERROR")
    bus.clock.run_pending()
    assert a1.ack_ledger() == [("inst-A", "example_xapp", "ERROR")]


def test_response_missing_handler_id(bus, a1):
    xapp = Consumer(bus, "example_xapp", 1)
    a1.policy_create(1, "inst-A", {})
    req = xapp.requests()[0]
    bad = Message(A1_POLICY_RESP, json.dumps({"policy_type_id": 1, "policy_instance_id": "inst-A", "status": "OK"}), source="example_xapp")
    with pytest.raises(MalformedResponse):
        a1.handle_policy_response(bad)
    xapp.ack(req, drop=("handler_id",))
    bus.clock.run_pending()
    assert a1.errors and a1.errors[0].startswith("MalformedResponse")
    with pytest.raises(MalformedResponse):
        a1.handle_policy_response(Message(A1_POLICY_RESP, b"not json"))


def test_response_after_delete(bus, a1):
    xapp = Consumer(bus, "example_xapp", 1)
    a1.policy_create(1, "inst-A", {})
    create = xapp.requests()[0]
    a1.policy_delete(1, "inst-A")
    delete = xapp.requests()[0]
    xapp.ack(delete)
    bus.clock.run_pending()
    # the DELETE ack purged the instance; a late CREATE ack has nothing to land on
    xapp.ack(create)
    bus.clock.run_pending()
    assert a1.errors and a1.errors[-1].startswith("UnknownInstance")
    with pytest.raises(UnknownInstance):
        a1.status(1, "inst-A")


def test_query_returns_live_instances(bus, a1):
    xapp = Consumer(bus, "example_xapp", 1)
    a1.create_policy_type(3, "empty")
    a1.policy_create(1, "inst-A", {})
    a1.policy_create(1, "inst-B", {})
    xapp.requests()
    query = Message(A1_POLICY_QUERY, json.dumps({"policy_type_id": 1}), source="example_xapp")
    assert a1.handle_policy_query(query) == 2
    got = xapp.requests()
    assert sorted(r["policy_instance_id"] for r in got) == ["inst-A", "inst-B"]
    assert {r["operation"] for r in got} == {"CREATE"}
    assert a1.handle_policy_query(Message(A1_POLICY_QUERY, json.dumps({"policy_type_id": 3}), source="example_xapp")) == 0
    with pytest.raises(UnknownPolicyType):
        a1.handle_policy_query(Message(A1_POLICY_QUERY, json.dumps({"policy_type_id": 77}), source="example_xapp"))


def test_query_over_rmr(bus, a1):
    xapp = Consumer(bus, "example_xapp", 1)
    a1.policy_create(1, "inst-A", {})
    xapp.requests()
    bus.send(Message(A1_POLICY_QUERY, json.dumps({"policy_type_id": 1}), source="example_xapp", destination=A1_ENDPOINT))
    bus.clock.run_pending()
    assert [r["policy_instance_id"] for r in xapp.requests()] == ["inst-A"]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sets(st.sampled_from([1, 2, 3]), max_size=3), min_size=1, max_size=5), st.sampled_from([1, 2, 3]))
def test_distribution_only_to_listing_consumers(type_sets, policy_type):
    bus = MessageBus(registry_seed(), SimClock())
    a1 = A1Mediator(bus)
    for t in (1, 2, 3):
        a1.create_policy_type(t)
    consumers = [Consumer(bus, f"x{i}", *types) for i, types in enumerate(type_sets)]
    reached = a1.policy_create(policy_type, "p", {})
    expected = sorted(c.name for c, types in zip(consumers, type_sets) if policy_type in types)
    assert sorted(reached) == expected
    for c, types in zip(consumers, type_sets):
        assert len(c.requests()) == (1 if policy_type in types else 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.text(min_size=1, max_size=4), unique=True, max_size=5), st.text(min_size=1, max_size=4))
def test_delete_after_create_restores_live_set(existing, new_id):
    assume(new_id not in existing)
    bus = MessageBus(registry_seed(), SimClock())
    a1 = A1Mediator(bus)
    a1.create_policy_type(1)
    for i in existing:
        a1.policy_create(1, i, {})
    before = [i.policy_instance_id for i in a1.instances(1)]
    a1.policy_create(1, new_id, {})
    a1.policy_delete(1, new_id)
    assert [i.policy_instance_id for i in a1.instances(1)] == before


def test_duplicate_acks_do_not_accumulate(bus, a1):
    xapp = Consumer(bus, "example_xapp", 1)
    a1.policy_create(1, "inst-A", {})
    req = xapp.requests()[0]
    xapp.ack(req)
    xapp.ack(req)
    bus.clock.run_pending()
    assert a1.ack_ledger() == [("inst-A", "example_xapp", "OK")]


def test_rest_facade(ric):
    base = f"http://{A1_HTTP_ADDRESS}/a1-p/policytypes"
    assert ric.fabric.get(f"http://{A1_HTTP_ADDRESS}/a1-p/healthcheck").ok
    assert ric.fabric.request("PUT", f"{base}/5", {"name": "t5"}).status == 201
    assert ric.fabric.request("PUT", f"{base}/5/policies/p1", {"x": 1}).status == 202
    assert ric.fabric.get(f"{base}/5/policies").json() == ["p1"]
    assert ric.fabric.get(f"{base}/5/policies/p1").json() == {"x": 1}
    assert ric.fabric.get(f"{base}/5/policies/p1/status").json()["instance_status"] == "IN EFFECT"
    assert ric.fabric.request("PUT", f"{base}/5/policies/p1", {"x": 2}).status == 202
    assert ric.a1.get_instance(5, "p1").payload == {"x": 2}
    assert ric.fabric.delete(f"{base}/5/policies/p1").status == 202
    assert ric.fabric.get(f"{base}/5/policies/p1").status == UnknownInstance.code
    assert ric.fabric.get(f"{base}/99/policies").status == UnknownPolicyType.code
