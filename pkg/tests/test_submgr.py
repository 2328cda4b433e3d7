from __future__ import annotations

import pytest
from helpers import BASE
from helpers import SubscriptionClient as Client

from miniric.errors import MalformedBody, NoRoute
from miniric.messages import RIC_INDICATION
from miniric.routes import resolve
from miniric.submgr import SUBMGR_HTTP_ADDRESS, parse_subscription_request


@pytest.fixture
def gnb(ric) -> str:
    return ric.add_gnb()


@pytest.fixture
def xa(ric):
    return Client(ric, "A")


@pytest.fixture
def xb(ric):
    return Client(ric, "B")


def test_create_subscription(ric, gnb, xa):
    resp = xa.subscribe(gnb)
    assert resp.status == 201 and resp.json() == {"SubscriptionId": 1}
    ric.clock.run_pending()
    assert xa.notifications == [
        {
            "SubscriptionId": 1,
            "SubscriptionInstances": [
                {"XappEventInstanceId": 1, "E2EventInstanceId": 1, "ErrorCause": "", "ErrorSource": "", "TimeoutType": ""}
            ],
        }
    ]
    assert ric.e2mgr.node(gnb).active_action_count() == 1
    ric.advance(3000)
    inds = xa.indications()
    assert len(inds) == 3 and {i.subid for i in inds} == {1}


def test_snake_case_rejected(ric, gnb, xa):
    body = {"subscription_id": "", "client_endpoint": {"host": xa.host}, "meid": gnb, "ran_function_id": 200}
    resp = ric.fabric.post(BASE, body)
    assert resp.status == 400 and resp.json()["error"] == "MalformedBody"


def test_unknown_meid_and_function(ric, gnb, xa):
    resp = xa.subscribe("gnbZZZZZZ")
    assert resp.status == 404 and resp.json()["error"] == "UnknownMeid"
    body = xa.body(gnb)
    body["RANFunctionID"] = 3
    resp = ric.fabric.post(BASE, body)
    assert resp.status == 404 and resp.json()["error"] == "UnknownRanFunction"


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b.pop("Meid"),
        lambda b: b["ClientEndpoint"].pop("HTTPPort"),
        lambda b: b["SubscriptionDetails"].append(b["SubscriptionDetails"][0]),
        lambda b: b["SubscriptionDetails"][0].update(XappEventInstanceId=-1),
        lambda b: b["SubscriptionDetails"][0].update(EventTriggers=[300]),
        lambda b: b["SubscriptionDetails"][0].update(ActionToBeSetupList=[]),
        lambda b: b["SubscriptionDetails"][0]["ActionToBeSetupList"].append(b["SubscriptionDetails"][0]["ActionToBeSetupList"][0]),
        lambda b: b["SubscriptionDetails"][0]["ActionToBeSetupList"][0]["SubsequentAction"].update(TimeToWait="soon"),
        lambda b: b.update(E2SubscriptionDirectives={"E2RetryCount": -1}),
        lambda b: b.update(RANFunctionID="200"),
    ],
)
def test_malformed_bodies(xa, mutate):
    body = xa.body("gnb")
    mutate(body)
    with pytest.raises(MalformedBody):
        parse_subscription_request(body)


def test_non_json_body(ric):
    resp = ric.fabric.request("POST", BASE, b"{nope", ctype="application/json")
    assert resp.status == 400


def test_identical_requests_merge(ric, gnb, xa, xb):
    assert xa.subscribe(gnb, xid=7).json() == {"SubscriptionId": 1}
    assert xb.subscribe(gnb, xid=9).json() == {"SubscriptionId": 1}
    ric.clock.run_pending()
    node = ric.e2mgr.node(gnb)
    assert node.active_action_count() == 1
    (rec,) = ric.submgr.list_records()
    assert len(rec["subscribers"]) == 2
    assert xa.notifications[0]["SubscriptionInstances"][0]["XappEventInstanceId"] == 7
    assert xb.notifications[0]["SubscriptionInstances"][0]["XappEventInstanceId"] == 9
    assert xa.notifications[0]["SubscriptionId"] == xb.notifications[0]["SubscriptionId"] == 1
    ric.advance(1000)
    assert len(xa.indications()) == 1 and len(xb.indications()) == 1


def test_merge_with_already_active_record(ric, gnb, xa, xb):
    xa.subscribe(gnb)
    ric.clock.run_pending()
    xb.subscribe(gnb)
    ric.clock.run_pending()
    assert len(xb.notifications) == 1 and xb.notifications[0]["SubscriptionId"] == 1
    assert len(xa.notifications) == 1


def test_different_period_creates_second_record(ric, gnb, xa):
    assert xa.subscribe(gnb, period=1000).json()["SubscriptionId"] == 1
    assert xa.subscribe(gnb, period=500, xid=2).json()["SubscriptionId"] == 2
    ric.clock.run_pending()
    assert ric.e2mgr.node(gnb).active_action_count() == 2


def test_merge_after_first_subscriber_left(ric, gnb, xa, xb):
    xa.subscribe(gnb)
    ric.clock.run_pending()
    assert xa.unsubscribe(1).status == 204
    assert xb.subscribe(gnb).json()["SubscriptionId"] == 2
    ric.clock.run_pending()
    assert [r["SubscriptionId"] for r in ric.submgr.list_records()] == [2]


def test_sole_subscriber_delete(ric, gnb, xa):
    xa.subscribe(gnb)
    ric.clock.run_pending()
    assert xa.unsubscribe(1).status == 204
    ric.clock.run_pending()
    assert ric.e2mgr.node(gnb).active_action_count() == 0
    with pytest.raises(NoRoute):
        resolve(ric.bus.master, RIC_INDICATION, 1)


def test_merged_delete_keeps_other_subscriber(ric, gnb, xa, xb):
    xa.subscribe(gnb)
    xb.subscribe(gnb)
    ric.clock.run_pending()
    assert xa.unsubscribe(1).status == 204
    ric.clock.run_pending()
    assert ric.e2mgr.node(gnb).active_action_count() == 1
    ric.advance(2000)
    assert xa.indications() == [] and len(xb.indications()) == 2
    assert resolve(ric.bus.master, RIC_INDICATION, 1) == [xb.rmr]


def test_delete_errors(ric, gnb, xa, xb):
    assert xa.unsubscribe(42).status == 404
    assert ric.fabric.delete(f"{BASE}/abc").status == 404
    xa.subscribe(gnb)
    resp = xb.unsubscribe(1)
    assert resp.status == 403 and resp.json()["error"] == "NotASubscriber"


def test_query(ric, gnb, xa, xb):
    def query(client):
        return ric.fabric.get(f"http://{SUBMGR_HTTP_ADDRESS}/ric/v1/get_xapp_rest_restsubscriptions/{client.host}").json()

    assert query(xa) == []
    xa.subscribe(gnb)
    xb.subscribe(gnb)
    assert query(xa) == [1] and query(xb) == [1]
    xa.unsubscribe(1)
    assert query(xa) == [] and query(xb) == [1]


def test_route_record_consistency(ric, gnb, xa, xb):
    xa.subscribe(gnb)
    xb.subscribe(gnb)
    xa.subscribe(gnb, period=250, xid=3)
    ric.clock.run_pending()
    for rec in ric.submgr.list_records():
        expected = sorted(s["Host"].replace("-http.", "-rmr.") for s in rec["subscribers"])
        assert sorted(resolve(ric.bus.master.copy(), RIC_INDICATION, rec["SubscriptionId"])) == expected


def test_retry_bound_on_unresponsive_node(ric, gnb, xa):
    ric.e2mgr.node(gnb).responsive = False
    xa.subscribe(gnb, E2TimeoutTimerValue=2, E2RetryCount=2)
    ric.advance(10_000)
    sends = [t for t, sid in ric.submgr.sent_requests if sid == 1]
    assert sends == [0, 2000, 4000]
    (note,) = xa.notifications
    inst = note["SubscriptionInstances"][0]
    assert inst["TimeoutType"] == "E2-Timeout" and inst["ErrorCause"] and inst["ErrorSource"] == "E2Node"
    assert ric.submgr.list_records() == []
    with pytest.raises(NoRoute):
        resolve(ric.bus.master, RIC_INDICATION, 1)


def test_zero_retries(ric, gnb, xa):
    ric.e2mgr.node(gnb).responsive = False
    xa.subscribe(gnb, E2TimeoutTimerValue=1, E2RetryCount=0)
    ric.advance(5000)
    assert [t for t, _ in ric.submgr.sent_requests] == [0]
    assert xa.notifications[0]["SubscriptionInstances"][0]["TimeoutType"] == "E2-Timeout"


def test_disconnected_node_fails_fast(ric, gnb, xa):
    ric.e2mgr.disconnect(gnb)
    xa.subscribe(gnb)
    ric.clock.run_pending()
    inst = xa.notifications[0]["SubscriptionInstances"][0]
    assert inst["ErrorCause"] and inst["ErrorSource"] == "E2Term" and inst["TimeoutType"] == ""


def test_modify_by_sole_subscriber(ric, gnb, xa):
    xa.subscribe(gnb, period=1000)
    ric.clock.run_pending()
    body = xa.body(gnb, period=500)
    body["SubscriptionId"] = "1"
    assert ric.fabric.post(BASE, body).json() == {"SubscriptionId": 1}
    ric.clock.run_pending()
    xa.indications()
    ric.advance(1000)
    assert len(xa.indications()) == 2


def test_records_survive_subscriber_restart(ric, gnb, xa):
    xa.subscribe(gnb)
    ric.clock.run_pending()
    ric.bus.deregister_endpoint(xa.rmr, purge=False)
    xa.box = ric.bus.register_endpoint(xa.rmr)
    assert ric.submgr.query_subscriptions(xa.host) == [1]
    ric.advance(1000)
    assert len(xa.indications()) == 1
