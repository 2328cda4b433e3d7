from __future__ import annotations

import json

import pytest
from helpers import deploy, descriptor
from hypothesis import given, settings
from hypothesis import strategies as st

from miniric.e2 import Action
from miniric.e2sm import encode_action_definition, encode_event_trigger, kpm_action, kpm_trigger
from miniric.errors import (
    DuplicateHandler,
    DuplicateRoute,
    NameDoesNotResolve,
    NoRoute,
    NotRegistered,
    PayloadTooLarge,
    UnknownMeid,
    UnknownMtype,
)
from miniric.framework import SIGTERM, AppContext, Level, Platform, RMRXapp, Xapp, XappLogger, use_context
from miniric.messages import A1_POLICY_REQ, RIC_HEALTH_CHECK_REQ, RIC_HEALTH_CHECK_RESP, Message
from miniric.rest import init_response
from miniric.routes import RoutingTable, mse, resolve


class Recorder:
    """Handler stand-in that remembers what reached it."""

    def __init__(self):
        self.calls: list[tuple[str, int]] = []

    def handler(self, tag):
        return lambda xapp, summary, msg: self.calls.append((tag, msg.mtype))


def _noop(xapp, summary, msg):
    pass


def _app(inst):
    return inst.context.apps[0]


def _reactive(ric, name="rx", factory=None, **kw):
    doc = descriptor(name, **kw)
    return _app(deploy(ric, doc, factory or (lambda: RMRXapp(_noop))))


def _tester(ric, name="tester"):
    return ric.bus.register_endpoint(name)


def _deliver(ric, app, mtype, payload=b"x", source="tester", **fields):
    msg = Message(mtype, payload, source=source, destination=app.rmr_endpoint, **fields)
    receipt = ric.bus.send(msg)
    ric.clock.run_pending()
    return receipt.message


def _kpm_actions():
    return [Action(1, "report", encode_action_definition(kpm_action()))]


# -- start / registration -----------------------------------------------------


def test_start_registers_and_runs(ric):
    app = _reactive(ric)
    inst = ric.appmgr.get_instance("rx")
    assert inst.state == "Running" and app.registered and app.state == "running"
    assert app.rmr_endpoint == "service-ricxapp-rx-rmr.ricxapp"
    assert app.http_address == "service-ricxapp-rx-http.ricxapp:8080"
    assert app.rmr_port == 4560


def test_missing_descriptor_app_stops_itself(ric):
    seen = {}

    def entry(xapp):
        seen["data"], seen["keep"] = xapp.config_data, xapp.keep_registration
        if not xapp.config_data or not xapp.keep_registration:
            xapp.logger.error("Could not load config file")
            xapp.stop()

    ctx = AppContext(Platform(ric.bus, ric.fabric, ric.sdl, ric.rnib), env={})
    with use_context(ctx):
        app = Xapp(entry)
    app.run()
    ric.clock.run_pending()
    assert seen == {"data": {}, "keep": False}
    assert app.state == "stopped" and not app.registered
    assert any("Cannot Read config file" in e.message for e in app.logger.entries)
    assert not ric.bus.is_registered(app.rmr_endpoint)


def test_unreadable_descriptor(ric, tmp_path):
    bad = tmp_path / "config-file.json"
    bad.write_text("{not json")
    ctx = AppContext(Platform(ric.bus, ric.fabric, ric.sdl, ric.rnib), env={"XAPP_DESCRIPTOR_PATH": str(bad)})
    with use_context(ctx):
        app = Xapp(lambda x: None)
    assert app.config_data == {} and not app.keep_registration


def test_construction_needs_context():
    with pytest.raises(RuntimeError):
        Xapp(lambda x: None)


def test_send_before_registration_is_refused(ric):
    doc = descriptor("early")
    path = ric.appmgr.workdir / "early.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc))
    ctx = AppContext(Platform(ric.bus, ric.fabric, ric.sdl, ric.rnib, appmgr_address=None), env={"XAPP_DESCRIPTOR_PATH": str(path)})
    with use_context(ctx):
        app = RMRXapp(_noop)
    with pytest.raises(NotRegistered):
        app.rmr_send("hi", 30001)
    app.run()
    assert app.registered


def test_health_check_answered_without_user_code(ric):
    rec = Recorder()
    app = _reactive(ric, factory=lambda: RMRXapp(rec.handler("default")))
    box = _tester(ric)
    sent = _deliver(ric, app, RIC_HEALTH_CHECK_REQ, transaction_id=None)
    (reply,) = box.drain()
    assert reply.mtype == RIC_HEALTH_CHECK_RESP and reply.transaction_id == sent.transaction_id
    assert rec.calls == [] and app.dispatched == 0


def test_general_app_answers_health_in_get_messages(ric):
    got = []

    def entry(xapp):
        while not xapp.shutdown:
            got.extend(m.mtype for _, m in xapp.rmr_get_messages())
            yield 100

    app = _app(deploy(ric, descriptor("gen"), lambda: Xapp(entry)))
    box = _tester(ric)
    _deliver(ric, app, RIC_HEALTH_CHECK_REQ)
    _deliver(ric, app, 30003)
    ric.advance(200)
    assert [m.mtype for m in box.drain()] == [RIC_HEALTH_CHECK_RESP]
    assert got == [30003]


# -- callbacks ------------------------------------------------------------------


def test_custom_callback_and_default(ric):
    rec = Recorder()

    def make():
        app = RMRXapp(rec.handler("default"))
        app.register_callback(rec.handler("custom"), 30002)
        app.register_callback(rec.handler("policy"), "A1_POLICY_REQ")
        return app

    app = _reactive(ric, factory=make, rx=["CUSTOM_30002"])
    _tester(ric)
    _deliver(ric, app, 30002)
    assert rec.calls == [("custom", 30002)]
    _deliver(ric, app, 30003)
    _deliver(ric, app, A1_POLICY_REQ)
    assert rec.calls[1:] == [("default", 30003), ("policy", A1_POLICY_REQ)]


def test_register_callback_errors(ric):
    app = _reactive(ric)
    app.register_callback(_noop, 30002)
    with pytest.raises(DuplicateHandler):
        app.register_callback(_noop, "CUSTOM_30002")
    with pytest.raises(UnknownMtype):
        app.register_callback(_noop, "NOT_A_TYPE")
    with pytest.raises(UnknownMtype):
        app.register_callback(_noop, 30009)


def test_handler_exception_is_contained(ric):
    def boom(xapp, summary, msg):
        raise RuntimeError("bad handler")

    app = _reactive(ric, factory=lambda: RMRXapp(boom))
    _tester(ric)
    _deliver(ric, app, 30003)
    _deliver(ric, app, 30003)
    assert app.dispatched == 2 and app.state == "running"
    assert sum("raised" in e.message for e in app.logger.entries) == 2


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from([30001, 30002, 30003, 30004, A1_POLICY_REQ]), max_size=12))
def test_dispatch_totality(mtypes):
    from miniric.ric import NearRtRic

    ric = NearRtRic(demo_images=False)
    rec = Recorder()

    def make():
        app = RMRXapp(rec.handler("default"))
        app.register_callback(rec.handler("custom"), 30002)
        return app

    app = _reactive(ric, factory=make)
    _tester(ric)
    for m in mtypes:
        ric.bus.send(Message(m, b"", source="tester", destination=app.rmr_endpoint))
    ric.clock.run_pending()
    assert [m for _, m in rec.calls] == mtypes
    assert all((tag == "custom") == (m == 30002) for tag, m in rec.calls)


# -- rmr send / rts / get --------------------------------------------------------


def test_send_with_route(ric):
    app = _reactive(ric, tx=["CUSTOM_30001"])
    sink = ric.bus.register_endpoint("sink")
    ric.bus.add_routes(RoutingTable([mse(30001, -1, "sink")]))
    assert app.rmr_send("hi".encode(), 30001, retries=5)
    (msg,) = sink.drain()
    assert msg.payload == b"hi" and msg.source == app.rmr_endpoint
    assert msg.transaction_id == app.last_transaction_id


def test_send_failures(ric):
    app = _reactive(ric)
    assert not app.rmr_send("x", 30004)
    assert isinstance(app.last_error, NoRoute)
    ric.bus.add_routes(RoutingTable([mse(30004, -1, "nobody-home")]))
    assert not app.rmr_send("x", 30004, retries=3)
    assert isinstance(app.last_error, NameDoesNotResolve)
    with pytest.raises(PayloadTooLarge):
        app.rmr_send(b"x" * 2073, 30004)


def test_rts_swaps_type_and_targets_sender(ric):
    def echo(xapp, summary, msg):
        xapp.rmr_rts(msg, b"pong", new_mtype=30002)

    app = _reactive(ric, factory=lambda: RMRXapp(echo))
    box = _tester(ric)
    sent = _deliver(ric, app, 30001, b"ping")
    (reply,) = box.drain()
    assert (reply.mtype, reply.payload, reply.transaction_id) == (30002, b"pong", sent.transaction_id)
    assert reply.source == app.rmr_endpoint


def test_get_messages_empty_and_wait(ric):
    collected = []

    def entry(xapp):
        collected.append(list(xapp.rmr_get_messages()))
        yield 10

    app = _app(deploy(ric, descriptor("g"), lambda: Xapp(entry)))
    ric.clock.run_pending()
    assert collected == [[]]
    # outside clock callbacks a wait advances simulated time until mail arrives
    ric.clock.call_later(300, lambda: ric.bus.send(Message(30001, b"late", destination="service-ricxapp-q-rmr.ricxapp")))
    q = _reactive(ric, name="q", factory=lambda: Xapp(lambda x: (yield 10_000)))
    start = ric.now
    got = list(q.rmr_get_messages(wait=1000))
    assert [m.payload for _, m in got] == [b"late"] and ric.now - start == 300
    assert app.state == "stopped"


# -- health -----------------------------------------------------------------------


def test_healthcheck_faults(ric):
    app = _reactive(ric)
    assert app.healthcheck()
    ric.sdl.enabled = False
    assert not app.healthcheck()
    ric.sdl.enabled = True
    ric.bus.deregister_endpoint(app.rmr_endpoint)
    assert not app.healthcheck()


# -- REST -------------------------------------------------------------------------


def test_config_endpoint(ric):
    app = _reactive(ric)
    resp = ric.fabric.get(f"http://{app.http_address}/ric/v1/config")
    assert resp.status == 200 and resp.json()["name"] == "rx"


def test_readiness_gated_on_sdl_key(ric):
    def ready(name, path, data, ctype):
        if app.sdl.get("rx", "model") is None:
            return init_response(500, {"status": "model missing"})
        return init_response(200, {"status": "ok"})

    app = _reactive(ric)
    app.rest_add_handler("GET", "ready", "/ric/v1/health/ready", ready)
    url = f"http://{app.http_address}/ric/v1/health/ready"
    assert ric.fabric.get(url).status == 500
    assert not ric.appmgr.health_check("rx")["ready"]
    app.sdl.set("rx", "model", "weights")
    assert ric.fabric.get(url).status == 200
    assert ric.appmgr.health_check("rx")["ready"]
    with pytest.raises(DuplicateRoute):
        app.rest_add_handler("GET", "ready2", "/ric/v1/health/ready", ready)


def test_post_body_is_decoded(ric):
    def upload(name, path, data, ctype):
        return init_response(200, {"uploaded": "complete", "data": data.decode("utf-8")})

    app = _reactive(ric)
    app.rest_add_handler("POST", "upload", "/ric/v1/data", upload)
    resp = ric.fabric.post(f"http://{app.http_address}/ric/v1/data", "héllo", ctype="text/plain")
    assert resp.json() == {"uploaded": "complete", "data": "héllo"}


# -- subscriptions ------------------------------------------------------------------


def test_subscribe_stores_subid(ric):
    meid = ric.add_gnb()
    app = _reactive(ric)
    pending = app.subscribe(meid, 200, encode_event_trigger(kpm_trigger(1000)), _kpm_actions())
    assert pending.http_status == 201 and pending.subid == 1
    ric.clock.run_pending()
    assert pending.ok and app.subscriptions == [1]
    assert app.sdl.get("rx", "subscription_1") == {"subid": 1, "meid": meid}


def test_unsubscribe_all(ric):
    meid = ric.add_gnb()
    app = _reactive(ric)
    app.subscribe(meid, 200, encode_event_trigger(kpm_trigger(1000)), _kpm_actions())
    app.subscribe(meid, 200, encode_event_trigger(kpm_trigger(500)), _kpm_actions())
    ric.clock.run_pending()
    assert app.unsubscribe_all() == [204, 204]
    ric.clock.run_pending()
    assert app.subscriptions == [] and ric.e2mgr.node(meid).active_action_count() == 0
    assert app.unsubscribe(1) == 404


def test_subscribe_unknown_meid(ric):
    app = _reactive(ric)
    with pytest.raises(UnknownMeid):
        app.subscribe("gnb_nowhere", 200, encode_event_trigger(kpm_trigger()), _kpm_actions())
    assert any(e.criticality == "ERROR" for e in app.logger.entries)


def test_subscription_failure_is_reported(ric):
    meid = ric.add_gnb()
    ric.e2mgr.node(meid).responsive = False
    app = _reactive(ric)
    pending = app.subscribe(meid, 200, encode_event_trigger(kpm_trigger()), _kpm_actions(), {"E2TimeoutTimerValue": 1, "E2RetryCount": 0})
    ric.advance(2000)
    assert pending.notified and not pending.ok and app.subscriptions == []


# -- stop -----------------------------------------------------------------------------


def test_uninstall_signal_stop(ric):
    meid = ric.add_gnb()
    app = _reactive(ric)
    app.subscribe(meid, 200, encode_event_trigger(kpm_trigger()), _kpm_actions())
    ric.clock.run_pending()
    inst = ric.appmgr.uninstall("rx")
    assert inst.state == "Removed" and app.state == "stopped"
    assert ric.e2mgr.node(meid).active_action_count() == 0
    dump = json.dumps(ric.debug_info())
    assert app.rmr_endpoint not in dump and '"1"' not in json.dumps(ric.debug_info()["master"])


def test_double_stop_is_noop(ric):
    app = _reactive(ric)
    app.stop()
    n = len(app.logger.entries)
    app.stop()
    assert len(app.logger.entries) == n and app.state == "stopped"


def test_keep_subscriptions_on_exit(ric):
    meid = ric.add_gnb()
    app = _reactive(ric, factory=lambda: RMRXapp(_noop, delete_subscriptions_on_exit=False))
    app.subscribe(meid, 200, encode_event_trigger(kpm_trigger()), _kpm_actions())
    ric.clock.run_pending()
    app.stop()
    assert ric.e2mgr.node(meid).active_action_count() == 1


def test_sigterm_triggers_stop(ric):
    app = _reactive(ric)
    assert app._ctx.deliver_signal(SIGTERM)
    assert app.state == "stopped"


# -- logging and config -----------------------------------------------------------------


def test_logger_levels(ric):
    logger = XappLogger("x", ric.clock, Level.INFO)
    assert logger.debug("hidden") is None
    ric.advance(42)
    entry = logger.error("boom")
    assert entry.to_json() == {"timestamp": 42, "criticality": "ERROR", "id": "x", "message": "boom"}
    logger.set_level("DEBUG")
    assert logger.debug("shown") is not None
    assert [e.message for e in logger.entries] == ["boom", "shown"]


@pytest.mark.parametrize("edits", [0, 1, 4])
def test_config_reload_count(ric, edits):
    seen = []
    app = _reactive(ric, factory=lambda: RMRXapp(_noop, config_handler=lambda x, c: seen.append(c)))
    ric.clock.run_pending()
    baseline = len(seen)
    for i in range(edits):
        ric.appmgr.config_set("rx", "ricxapp", "controls.level", i)
    ric.clock.run_pending()
    assert len(seen) - baseline == edits
    assert [c["controls"]["level"] for c in seen[baseline:]] == list(range(edits))
    if edits:
        assert app.config_data["controls"]["level"] == edits - 1


def test_generator_entrypoint_sleeps(ric):
    ticks = []

    def entry(xapp):
        for _ in range(3):
            ticks.append(xapp.clock.now)
            yield 250

    start = ric.now
    app = _app(deploy(ric, descriptor("sleeper"), lambda: Xapp(entry)))
    ric.advance(1000)
    assert [t - start for t in ticks] == [0, 250, 500]
    assert app.state == "stopped"


def test_stop_leaves_no_routes(ric):
    app = _reactive(ric, rx=["CUSTOM_30002"])
    assert resolve(ric.bus.master.copy(), 30002) == [app.rmr_endpoint]
    app.stop()
    with pytest.raises(NoRoute):
        resolve(ric.bus.master.copy(), 30002)
