"""Small builders shared by the test modules."""

from __future__ import annotations

import json

from miniric.demos import descriptor_path
from miniric.e2sm import KPM_RAN_FUNCTION_ID, decode_indication, encode_action_definition, encode_event_trigger, kpm_action, kpm_trigger
from miniric.messages import RIC_INDICATION
from miniric.rest import RestRouter, json_response
from miniric.submgr import CLIENT_HEADER, NOTIFICATION_URI, SUBMGR_HTTP_ADDRESS, SUBSCRIPTIONS_URI

TEST_REGISTRY = "registry.test"
BASE = f"http://{SUBMGR_HTTP_ADDRESS}{SUBSCRIPTIONS_URI}"


def demo_descriptor(name: str, version: str | None = None) -> dict:
    doc = json.loads(descriptor_path(name).read_text())
    if version is not None:
        doc["version"] = version
    return doc


def descriptor(name: str, image: str | None = None, *, version: str = "1.0.0", rx=(), tx=(), policies=(), rmr_port: int = 4560) -> dict:
    """A minimal single-container descriptor whose image lives in ``TEST_REGISTRY``."""
    data_port = {"name": "rmrdata", "container": name, "port": rmr_port, "description": "RMR data port"}
    return {
        "name": name,
        "version": version,
        "containers": [{"name": name, "image": {"registry": TEST_REGISTRY, "name": image or name, "tag": version}}],
        "rmr": {
            "txMessages": list(tx),
            "rxMessages": list(rx),
            "protPort": f"tcp:{rmr_port}",
            "maxSize": 2072,
            "numWorkers": 1,
            "policies": list(policies),
        },
        "messaging": {
            "ports": [
                {"name": "http", "container": name, "port": 8080, "description": "HTTP port"},
                {"name": "rmrroute", "container": name, "port": 4561, "description": "RMR route port"},
                data_port,
            ]
        },
        "controls": {},
    }


def deploy(ric, doc: dict, factory, namespace: str = "ricxapp"):
    """Register ``factory`` for the descriptor's image, onboard and install it."""
    image = doc["containers"][0]["image"]
    ric.catalog.register(image["registry"], image["name"], image["tag"], factory)
    ric.appmgr.onboard(doc)
    return ric.appmgr.install(doc["name"], doc["version"], namespace)


class SubscriptionClient:
    """An xApp stand-in: an HTTP callback and an RMR mailbox."""

    def __init__(self, ric, app: str):
        self.ric = ric
        self.host = f"service-ricxapp-{app}-http.ricxapp"
        self.rmr = f"service-ricxapp-{app}-rmr.ricxapp"
        self.notifications: list[dict] = []
        router = RestRouter(app)
        router.add_handler("POST", "notify", NOTIFICATION_URI, self._notified, raw=True)
        ric.fabric.bind(f"{self.host}:8080", router)
        self.box = ric.bus.register_endpoint(self.rmr)

    def _notified(self, req):
        self.notifications.append(req.json())
        return json_response(200)

    def body(self, meid, period=1000, xid=1, **directives) -> dict:
        body = {
            "SubscriptionId": "",
            "ClientEndpoint": {"Host": self.host, "HTTPPort": 8080, "RMRPort": 4560},
            "Meid": meid,
            "RANFunctionID": KPM_RAN_FUNCTION_ID,
            "SubscriptionDetails": [
                {
                    "XappEventInstanceId": xid,
                    "EventTriggers": list(encode_event_trigger(kpm_trigger(period))),
                    "ActionToBeSetupList": [
                        {
                            "ActionID": 1,
                            "ActionType": "report",
                            "ActionDefinition": list(encode_action_definition(kpm_action(granul_ms=period))),
                            "SubsequentAction": {"SubsequentActionType": "continue", "TimeToWait": "w10ms"},
                        }
                    ],
                }
            ],
        }
        if directives:
            body["E2SubscriptionDirectives"] = directives
        return body

    def subscribe(self, meid, **kw):
        return self.ric.fabric.post(BASE, self.body(meid, **kw))

    def unsubscribe(self, subid):
        return self.ric.fabric.delete(f"{BASE}/{subid}", headers={CLIENT_HEADER: self.host})

    def indications(self):
        return [decode_indication(m.payload) for m in self.box.drain() if m.mtype == RIC_INDICATION]
