from __future__ import annotations

import pytest

from miniric.errors import BackendUnavailable, DuplicateRoute, UnknownInstance
from miniric.rest import HttpFabric, RestRouter, initResponse, init_response, json_response


@pytest.fixture
def fabric():
    f = HttpFabric()
    router = RestRouter("svc")
    router.add_handler("GET", "item", "/items/{item_id}", lambda req: json_response(200, req.params), raw=True)
    router.add_handler("POST", "echo", "/echo", lambda name, path, data, ctype: init_response(201, {"got": data, "ctype": ctype}))
    router.add_handler("GET", "tuple", "/tuple", lambda *a: (202, {"t": 1}))
    router.add_handler("GET", "none", "/none", lambda *a: None)
    router.add_handler("GET", "err", "/err", lambda *a: (_ for _ in ()).throw(UnknownInstance("gone")))
    router.add_handler("GET", "bug", "/bug", lambda *a: 1 / 0)
    f.bind("svc:80", router)
    return f


def test_path_params(fabric):
    assert fabric.get("http://svc:80/items/42").json() == {"item_id": "42"}


def test_body_decoding_and_status(fabric):
    resp = fabric.post("svc:80/echo", "ünïcode", ctype="text/plain")
    assert resp.status == 201 and resp.json() == {"got": "ünïcode", "ctype": "text/plain"}


def test_return_shapes(fabric):
    assert fabric.get("http://svc:80/tuple").status == 202
    assert fabric.get("http://svc:80/none").status == 200


def test_errors_map_to_codes(fabric):
    resp = fabric.get("http://svc:80/err")
    assert resp.status == UnknownInstance.code and resp.json()["error"] == "UnknownInstance"
    resp = fabric.get("http://svc:80/bug")
    assert resp.status == 500 and resp.json()["error"] == "ZeroDivisionError"
    assert fabric.get("http://svc:80/missing").status == 404
    assert fabric.request("DELETE", "http://svc:80/echo").status == 405


def test_unbound_address(fabric):
    with pytest.raises(BackendUnavailable):
        fabric.get("http://elsewhere:1/x")
    with pytest.raises(DuplicateRoute):
        fabric.bind("svc:80", RestRouter())
    fabric.unbind("svc:80")
    assert not fabric.is_bound("svc:80")


def test_duplicate_handlers_and_builtin_override():
    r = RestRouter()
    r.add_handler("GET", "ready", "/ready", lambda *a: (200, "builtin"), builtin=True)
    r.add_handler("GET", "ready", "/ready", lambda *a: (503, "user"))
    with pytest.raises(DuplicateRoute):
        r.add_handler("GET", "ready", "/ready", lambda *a: (200, "again"))
    r.add_handler("POST", "ready", "/ready", lambda *a: None)
    assert r.uris() == [("GET", "/ready"), ("POST", "/ready")]
    r.remove_handler("get", "/ready")
    assert r.uris() == [("POST", "/ready")]


def test_init_response_alias():
    assert initResponse is init_response
    assert init_response(204) == {"status": 204, "payload": None, "ctype": "application/json"}


def test_request_log(fabric):
    fabric.get("http://svc:80/none")
    assert fabric.request_log[-1] == ("GET", "http://svc:80/none", 200)
