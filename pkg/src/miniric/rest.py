"""In-process HTTP: a router per service and a fabric that maps host:port to routers.

Requests are plain function calls. Handler callbacks follow the
``callback(name, path, data, ctype)`` convention and return the dict built
by :func:`init_response` (or a ``(status, payload)`` pair); platform
services that need headers register ``raw`` handlers that receive the whole
:class:`HttpRequest`.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional
from urllib.parse import urlsplit

from .errors import BackendUnavailable, DuplicateRoute, MiniRicError

READY_URI = "/ric/v1/health/ready"
ALIVE_URI = "/ric/v1/health/alive"
CONFIG_URI = "/ric/v1/config"
JSON = "application/json"


def init_response(status: int = 200, payload: Any = None, ctype: str = JSON) -> dict:
    return {"status": status, "payload": payload, "ctype": ctype}


# camel-case alias for handler code written against the usual xApp REST helper
initResponse = init_response


class Body(str):
    """Request body already decoded as UTF-8.

    ``decode()`` returns the text unchanged so handlers written for raw bytes
    (``data.decode("utf-8")``) keep working.
    """

    def decode(self, encoding: str = "utf-8", errors: str = "strict") -> str:
        return str(self)


@dataclass
class HttpRequest:
    method: str
    path: str
    body: bytes = b""
    ctype: str = JSON
    headers: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def json(self):
        return json.loads(self.body.decode("utf-8")) if self.body else None


@dataclass
class HttpResponse:
    status: int
    body: bytes = b""
    ctype: str = JSON

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300

    def json(self):
        return json.loads(self.body.decode("utf-8")) if self.body else None

    def text(self) -> str:
        return self.body.decode("utf-8")


def _encode(payload) -> bytes:
    if payload is None:
        return b""
    if isinstance(payload, bytes):
        return payload
    if isinstance(payload, str):
        return payload.encode("utf-8")
    return json.dumps(payload).encode("utf-8")


def json_response(status: int, payload=None) -> HttpResponse:
    return HttpResponse(status, _encode(payload), JSON)


def error_response(exc: MiniRicError) -> HttpResponse:
    return json_response(exc.code, exc.to_json())


@dataclass
class _Route:
    method: str
    name: str
    uri: str
    pattern: re.Pattern
    callback: Callable
    raw: bool
    builtin: bool


def _compile(uri: str) -> re.Pattern:
    out = ""
    for part in re.split(r"(\{[^}]+\})", uri):
        if part.startswith("{") and part.endswith("}"):
            out += f"(?P<{part[1:-1]}>[^/]+)"
        else:
            out += re.escape(part)
    return re.compile(f"^{out}$")


class RestRouter:
    """Routes for one HTTP service. Each (method, uri) is bound at most once.

    Built-in handlers (probes, config) may be replaced once by user code.
    """

    def __init__(self, name: str = ""):
        self.name = name
        self._routes: list[_Route] = []
        self._lock = threading.Lock()

    def add_handler(self, method: str, name: str, uri: str, callback: Callable, raw: bool = False, builtin: bool = False) -> None:
        method = method.upper()
        with self._lock:
            for i, r in enumerate(self._routes):
                if r.method == method and r.uri == uri:
                    if r.builtin and not builtin:
                        del self._routes[i]
                        break
                    raise DuplicateRoute(f"{method} {uri} already has a handler")
            self._routes.append(_Route(method, name, uri, _compile(uri), callback, raw, builtin))

    def remove_handler(self, method: str, uri: str) -> None:
        with self._lock:
            self._routes = [r for r in self._routes if not (r.method == method.upper() and r.uri == uri)]

    def uris(self) -> list[tuple[str, str]]:
        return [(r.method, r.uri) for r in self._routes]

    def dispatch(self, req: HttpRequest) -> HttpResponse:
        path_matched = False
        for r in list(self._routes):
            m = r.pattern.match(req.path)
            if not m:
                continue
            path_matched = True
            if r.method != req.method.upper():
                continue
            req.params = m.groupdict()
            try:
                if r.raw:
                    return r.callback(req)
                try:
                    data = Body(req.body.decode("utf-8"))
                except UnicodeDecodeError:
                    data = req.body
                out = r.callback(r.name, req.path, data, req.ctype)
            except MiniRicError as exc:
                return error_response(exc)
            except Exception as exc:  # handler bug: report as 500, keep serving
                return json_response(500, {"error": type(exc).__name__, "detail": str(exc)})
            return _to_response(out)
        if path_matched:
            return json_response(405, {"error": "MethodNotAllowed", "detail": f"{req.method} {req.path}"})
        return json_response(404, {"error": "NotFound", "detail": req.path})


def _to_response(out) -> HttpResponse:
    if isinstance(out, HttpResponse):
        return out
    if out is None:
        return json_response(200)
    if isinstance(out, tuple):
        status, payload = out
        return json_response(int(status), payload)
    status = out.get("status", out.get("response", 200))
    return HttpResponse(int(status), _encode(out.get("payload")), out.get("ctype") or JSON)


class HttpFabric:
    """host:port -> router registry; the stand-in for cluster networking."""

    def __init__(self):
        self._servers: dict[str, RestRouter] = {}
        self._lock = threading.Lock()
        self.request_log: list[tuple[str, str, int]] = []

    def bind(self, address: str, router: RestRouter) -> None:
        with self._lock:
            if address in self._servers:
                raise DuplicateRoute(f"address already bound: {address}")
            self._servers[address] = router

    def unbind(self, address: str) -> None:
        with self._lock:
            self._servers.pop(address, None)

    def is_bound(self, address: str) -> bool:
        return address in self._servers

    def request(self, method: str, url: str, body=None, headers: Optional[dict] = None, ctype: str = JSON) -> HttpResponse:
        parts = urlsplit(url if "://" in url else "http://" + url)
        address = parts.netloc
        router = self._servers.get(address)
        if router is None:
            raise BackendUnavailable(f"connection refused: {address}")
        req = HttpRequest(method.upper(), parts.path or "/", _encode(body), ctype, dict(headers or {}))
        resp = router.dispatch(req)
        self.request_log.append((method.upper(), url, resp.status))
        return resp

    def get(self, url, **kw) -> HttpResponse:
        return self.request("GET", url, **kw)

    def post(self, url, body=None, **kw) -> HttpResponse:
        return self.request("POST", url, body, **kw)

    def delete(self, url, **kw) -> HttpResponse:
        return self.request("DELETE", url, **kw)
