"""Operator operations behind the CLI, and the two ways to reach them.

Every operation takes and returns JSON-compatible values, so the same
table serves an in-process :class:`LocalBackend` and the small HTTP server
that :class:`HttpBackend` talks to (``miniric serve``).
"""

from __future__ import annotations

import base64
import json
import logging
import os
import time
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path
from typing import Any, Callable, Optional
from urllib import error as urlerror
from urllib import request as urlrequest

from .errors import BackendUnavailable, MiniRicError, NotFound, error_from_json
from .ric import NearRtRic

log = logging.getLogger(__name__)

ENDPOINT_ENV = "MINIRIC_ENDPOINT"
HOME_ENV = "MINIRIC_HOME"
OPS_URI = "/ops"
DEFAULT_NAMESPACE = "ricxapp"


def _sdl_value(raw: bytes):
    try:
        return json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError):
        pass
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return {"base64": base64.b64encode(raw).decode("ascii")}


class LocalBackend:
    """Operations executed directly against a :class:`NearRtRic`."""

    def __init__(self, ric: NearRtRic):
        self.ric = ric
        am = ric.appmgr
        self._ops: dict[str, Callable[..., Any]] = {
            "onboard": lambda config, schema=None, force=False: am.onboard(config, schema, force).to_json(),
            "install": self._install,
            "uninstall": self._uninstall,
            "upgrade": lambda name, old_version, new_version, namespace=DEFAULT_NAMESPACE: am.upgrade(
                name, old_version, new_version, namespace
            ).to_json(),
            "rollback": lambda name, old_version, new_version, namespace=DEFAULT_NAMESPACE: am.rollback(
                name, old_version, new_version, namespace
            ).to_json(),
            "health": am.repo_health,
            "get_charts_list": am.list_charts,
            "health_check": lambda name, namespace=DEFAULT_NAMESPACE: am.health_check(name, namespace),
            "download_values": lambda name, version: {"name": name, "version": version, "values": am.download_values(name, version)},
            "config_set": lambda name, namespace, path, value: am.config_set(name, namespace, path, value),
            "instances": am.list_instances,
            "logs": lambda name, namespace=DEFAULT_NAMESPACE: am.logs(name, namespace),
            "routes": ric.bus.debug_info,
            "sdl_healthcheck": lambda: {"healthy": ric.sdl.healthcheck()},
            "sdl_keys": lambda ns, prefix="": ric.sdl.find_keys(ns, prefix),
            "sdl_get": self._sdl_get,
            "sdl_set": self._sdl_set,
            "subs_list": ric.submgr.list_records,
            "subs_delete": self._subs_delete,
            "advance": self._advance,
            "add_gnb": lambda plmn_id="734", nodeb_id="733": {"meid": ric.add_gnb(plmn_id, nodeb_id)},
        }

    @property
    def operations(self) -> list[str]:
        return sorted(self._ops)

    def call(self, op: str, **args):
        fn = self._ops.get(op)
        if fn is None:
            raise NotFound(f"unknown operation {op!r}")
        return fn(**args)

    def _install(self, name, version, namespace=DEFAULT_NAMESPACE, override=None):
        if override:
            self.ric.appmgr.override_values(name, version, override)
        return self.ric.appmgr.install(name, version, namespace).to_json()

    def _uninstall(self, name, namespace=DEFAULT_NAMESPACE):
        inst = self.ric.appmgr.uninstall(name, namespace)
        return {**inst.to_json(), "warnings": list(inst.warnings)}

    def _sdl_get(self, ns, key):
        raw = self.ric.sdl.get(ns, key)
        if raw is None:
            raise NotFound(f"no key {key!r} in namespace {ns!r}")
        return {"namespace": ns, "key": key, "value": _sdl_value(raw)}

    def _sdl_set(self, ns, key, value):
        self.ric.sdl_client().set(ns, key, value)
        return {"namespace": ns, "key": key, "value": value}

    def _subs_delete(self, subid):
        self.ric.submgr.delete_subscription(int(subid))
        self.ric.clock.run_pending()
        return {"subid": int(subid), "deleted": True}

    def _advance(self, ms):
        self.ric.advance(int(ms))
        return {"now": self.ric.now}


class HttpBackend:
    """Operations forwarded to a ``miniric serve`` process."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        if "://" not in self.endpoint:
            self.endpoint = "http://" + self.endpoint
        self.timeout = timeout

    def call(self, op: str, **args):
        body = json.dumps({"op": op, "args": args}).encode("utf-8")
        req = urlrequest.Request(self.endpoint + OPS_URI, body, {"Content-Type": "application/json"}, method="POST")
        try:
            with urlrequest.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read() or b"null")
        except urlerror.HTTPError as exc:
            try:
                payload = json.loads(exc.read() or b"{}")
            except json.JSONDecodeError:
                payload = {}
            raise error_from_json(payload, exc.code) from None
        except (urlerror.URLError, OSError) as exc:
            raise BackendUnavailable(f"cannot reach {self.endpoint}: {exc}") from None


def default_home() -> Path:
    return Path(os.environ.get(HOME_ENV) or Path.home() / ".miniric")


def local_ric(home: Optional[Path] = None, **kwargs) -> NearRtRic:
    """A platform whose charts and SDL persist under ``home``."""
    home = Path(home) if home else default_home()
    home.mkdir(parents=True, exist_ok=True)
    return NearRtRic(chart_root=home / "charts", sdl_persist=home / "sdl.jsonl", workdir=home / "run", **kwargs)


def backend_from_env(env=None):
    env = os.environ if env is None else env
    endpoint = env.get(ENDPOINT_ENV, "").strip()
    if endpoint and endpoint != "local":
        return HttpBackend(endpoint)
    return LocalBackend(local_ric())


# -- server ------------------------------------------------------------------


def _handler_for(backend: LocalBackend):
    class Handler(BaseHTTPRequestHandler):
        def _reply(self, status: int, payload) -> None:
            data = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path == "/health":
                self._reply(200, {"status": "ok", "now": backend.ric.now})
            else:
                self._reply(404, {"error": "NotFound", "detail": self.path})

        def do_POST(self):
            if self.path != OPS_URI:
                self._reply(404, {"error": "NotFound", "detail": self.path})
                return
            try:
                length = int(self.headers.get("Content-Length") or 0)
                req = json.loads(self.rfile.read(length) or b"{}")
                result = backend.call(req["op"], **(req.get("args") or {}))
            except MiniRicError as exc:
                self._reply(exc.code, exc.to_json())
                return
            except (KeyError, TypeError, ValueError) as exc:
                self._reply(400, {"error": "MalformedBody", "detail": str(exc)})
                return
            self._reply(200, result)

        def log_message(self, fmt, *args):
            log.debug("serve: " + fmt, *args)

    return Handler


def make_server(backend: LocalBackend, host: str = "127.0.0.1", port: int = 0) -> HTTPServer:
    """A single-threaded server: requests never overlap, so clock waits never nest."""
    return HTTPServer((host, port), _handler_for(backend))


def serve_forever(server: HTTPServer, backend: LocalBackend, realtime: bool = False, poll_s: float = 0.05) -> None:
    """Serve requests; with ``realtime`` the simulated clock follows wall time between requests."""
    server.timeout = poll_s
    last = time.monotonic()
    try:
        while True:
            server.handle_request()
            if realtime:
                now = time.monotonic()
                step = int((now - last) * 1000)
                if step > 0:
                    backend.ric.advance(step)
                    last += step / 1000
            else:
                last = time.monotonic()
    finally:
        server.server_close()
