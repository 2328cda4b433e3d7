"""The library xApps are written against.

Two harnesses share one base:

* :class:`RMRXapp` is reactive. Incoming messages are dispatched to the
  callback registered for their mtype (or the default handler), health
  checks are answered without user code.
* :class:`Xapp` is general. Its entrypoint drives everything; it may be a
  plain function or a generator whose yielded values are sleeps in
  simulated milliseconds.

An xApp is constructed inside an :class:`AppContext`, the in-process
stand-in for a pod: environment variables, the live ConfigMap, signal
handlers, and the platform services it can reach. The app manager creates
one context per instance; tests can create their own with
:func:`use_context`.
"""

from __future__ import annotations

import contextvars
import json
import logging
import signal as _signal
import types
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Callable, Iterator, Optional, Union

from .bus import MessageBus, http_endpoint_name, rmr_endpoint_name
from .descriptor import DESCRIPTOR_PATH_ENV, ConfigView, XAppDescriptor, parse_descriptor
from .e2 import Action
from .errors import (
    BackendUnavailable,
    DescriptorError,
    DuplicateHandler,
    MiniRicError,
    NameDoesNotResolve,
    NotificationTimeout,
    NotRegistered,
    PayloadTooLarge,
    QueueFull,
    RegistrationFailed,
    RouteTableError,
    error_from_json,
)
from .messages import (
    DEFAULT_MAX_SIZE,
    NO_SUBID,
    RIC_HEALTH_CHECK_REQ,
    RIC_HEALTH_CHECK_RESP,
    Message,
    make_reply,
)
from .rest import ALIVE_URI, CONFIG_URI, READY_URI, HttpFabric, RestRouter, init_response
from .routes import load_route_table
from .sdl import NodebInfo, Rnib, SdlClient, SdlStore
from .submgr import CLIENT_HEADER, NOTIFICATION_URI, SUBMGR_HTTP_ADDRESS, SUBSCRIPTIONS_URI, Directives

log = logging.getLogger(__name__)

APPMGR_HTTP_ADDRESS = "service-ricplt-appmgr-http.ricplt:8080"
REGISTER_URI = "/ric/v1/register"
DEREGISTER_URI = "/ric/v1/deregister"

DEFAULT_RMR_PORT = 4560
DEFAULT_HTTP_PORT = 8080
DEFAULT_NAMESPACE = "ricxapp"
NAMESPACE_ENV = "XAPP_NAMESPACE"
NAME_ENV = "XAPP_NAME"
SEED_RT_ENV = "RMR_SEED_RT"
RMR_LOG_LEVEL_ENV = "RMR_LOG_LEVEL"

SIGTERM = int(_signal.SIGTERM)
SIGINT = int(_signal.SIGINT)


# -- logging ---------------------------------------------------------------


class Level(IntEnum):
    DEBUG = 10
    INFO = 20
    WARNING = 30
    ERROR = 40


def _as_level(level: Union[Level, int, str]) -> Level:
    if isinstance(level, str):
        return Level[level.upper()]
    return Level(int(level))


@dataclass(frozen=True)
class LogEntry:
    timestamp: int
    criticality: str
    id: str
    message: str

    def to_json(self) -> dict:
        return asdict(self)


class XappLogger:
    """Per-instance log stream; entries below the level are dropped."""

    def __init__(self, name: str, clock, level: Level = Level.INFO):
        self.name = name
        self._clock = clock
        self.level = level
        self.entries: list[LogEntry] = []
        self._py = logging.getLogger(f"miniric.xapp.{name}")

    def set_level(self, level) -> None:
        self.level = _as_level(level)

    def get_level(self) -> Level:
        return self.level

    def log(self, level, message) -> Optional[LogEntry]:
        level = _as_level(level)
        if level < self.level:
            return None
        entry = LogEntry(self._clock.now, level.name, self.name, str(message))
        self.entries.append(entry)
        self._py.log(int(level), "%s", entry.message)
        return entry

    def debug(self, message) -> Optional[LogEntry]:
        return self.log(Level.DEBUG, message)

    def info(self, message) -> Optional[LogEntry]:
        return self.log(Level.INFO, message)

    def warning(self, message) -> Optional[LogEntry]:
        return self.log(Level.WARNING, message)

    def error(self, message) -> Optional[LogEntry]:
        return self.log(Level.ERROR, message)


# -- context ---------------------------------------------------------------


@dataclass
class Platform:
    """Handles on the shared platform services an xApp may talk to."""

    bus: MessageBus
    fabric: HttpFabric
    sdl: SdlStore
    rnib: Optional[Rnib] = None
    appmgr_address: Optional[str] = APPMGR_HTTP_ADDRESS
    submgr_address: str = SUBMGR_HTTP_ADDRESS

    @property
    def clock(self):
        return self.bus.clock

    @property
    def registry(self):
        return self.bus.registry


@dataclass
class AppContext:
    """What one running instance sees: env, live config, signal table."""

    platform: Platform
    env: dict = field(default_factory=dict)
    config: Optional[ConfigView] = None
    apps: list = field(default_factory=list)
    signal_handlers: dict = field(default_factory=dict)
    exit_listeners: list = field(default_factory=list)

    def deliver_signal(self, signum: int) -> bool:
        """Invoke the handler installed for ``signum``; False if none is."""
        handler = self.signal_handlers.get(int(signum))
        if handler is None:
            return False
        handler(int(signum), None)
        return True

    def exited(self, app) -> None:
        for cb in list(self.exit_listeners):
            cb(app)


_CURRENT: contextvars.ContextVar[Optional[AppContext]] = contextvars.ContextVar("miniric_app_context", default=None)


def current_context() -> Optional[AppContext]:
    return _CURRENT.get()


@contextmanager
def use_context(ctx: AppContext):
    token = _CURRENT.set(ctx)
    try:
        yield ctx
    finally:
        _CURRENT.reset(token)


def signal(signum: int, handler: Callable[[int, Any], None], context: Optional[AppContext] = None):
    """Install a signal handler for the current instance, like :func:`signal.signal`.

    Returns the previously installed handler (or None).
    """
    ctx = context or current_context()
    if ctx is None:
        raise RuntimeError("signal() needs an application context")
    previous = ctx.signal_handlers.get(int(signum))
    ctx.signal_handlers[int(signum)] = handler
    return previous


def rmr_data_port(descriptor: Optional[XAppDescriptor], default: int = DEFAULT_RMR_PORT) -> int:
    """The RMR data port: a messaging port named ``rmrdata``, else ``rmr.protPort``."""
    if descriptor is None:
        return default
    port = descriptor.port("rmrdata")
    if port is not None:
        return port.port
    if descriptor.rmr is not None and descriptor.rmr.port is not None:
        return descriptor.rmr.port
    return default


def http_port(descriptor: Optional[XAppDescriptor], default: int = DEFAULT_HTTP_PORT) -> int:
    port = descriptor.port("http") if descriptor is not None else None
    return port.port if port is not None else default


@dataclass(frozen=True)
class NbIdentity:
    inventory_name: str


@dataclass
class PendingSubscription:
    """Client-side view of one subscription request."""

    xapp_event_instance_id: int
    meid: str
    ran_function_id: int
    subid: Optional[int] = None
    http_status: int = 0
    notified: bool = False
    error: Optional[str] = None
    notification: Optional[dict] = None

    @property
    def ok(self) -> bool:
        return self.notified and self.error is None


def _payload_bytes(payload) -> bytes:
    if isinstance(payload, str):
        return payload.encode("utf-8")
    return bytes(payload)


# -- base harness ----------------------------------------------------------


class _BaseXapp:
    def __init__(
        self,
        rmr_port: int = DEFAULT_RMR_PORT,
        *,
        post_init: Optional[Callable] = None,
        context: Optional[AppContext] = None,
        ignore_signals: bool = False,
        delete_subscriptions_on_exit: bool = True,
        subscription_callback: Optional[Callable] = None,
    ):
        ctx = context or current_context()
        if ctx is None:
            raise RuntimeError("xApps must be constructed inside an AppContext (see use_context)")
        self._ctx = ctx
        self._platform = ctx.platform
        self.clock = ctx.platform.clock
        self.bus = ctx.platform.bus
        self._post_init = post_init
        self._delete_on_exit = delete_subscriptions_on_exit
        self._subscription_callback = subscription_callback

        self._config_path = ctx.env.get(DESCRIPTOR_PATH_ENV)
        self._config_data: dict = {}
        self._keep_registration = True
        self.descriptor: Optional[XAppDescriptor] = None
        load_error = self._load_config()

        d = self.descriptor
        self.name = d.name if d else ctx.env.get(NAME_ENV, "xapp")
        self.version = d.version if d else "0.0.0"
        self.namespace = ctx.env.get(NAMESPACE_ENV, DEFAULT_NAMESPACE)
        self.rmr_port = rmr_data_port(d, rmr_port)
        self.http_port = http_port(d)
        self.rmr_endpoint = rmr_endpoint_name(self.name, self.namespace)
        self.http_host = http_endpoint_name(self.name, self.namespace)
        self.http_address = f"{self.http_host}:{self.http_port}"
        self.max_size = d.rmr.maxSize if d and d.rmr else DEFAULT_MAX_SIZE
        self.rmr_log_level = int(ctx.env.get(RMR_LOG_LEVEL_ENV, 0) or 0)

        self.logger = XappLogger(self.name, self.clock)
        if load_error:
            self.logger.error(load_error)
        self.sdl = SdlClient(ctx.platform.sdl)
        self.server = RestRouter(self.name)
        self.state = "created"  # created | running | failed | stopped | killed
        self.shutdown = False
        self.last_error: Optional[MiniRicError] = None
        self.last_transaction_id: Optional[int] = None
        self._registered = False
        self._stopped = False
        self._mailbox = None
        self._handlers: dict[int, Callable] = {}
        self._subscriptions: list[int] = []
        self._pending: dict[int, PendingSubscription] = {}
        self._event_instance = 0
        self._timers: list = []
        self._loop_timer = None
        self._unsubscribe_config: Optional[Callable[[], None]] = None

        self._install_builtin_routes()
        if not ignore_signals:
            for sig in (SIGTERM, SIGINT):
                ctx.signal_handlers.setdefault(sig, self._on_signal)
        ctx.apps.append(self)
        if ctx.config is not None:
            self._unsubscribe_config = ctx.config.subscribe(self._config_changed)

    # -- configuration -----------------------------------------------------

    def _load_config(self) -> Optional[str]:
        path = self._config_path
        if not path:
            self._keep_registration = False
            return f"Cannot Read config file for xapp Registration: {DESCRIPTOR_PATH_ENV} is not set"
        try:
            text = Path(path).read_text(encoding="utf-8")
            self.descriptor = parse_descriptor(text)
            self._config_data = json.loads(text)
        except (OSError, DescriptorError, ValueError) as exc:
            self._keep_registration = False
            self._config_data = {}
            self.descriptor = None
            return f"Cannot Read config file for xapp Registration: {path} ({exc})"
        return None

    def _config_changed(self, content: dict) -> None:
        if self._stopped:
            return
        self._config_data = content
        try:
            self.descriptor = parse_descriptor(content)
        except DescriptorError as exc:
            self.logger.warning(f"edited config is not a valid descriptor: {exc}")
        self._on_config(content)

    def _on_config(self, content: dict) -> None:
        pass

    @property
    def config_data(self) -> dict:
        """The descriptor as loaded (or last edited); empty when loading failed."""
        return self._config_data

    @property
    def keep_registration(self) -> bool:
        return self._keep_registration

    # -- lifecycle ---------------------------------------------------------

    @property
    def registered(self) -> bool:
        return self._registered

    def run(self):
        """Register and start processing. Returns self; never blocks."""
        if self.state != "created":
            return self
        if self._keep_registration:
            try:
                self._open_endpoints()
                self._register()
            except (MiniRicError, OSError) as exc:
                self.logger.error(f"registration failed: {exc}")
                self.state = "failed"
                self._close_endpoints(purge=True)
                return self
        self.state = "running"
        self._after_start()
        return self

    def _open_endpoints(self) -> None:
        seed = seed_path = None
        if self._ctx.env.get(SEED_RT_ENV):
            seed_path = self._ctx.env[SEED_RT_ENV]
            try:
                seed = load_route_table(seed_path, self._platform.registry)
            except (OSError, RouteTableError) as exc:
                raise RegistrationFailed(f"cannot load seed route table {seed_path}: {exc}") from None
        self._mailbox = self.bus.register_endpoint(self.rmr_endpoint, seed=seed, seed_path=seed_path)
        self._mailbox.listener = self._on_mail
        self._platform.fabric.bind(self.http_address, self.server)

    def _register(self) -> None:
        address = self._platform.appmgr_address
        if address is None:
            self._registered = True
            return
        body = {
            "appName": self.name,
            "appVersion": self.version,
            "appInstanceName": self.name,
            "namespace": self.namespace,
            "rmrEndpoint": self.rmr_endpoint,
            "rmrPort": self.rmr_port,
            "httpEndpoint": self.http_address,
            "configPath": self._config_path,
            "config": json.dumps(self._config_data),
        }
        resp = self._platform.fabric.post(f"http://{address}{REGISTER_URI}", body)
        if not resp.ok:
            raise RegistrationFailed(f"AppMgr answered {resp.status}: {resp.text()}")
        self._registered = True
        self.logger.info("registered with AppMgr")

    def _deregister(self) -> None:
        address = self._platform.appmgr_address
        if address is None:
            return
        body = {"appName": self.name, "appInstanceName": self.name, "namespace": self.namespace}
        resp = self._platform.fabric.post(f"http://{address}{DEREGISTER_URI}", body)
        if not resp.ok:
            self.logger.warning(f"deregistration answered {resp.status}")

    def _close_endpoints(self, purge: bool) -> None:
        if self._mailbox is not None:
            self._mailbox.listener = None
        if self.bus.is_registered(self.rmr_endpoint):
            self.bus.deregister_endpoint(self.rmr_endpoint, purge=purge)
        self._platform.fabric.unbind(self.http_address)
        if self._unsubscribe_config is not None:
            self._unsubscribe_config()
            self._unsubscribe_config = None

    def _after_start(self) -> None:
        raise NotImplementedError

    def _on_mail(self, _mailbox) -> None:
        pass

    def _on_signal(self, signum: int, frame) -> None:
        self.logger.info(f"signal handler called ({signum})")
        self.stop()

    def stop(self) -> None:
        """Graceful exit: unsubscribe (if enabled), deregister, release endpoints."""
        if self._stopped:
            return
        self._stopped = True
        self.shutdown = True
        self.logger.info("stopping")
        self._cancel_timers()
        if self._registered:
            if self._delete_on_exit:
                try:
                    self.unsubscribe_all()
                except MiniRicError as exc:
                    self.logger.warning(f"unsubscribe on exit failed: {exc}")
            try:
                self._deregister()
            except MiniRicError as exc:
                self.logger.warning(f"deregistration failed: {exc}")
        self._registered = False
        self._close_endpoints(purge=True)
        self.state = "stopped"
        self._ctx.exited(self)

    def kill(self) -> None:
        """Abrupt death: no unsubscribe, no deregistration, routes left behind."""
        if self._stopped:
            return
        self._stopped = True
        self.shutdown = True
        self._cancel_timers()
        self._registered = False
        self._close_endpoints(purge=False)
        self.state = "killed"
        self._ctx.exited(self)

    # -- RMR ---------------------------------------------------------------

    def _cancel_timers(self) -> None:
        for t in self._timers:
            t.cancel()
        if self._loop_timer is not None:
            self._loop_timer.cancel()

    def _require_registered(self) -> None:
        if not self._registered or self._stopped:
            raise NotRegistered(f"{self.name} is not registered; cannot send")

    def rmr_send(self, payload, mtype: int, retries: int = 0, subid: int = NO_SUBID, meid: Optional[str] = None) -> bool:
        """Route a message by (mtype, subid). Transient failures are retried.

        Returns False on failure; the error is kept in ``last_error``.
        """
        self._require_registered()
        data = _payload_bytes(payload)
        if len(data) > self.max_size:
            raise PayloadTooLarge(f"payload of {len(data)} bytes exceeds maxSize {self.max_size}")
        code = self._platform.registry.code(mtype)
        msg = Message(code, data, subid=subid, meid=meid, source=self.rmr_endpoint)
        return self._send(msg, retries)

    def rmr_rts(self, msg: Message, new_payload=None, new_mtype: Optional[int] = None, retries: int = 0) -> bool:
        """Return to sender, keeping the transaction id."""
        self._require_registered()
        payload = None if new_payload is None else _payload_bytes(new_payload)
        if payload is not None and len(payload) > self.max_size:
            raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds maxSize {self.max_size}")
        try:
            reply = make_reply(msg, payload, new_mtype, self._platform.registry)
        except ValueError as exc:
            self.logger.warning(f"cannot reply: {exc}")
            return False
        return self._send(reply.with_fields(source=self.rmr_endpoint), retries)

    def _send(self, msg: Message, retries: int) -> bool:
        try:
            receipt = self.bus.send(msg)
        except MiniRicError as exc:
            return self._send_failed(exc)
        base = receipt.message
        self.last_transaction_id = base.transaction_id
        failed = receipt.failures
        attempt = 0
        while failed and attempt < retries:
            attempt += 1
            still = []
            for f in failed:
                again = self.bus.send(base.with_fields(destination=f.endpoint))
                still.extend(again.failures)
            failed = still
        if failed:
            f = failed[0]
            exc = QueueFull(f"queue full at {f.endpoint}") if f.error == QueueFull.__name__ else NameDoesNotResolve(f.endpoint)
            return self._send_failed(exc)
        if self.rmr_log_level >= 4:
            self.logger.debug(f"sent mtype {base.mtype} trn {base.transaction_id} to {receipt.delivered}")
        return True

    def _send_failed(self, exc: MiniRicError) -> bool:
        self.last_error = exc
        self.logger.warning(f"{exc.name}: {exc}")
        return False

    def _answer_health(self, msg: Message) -> None:
        if msg.source:
            self.bus.send(make_reply(msg, b"OK", RIC_HEALTH_CHECK_RESP).with_fields(source=self.rmr_endpoint))

    def rmr_get_messages(self, wait: int = 0) -> Iterator[tuple[dict, Message]]:
        """Drain the mailbox without blocking.

        With ``wait`` > 0 and the clock idle, simulated time is advanced up to
        ``wait`` ms until something arrives. Inside a clock callback the wait
        is ignored (nothing can block there).
        """
        if self._mailbox is None:
            return iter(())
        if wait > 0 and not len(self._mailbox) and not self.clock.running:
            self.clock.run_until(lambda: len(self._mailbox) > 0, self.clock.now + wait)
        out = []
        for msg in self._mailbox.drain():
            if msg.mtype == RIC_HEALTH_CHECK_REQ:
                self._answer_health(msg)
                continue
            out.append((msg.summary(), msg))
        return iter(out)

    def healthcheck(self) -> bool:
        """Bus endpoint live and SDL answering a probe read."""
        if self._stopped or not self.bus.is_registered(self.rmr_endpoint):
            return False
        return self._platform.sdl.healthcheck()

    # -- RNIB --------------------------------------------------------------

    def _rnib(self) -> Rnib:
        if self._platform.rnib is None:
            return Rnib(self._platform.sdl)
        return self._platform.rnib

    def GetListNodebIds(self) -> list[NbIdentity]:
        return [NbIdentity(n) for n in self._rnib().list("all")]

    def get_list_gnb_ids(self) -> list[NbIdentity]:
        return [NbIdentity(n) for n in self._rnib().list_gnb()]

    def get_list_enb_ids(self) -> list[NbIdentity]:
        return [NbIdentity(n) for n in self._rnib().list_enb()]

    def GetNodeb(self, inventory_name: str) -> NodebInfo:
        return self._rnib().get_nodeb(inventory_name)

    def GetRanFunctionDefinition(self, inventory_name: str, oid: str) -> bytes:
        return self._rnib().get_ran_function(inventory_name, oid)

    # -- REST --------------------------------------------------------------

    def _install_builtin_routes(self) -> None:
        ok = lambda name, path, data, ctype: init_response(200, {"status": "ok"})  # noqa: E731
        self.server.add_handler("GET", "ready", READY_URI, ok, builtin=True)
        self.server.add_handler("GET", "alive", ALIVE_URI, ok, builtin=True)
        self.server.add_handler(
            "GET", "config", CONFIG_URI, lambda name, path, data, ctype: init_response(200, self._config_data), builtin=True
        )
        self.server.add_handler("POST", "subscription_notification", NOTIFICATION_URI, self._notification)

    def rest_add_handler(self, method: str, name: str, uri: str, callback: Callable) -> None:
        """Expose ``callback(name, path, data, ctype)`` on this instance's HTTP service."""
        self.server.add_handler(method, name, uri, callback)

    # -- subscriptions -----------------------------------------------------

    @property
    def subscriptions(self) -> list[int]:
        return list(self._subscriptions)

    def subscribe(
        self,
        meid: str,
        ran_function_id: int,
        trigger: bytes,
        actions: list,
        directives: Union[Directives, dict, None] = None,
    ) -> PendingSubscription:
        """POST a Subscription Request to the SubMgr; the outcome arrives later.

        ``actions`` holds :class:`~miniric.e2.Action` objects or the camel-case
        dicts of an ActionToBeSetupList. SubMgr rejections are raised.
        """
        self._require_registered()
        self._event_instance += 1
        pending = PendingSubscription(self._event_instance, meid, ran_function_id)
        body = {
            "SubscriptionId": "",
            "ClientEndpoint": {"Host": self.http_host, "HTTPPort": self.http_port, "RMRPort": self.rmr_port},
            "Meid": meid,
            "RANFunctionID": ran_function_id,
            "SubscriptionDetails": [
                {
                    "XappEventInstanceId": self._event_instance,
                    "EventTriggers": list(trigger),
                    "ActionToBeSetupList": [a.to_json() if isinstance(a, Action) else a for a in actions],
                }
            ],
        }
        if directives is not None:
            body["E2SubscriptionDirectives"] = asdict(directives) if isinstance(directives, Directives) else dict(directives)
        d = directives if isinstance(directives, Directives) else Directives(**(directives or {}))
        resp = self._platform.fabric.post(f"http://{self._platform.submgr_address}{SUBSCRIPTIONS_URI}", body)
        pending.http_status = resp.status
        if resp.status != 201:
            err = error_from_json(resp.json() or {}, resp.status)
            self.logger.error(f"Subscription Request Failure! {resp.status} {err}")
            raise err
        pending.subid = int(resp.json()["SubscriptionId"])
        self._pending[pending.subid] = pending
        self.logger.debug("Subscription Request Success!")
        # every E2 attempt plus slack; SubMgr always answers well before this
        budget = (d.E2RetryCount + 1) * d.E2TimeoutTimerValue * 1000 + 1000
        self._timers.append(self.clock.call_later(budget, lambda: self._notification_timeout(pending)))
        return pending

    def _notification_timeout(self, pending: PendingSubscription) -> None:
        if pending.notified or self._stopped:
            return
        pending.error = NotificationTimeout.__name__
        self.logger.error(f"no notification for subscription {pending.subid}")

    def _notification(self, name, path, data, ctype):
        body = json.loads(data)
        subid = int(body["SubscriptionId"])
        inst = (body.get("SubscriptionInstances") or [{}])[0]
        pending = self._pending.get(subid)
        if pending is None:
            pending = next(
                (p for p in self._pending.values() if p.xapp_event_instance_id == inst.get("XappEventInstanceId")), None
            )
        cause = inst.get("ErrorCause") or ""
        if pending is not None:
            pending.notified = True
            pending.notification = body
            pending.error = cause or None
        if cause:
            self.logger.error(f"subscription {subid} failed: {cause} ({inst.get('ErrorSource', '')})")
            if subid in self._subscriptions:
                self._subscriptions.remove(subid)
        elif subid not in self._subscriptions:
            self._subscriptions.append(subid)
            try:
                self.sdl.set(self.name, f"subscription_{subid}", {"subid": subid, "meid": pending.meid if pending else None})
            except MiniRicError as exc:
                self.logger.warning(f"could not persist subscription {subid}: {exc}")
        if self._subscription_callback is not None:
            self._subscription_callback(name, path, data, ctype)
        return init_response(200)

    def unsubscribe(self, subid: int) -> int:
        """DELETE one subscription; returns the HTTP status (404 counts as gone)."""
        url = f"http://{self._platform.submgr_address}{SUBSCRIPTIONS_URI}/{subid}"
        resp = self._platform.fabric.delete(url, headers={CLIENT_HEADER: self.http_address})
        if resp.status in (204, 404):
            if subid in self._subscriptions:
                self._subscriptions.remove(subid)
            self._pending.pop(subid, None)
            try:
                self.sdl.delete(self.name, f"subscription_{subid}")
            except MiniRicError:
                pass
            self.logger.debug(f"Subscription Delete Successful! {subid}")
        else:
            self.logger.debug(f"Subscription Delete Failure! {resp.status} {resp.text()}")
        return resp.status

    def unsubscribe_all(self) -> list[int]:
        subids = list(self._subscriptions)
        subids += [p.subid for p in self._pending.values() if p.subid is not None and p.error is None and p.subid not in subids]
        statuses = []
        for subid in subids:
            try:
                statuses.append(self.unsubscribe(subid))
            except BackendUnavailable as exc:
                self.logger.warning(f"SubMgr unreachable while deleting {subid}: {exc}")
                statuses.append(503)
        return statuses


# -- reactive --------------------------------------------------------------


class RMRXapp(_BaseXapp):
    """Callback-driven xApp. Handlers are called as ``handler(xapp, summary, msg)``."""

    def __init__(
        self,
        default_handler: Callable,
        config_handler: Optional[Callable] = None,
        post_init: Optional[Callable] = None,
        rmr_port: int = DEFAULT_RMR_PORT,
        **kwargs,
    ):
        super().__init__(rmr_port, post_init=post_init, **kwargs)
        self._default_handler = default_handler
        self._config_handler = config_handler
        self._drain_scheduled = False
        self.dispatched = 0

    def register_callback(self, handler: Callable, message_type) -> None:
        code = self._platform.registry.code(message_type)
        if code in self._handlers:
            raise DuplicateHandler(f"mtype {code} already has a handler")
        self._handlers[code] = handler

    def _after_start(self) -> None:
        if self._config_handler is not None and self._config_data:
            self._on_config(self._config_data)
        if self._post_init is not None:
            try:
                self._post_init(self)
            except Exception as exc:  # user code; keep the instance alive
                self.logger.error(f"post_init raised {exc!r}")
        if self._mailbox is not None and len(self._mailbox):
            self._on_mail(self._mailbox)

    def _on_config(self, content: dict) -> None:
        if self._config_handler is None:
            return
        try:
            self._config_handler(self, content)
        except Exception as exc:
            self.logger.error(f"config handler rejected the configuration: {exc!r}")

    def _on_mail(self, _mailbox) -> None:
        if not self._drain_scheduled and self.state == "running":
            self._drain_scheduled = True
            self.clock.call_soon(self._drain)

    def _drain(self) -> None:
        self._drain_scheduled = False
        if self._stopped or self._mailbox is None:
            return
        for msg in self._mailbox.drain():
            if self._stopped:
                break
            self._dispatch(msg)

    def _dispatch(self, msg: Message) -> None:
        if msg.mtype == RIC_HEALTH_CHECK_REQ:
            self._answer_health(msg)
            return
        handler = self._handlers.get(msg.mtype, self._default_handler)
        self.dispatched += 1
        try:
            handler(self, msg.summary(), msg)
        except Exception as exc:
            self.logger.error(f"handler for mtype {msg.mtype} raised {exc!r}")


# -- general ---------------------------------------------------------------


class Xapp(_BaseXapp):
    """Entrypoint-driven xApp.

    ``entrypoint(xapp)`` runs once after registration. If it returns a
    generator, each yielded number is a sleep in simulated ms before the
    generator is resumed. When the entrypoint finishes the app stops.
    """

    def __init__(self, entrypoint: Callable, rmr_port: int = DEFAULT_RMR_PORT, **kwargs):
        super().__init__(rmr_port, **kwargs)
        self._entrypoint = entrypoint
        self._gen = None

    def _after_start(self) -> None:
        self._loop_timer = self.clock.call_soon(self._begin)

    def _begin(self) -> None:
        if self._stopped:
            return
        try:
            result = self._entrypoint(self)
        except Exception as exc:
            self.logger.error(f"entrypoint raised {exc!r}")
            self.stop()
            return
        if isinstance(result, types.GeneratorType):
            self._gen = result
            self._resume()
        else:
            self._finished()

    def _resume(self) -> None:
        if self._stopped:
            self._gen.close()
            return
        try:
            delay = next(self._gen)
        except StopIteration:
            self._finished()
            return
        except Exception as exc:
            self.logger.error(f"entrypoint raised {exc!r}")
            self.stop()
            return
        self._loop_timer = self.clock.call_later(max(1, int(delay or 0)), self._resume)

    def _finished(self) -> None:
        if not self._stopped:
            self.logger.info("entrypoint returned")
            self.stop()
