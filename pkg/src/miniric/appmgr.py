"""Application manager: chart repository, image catalog and instance lifecycle.

Kubernetes is replaced by an in-process instance manager. An install
spawns the app through the factory its image maps to, inside a fresh
:class:`~miniric.framework.AppContext`; the instance becomes Running only
when the app registers over REST. Uninstall delivers SIGTERM, waits out a
grace period on the simulated clock and force-kills stragglers.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import yaml

from .bus import http_endpoint_name, rmr_endpoint_name
from .descriptor import (
    DESCRIPTOR_PATH_ENV,
    ConfigView,
    ImageRef,
    XAppDescriptor,
    parse_descriptor,
    parse_schema,
    validate,
)
from .errors import (
    AlreadyInstalled,
    AlreadyRegistered,
    ChartNotFound,
    DuplicateChart,
    ImageNotFound,
    MiniRicError,
    NotFound,
    NotRunning,
    RegistrationFailed,
    RegistrationTimeout,
    RepositoryUnavailable,
    UnknownInstance,
    UnknownMtype,
    ValidationFailed,
)
from .framework import (
    APPMGR_HTTP_ADDRESS,
    DEREGISTER_URI,
    NAME_ENV,
    NAMESPACE_ENV,
    REGISTER_URI,
    SIGTERM,
    AppContext,
    Platform,
    http_port,
    rmr_data_port,
    use_context,
)
from .messages import A1_POLICY_REQ, NO_SUBID, RIC_HEALTH_CHECK_REQ, RIC_HEALTH_CHECK_RESP, RIC_INDICATION
from .rest import ALIVE_URI, READY_URI, HttpRequest, RestRouter, json_response
from .routes import MEID_ROUTE, EndpointGroup, RouteEntry, RoutingTable, remove_endpoint

log = logging.getLogger(__name__)

DEFAULT_GRACE_MS = 30_000
DEFAULT_REGISTRATION_TIMEOUT_MS = 10_000
DEFAULT_NAMESPACE = "ricxapp"

# mtypes that never get a static (subid -1) route at registration
_NO_STATIC_ROUTE = {RIC_INDICATION, RIC_HEALTH_CHECK_REQ, RIC_HEALTH_CHECK_RESP, A1_POLICY_REQ}


def deep_merge(base, override):
    """Overlay ``override`` on ``base``.

    Dicts merge key by key. Lists whose items are all dicts with a ``name``
    merge item by name (unknown names are appended); other lists and
    scalars are replaced.
    """
    if isinstance(base, dict) and isinstance(override, dict):
        out = copy.deepcopy(base)
        for k, v in override.items():
            out[k] = deep_merge(base[k], v) if k in base else copy.deepcopy(v)
        return out
    if isinstance(base, list) and isinstance(override, list) and _named(base) and _named(override):
        out = copy.deepcopy(base)
        index = {item["name"]: i for i, item in enumerate(out)}
        for item in override:
            if item["name"] in index:
                out[index[item["name"]]] = deep_merge(out[index[item["name"]]], item)
            else:
                out.append(copy.deepcopy(item))
        return out
    return copy.deepcopy(override)


def _named(items: list) -> bool:
    return bool(items) and all(isinstance(i, dict) and "name" in i for i in items)


def _canonical(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _read_source(src) -> tuple[object, bytes]:
    """(parsed-or-text, raw bytes) for a path, JSON text or dict."""
    if src is None:
        return None, b""
    if isinstance(src, dict):
        return src, _canonical(src)
    if isinstance(src, Path) or (isinstance(src, str) and not src.lstrip().startswith("{")):
        raw = Path(src).read_bytes()
        return raw.decode("utf-8"), raw
    text = src.decode("utf-8") if isinstance(src, bytes) else src
    return text, text.encode("utf-8")


# -- chart repository --------------------------------------------------------


@dataclass
class ChartRecord:
    name: str
    version: str
    descriptor: dict
    schema: Optional[dict]
    created_at: int
    content_hash: str

    def to_json(self, full: bool = False) -> dict:
        out = {"name": self.name, "version": self.version, "created_at": self.created_at, "content_hash": self.content_hash}
        if full:
            out["descriptor"] = self.descriptor
            out["schema"] = self.schema
        return out


class ChartRepository:
    """Charts keyed by (name, version); optionally a directory of JSON records."""

    def __init__(self, root=None):
        self.root = Path(root) if root else None
        self._charts: dict[tuple[str, str], ChartRecord] = {}
        self.available = True
        if self.root is not None and self.root.exists():
            for path in sorted(self.root.glob("*/*.json")):
                rec = ChartRecord(**json.loads(path.read_text(encoding="utf-8")))
                self._charts[(rec.name, rec.version)] = rec

    def _check(self) -> None:
        if not self.available:
            raise RepositoryUnavailable("chart repository is not reachable")

    def add(self, rec: ChartRecord, force: bool = False) -> None:
        self._check()
        key = (rec.name, rec.version)
        if key in self._charts and not force:
            raise DuplicateChart(f"chart {rec.name}/{rec.version} already onboarded")
        self._charts[key] = rec
        if self.root is not None:
            path = self.root / rec.name / f"{rec.version}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(rec.to_json(full=True), indent=2), encoding="utf-8")

    def get(self, name: str, version: str) -> ChartRecord:
        self._check()
        try:
            return self._charts[(name, version)]
        except KeyError:
            raise ChartNotFound(f"no chart {name}/{version}") from None

    def has(self, name: str, version: str) -> bool:
        return (name, version) in self._charts

    def list(self) -> list[ChartRecord]:
        self._check()
        return [self._charts[k] for k in sorted(self._charts)]


class ImageCatalog:
    """(registry, image, tag) -> app factory; the stand-in for container registries."""

    def __init__(self):
        self._images: dict[tuple[str, str, str], Callable] = {}

    def register(self, registry: str, name: str, tag: str, factory: Callable) -> None:
        self._images[(registry, name, tag)] = factory

    def remove(self, registry: str, name: str, tag: str) -> None:
        self._images.pop((registry, name, tag), None)

    def resolve(self, image: ImageRef) -> Callable:
        try:
            return self._images[image.key()]
        except KeyError:
            raise ImageNotFound(f"cannot fetch image {image.registry}/{image.name}:{image.tag}") from None

    def __contains__(self, key) -> bool:
        return tuple(key) in self._images


# -- instances -----------------------------------------------------------------

STATES = ("Onboarded", "Installing", "Running", "Terminating", "Failed", "Removed")


@dataclass
class XAppInstance:
    name: str
    version: str
    namespace: str = DEFAULT_NAMESPACE
    state: str = "Installing"
    rmr_endpoint: str = ""
    http_endpoint: str = ""
    rmr_port: int = 0
    registered: bool = False
    reason: str = ""
    context: Optional[AppContext] = None
    process: object = None
    config: Optional[ConfigView] = None
    exited: bool = False
    history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def rmr_address(self) -> str:
        return f"{self.rmr_endpoint}:{self.rmr_port}"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "namespace": self.namespace,
            "state": self.state,
            "registered": self.registered,
            "rmr_endpoint": self.rmr_endpoint,
            "rmr_address": self.rmr_address,
            "http_endpoint": self.http_endpoint,
            "reason": self.reason,
        }


class AppMgr:
    def __init__(
        self,
        platform: Platform,
        catalog: Optional[ImageCatalog] = None,
        repository: Optional[ChartRepository] = None,
        submgr=None,
        grace_period_ms: int = DEFAULT_GRACE_MS,
        registration_timeout_ms: int = DEFAULT_REGISTRATION_TIMEOUT_MS,
        strict_purge: bool = True,
        workdir=None,
        address: str = APPMGR_HTTP_ADDRESS,
    ):
        self.platform = platform
        self.bus = platform.bus
        self.clock = platform.clock
        self.catalog = catalog or ImageCatalog()
        self.repository = repository or ChartRepository()
        self.submgr = submgr
        self.grace_period_ms = grace_period_ms
        self.registration_timeout_ms = registration_timeout_ms
        self.strict_purge = strict_purge
        self.workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="miniric-"))
        self.address = address
        self.instances: dict[tuple[str, str], XAppInstance] = {}
        self.overrides: dict[tuple[str, str], dict] = {}
        self.events: list[str] = []
        self._lock = threading.RLock()
        self.router = self._build_router()
        platform.fabric.bind(address, self.router)

    def _event(self, text: str) -> None:
        self.events.append(f"{self.clock.now} {text}")
        log.info("%s", text)

    def _set_state(self, inst: XAppInstance, state: str, reason: str = "") -> None:
        inst.state = state
        if reason:
            inst.reason = reason
        inst.history.append((self.clock.now, state))
        self._event(f"{inst.namespace}/{inst.name} -> {state}{' (' + reason + ')' if reason else ''}")

    # -- charts ----------------------------------------------------------------

    def onboard(self, descriptor, schema=None, force: bool = False) -> ChartRecord:
        """Validate a descriptor (path, JSON text or dict) and store it as a chart."""
        d_src, d_raw = _read_source(descriptor)
        s_src, s_raw = _read_source(schema)
        d = parse_descriptor(d_src)
        parsed_schema = parse_schema(s_src) if s_src is not None else None
        violations = validate(d, parsed_schema, self.platform.registry)
        if violations:
            raise ValidationFailed(violations)
        doc = json.loads(d_src) if isinstance(d_src, str) else copy.deepcopy(d_src)
        schema_doc = None if s_src is None else (json.loads(s_src) if isinstance(s_src, str) else copy.deepcopy(s_src))
        rec = ChartRecord(
            d.name, d.version, doc, schema_doc, self.clock.now, hashlib.sha256(d_raw + s_raw).hexdigest()
        )
        self.repository.add(rec, force=force)
        self._event(f"onboarded {d.name}/{d.version}")
        return rec

    def list_charts(self) -> list[dict]:
        return [r.to_json() for r in self.repository.list()]

    def repo_health(self) -> dict:
        self.repository._check()
        return {"status": "ok", "charts": len(self.repository.list())}

    def override_values(self, name: str, version: str, values: dict) -> dict:
        """Replace deployment parameters for the next install of name/version."""
        self.repository.get(name, version)
        self.overrides[(name, version)] = copy.deepcopy(values)
        return self.effective_values(name, version)

    def effective_values(self, name: str, version: str) -> dict:
        chart = self.repository.get(name, version)
        over = self.overrides.get((name, version))
        return deep_merge(chart.descriptor, over) if over else copy.deepcopy(chart.descriptor)

    def download_values(self, name: str, version: str) -> str:
        return yaml.safe_dump(self.effective_values(name, version), sort_keys=False)

    # -- lifecycle ---------------------------------------------------------------

    def get_instance(self, name: str, namespace: str = DEFAULT_NAMESPACE) -> XAppInstance:
        inst = self.instances.get((namespace, name))
        if inst is None:
            raise NotFound(f"no instance {namespace}/{name}")
        return inst

    def list_instances(self) -> list[dict]:
        return [i.to_json() for _, i in sorted(self.instances.items())]

    def install(self, name: str, version: str, namespace: str = DEFAULT_NAMESPACE) -> XAppInstance:
        if self.clock.running:
            raise RuntimeError("install must be called outside clock callbacks")
        chart = self.repository.get(name, version)
        existing = self.instances.get((namespace, name))
        if existing is not None and existing.state not in ("Removed", "Failed"):
            raise AlreadyInstalled(f"{namespace}/{name} is {existing.state}")
        if existing is not None and existing.state == "Failed":
            self._cleanup(existing)
        values = self.effective_values(name, version)
        d = parse_descriptor(values)
        inst = XAppInstance(
            chart.name,
            chart.version,
            namespace,
            rmr_endpoint=rmr_endpoint_name(d.name, namespace),
            http_endpoint=f"{http_endpoint_name(d.name, namespace)}:{http_port(d)}",
            rmr_port=rmr_data_port(d),
        )
        with self._lock:
            self.instances[(namespace, name)] = inst
        self._set_state(inst, "Installing")
        try:
            factories = [self.catalog.resolve(c.image) for c in d.containers]
        except ImageNotFound as exc:
            self._set_state(inst, "Failed", str(exc))
            raise
        self._spawn(inst, d, values, factories[0])
        if inst.state == "Installing" and not inst.registered:
            self.clock.run_until(lambda: inst.registered or inst.state != "Installing", self.clock.now + self.registration_timeout_ms)
        if inst.state == "Running":
            return inst
        if inst.state == "Installing":
            self._kill(inst)
            self._set_state(inst, "Failed", "registration timeout")
            self._cleanup(inst)
            raise RegistrationTimeout(f"{namespace}/{name} did not register within {self.registration_timeout_ms} ms")
        raise RegistrationFailed(f"{namespace}/{name} failed to start: {inst.reason}")

    def _spawn(self, inst: XAppInstance, d: XAppDescriptor, values: dict, factory: Callable) -> None:
        path = self.workdir / inst.namespace / inst.name / "config-file.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(values, indent=2), encoding="utf-8")

        def write_config(content: dict) -> None:
            path.write_text(json.dumps(content, indent=2), encoding="utf-8")

        inst.config = ConfigView(values, dispatch=self.clock.call_soon, on_write=write_config)
        env = {DESCRIPTOR_PATH_ENV: str(path), NAMESPACE_ENV: inst.namespace, NAME_ENV: inst.name}
        ctx = AppContext(self.platform, env, inst.config)
        ctx.exit_listeners.append(lambda app: self._on_exit(inst, app))
        inst.context = ctx
        try:
            with use_context(ctx):
                inst.process = factory()
            for app in list(ctx.apps):
                if app.state == "created":
                    app.run()
        except Exception as exc:  # the app crashed during start-up
            log.exception("instance %s crashed during start", inst.name)
            self._kill(inst)
            self._set_state(inst, "Failed", f"crashed: {exc!r}")
            self._cleanup(inst)
            return
        if any(app.state == "failed" for app in ctx.apps) and not inst.registered:
            self._set_state(inst, "Failed", "registration failed")
            self._cleanup(inst)

    def _on_exit(self, inst: XAppInstance, app) -> None:
        if inst.exited or any(a.state in ("running", "created") for a in inst.context.apps):
            return
        inst.exited = True
        if inst.state in ("Running", "Installing"):
            # left on its own, outside an uninstall
            self._set_state(inst, "Failed", "exited")
            if self.strict_purge:
                self._cleanup(inst)

    def _kill(self, inst: XAppInstance) -> None:
        if inst.context is None:
            return
        inst.exited = True
        for app in list(inst.context.apps):
            app.kill()

    def _cleanup(self, inst: XAppInstance) -> None:
        """Release everything the instance may have left behind."""
        if self.strict_purge:
            self.bus.update_routes(lambda m: remove_endpoint(m, inst.rmr_endpoint))
            for meid, owner in list(self.bus.ownership.items()):
                if owner == inst.rmr_endpoint:
                    self.bus.clear_owner(meid)
            if self.submgr is not None:
                purged = self.submgr.purge_client(inst.rmr_endpoint)
                if purged:
                    inst.warnings.append(f"purged subscriptions {purged}")
            if self.bus.is_registered(inst.rmr_endpoint):
                self.bus.deregister_endpoint(inst.rmr_endpoint, purge=True)
            inst.registered = False

    def uninstall(self, name: str, namespace: str = DEFAULT_NAMESPACE) -> XAppInstance:
        if self.clock.running:
            raise RuntimeError("uninstall must be called outside clock callbacks")
        inst = self.instances.get((namespace, name))
        if inst is None or inst.state == "Removed":
            raise NotFound(f"no instance {namespace}/{name}")
        if inst.state not in ("Running", "Failed"):
            raise NotRunning(f"{namespace}/{name} is {inst.state}")
        if inst.state == "Running":
            self._set_state(inst, "Terminating")
            ctx = inst.context
            self.clock.call_soon(lambda: ctx.deliver_signal(SIGTERM))
            deadline = self.clock.now + self.grace_period_ms
            self.clock.run_until(lambda: inst.exited, deadline)
            if not inst.exited:
                msg = f"{namespace}/{name} ignored SIGTERM; force-killed after {self.grace_period_ms} ms"
                inst.warnings.append(msg)
                self._event(msg)
                self._kill(inst)
        self._cleanup(inst)
        if inst.config is not None:
            inst.config = None
        self._set_state(inst, "Removed")
        # let platform components finish what the teardown set in motion
        self.clock.run_pending()
        return inst

    def upgrade(self, name: str, old_version: str, new_version: str, namespace: str = DEFAULT_NAMESPACE) -> XAppInstance:
        """Uninstall ``old_version`` and install ``new_version``."""
        self.repository.get(name, new_version)
        inst = self.get_instance(name, namespace)
        if inst.version != old_version or inst.state != "Running":
            raise NotRunning(f"{namespace}/{name} is not Running at {old_version} ({inst.state} {inst.version})")
        self.uninstall(name, namespace)
        return self.install(name, new_version, namespace)

    def rollback(self, name: str, current_version: str, target_version: str, namespace: str = DEFAULT_NAMESPACE) -> XAppInstance:
        return self.upgrade(name, current_version, target_version, namespace)

    # -- registration ------------------------------------------------------------

    def register_xapp(self, name: str, version: str, namespace: str, rmr_endpoint: str, http_endpoint: str, config_json=None) -> XAppInstance:
        inst = self.instances.get((namespace, name))
        if inst is None or inst.state in ("Removed", "Failed"):
            raise UnknownInstance(f"no instance {namespace}/{name} awaiting registration")
        if inst.registered:
            raise AlreadyRegistered(f"{namespace}/{name} is already registered")
        if inst.state != "Installing":
            raise UnknownInstance(f"{namespace}/{name} is {inst.state}")
        inst.rmr_endpoint = rmr_endpoint
        inst.http_endpoint = http_endpoint
        inst.registered = True
        values = json.loads(config_json) if isinstance(config_json, str) and config_json else (config_json or None)
        d = parse_descriptor(values) if values else parse_descriptor(inst.config.content)
        self.bus.add_routes(self._routes_for(d, rmr_endpoint))
        self._set_state(inst, "Running")
        return inst

    def _routes_for(self, d: XAppDescriptor, endpoint: str) -> RoutingTable:
        registry = self.platform.registry
        names = list(d.rmr.rxMessages) if d.rmr else []
        for p in d.messaging_ports:
            names.extend(p.rxMessages or [])
        policies = list(d.policies)
        for p in d.messaging_ports:
            policies.extend(p.policies or [])
        master = self.bus.master
        entries = []
        seen = set()
        for mt in names:
            try:
                code = registry.code(mt)
            except UnknownMtype:
                continue
            if code in _NO_STATIC_ROUTE or code in seen:
                continue
            seen.add(code)
            entries.append(_with_group(master.find(code, NO_SUBID), code, NO_SUBID, endpoint))
        for pid in dict.fromkeys(policies):
            entries.append(_with_group(master.find(A1_POLICY_REQ, int(pid)), A1_POLICY_REQ, int(pid), endpoint))
        return RoutingTable(entries, "registration")

    def deregister_xapp(self, name: str, namespace: str = DEFAULT_NAMESPACE) -> XAppInstance:
        inst = self.instances.get((namespace, name))
        if inst is None or not inst.registered:
            raise UnknownInstance(f"{namespace}/{name} is not registered")
        self.bus.update_routes(lambda m: remove_endpoint(m, inst.rmr_endpoint))
        inst.registered = False
        self._event(f"{namespace}/{name} deregistered")
        return inst

    def _build_router(self) -> RestRouter:
        r = RestRouter("appmgr")

        def register(req: HttpRequest):
            try:
                b = req.json() or {}
                inst = self.register_xapp(
                    b["appName"], b.get("appVersion", ""), b.get("namespace", DEFAULT_NAMESPACE),
                    b["rmrEndpoint"], b.get("httpEndpoint", ""), b.get("config"),
                )
            except KeyError as exc:
                return json_response(400, {"error": "MissingField", "detail": str(exc)})
            except MiniRicError as exc:
                return json_response(exc.code, exc.to_json())
            return json_response(201, {"status": "ready", "instance": inst.to_json()})

        def deregister(req: HttpRequest):
            try:
                b = req.json() or {}
                self.deregister_xapp(b["appName"], b.get("namespace", DEFAULT_NAMESPACE))
            except KeyError as exc:
                return json_response(400, {"error": "MissingField", "detail": str(exc)})
            except MiniRicError as exc:
                return json_response(exc.code, exc.to_json())
            return json_response(204)

        r.add_handler("POST", "register", REGISTER_URI, register, raw=True)
        r.add_handler("POST", "deregister", DEREGISTER_URI, deregister, raw=True)
        r.add_handler("GET", "xapps", "/ric/v1/xapps", lambda req: json_response(200, self.list_instances()), raw=True)
        return r

    # -- operations on running instances ----------------------------------------

    def health_check(self, name: str, namespace: str = DEFAULT_NAMESPACE) -> dict:
        inst = self.get_instance(name, namespace)
        report = {"name": name, "namespace": namespace, "version": inst.version, "state": inst.state, "registered": inst.registered}
        for probe, uri in (("ready", READY_URI), ("alive", ALIVE_URI)):
            try:
                report[probe] = self.platform.fabric.get(f"http://{inst.http_endpoint}{uri}").ok
            except MiniRicError:
                report[probe] = False
        if inst.state == "Running" and not self.clock.running:
            report["rmr"] = self.bus.health_probe(inst.rmr_endpoint)
        else:
            report["rmr"] = False
        report["healthy"] = inst.state == "Running" and report["ready"] and report["alive"]
        return report

    def config_set(self, name: str, namespace: str, path: str, value) -> dict:
        """Edit the live configuration; the instance's config handler sees the change."""
        inst = self.get_instance(name, namespace)
        if inst.state != "Running" or inst.config is None:
            raise NotRunning(f"{namespace}/{name} is {inst.state}")
        inst.config.set(path, value)
        return inst.config.content

    def logs(self, name: str, namespace: str = DEFAULT_NAMESPACE) -> list[dict]:
        inst = self.get_instance(name, namespace)
        if inst.context is None:
            return []
        entries = [e for app in inst.context.apps for e in app.logger.entries]
        return [e.to_json() for e in sorted(entries, key=lambda e: e.timestamp)]


def _with_group(existing: Optional[RouteEntry], mtype: int, subid: int, endpoint: str) -> RouteEntry:
    """Existing entry plus ``endpoint`` as one more fanout group."""
    if existing is None or existing.target is MEID_ROUTE:
        return RouteEntry("mse", mtype, subid, (EndpointGroup((endpoint,)),))
    if endpoint in existing.endpoints():
        return existing
    return RouteEntry("mse", mtype, subid, existing.groups + (EndpointGroup((endpoint,)),))
