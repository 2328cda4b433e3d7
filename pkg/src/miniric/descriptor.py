"""xApp descriptor and controls-schema handling.

A descriptor is the JSON document an xApp ships with (name, version,
containers, rmr section, messaging ports, free-form controls). Only the
``controls`` section needs a user-supplied schema; the remaining sections
are checked by the built-in structural rules in :func:`validate`.
"""

from __future__ import annotations

import copy
import json
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .errors import MalformedJson, MissingField

DESCRIPTOR_PATH_ENV = "XAPP_DESCRIPTOR_PATH"
SEMVER = re.compile(r"^\d+\.\d+\.\d+$")
PROT_PORT = re.compile(r"^(tcp|udp):(\d+)$")

_KNOWN_TOP = {"name", "version", "vendor", "containers", "rmr", "messaging", "ports", "controls"}


@dataclass(frozen=True)
class ImageRef:
    registry: str
    name: str
    tag: str

    def key(self) -> tuple[str, str, str]:
        return (self.registry, self.name, self.tag)


@dataclass
class ContainerSpec:
    name: str
    image: ImageRef
    resources: Optional[dict] = None


@dataclass
class RmrConfig:
    txMessages: list = field(default_factory=list)
    rxMessages: list = field(default_factory=list)
    protPort: str = "tcp:4560"
    maxSize: int = 2072
    numWorkers: int = 1
    policies: list = field(default_factory=list)

    @property
    def port(self) -> Optional[int]:
        m = PROT_PORT.match(self.protPort or "")
        return int(m.group(2)) if m else None


@dataclass
class PortSpec:
    name: str
    container: str
    port: int
    description: str = ""
    rxMessages: Optional[list] = None
    txMessages: Optional[list] = None
    policies: Optional[list] = None


@dataclass
class XAppDescriptor:
    name: str
    version: str
    vendor: str = ""
    containers: list[ContainerSpec] = field(default_factory=list)
    rmr: Optional[RmrConfig] = None
    messaging_ports: list[PortSpec] = field(default_factory=list)
    controls: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def port(self, name: str) -> Optional[PortSpec]:
        return next((p for p in self.messaging_ports if p.name == name), None)

    @property
    def policies(self) -> list:
        return list(self.rmr.policies) if self.rmr else []

    def to_dict(self) -> dict:
        return emit_descriptor(self)


@dataclass
class PropertySpec:
    type: Optional[str] = None
    id: Optional[str] = None
    default: Any = None
    title: Optional[str] = None
    examples: Optional[list] = None


@dataclass
class ControlsSchema:
    required: list[str] = field(default_factory=list)
    properties: dict[str, PropertySpec] = field(default_factory=dict)


def _loads(text) -> Any:
    if isinstance(text, (dict, list)):
        return copy.deepcopy(text)
    try:
        return json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedJson(str(exc)) from None


def _req(obj: dict, key: str, path: str):
    if not isinstance(obj, dict) or key not in obj:
        raise MissingField(f"{path}{key}")
    return obj[key]


def parse_descriptor(text) -> XAppDescriptor:
    doc = _loads(text)
    if not isinstance(doc, dict):
        raise MalformedJson("descriptor must be a JSON object")
    name = _req(doc, "name", "")
    version = _req(doc, "version", "")
    containers = []
    for i, c in enumerate(_req(doc, "containers", "")):
        p = f"containers[{i}]."
        img = _req(c, "image", p)
        containers.append(
            ContainerSpec(
                name=_req(c, "name", p),
                image=ImageRef(_req(img, "registry", p + "image."), _req(img, "name", p + "image."), _req(img, "tag", p + "image.")),
                resources=copy.deepcopy(c.get("resources")),
            )
        )
    rmr = None
    if "rmr" in doc:
        r = doc["rmr"] or {}
        rmr = RmrConfig(
            txMessages=list(r.get("txMessages", [])),
            rxMessages=list(r.get("rxMessages", [])),
            protPort=r.get("protPort", "tcp:4560"),
            maxSize=r.get("maxSize", 2072),
            numWorkers=r.get("numWorkers", 1),
            policies=list(r.get("policies", [])),
        )
    raw_ports = (doc.get("messaging") or {}).get("ports")
    if raw_ports is None:
        raw_ports = doc.get("ports", [])
    ports = []
    for i, pt in enumerate(raw_ports):
        p = f"messaging.ports[{i}]."
        ports.append(
            PortSpec(
                name=_req(pt, "name", p),
                container=_req(pt, "container", p),
                port=_req(pt, "port", p),
                description=pt.get("description", ""),
                rxMessages=pt.get("rxMessages"),
                txMessages=pt.get("txMessages"),
                policies=pt.get("policies"),
            )
        )
    extras = {k: v for k, v in doc.items() if k not in _KNOWN_TOP}
    messaging_extra = {k: v for k, v in (doc.get("messaging") or {}).items() if k != "ports"}
    if messaging_extra:
        extras["messaging"] = messaging_extra
    return XAppDescriptor(
        name=name,
        version=version,
        vendor=doc.get("vendor", ""),
        containers=containers,
        rmr=rmr,
        messaging_ports=ports,
        controls=copy.deepcopy(doc.get("controls") or {}),
        extras=extras,
    )


def emit_descriptor(d: XAppDescriptor) -> dict:
    out: dict[str, Any] = {"name": d.name, "version": d.version}
    if d.vendor:
        out["vendor"] = d.vendor
    out["containers"] = []
    for c in d.containers:
        item = {"name": c.name, "image": {"registry": c.image.registry, "name": c.image.name, "tag": c.image.tag}}
        if c.resources is not None:
            item["resources"] = copy.deepcopy(c.resources)
        out["containers"].append(item)
    if d.rmr is not None:
        out["rmr"] = {
            "txMessages": list(d.rmr.txMessages),
            "rxMessages": list(d.rmr.rxMessages),
            "protPort": d.rmr.protPort,
            "maxSize": d.rmr.maxSize,
            "numWorkers": d.rmr.numWorkers,
            "policies": list(d.rmr.policies),
        }
    ports = []
    for p in d.messaging_ports:
        item = {"name": p.name, "container": p.container, "port": p.port}
        for opt in ("rxMessages", "txMessages", "policies"):
            if getattr(p, opt) is not None:
                item[opt] = list(getattr(p, opt))
        item["description"] = p.description
        ports.append(item)
    extras = copy.deepcopy(d.extras)
    out["messaging"] = {**extras.pop("messaging", {}), "ports": ports}
    out["controls"] = copy.deepcopy(d.controls)
    out.update(extras)
    return out


def parse_schema(text) -> ControlsSchema:
    doc = _loads(text)
    if not isinstance(doc, dict):
        raise MalformedJson("schema must be a JSON object")
    # a whole-descriptor schema nests the controls schema under properties.controls
    props = doc.get("properties") or {}
    if doc.get("$id") != "#/controls" and isinstance(props.get("controls"), dict) and "properties" in props["controls"]:
        doc = props["controls"]
        props = doc.get("properties") or {}
    parsed = {}
    for key, spec in props.items():
        spec = spec or {}
        parsed[key] = PropertySpec(
            type=spec.get("type"),
            id=spec.get("$id"),
            default=spec.get("default"),
            title=spec.get("title"),
            examples=spec.get("examples"),
        )
    return ControlsSchema(required=list(doc.get("required", [])), properties=parsed)


_TYPE_CHECKS: dict[str, Callable[[Any], bool]] = {
    "string": lambda v: isinstance(v, str),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "array": lambda v: isinstance(v, list),
    "object": lambda v: isinstance(v, dict),
    "null": lambda v: v is None,
}


def validate(d: XAppDescriptor, schema: Optional[ControlsSchema] = None, registry=None) -> list[str]:
    """Return the list of violations (empty means valid). Never raises on content."""
    v: list[str] = []
    if not d.name:
        v.append("name must be non-empty")
    if not d.version:
        v.append("version must be non-empty")
    elif not SEMVER.match(str(d.version)):
        v.append(f"version {d.version!r} is not of the form X.Y.Z")
    if not d.containers:
        v.append("at least one container is required")
    seen = set()
    for c in d.containers:
        if not c.name:
            v.append("container name must be non-empty")
        if c.name in seen:
            v.append(f"duplicate container name {c.name!r}")
        seen.add(c.name)
        for part in ("registry", "name", "tag"):
            if not getattr(c.image, part):
                v.append(f"container {c.name!r}: image {part} must be non-empty")

    if d.rmr is not None:
        r = d.rmr
        if not isinstance(r.maxSize, int) or r.maxSize <= 0:
            v.append("rmr.maxSize must be a positive integer")
        if not isinstance(r.numWorkers, int) or r.numWorkers < 1:
            v.append("rmr.numWorkers must be >= 1")
        if r.port is None:
            v.append(f"rmr.protPort {r.protPort!r} is not of the form tcp:<port>")
        if registry is not None:
            for listname in ("txMessages", "rxMessages"):
                for mt in getattr(r, listname):
                    if mt not in registry:
                        v.append(f"rmr.{listname}: unknown mtype {mt!r}")
        for pid in r.policies:
            if not isinstance(pid, int) or isinstance(pid, bool):
                v.append(f"rmr.policies: policy type id {pid!r} is not an integer")

    pairs = set()
    for p in d.messaging_ports:
        if p.container not in seen:
            v.append(f"port {p.name!r} references unknown container {p.container!r}")
        if not isinstance(p.port, int) or not 0 < p.port < 65536:
            v.append(f"port {p.name!r}: invalid port number {p.port!r}")
        if (p.container, p.port) in pairs:
            v.append(f"port {p.port} opened twice on container {p.container!r}")
        pairs.add((p.container, p.port))

    if d.controls and schema is None:
        v.append("controls present without schema")
    if schema is not None:
        for key in schema.required:
            if key not in schema.properties:
                v.append(f"schema: required control {key!r} has no property definition")
            if key not in d.controls:
                v.append(f"controls: missing required parameter {key!r}")
        for key, prop in schema.properties.items():
            if key in d.controls and prop.type:
                types = prop.type if isinstance(prop.type, list) else [prop.type]
                checks = [_TYPE_CHECKS.get(t) for t in types]
                if any(c is None for c in checks):
                    v.append(f"schema: unsupported type {prop.type!r} for {key!r}")
                elif not any(c(d.controls[key]) for c in checks):
                    v.append(f"controls.{key}: expected {prop.type}, got {type(d.controls[key]).__name__}")
    return v


def _get_path(doc, path: str):
    cur = doc
    for part in path.split("."):
        if isinstance(cur, list):
            cur = cur[int(part)]
        else:
            cur = cur[part]
    return cur


class ConfigView:
    """Live view of an instance's effective configuration (the ConfigMap).

    Subscribers are called once per edit with a copy of the post-edit
    content. ``dispatch`` decides where they run; the app manager passes
    the instance's loop so handlers never run re-entrantly.
    """

    def __init__(self, content: dict, dispatch: Optional[Callable[[Callable[[], None]], Any]] = None, on_write=None):
        self._content = copy.deepcopy(content)
        self._subscribers: list[Callable[[dict], None]] = []
        self._dispatch = dispatch or (lambda fn: fn())
        self._on_write = on_write
        self._lock = threading.Lock()
        self.edits = 0

    @property
    def content(self) -> dict:
        with self._lock:
            return copy.deepcopy(self._content)

    def get(self, path: str, default=None):
        with self._lock:
            try:
                return copy.deepcopy(_get_path(self._content, path))
            except (KeyError, IndexError, ValueError, TypeError):
                return default

    def subscribe(self, handler: Callable[[dict], None]) -> Callable[[], None]:
        self._subscribers.append(handler)
        return lambda: self._subscribers.remove(handler)

    def set(self, path: str, value) -> None:
        with self._lock:
            parts = path.split(".")
            cur = self._content
            for part in parts[:-1]:
                cur = cur.setdefault(part, {})
            cur[parts[-1]] = copy.deepcopy(value)
        self._changed()

    def replace(self, content: dict) -> None:
        with self._lock:
            self._content = copy.deepcopy(content)
        self._changed()

    def _changed(self) -> None:
        self.edits += 1
        snapshot = self.content
        if self._on_write is not None:
            self._on_write(snapshot)
        for handler in list(self._subscribers):
            self._dispatch(lambda h=handler, s=snapshot: h(copy.deepcopy(s)))


def config_view(descriptor: XAppDescriptor, dispatch=None) -> ConfigView:
    return ConfigView(emit_descriptor(descriptor), dispatch)
