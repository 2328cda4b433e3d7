"""Shared Data Layer and the R-NIB built on top of it."""

from __future__ import annotations

import base64
import json
import threading
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import NotFound, SdlUnavailable

RNIB_NAMESPACE = "e2Manager"
_NODE_PREFIX = "RAN:"


def _as_bytes(value) -> bytes:
    if isinstance(value, str):
        return value.encode("utf-8")
    if isinstance(value, (bytes, bytearray)):
        return bytes(value)
    raise TypeError("SDL values are bytes or str")


class SdlStore:
    """Namespaced in-memory key-value store.

    Every mutation of a namespace happens under that namespace's lock, so
    the conditional operations are atomic. With ``persist_path`` each
    mutation is appended as a JSON line and replayed on construction.
    ``enabled`` exists for fault injection: when False every call raises
    :class:`SdlUnavailable`.
    """

    def __init__(self, persist_path=None):
        self._data: dict[str, dict[str, bytes]] = defaultdict(dict)
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._meta = threading.Lock()
        self.enabled = True
        self._persist = Path(persist_path) if persist_path else None
        if self._persist is not None and self._persist.exists():
            self._replay()

    # -- plumbing --------------------------------------------------------

    def _lock(self, ns: str) -> threading.Lock:
        with self._meta:
            return self._locks[ns]

    def _check(self) -> None:
        if not self.enabled:
            raise SdlUnavailable("SDL backend is not reachable")

    def _log(self, op: str, ns: str, key: str, value: Optional[bytes] = None) -> None:
        if self._persist is None:
            return
        rec = {"op": op, "ns": ns, "key": key}
        if value is not None:
            rec["value"] = base64.b64encode(value).decode("ascii")
        with self._persist.open("a") as fh:
            fh.write(json.dumps(rec) + "\n")

    def _replay(self) -> None:
        for line in self._persist.read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["op"] == "set":
                self._data[rec["ns"]][rec["key"]] = base64.b64decode(rec["value"])
            else:
                self._data[rec["ns"]].pop(rec["key"], None)

    def _put(self, ns: str, key: str, value: bytes) -> None:
        self._data[ns][key] = value
        self._log("set", ns, key, value)

    def _drop(self, ns: str, key: str) -> None:
        del self._data[ns][key]
        self._log("del", ns, key)

    # -- API ---------------------------------------------------------------

    def get(self, ns: str, key: str) -> Optional[bytes]:
        self._check()
        with self._lock(ns):
            return self._data.get(ns, {}).get(key)

    def set(self, ns: str, key: str, value) -> None:
        self._check()
        value = _as_bytes(value)
        with self._lock(ns):
            self._put(ns, key, value)

    def delete(self, ns: str, key: str) -> None:
        self._check()
        with self._lock(ns):
            if key in self._data.get(ns, {}):
                self._drop(ns, key)

    def set_if_not_exists(self, ns: str, key: str, value) -> bool:
        self._check()
        value = _as_bytes(value)
        with self._lock(ns):
            if key in self._data[ns]:
                return False
            self._put(ns, key, value)
            return True

    def set_if(self, ns: str, key: str, old, new) -> bool:
        self._check()
        old, new = _as_bytes(old), _as_bytes(new)
        with self._lock(ns):
            if self._data[ns].get(key) != old:
                return False
            self._put(ns, key, new)
            return True

    def delete_if(self, ns: str, key: str, value) -> bool:
        self._check()
        value = _as_bytes(value)
        with self._lock(ns):
            if self._data[ns].get(key) != value:
                return False
            self._drop(ns, key)
            return True

    def find_keys(self, ns: str, prefix: str = "") -> list[str]:
        self._check()
        with self._lock(ns):
            return sorted(k for k in self._data.get(ns, {}) if k.startswith(prefix))

    def find_and_get(self, ns: str, prefix: str = "") -> dict[str, bytes]:
        self._check()
        with self._lock(ns):
            items = self._data.get(ns, {})
            return {k: items[k] for k in sorted(items) if k.startswith(prefix)}

    def namespaces(self) -> list[str]:
        return sorted(ns for ns, items in self._data.items() if items)

    def healthcheck(self) -> bool:
        try:
            self.get("__health__", "probe")
        except SdlUnavailable:
            return False
        return True


def encode_value(value) -> bytes:
    return json.dumps(value, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_value(raw: Optional[bytes]):
    return None if raw is None else json.loads(raw)


class SdlClient:
    """JSON-valued access to the store with ``(namespace, key, ...)`` argument order."""

    def __init__(self, store: SdlStore):
        self.store = store

    def get(self, ns: str, key: str):
        return decode_value(self.store.get(ns, key))

    def set(self, ns: str, key: str, value) -> None:
        self.store.set(ns, key, encode_value(value))

    def delete(self, ns: str, key: str) -> None:
        self.store.delete(ns, key)

    def set_if_not_exists(self, ns: str, key: str, value) -> bool:
        return self.store.set_if_not_exists(ns, key, encode_value(value))

    def set_if(self, ns: str, key: str, old, new) -> bool:
        return self.store.set_if(ns, key, encode_value(old), encode_value(new))

    def delete_if(self, ns: str, key: str, value) -> bool:
        return self.store.delete_if(ns, key, encode_value(value))

    def find_keys(self, ns: str, prefix: str = "") -> list[str]:
        return self.store.find_keys(ns, prefix)

    def find_and_get(self, ns: str, prefix: str = "") -> dict:
        return {k: decode_value(v) for k, v in self.store.find_and_get(ns, prefix).items()}

    def healthcheck(self) -> bool:
        return self.store.healthcheck()


# -- R-NIB ----------------------------------------------------------------


@dataclass
class RanFunction:
    ran_function_id: int
    oid: str
    definition: bytes = b""


@dataclass
class NodebInfo:
    inventory_name: str
    node_type: str
    plmn_id: str
    nodeb_id: str
    connection_status: str = "connected"
    ran_functions: list[RanFunction] = field(default_factory=list)

    def __post_init__(self):
        if self.node_type not in ("gnb", "enb"):
            raise ValueError(f"node_type must be gnb or enb, got {self.node_type!r}")
        if self.connection_status not in ("connected", "disconnected"):
            raise ValueError(f"bad connection status {self.connection_status!r}")
        ids = [f.ran_function_id for f in self.ran_functions]
        if len(ids) != len(set(ids)):
            raise ValueError("RAN function ids must be unique per node")

    def to_json(self) -> dict:
        d = asdict(self)
        d["ran_functions"] = [
            {"ran_function_id": f.ran_function_id, "oid": f.oid, "definition": base64.b64encode(f.definition).decode("ascii")}
            for f in self.ran_functions
        ]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "NodebInfo":
        d = dict(d)
        d["ran_functions"] = [
            RanFunction(f["ran_function_id"], f["oid"], base64.b64decode(f["definition"])) for f in d.get("ran_functions", [])
        ]
        return cls(**d)


class Rnib:
    """Inventory of E2 nodes, persisted in the SDL under its own namespace."""

    def __init__(self, store: SdlStore, namespace: str = RNIB_NAMESPACE):
        self.store = store
        self.ns = namespace

    def put_nodeb(self, info: NodebInfo) -> None:
        self.store.set(self.ns, _NODE_PREFIX + info.inventory_name, json.dumps(info.to_json(), sort_keys=True))

    def list(self, kind: str = "all") -> list[str]:
        if kind not in ("all", "gnb", "enb"):
            raise ValueError(f"kind must be all, gnb or enb, got {kind!r}")
        names = []
        for key, raw in self.store.find_and_get(self.ns, _NODE_PREFIX).items():
            if kind == "all" or json.loads(raw)["node_type"] == kind:
                names.append(key[len(_NODE_PREFIX):])
        return names

    def list_gnb(self) -> list[str]:
        return self.list("gnb")

    def list_enb(self) -> list[str]:
        return self.list("enb")

    def get_nodeb(self, inventory_name: str) -> NodebInfo:
        raw = self.store.get(self.ns, _NODE_PREFIX + inventory_name)
        if raw is None:
            raise NotFound(f"no such E2 node: {inventory_name}")
        return NodebInfo.from_json(json.loads(raw))

    def has(self, inventory_name: str) -> bool:
        return self.store.get(self.ns, _NODE_PREFIX + inventory_name) is not None

    def get_ran_function(self, inventory_name: str, oid: str) -> bytes:
        for fn in self.get_nodeb(inventory_name).ran_functions:
            if fn.oid == oid:
                return fn.definition
        raise NotFound(f"node {inventory_name} has no RAN function with OID {oid}")

    def set_status(self, inventory_name: str, status: str) -> None:
        info = self.get_nodeb(inventory_name)
        info.connection_status = status
        self.put_nodeb(info)

    def remove(self, inventory_name: str) -> None:
        self.store.delete(self.ns, _NODE_PREFIX + inventory_name)

    def nodes(self, kind: str = "all") -> Iterable[NodebInfo]:
        return [self.get_nodeb(n) for n in self.list(kind)]
