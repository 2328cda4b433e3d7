"""RMR routing tables in the ``newrt`` text format.

Grammar::

    newrt|start[|name]
    mse|<mtype>[,<sender>]|<subid>|<groups>
    rte|<mtype>[,<sender>]|<groups>
    newrt|end[|count]

``<groups>`` is a ``;``-separated list of endpoint groups (fanout), each
group a ``,``-separated list of endpoints (round robin). The special target
``%meid`` routes to whichever endpoint owns the message's managed entity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .errors import (
    CountMismatch,
    MalformedEntry,
    MissingFooter,
    MissingHeader,
    NoRoute,
    UnresolvedMeid,
)
from .messages import NO_SUBID


class _MeidRoute:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MEID_ROUTE"

    def __reduce__(self):
        return (_MeidRoute, ())


MEID_ROUTE = _MeidRoute()
MEID_TOKEN = "%meid"


class RteDeprecationWarning(DeprecationWarning):
    pass


@dataclass(eq=False)
class EndpointGroup:
    """Round-robin group. Equality ignores the cursor."""

    members: tuple[str, ...]
    cursor: int = 0

    def __post_init__(self):
        self.members = tuple(self.members)
        if not self.members:
            raise ValueError("endpoint group must not be empty")
        if not 0 <= self.cursor < len(self.members):
            raise ValueError("cursor out of range")

    def select(self) -> str:
        chosen = self.members[self.cursor]
        self.cursor = (self.cursor + 1) % len(self.members)
        return chosen

    def __eq__(self, other) -> bool:
        return isinstance(other, EndpointGroup) and self.members == other.members

    def __hash__(self) -> int:
        return hash(self.members)

    def copy(self) -> "EndpointGroup":
        return EndpointGroup(self.members, self.cursor)


Target = Union[_MeidRoute, tuple]


@dataclass(frozen=True)
class RouteEntry:
    kind: str
    mtype: int
    subid: int = NO_SUBID
    target: Target = ()
    sender: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("mse", "rte"):
            raise ValueError(f"unknown entry kind {self.kind!r}")
        if self.kind == "rte" and self.subid != NO_SUBID:
            raise ValueError("rte entries carry no subid")
        if self.target is not MEID_ROUTE:
            object.__setattr__(self, "target", tuple(self.target))
            if not self.target:
                raise ValueError("route entry needs at least one endpoint group")

    @property
    def key(self) -> tuple:
        return (self.mtype, self.sender, self.subid)

    @property
    def groups(self) -> tuple[EndpointGroup, ...]:
        return () if self.target is MEID_ROUTE else self.target

    def endpoints(self) -> set[str]:
        return {m for g in self.groups for m in g.members}

    def to_line(self) -> str:
        head = str(self.mtype) if self.sender is None else f"{self.mtype},{self.sender}"
        tgt = MEID_TOKEN if self.target is MEID_ROUTE else ";".join(",".join(g.members) for g in self.groups)
        if self.kind == "rte":
            return f"rte|{head}|{tgt}"
        return f"mse|{head}|{self.subid}|{tgt}"


def mse(mtype: int, subid: int, *groups, sender: Optional[str] = None) -> RouteEntry:
    """Convenience constructor: ``mse(30001, -1, ["A"], ["B1", "B2"])``."""
    if len(groups) == 1 and groups[0] is MEID_ROUTE:
        return RouteEntry("mse", mtype, subid, MEID_ROUTE, sender)
    built = tuple(g if isinstance(g, EndpointGroup) else EndpointGroup(tuple([g] if isinstance(g, str) else g)) for g in groups)
    return RouteEntry("mse", mtype, subid, built, sender)


@dataclass
class RoutingTable:
    entries: list[RouteEntry] = field(default_factory=list)
    name: Optional[str] = None
    declared_count: Optional[int] = None

    def __post_init__(self):
        self.entries = list(self.entries)
        if self.declared_count is not None and self.declared_count != len(self.entries):
            raise CountMismatch(f"declared {self.declared_count} entries, found {len(self.entries)}")

    def __eq__(self, other) -> bool:
        # structural: name + entries; declared_count is derived on output
        return isinstance(other, RoutingTable) and self.name == other.name and self.entries == other.entries

    def __len__(self) -> int:
        return len(self.entries)

    def find(self, mtype: int, subid: int, sender: Optional[str] = None) -> Optional[RouteEntry]:
        for e in self.entries:
            if e.mtype == mtype and e.subid == subid and e.sender == sender:
                return e
        return None

    def endpoints(self) -> set[str]:
        out: set[str] = set()
        for e in self.entries:
            out |= e.endpoints()
        return out

    def copy(self) -> "RoutingTable":
        """Deep copy: cursors are duplicated, not shared."""
        entries = [
            e if e.target is MEID_ROUTE else RouteEntry(e.kind, e.mtype, e.subid, tuple(g.copy() for g in e.groups), e.sender)
            for e in self.entries
        ]
        return RoutingTable(entries, self.name)


def _parse_mtype(tok: str, line_no: int, line: str, registry) -> int:
    tok = tok.strip()
    if tok.lstrip("-").isdigit():
        return int(tok)
    if registry is not None and tok in registry:
        return registry.lookup(tok)
    raise MalformedEntry(line_no, line, f"bad mtype {tok!r}")


def _parse_target(tok: str, line_no: int, line: str) -> Target:
    tok = tok.strip()
    if tok == MEID_TOKEN:
        return MEID_ROUTE
    groups = []
    for g in tok.split(";"):
        members = tuple(m.strip() for m in g.split(",") if m.strip())
        if not members:
            raise MalformedEntry(line_no, line, "empty endpoint group")
        if MEID_TOKEN in members:
            raise MalformedEntry(line_no, line, "%meid cannot be mixed with endpoints")
        groups.append(EndpointGroup(members))
    return tuple(groups)


def parse_route_table(text: str, registry=None) -> RoutingTable:
    """Parse newrt text. ``registry`` lets symbolic mtypes resolve to codes."""
    lines = [(i, raw.strip()) for i, raw in enumerate(text.splitlines(), start=1)]
    lines = [(i, ln) for i, ln in lines if ln]
    if not lines or not lines[0][1].startswith("newrt|start"):
        raise MissingHeader("table must begin with newrt|start")
    header = lines[0][1].split("|")
    if header[:2] != ["newrt", "start"] or len(header) > 3:
        raise MissingHeader(f"bad header {lines[0][1]!r}")
    name = header[2].strip() if len(header) == 3 and header[2].strip() else None

    entries: list[RouteEntry] = []
    declared = None
    saw_footer = False
    for line_no, line in lines[1:]:
        if saw_footer:
            raise MalformedEntry(line_no, line, "content after newrt|end")
        fields = [f.strip() for f in line.split("|")]
        rec = fields[0]
        if rec == "newrt":
            if len(fields) < 2 or fields[1] != "end" or len(fields) > 3:
                raise MalformedEntry(line_no, line, "bad footer")
            if len(fields) == 3 and fields[2]:
                if not fields[2].isdigit():
                    raise MalformedEntry(line_no, line, "footer count must be an integer")
                declared = int(fields[2])
            saw_footer = True
            continue
        if rec == "mse":
            if len(fields) != 4:
                raise MalformedEntry(line_no, line, "mse needs 4 fields")
            head, subid_tok, target_tok = fields[1], fields[2], fields[3]
            if not subid_tok.lstrip("-").isdigit():
                raise MalformedEntry(line_no, line, f"bad subid {subid_tok!r}")
            subid = int(subid_tok)
            if subid < NO_SUBID:
                raise MalformedEntry(line_no, line, "subid must be >= -1")
        elif rec == "rte":
            if len(fields) != 3:
                raise MalformedEntry(line_no, line, "rte needs 3 fields")
            head, subid, target_tok = fields[1], NO_SUBID, fields[2]
            warnings.warn(f"line {line_no}: rte entries are deprecated, use mse", RteDeprecationWarning, stacklevel=2)
        else:
            raise MalformedEntry(line_no, line, f"unknown record type {rec!r}")
        mtype_tok, _, sender = head.partition(",")
        mtype = _parse_mtype(mtype_tok, line_no, line, registry)
        sender = sender.strip() or None
        entries.append(RouteEntry(rec, mtype, subid, _parse_target(target_tok, line_no, line), sender))

    if not saw_footer:
        raise MissingFooter("table must end with newrt|end")
    if declared is not None and declared != len(entries):
        raise CountMismatch(f"footer declares {declared} entries, table has {len(entries)}")
    return RoutingTable(entries, name)


def serialize_route_table(table: RoutingTable) -> str:
    head = "newrt|start" if table.name is None else f"newrt|start|{table.name}"
    body = [e.to_line() for e in table.entries]
    return "\n".join([head, *body, f"newrt|end|{len(table.entries)}"])


def load_route_table(path, registry=None) -> RoutingTable:
    return parse_route_table(Path(path).read_text(), registry)


def resolve(
    table: RoutingTable,
    mtype: int,
    subid: int = NO_SUBID,
    meid: Optional[str] = None,
    ownership: Optional[Mapping[str, str]] = None,
    sender: Optional[str] = None,
) -> list[str]:
    """Delivery plan for a message key: one endpoint per group, in group order.

    Lookup is exact (mtype, subid) first, then (mtype, -1). Within a key an
    entry qualified with the message's sender beats an unqualified one.
    """
    entry = None
    for want_subid in (subid, NO_SUBID) if subid != NO_SUBID else (NO_SUBID,):
        qualified = unqualified = None
        for e in table.entries:
            if e.mtype != mtype or e.subid != want_subid:
                continue
            if e.sender is None:
                unqualified = unqualified or e
            elif e.sender == sender:
                qualified = qualified or e
        entry = qualified or unqualified
        if entry is not None:
            break
    if entry is None:
        raise NoRoute(mtype)
    if entry.target is MEID_ROUTE:
        owner = (ownership or {}).get(meid) if meid else None
        if owner is None:
            raise UnresolvedMeid(f"no owner for meid {meid!r}")
        return [owner]
    return [g.select() for g in entry.groups]


def merge_dynamic_update(base: RoutingTable, update: RoutingTable) -> RoutingTable:
    """Overlay ``update`` on ``base``: same (mtype, sender, subid) replaces, new keys append."""
    by_key = {e.key: e for e in update.entries}
    merged = []
    for e in base.entries:
        merged.append(by_key.pop(e.key, e))
    merged.extend(e for e in update.entries if e.key in by_key)
    return RoutingTable(merged, base.name if base.name is not None else update.name)


def runtime_additions(base: RoutingTable, merged: RoutingTable) -> RoutingTable:
    """Entries of ``merged`` that were not already present verbatim in ``base``."""
    return RoutingTable([e for e in merged.entries if e not in base.entries], merged.name)


def write_stash(seed_path, base: RoutingTable, merged: RoutingTable) -> Path:
    """Write runtime additions next to the static table as ``<table>.stash``."""
    path = Path(str(seed_path) + ".stash")
    path.write_text(serialize_route_table(runtime_additions(base, merged)) + "\n")
    return path


def add_subscription_entries(table: RoutingTable, mtypes: Iterable[int], subid: int, endpoint) -> RoutingTable:
    """Route each mtype under ``subid`` to ``endpoint``.

    An existing entry for the key gains the endpoint as an extra fanout group
    (merged subscriptions); otherwise a new ``mse`` entry is appended.
    ``endpoint`` may be ``MEID_ROUTE``.
    """
    if subid <= 0:
        raise ValueError("subscription ids are positive")
    entries = list(table.entries)
    for mtype in mtypes:
        idx = next((i for i, e in enumerate(entries) if e.key == (mtype, None, subid)), None)
        if endpoint is MEID_ROUTE:
            new = RouteEntry("mse", mtype, subid, MEID_ROUTE)
            if idx is None:
                entries.append(new)
            else:
                entries[idx] = new
            continue
        if idx is None:
            entries.append(RouteEntry("mse", mtype, subid, (EndpointGroup((endpoint,)),)))
            continue
        cur = entries[idx]
        if cur.target is MEID_ROUTE:
            entries[idx] = RouteEntry("mse", mtype, subid, (EndpointGroup((endpoint,)),))
        elif endpoint not in cur.endpoints():
            entries[idx] = RouteEntry("mse", mtype, subid, cur.groups + (EndpointGroup((endpoint,)),))
    return RoutingTable(entries, table.name)


def _without_endpoint(entry: RouteEntry, endpoint: str) -> Optional[RouteEntry]:
    if entry.target is MEID_ROUTE or endpoint not in entry.endpoints():
        return entry
    groups = []
    for g in entry.groups:
        members = tuple(m for m in g.members if m != endpoint)
        if members:
            groups.append(EndpointGroup(members, min(g.cursor, len(members) - 1)))
    if not groups:
        return None
    return RouteEntry(entry.kind, entry.mtype, entry.subid, tuple(groups), entry.sender)


def remove_subid(table: RoutingTable, subid: int, endpoint: Optional[str] = None) -> RoutingTable:
    """Drop ``endpoint`` from entries under ``subid`` (all entries if no endpoint).

    Entries left without subscribers disappear. Unknown subids are a no-op.
    """
    entries = []
    for e in table.entries:
        if e.subid != subid or subid == NO_SUBID:
            entries.append(e)
            continue
        if endpoint is None:
            continue
        kept = _without_endpoint(e, endpoint)
        if kept is not None:
            entries.append(kept)
    return RoutingTable(entries, table.name)


def remove_endpoint(table: RoutingTable, endpoint: str) -> RoutingTable:
    """Purge every reference to ``endpoint``."""
    entries = []
    for e in table.entries:
        if e.sender == endpoint:
            continue
        kept = _without_endpoint(e, endpoint)
        if kept is not None:
            entries.append(kept)
    return RoutingTable(entries, table.name)


def inherit_cursors(new: RoutingTable, old: Optional[RoutingTable]) -> RoutingTable:
    """Carry round-robin positions over for entries unchanged between snapshots."""
    if old is None:
        return new
    previous = {e.key: e for e in old.entries}
    for e in new.entries:
        prev = previous.get(e.key)
        if prev is None or prev.target is MEID_ROUTE or e.target is MEID_ROUTE:
            continue
        if prev.groups == e.groups:
            for g, pg in zip(e.groups, prev.groups):
                g.cursor = pg.cursor
    return new


def table_lines(table: RoutingTable) -> list[str]:
    return [e.to_line() for e in table.entries]
