"""In-process RMR fabric and RtMgr.

The bus owns the master routing table, the meid ownership map and every
endpoint's mailbox. Each registered endpoint holds its own snapshot of the
routing table (its static seed table merged with the master table); sends
resolve against the sender's snapshot, just as RMR routes on the client
side. Distribution is synchronous, so all snapshots agree with the master
table as soon as a register/deregister call returns.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .clock import SimClock
from .errors import (
    DuplicateEndpoint,
    NameDoesNotResolve,
    QueueFull,
)
from .messages import (
    RIC_HEALTH_CHECK_REQ,
    RIC_HEALTH_CHECK_RESP,
    Message,
    MessageTypeRegistry,
)
from .routes import (
    RoutingTable,
    inherit_cursors,
    merge_dynamic_update,
    remove_endpoint,
    resolve,
    table_lines,
    write_stash,
)

log = logging.getLogger(__name__)

RTMGR_ENDPOINT = "service-ricplt-rtmgr-rmr.ricplt"
DEFAULT_QUEUE_SIZE = 1024
DEFAULT_PROBE_TIMEOUT = 1000
DEBUG_DUMP_VERSION = 1

ERRNO_NO_ENDPOINT = 2
ERRNO_QUEUE_FULL = 105


def rmr_endpoint_name(app: str, namespace: str = "ricxapp") -> str:
    return f"service-{namespace}-{app}-rmr.{namespace}"


def http_endpoint_name(app: str, namespace: str = "ricxapp") -> str:
    return f"service-{namespace}-{app}-http.{namespace}"


class Mailbox:
    """Bounded FIFO with a single consumer. Overflow drops the newest message."""

    def __init__(self, maxsize: int = DEFAULT_QUEUE_SIZE):
        self.maxsize = maxsize
        self._q: deque[Message] = deque()
        self._lock = threading.Lock()
        self.listener: Optional[Callable[["Mailbox"], None]] = None
        self.dropped = 0

    def put(self, msg: Message) -> bool:
        with self._lock:
            if len(self._q) >= self.maxsize:
                self.dropped += 1
                return False
            self._q.append(msg)
        if self.listener is not None:
            self.listener(self)
        return True

    def get(self) -> Optional[Message]:
        with self._lock:
            return self._q.popleft() if self._q else None

    def drain(self) -> list[Message]:
        with self._lock:
            out = list(self._q)
            self._q.clear()
        return out

    def peek_all(self) -> list[Message]:
        with self._lock:
            return list(self._q)

    def __len__(self) -> int:
        return len(self._q)


@dataclass
class Delivery:
    endpoint: str
    ok: bool
    error: Optional[str] = None
    errno: int = 0


@dataclass
class DeliveryReceipt:
    message: Message
    deliveries: list[Delivery] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return bool(self.deliveries) and all(d.ok for d in self.deliveries)

    @property
    def delivered(self) -> list[str]:
        return [d.endpoint for d in self.deliveries if d.ok]

    @property
    def failures(self) -> list[Delivery]:
        return [d for d in self.deliveries if not d.ok]


@dataclass
class _Endpoint:
    name: str
    mailbox: Mailbox
    seed: Optional[RoutingTable] = None
    seed_path: Optional[Path] = None
    snapshot: Optional[RoutingTable] = None


class MessageBus:
    def __init__(self, registry: MessageTypeRegistry, clock: Optional[SimClock] = None, queue_size: int = DEFAULT_QUEUE_SIZE):
        self.registry = registry
        self.clock = clock or SimClock()
        self.queue_size = queue_size
        self.master = RoutingTable(name="rtmgr")
        self.ownership: dict[str, str] = {}
        self._endpoints: dict[str, _Endpoint] = {}
        self._seq = itertools.count(1)
        self._lock = threading.RLock()
        self.register_listeners: list[Callable[[str], None]] = []
        self.rtmgr_mailbox = self.register_endpoint(RTMGR_ENDPOINT)

    # -- endpoint registry -------------------------------------------------

    def register_endpoint(
        self,
        name: str,
        mailbox: Optional[Mailbox] = None,
        seed: Optional[RoutingTable] = None,
        seed_path=None,
    ) -> Mailbox:
        with self._lock:
            if name in self._endpoints:
                raise DuplicateEndpoint(f"endpoint already registered: {name}")
            mailbox = mailbox or Mailbox(self.queue_size)
            self._endpoints[name] = _Endpoint(name, mailbox, seed, Path(seed_path) if seed_path else None)
            self._distribute()
        for cb in list(self.register_listeners):
            cb(name)
        return mailbox

    def deregister_endpoint(self, name: str, purge: bool = True) -> None:
        """Remove an endpoint. With ``purge`` every route naming it goes too."""
        with self._lock:
            self._endpoints.pop(name, None)
            if purge:
                self.master = remove_endpoint(self.master, name)
                for meid in [m for m, owner in self.ownership.items() if owner == name]:
                    del self.ownership[meid]
            self._distribute()

    def is_registered(self, name: str) -> bool:
        return name in self._endpoints

    @property
    def endpoint_names(self) -> list[str]:
        return sorted(self._endpoints)

    def mailbox(self, name: str) -> Mailbox:
        try:
            return self._endpoints[name].mailbox
        except KeyError:
            raise NameDoesNotResolve(name) from None

    def snapshot(self, name: str) -> RoutingTable:
        return self._endpoints[name].snapshot

    # -- RtMgr: master table maintenance ----------------------------------

    def update_routes(self, fn: Callable[[RoutingTable], RoutingTable]) -> None:
        """Swap in ``fn(master)`` and redistribute."""
        with self._lock:
            self.master = fn(self.master)
            self._distribute()

    def add_routes(self, table: RoutingTable) -> None:
        self.update_routes(lambda m: merge_dynamic_update(m, table))

    def set_owner(self, meid: str, endpoint: str) -> None:
        with self._lock:
            self.ownership[meid] = endpoint

    def clear_owner(self, meid: str) -> None:
        with self._lock:
            self.ownership.pop(meid, None)

    def _distribute(self) -> None:
        for ep in self._endpoints.values():
            fresh = merge_dynamic_update(ep.seed, self.master) if ep.seed is not None else self.master
            fresh = inherit_cursors(fresh.copy(), ep.snapshot)
            ep.snapshot = fresh
            if ep.seed_path is not None and ep.seed is not None:
                try:
                    write_stash(ep.seed_path, ep.seed, fresh)
                except OSError as exc:
                    log.warning("could not write stash for %s: %s", ep.name, exc)

    def converged(self) -> bool:
        """True when every endpoint without a seed table mirrors the master table."""
        return all(
            ep.snapshot == (merge_dynamic_update(ep.seed, self.master) if ep.seed is not None else self.master)
            for ep in self._endpoints.values()
        )

    # -- delivery ----------------------------------------------------------

    def next_transaction_id(self) -> int:
        return next(self._seq)

    def send(self, msg: Message) -> DeliveryReceipt:
        """Route and enqueue one copy per selected endpoint.

        Raises NoRoute / UnresolvedMeid when the table has no answer; an
        absent or full destination is reported per delivery in the receipt.
        """
        with self._lock:
            if msg.transaction_id is None:
                msg = msg.with_fields(transaction_id=self.next_transaction_id())
            msg = msg.with_fields(sent_at=self.clock.now)
            if msg.destination is not None:
                plan = [msg.destination]
            else:
                sender = self._endpoints.get(msg.source) if msg.source else None
                table = sender.snapshot if sender is not None else self.master
                plan = resolve(table, msg.mtype, msg.subid, msg.meid, self.ownership, msg.source)
            receipt = DeliveryReceipt(msg)
            for name in plan:
                ep = self._endpoints.get(name)
                if ep is None:
                    err = NameDoesNotResolve(name)
                    log.debug("%s", err)
                    receipt.deliveries.append(Delivery(name, False, err.name, ERRNO_NO_ENDPOINT))
                    continue
                copy = msg.with_fields(destination=None)
                if ep.mailbox.put(copy):
                    receipt.deliveries.append(Delivery(name, True))
                else:
                    receipt.deliveries.append(Delivery(name, False, QueueFull.__name__, ERRNO_QUEUE_FULL))
            return receipt

    def health_probe(self, endpoint: str, timeout: int = DEFAULT_PROBE_TIMEOUT) -> bool:
        """Send RIC_HEALTH_CHECK_REQ and wait (simulated) for the response.

        A response arriving exactly at the timeout still counts.
        """
        if endpoint not in self._endpoints:
            return False
        trn = self.next_transaction_id()
        probe = Message(RIC_HEALTH_CHECK_REQ, b"ping", transaction_id=trn, source=RTMGR_ENDPOINT, destination=endpoint)
        if not self.send(probe).ok:
            return False

        def answered() -> bool:
            return any(
                m.mtype == RIC_HEALTH_CHECK_RESP and m.transaction_id == trn for m in self.rtmgr_mailbox.peek_all()
            )

        ok = self.clock.run_until(answered, self.clock.now + timeout)
        # discard this probe's response, keep anything else
        for m in self.rtmgr_mailbox.drain():
            if not (m.mtype == RIC_HEALTH_CHECK_RESP and m.transaction_id == trn):
                self.rtmgr_mailbox.put(m)
        return ok

    # -- debugging ---------------------------------------------------------

    def debug_info(self) -> dict:
        with self._lock:
            return {
                "version": DEBUG_DUMP_VERSION,
                "master": table_lines(self.master),
                "meid_ownership": dict(sorted(self.ownership.items())),
                "endpoints": {
                    name: {"queued": len(ep.mailbox), "routes": table_lines(ep.snapshot)}
                    for name, ep in sorted(self._endpoints.items())
                },
            }

    def route_debug_dump(self) -> str:
        return json.dumps(self.debug_info(), indent=2, sort_keys=True)
