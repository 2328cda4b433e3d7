"""Message model, message-type registry and reply semantics.

The seeded mtype table below is the single authoritative list of codes the
simulator knows about. Codes not documented in the tutorial material use
the values from the public RMR headers.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from typing import Optional, Union

from .errors import DuplicateCode, DuplicateName, UnknownMtype

# Summary dictionary keys, as exposed to xApp callbacks.
RMR_MS_PAYLOAD = "payload"
RMR_MS_PAYLOAD_LEN = "payload length"
RMR_MS_SUB_ID = "subscription id"
RMR_MS_TRN_ID = "transaction id"
RMR_MS_MSG_STATUS = "message state"
RMR_MS_ERRNO = "errno"
RMR_MS_MEID = "meid"
RMR_MS_MSG_TYPE = "message type"

NO_SUBID = -1
DEFAULT_MAX_SIZE = 2072

RIC_HEALTH_CHECK_REQ = 100
RIC_HEALTH_CHECK_RESP = 101
RIC_SUB_REQ = 12010
RIC_SUB_RESP = 12011
RIC_SUB_FAILURE = 12012
RIC_SUB_DEL_REQ = 12020
RIC_SUB_DEL_RESP = 12021
RIC_SUB_DEL_FAILURE = 12022
RIC_CONTROL_REQ = 12040
RIC_CONTROL_ACK = 12041
RIC_CONTROL_FAILURE = 12042
RIC_INDICATION = 12050
A1_POLICY_REQ = 20010
A1_POLICY_QUERY = 20011
A1_POLICY_RESP = 20012

SEED_MTYPES = {
    "RIC_HEALTH_CHECK_REQ": RIC_HEALTH_CHECK_REQ,
    "RIC_HEALTH_CHECK_RESP": RIC_HEALTH_CHECK_RESP,
    "RIC_SUB_REQ": RIC_SUB_REQ,
    "RIC_SUB_RESP": RIC_SUB_RESP,
    "RIC_SUB_FAILURE": RIC_SUB_FAILURE,
    "RIC_SUB_DEL_REQ": RIC_SUB_DEL_REQ,
    "RIC_SUB_DEL_RESP": RIC_SUB_DEL_RESP,
    "RIC_SUB_DEL_FAILURE": RIC_SUB_DEL_FAILURE,
    "RIC_CONTROL_REQ": RIC_CONTROL_REQ,
    "RIC_CONTROL_ACK": RIC_CONTROL_ACK,
    "RIC_CONTROL_FAILURE": RIC_CONTROL_FAILURE,
    "RIC_INDICATION": RIC_INDICATION,
    "A1_POLICY_REQ": A1_POLICY_REQ,
    "A1_POLICY_QUERY": A1_POLICY_QUERY,
    "A1_POLICY_RESP": A1_POLICY_RESP,
    "CUSTOM_30001": 30001,
    "CUSTOM_30002": 30002,
    "CUSTOM_30003": 30003,
    "CUSTOM_30004": 30004,
}


@dataclass(frozen=True)
class MessageType:
    name: str
    code: int


class MessageTypeRegistry:
    """Bijective name <-> code table. Reads are lock-free; writes serialize."""

    def __init__(self):
        self._by_name: dict[str, int] = {}
        self._by_code: dict[int, str] = {}
        self._lock = threading.Lock()

    def register(self, name: str, code: int) -> MessageType:
        if not name or not isinstance(name, str):
            raise ValueError("mtype name must be a non-empty string")
        if not isinstance(code, int) or isinstance(code, bool) or code < 0:
            raise ValueError("mtype code must be a non-negative integer")
        with self._lock:
            if name in self._by_name:
                raise DuplicateName(f"mtype name already registered: {name}")
            if code in self._by_code:
                raise DuplicateCode(f"mtype code already registered: {code}")
            self._by_name[name] = code
            self._by_code[code] = name
        return MessageType(name, code)

    def lookup(self, key: Union[str, int]) -> Union[int, str]:
        """Name -> code, or code -> name."""
        if isinstance(key, str):
            try:
                return self._by_name[key]
            except KeyError:
                raise UnknownMtype(f"unknown mtype name: {key}") from None
        try:
            return self._by_code[key]
        except KeyError:
            raise UnknownMtype(f"unknown mtype code: {key}") from None

    def code(self, key: Union[str, int]) -> int:
        """Normalize a name or code to a known code."""
        if isinstance(key, str):
            if key.lstrip("-").isdigit():
                key = int(key)
            else:
                return self.lookup(key)
        if key not in self._by_code:
            raise UnknownMtype(f"unknown mtype code: {key}")
        return key

    def name(self, code: int) -> str:
        return self.lookup(code)

    def __contains__(self, key) -> bool:
        return key in self._by_name or key in self._by_code

    def __len__(self) -> int:
        return len(self._by_code)

    def items(self) -> list[MessageType]:
        return [MessageType(n, c) for n, c in sorted(self._by_name.items(), key=lambda kv: kv[1])]


def registry_seed() -> MessageTypeRegistry:
    reg = MessageTypeRegistry()
    for name, code in SEED_MTYPES.items():
        reg.register(name, code)
    return reg


@dataclass(frozen=True)
class Message:
    """One RMR message. Immutable: replies and copies are new values."""

    mtype: int
    payload: bytes = b""
    subid: int = NO_SUBID
    meid: Optional[str] = None
    transaction_id: Optional[int] = None
    status: str = "ok"
    errno: int = 0
    source: Optional[str] = None
    destination: Optional[str] = None
    sent_at: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.payload, str):
            object.__setattr__(self, "payload", self.payload.encode("utf-8"))
        if not isinstance(self.payload, (bytes, bytearray)):
            raise TypeError("payload must be bytes")
        if self.subid < NO_SUBID:
            raise ValueError(f"subid must be >= -1, got {self.subid}")
        if self.status not in ("ok", "error"):
            raise ValueError(f"status must be ok|error, got {self.status!r}")
        if self.status == "error" and self.errno == 0:
            raise ValueError("error status requires a non-zero errno")

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    def text(self) -> str:
        return bytes(self.payload).decode("utf-8")

    def summary(self) -> dict:
        return {
            RMR_MS_MSG_TYPE: self.mtype,
            RMR_MS_PAYLOAD: bytes(self.payload),
            RMR_MS_PAYLOAD_LEN: self.payload_len,
            RMR_MS_SUB_ID: self.subid,
            RMR_MS_TRN_ID: self.transaction_id,
            RMR_MS_MSG_STATUS: self.status,
            RMR_MS_ERRNO: self.errno,
            RMR_MS_MEID: self.meid,
        }

    def with_fields(self, **changes) -> "Message":
        return replace(self, **changes)


def make_reply(
    original: Message,
    new_payload: Optional[bytes] = None,
    new_mtype: Optional[int] = None,
    registry: Optional[MessageTypeRegistry] = None,
) -> Message:
    """Build a return-to-sender reply.

    The reply goes straight back to ``original.source`` and keeps the
    transaction id; payload and mtype carry over unless replaced.
    """
    if not original.source:
        raise ValueError("cannot reply to a message without a source endpoint")
    mtype = original.mtype
    if new_mtype is not None:
        if registry is not None and new_mtype not in registry:
            raise UnknownMtype(f"unknown mtype code: {new_mtype}")
        mtype = new_mtype
    payload = original.payload if new_payload is None else new_payload
    return Message(
        mtype=mtype,
        payload=payload,
        subid=original.subid,
        meid=original.meid,
        transaction_id=original.transaction_id,
        destination=original.source,
    )
