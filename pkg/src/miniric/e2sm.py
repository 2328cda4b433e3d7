"""KPM service-model records and their canonical binary encoding.

Real deployments use ASN.1 APER; here every record is written as a version
byte, a record tag, then fixed-order fields (big-endian integers, IEEE
doubles, u16-length-prefixed UTF-8 strings). The field structure follows
the KPM event trigger, action definition and indication formats.
"""

from __future__ import annotations

import bisect
import json
import random
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import DecodeError

ENCODING_VERSION = 1

TAG_TRIGGER = 0x01
TAG_ACTION = 0x02
TAG_INDICATION = 0x05
TAG_CONTROL = 0x06

KPM_OID = "1.3.6.1.4.1.53148.1.2.2.2"
KPM_RAN_FUNCTION_ID = 200
DEFAULT_MEAS = "DRB.PerDataVolumeDLDist.Bin"

_FORMATS = {"format1": 1}
_FORMAT_NAMES = {v: k for k, v in _FORMATS.items()}
_IND_TYPES = {"report": 0, "insert": 1}
_IND_TYPE_NAMES = {v: k for k, v in _IND_TYPES.items()}


@dataclass(frozen=True)
class EventTrigger:
    reportingPeriod: int
    format: str = "format1"

    def __post_init__(self):
        if self.reportingPeriod <= 0:
            raise ValueError("reportingPeriod must be positive")
        if self.format not in _FORMATS:
            raise ValueError(f"unsupported trigger format {self.format!r}")


@dataclass(frozen=True)
class MeasInfo:
    measName: str
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))


@dataclass(frozen=True)
class ActionDefinition:
    measInfoList: tuple[MeasInfo, ...]
    granulPeriod: int
    ric_style_type: int = 1
    format: str = "format1"

    def __post_init__(self):
        items = tuple(m if isinstance(m, MeasInfo) else MeasInfo(m) for m in self.measInfoList)
        object.__setattr__(self, "measInfoList", items)
        if not items:
            raise ValueError("measInfoList must not be empty")
        if self.granulPeriod <= 0:
            raise ValueError("granulPeriod must be positive")
        if self.format not in _FORMATS:
            raise ValueError(f"unsupported action format {self.format!r}")

    @property
    def meas_names(self) -> list[str]:
        return [m.measName for m in self.measInfoList]


@dataclass(frozen=True)
class IndicationHeader:
    collection_start: int
    node_id: str


@dataclass(frozen=True)
class MeasSeries:
    measName: str
    values: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class RicIndication:
    header: IndicationHeader
    message: tuple[MeasSeries, ...]
    subid: int
    meid: str
    action_id: int = 1
    indication_type: str = "report"
    sn: int = 0
    call_process_id: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "message", tuple(self.message))
        if self.indication_type not in _IND_TYPES:
            raise ValueError(f"bad indication type {self.indication_type!r}")

    def series(self, name: str) -> tuple[float, ...]:
        for s in self.message:
            if s.measName == name:
                return s.values
        raise KeyError(name)

    @property
    def meas_names(self) -> list[str]:
        return [s.measName for s in self.message]

    def to_json(self) -> dict:
        return {
            "subid": self.subid,
            "meid": self.meid,
            "actionId": self.action_id,
            "indicationType": self.indication_type,
            "sn": self.sn,
            "callProcessId": self.call_process_id,
            "RICindicationHeader": {"collectionStartTime": self.header.collection_start, "nodeId": self.header.node_id},
            "RICindicationMessage": {s.measName: list(s.values) for s in self.message},
        }


@dataclass(frozen=True)
class ControlMessage:
    """Control payload: a command name plus JSON-compatible parameters."""

    command: str
    params: dict = field(default_factory=dict)

    def __hash__(self):
        return hash((self.command, json.dumps(self.params, sort_keys=True)))


# -- low-level codec ----------------------------------------------------------


class _Writer:
    def __init__(self, tag: int):
        self.buf = bytearray([ENCODING_VERSION, tag])

    def u8(self, v: int):
        self.buf += struct.pack(">B", v)

    def u16(self, v: int):
        self.buf += struct.pack(">H", v)

    def u32(self, v: int):
        self.buf += struct.pack(">I", v)

    def i64(self, v: int):
        self.buf += struct.pack(">q", v)

    def f64(self, v: float):
        self.buf += struct.pack(">d", v)

    def s(self, v: str):
        raw = v.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError("string too long to encode")
        self.u16(len(raw))
        self.buf += raw

    def bytes(self) -> bytes:
        return bytes(self.buf)


class _Reader:
    def __init__(self, data: bytes, tag: int):
        self.data = bytes(data)
        self.pos = 0
        version = self._take(1, "version")[0]
        if version != ENCODING_VERSION:
            raise DecodeError(0, f"unsupported encoding version {version}")
        got = self._take(1, "tag")[0]
        if got != tag:
            raise DecodeError(1, f"expected record tag {tag:#04x}, got {got:#04x}")

    def _take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError(self.pos, f"truncated while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self, what="u8") -> int:
        return struct.unpack(">B", self._take(1, what))[0]

    def u16(self, what="u16") -> int:
        return struct.unpack(">H", self._take(2, what))[0]

    def u32(self, what="u32") -> int:
        return struct.unpack(">I", self._take(4, what))[0]

    def i64(self, what="i64") -> int:
        return struct.unpack(">q", self._take(8, what))[0]

    def f64(self, what="f64") -> float:
        return struct.unpack(">d", self._take(8, what))[0]

    def s(self, what="string") -> str:
        n = self.u16(what + " length")
        start = self.pos
        try:
            return self._take(n, what).decode("utf-8")
        except UnicodeDecodeError:
            raise DecodeError(start, f"invalid UTF-8 in {what}") from None

    def fmt(self) -> str:
        pos = self.pos
        code = self.u8("format")
        if code not in _FORMAT_NAMES:
            raise DecodeError(pos, f"unknown format {code}")
        return _FORMAT_NAMES[code]

    def done(self):
        if self.pos != len(self.data):
            raise DecodeError(self.pos, f"{len(self.data) - self.pos} trailing bytes")


def _guard(fn):
    def wrapper(data):
        if not isinstance(data, (bytes, bytearray)):
            raise DecodeError(0, "expected bytes")
        try:
            return fn(data)
        except ValueError as exc:
            raise DecodeError(len(data), f"invalid field value: {exc}") from None

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def encode_event_trigger(t: EventTrigger) -> bytes:
    w = _Writer(TAG_TRIGGER)
    w.u8(_FORMATS[t.format])
    w.u32(t.reportingPeriod)
    return w.bytes()


@_guard
def decode_event_trigger(data: bytes) -> EventTrigger:
    r = _Reader(data, TAG_TRIGGER)
    fmt = r.fmt()
    period = r.u32("reportingPeriod")
    r.done()
    return EventTrigger(period, fmt)


def encode_action_definition(a: ActionDefinition) -> bytes:
    w = _Writer(TAG_ACTION)
    w.u8(_FORMATS[a.format])
    w.u32(a.ric_style_type)
    w.u32(a.granulPeriod)
    w.u16(len(a.measInfoList))
    for m in a.measInfoList:
        w.s(m.measName)
        w.u16(len(m.labels))
        for label in m.labels:
            w.s(label)
    return w.bytes()


@_guard
def decode_action_definition(data: bytes) -> ActionDefinition:
    r = _Reader(data, TAG_ACTION)
    fmt = r.fmt()
    style = r.u32("ric-Style-Type")
    granul = r.u32("granulPeriod")
    items = []
    for _ in range(r.u16("measInfoList length")):
        name = r.s("measName")
        labels = tuple(r.s("label") for _ in range(r.u16("labelInfoList length")))
        items.append(MeasInfo(name, labels))
    r.done()
    return ActionDefinition(tuple(items), granul, style, fmt)


def encode_indication(ind: RicIndication) -> bytes:
    w = _Writer(TAG_INDICATION)
    w.i64(ind.subid)
    w.s(ind.meid)
    w.u32(ind.action_id)
    w.u8(_IND_TYPES[ind.indication_type])
    w.u32(ind.sn)
    w.u8(0 if ind.call_process_id is None else 1)
    if ind.call_process_id is not None:
        w.i64(ind.call_process_id)
    # header
    w.i64(ind.header.collection_start)
    w.s(ind.header.node_id)
    # message
    w.u16(len(ind.message))
    for series in ind.message:
        w.s(series.measName)
        w.u32(len(series.values))
        for v in series.values:
            w.f64(v)
    return w.bytes()


@_guard
def decode_indication(data: bytes) -> RicIndication:
    r = _Reader(data, TAG_INDICATION)
    subid = r.i64("subid")
    meid = r.s("meid")
    action_id = r.u32("actionId")
    pos = r.pos
    itype = r.u8("indication type")
    if itype not in _IND_TYPE_NAMES:
        raise DecodeError(pos, f"unknown indication type {itype}")
    sn = r.u32("sn")
    has_cpid = r.u8("callProcessId flag")
    cpid = r.i64("callProcessId") if has_cpid else None
    header = IndicationHeader(r.i64("collection start"), r.s("node id"))
    series = []
    for _ in range(r.u16("measurement count")):
        name = r.s("measName")
        values = tuple(r.f64("value") for _ in range(r.u32("value count")))
        series.append(MeasSeries(name, values))
    r.done()
    return RicIndication(header, tuple(series), subid, meid, action_id, _IND_TYPE_NAMES[itype], sn, cpid)


def encode_control(c: ControlMessage) -> bytes:
    w = _Writer(TAG_CONTROL)
    w.s(c.command)
    w.s(json.dumps(c.params, sort_keys=True, separators=(",", ":")))
    return w.bytes()


@_guard
def decode_control(data: bytes) -> ControlMessage:
    r = _Reader(data, TAG_CONTROL)
    command = r.s("command")
    pos = r.pos
    raw = r.s("params")
    r.done()
    try:
        params = json.loads(raw)
    except json.JSONDecodeError:
        raise DecodeError(pos, "control parameters are not JSON") from None
    if not isinstance(params, dict):
        raise DecodeError(pos, "control parameters must be an object")
    return ControlMessage(command, params)


# -- KPM helpers -------------------------------------------------------------


def kpm_trigger(period_ms: int = 1000) -> EventTrigger:
    return EventTrigger(period_ms)


def kpm_action(meas: Sequence[str] = (DEFAULT_MEAS,), granul_ms: int = 1000, style: int = 1) -> ActionDefinition:
    return ActionDefinition(tuple(MeasInfo(m, ("noLabel",)) for m in meas), granul_ms, style)


def kpm_ran_function_definition(meas: Iterable[str] = (DEFAULT_MEAS,)) -> bytes:
    doc = {
        "ranFunctionShortName": "ORAN-E2SM-KPM",
        "ranFunctionE2SMOid": KPM_OID,
        "ranFunctionDescription": "KPM Monitor",
        "ric-EventTriggerStyle-List": [{"ric-EventTriggerStyle-Type": 1, "ric-EventTriggerFormat-Type": 1}],
        "ric-ReportStyle-List": [{"ric-ReportStyle-Type": 1, "measInfo-Action-List": [{"measName": m} for m in meas]}],
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


_WAIT = re.compile(r"^w(\d+)(ms|s)$")


def parse_time_to_wait(token: str) -> int:
    """``"w10ms"`` -> 10, ``"w2s"`` -> 2000."""
    m = _WAIT.match(token or "")
    if not m:
        raise ValueError(f"bad TimeToWait token {token!r}")
    n = int(m.group(1))
    return n if m.group(2) == "ms" else n * 1000


# -- traces --------------------------------------------------------------------


@dataclass(frozen=True)
class TraceRecord:
    timestamp: int
    measurements: dict


class TraceSource:
    """Time-ordered metric samples; the analog of a node's reports.json."""

    def __init__(self, records: Iterable[TraceRecord] = ()):
        self.records = list(records)
        self._times = [r.timestamp for r in self.records]
        if any(b < a for a, b in zip(self._times, self._times[1:])):
            raise ValueError("trace timestamps must be non-decreasing")

    def __len__(self) -> int:
        return len(self.records)

    def sample(self, meas_name: str, start: int, end: int) -> list[float]:
        """Values of ``meas_name`` with ``start < timestamp <= end``."""
        lo = bisect.bisect_right(self._times, start)
        hi = bisect.bisect_right(self._times, end)
        return [float(r.measurements[meas_name]) for r in self.records[lo:hi] if meas_name in r.measurements]

    @property
    def meas_names(self) -> set[str]:
        return {k for r in self.records for k in r.measurements}

    def to_json(self) -> list:
        return [{"timestamp": r.timestamp, "measurements": dict(r.measurements)} for r in self.records]

    @classmethod
    def from_json(cls, doc: list) -> "TraceSource":
        return cls(TraceRecord(int(d["timestamp"]), dict(d["measurements"])) for d in doc)

    @classmethod
    def load(cls, path) -> "TraceSource":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))


def synthetic_trace(
    meas: Sequence[str] = (DEFAULT_MEAS,), duration_ms: int = 600_000, step_ms: int = 100, seed: int = 0
) -> TraceSource:
    rng = random.Random(seed)
    records = []
    for ts in range(step_ms, duration_ms + 1, step_ms):
        records.append(TraceRecord(ts, {m: round(rng.uniform(0.0, 1000.0), 3) for m in meas}))
    return TraceSource(records)
