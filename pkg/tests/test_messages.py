import pytest
from hypothesis import given
from hypothesis import strategies as st

from miniric.errors import DuplicateCode, DuplicateName, UnknownMtype
from miniric.messages import (
    RMR_MS_ERRNO,
    RMR_MS_MEID,
    RMR_MS_MSG_STATUS,
    RMR_MS_PAYLOAD,
    RMR_MS_PAYLOAD_LEN,
    RMR_MS_SUB_ID,
    RMR_MS_TRN_ID,
    Message,
    MessageTypeRegistry,
    make_reply,
    registry_seed,
)


def test_seed_contains_documented_codes():
    reg = registry_seed()
    assert reg.lookup("RIC_INDICATION") == 12050
    assert reg.lookup(12040) == "RIC_CONTROL_REQ"
    assert reg.lookup("A1_POLICY_QUERY") == 20011
    assert reg.lookup("A1_POLICY_RESP") == 20012
    for name in ("A1_POLICY_REQ", "RIC_HEALTH_CHECK_REQ", "RIC_HEALTH_CHECK_RESP"):
        assert name in reg
    assert 30001 in reg and 30002 in reg


def test_register_custom_and_conflicts():
    reg = registry_seed()
    mt = reg.register("MY_MTYPE", 30010)
    assert (mt.name, mt.code) == ("MY_MTYPE", 30010)
    assert reg.lookup(30010) == "MY_MTYPE"
    with pytest.raises(DuplicateName):
        reg.register("RIC_INDICATION", 99999)
    with pytest.raises(DuplicateCode):
        reg.register("OTHER", 12050)
    assert "OTHER" not in reg and 99999 not in reg


def test_unknown_lookups_raise():
    reg = registry_seed()
    with pytest.raises(UnknownMtype):
        reg.lookup("NOPE")
    with pytest.raises(UnknownMtype):
        reg.code(55555)
    assert reg.code("12050") == 12050


@given(st.lists(st.tuples(st.sampled_from("ABCDEFG"), st.integers(0, 8)), max_size=40))
def test_registry_stays_bijective(ops):
    reg = MessageTypeRegistry()
    for name, code in ops:
        try:
            reg.register(name, code)
        except (DuplicateName, DuplicateCode):
            pass
    items = reg.items()
    assert len({i.name for i in items}) == len(items) == len({i.code for i in items})
    for i in items:
        assert reg.lookup(i.name) == i.code and reg.lookup(i.code) == i.name


def test_message_invariants():
    m = Message(30001, "héllo")
    assert m.payload == "héllo".encode() and m.payload_len == len("héllo".encode())
    with pytest.raises(ValueError):
        Message(30001, b"", subid=-2)
    with pytest.raises(ValueError):
        Message(30001, b"", status="error")
    assert Message(30001, b"", status="error", errno=2).errno == 2


def test_summary_fields():
    m = Message(30001, b"abc", subid=7, meid="gnb1", transaction_id=9)
    s = m.summary()
    assert s[RMR_MS_PAYLOAD] == b"abc" and s[RMR_MS_PAYLOAD_LEN] == 3
    assert s[RMR_MS_SUB_ID] == 7 and s[RMR_MS_TRN_ID] == 9 and s[RMR_MS_MEID] == "gnb1"
    assert s[RMR_MS_MSG_STATUS] == "ok" and s[RMR_MS_ERRNO] == 0


def test_reply_to_sender_with_ack():
    m = Message(30001, b"ping", transaction_id=42, source="A")
    r = make_reply(m, b"ack")
    assert r.destination == "A" and r.payload == b"ack" and r.transaction_id == 42


def test_reply_identity_case():
    m = Message(30001, b"\x00\x01raw", subid=3, transaction_id=5, source="A")
    r = make_reply(m)
    assert r.payload == m.payload and r.mtype == m.mtype and r.transaction_id == m.transaction_id


def test_reply_with_new_mtype_matches_expected_record():
    reg = registry_seed()
    m = Message(30001, b"x", subid=-1, meid=None, transaction_id=11, source="svc-a")
    expected = Message(30004, b"p", subid=-1, meid=None, transaction_id=11, destination="svc-a")
    assert make_reply(m, b"p", 30004, reg) == expected
    with pytest.raises(UnknownMtype):
        make_reply(m, b"p", 44444, reg)


def test_reply_needs_source():
    with pytest.raises(ValueError):
        make_reply(Message(30001, b""))


@given(st.text())
def test_utf8_payload_round_trip(s):
    assert Message(30001, s).text() == s


@given(st.binary(), st.integers(-1, 10**6), st.integers(0, 2**63 - 1))
def test_reply_preserves_transaction_and_targets_source(payload, subid, trn):
    m = Message(30001, payload, subid=subid, transaction_id=trn, source="src")
    r = make_reply(m, b"r")
    assert r.transaction_id == trn and r.destination == "src" and r.subid == subid
