import pytest
from hypothesis import given, strategies as st

from tetrys.packets import (ACK_HEADER, AckPacket, Direction, FecRepairPacket,
                            RedundancyFeedback, RepairPacket, SOURCE_HEADER, SourcePacket,
                            deserialize, serialize)

u32 = st.integers(0, 2**32 - 1)
u64 = st.integers(0, 2**64 - 1)
body = st.binary(max_size=600)


@given(u32, u64, body, u32)
def test_source_round_trip(seq, ts, payload, tx):
    pkt = SourcePacket(seq, ts, payload, tx_seq=tx)
    data = serialize(pkt)
    assert len(data) == pkt.wire_size == SOURCE_HEADER + len(payload)
    assert deserialize(data) == pkt


@given(u32, st.integers(0, 1000), u64, u64, body, u32, u32)
def test_repair_round_trip(first, span, seed, ts, payload, applied, tx):
    pkt = RepairPacket(first, first + span, seed, ts, payload, applied_id=applied, tx_seq=tx)
    assert deserialize(serialize(pkt)) == pkt


@given(u32, u64, st.none() | st.tuples(st.integers(1, 2**32 - 1),
                                       st.sampled_from([Direction.INCREASE,
                                                        Direction.DECREASE])))
def test_ack_round_trip(cum, ts, fb):
    pkt = AckPacket(cum, ts, RedundancyFeedback(*fb) if fb else None)
    data = serialize(pkt)
    assert len(data) == ACK_HEADER
    assert deserialize(data) == pkt


def test_fec_round_trip():
    pkt = FecRepairPacket(4, 37, 6, 9, 7, 12345, b"\x01\x02\x03", applied_id=9, tx_seq=55)
    assert deserialize(serialize(pkt)) == pkt


def test_symbolic_packets_have_size_but_no_bytes():
    pkt = SourcePacket(1, 0, None, size=500)
    assert pkt.wire_size == SOURCE_HEADER + 500
    with pytest.raises(ValueError):
        serialize(pkt)


def test_repair_window_must_be_ordered():
    with pytest.raises(ValueError):
        RepairPacket(5, 4, 0, 0, b"")


def test_unknown_type_byte():
    with pytest.raises(ValueError):
        deserialize(b"\x09" + bytes(20))
