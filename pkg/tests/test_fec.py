import itertools
import random

import pytest

from tetrys.codec import pad
from tetrys.fec import (LADDER_BLOCKS, FecBlockConfig, FecDecoder, decode_payloads,
                        encode_payloads, fec_decode_block, fec_encode_block)
from tetrys.packets import SourcePacket


def block(k, seed=0, max_len=40):
    rng = random.Random(seed)
    return [rng.randbytes(rng.randint(0, max_len)) for _ in range(k)]


@pytest.mark.parametrize("k,n,repairs", [(9, 10, 1), (6, 9, 3), (8, 10, 2), (5, 10, 5)])
def test_repair_counts(k, n, repairs):
    assert len(fec_encode_block(block(k), FecBlockConfig(k, n))) == repairs


def test_single_source_parity_is_a_copy():
    src = b"payload"
    (rep,) = encode_payloads([src], 1, 2)
    assert rep.tobytes() == pad(src, len(src) + 2).tobytes()


def test_config_validation():
    with pytest.raises(ValueError):
        FecBlockConfig(10, 10)
    with pytest.raises(ValueError):
        FecBlockConfig(0, 3)
    assert FecBlockConfig(6, 9).redundancy == pytest.approx(1 / 3)


@pytest.mark.parametrize("cfg", LADDER_BLOCKS + (FecBlockConfig(7, 10), FecBlockConfig(1, 2)))
def test_mds_exhaustive(cfg):
    k, n = cfg.k, cfg.n
    srcs = block(k, seed=n * 31 + k)
    reps = [r.tobytes() for r in encode_payloads(srcs, k, n)]
    packets = {i: srcs[i] for i in range(k)}
    packets.update({k + r: reps[r] for r in range(n - k)})
    for lost_count in range(n - k + 1):
        for lost in itertools.combinations(range(n), lost_count):
            got = {i: p for i, p in packets.items() if i not in lost}
            assert decode_payloads(got, k, n) == srcs, lost


def test_too_many_losses_is_unrecoverable():
    srcs = block(9)
    reps = fec_encode_block(srcs, FecBlockConfig(9, 10))
    got = [SourcePacket(s + 1, 0, srcs[s]) for s in range(2, 9)] + reps
    assert fec_decode_block(got, FecBlockConfig(9, 10), 0) == []


def test_burst_of_three_recovered_by_fec_6_9():
    cfg = FecBlockConfig(6, 9)
    srcs = block(6, seed=3)
    reps = fec_encode_block(srcs, cfg, first_seq=11, now=0)
    for start in range(4):
        lost = set(range(start, start + 3))
        got = [SourcePacket(11 + j, 0, srcs[j]) for j in range(6) if j not in lost] + reps
        out = fec_decode_block(got, cfg, now=42)
        assert sorted((s, p, t) for s, p, t in out) == [(11 + j, srcs[j], 42) for j in sorted(lost)]


def test_stream_decoder_block_independence():
    cfg = FecBlockConfig(4, 6)
    dec = FecDecoder()
    blocks = [block(4, seed=b) for b in range(3)]
    delivered = {}
    for b, srcs in enumerate(blocks):
        first = 1 + 4 * b
        reps = fec_encode_block(srcs, cfg, block=b, first_seq=first)
        # block 1 loses three packets and cannot decode; its neighbours lose two
        lost = {0: {0, 4}, 1: {0, 1, 2}, 2: {3, 5}}[b]
        pkts = [SourcePacket(first + j, 0, s) for j, s in enumerate(srcs)] + reps
        for i, pkt in enumerate(pkts):
            if i in lost:
                continue
            for s, p, _ in dec.receiver_on_packet(pkt, 0):
                delivered[s] = p
    for b, srcs in enumerate(blocks):
        for j, s in enumerate(srcs):
            seq = 1 + 4 * b + j
            if b == 1 and j < 3:
                assert seq not in delivered
            else:
                assert delivered[seq] == s
