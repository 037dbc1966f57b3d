import random

import pytest
from hypothesis import given, settings, strategies as st

from efpgasoc.memsys import (DEFAULT_MAP, Forbidden, Master, MemorySystem, MemRequest, ReadOnly,
                             Unmapped, map_address, stream_benchmark)

IL = DEFAULT_MAP.region("interleaved").base
P0 = DEFAULT_MAP.region("private0").base


def test_interleave_examples():
    assert [map_address(IL + o).bank for o in (0, 4, 8, 0xC, 0x10)] == [0, 1, 2, 3, 0]
    assert map_address(IL + 0x10).word_offset == 1


def test_private_last_word():
    m = map_address(P0 + 0x7FFC)
    assert (m.region, m.bank, m.word_offset) == ("private0", 4, 0x7FFC // 4)
    with pytest.raises(Unmapped):
        map_address(P0 - 4 if P0 - 4 >= 0x2000 else 0x1000_0000)


def test_interleaved_mapping_is_bijection():
    size = DEFAULT_MAP.region("interleaved").size
    seen = set()
    for a in range(IL, IL + size, 4):
        m = map_address(a)
        seen.add((m.bank, m.word_offset))
    assert len(seen) == size // 4
    per_bank = size // 16
    assert seen == {(b, o) for b in range(4) for o in range(per_bank)}


def test_regions_disjoint():
    rs = sorted(DEFAULT_MAP.regions, key=lambda r: r.base)
    for a, b in zip(rs, rs[1:]):
        assert a.base + a.size <= b.base


def test_single_requester_no_stall():
    mem = MemorySystem()
    _, stalls = mem.access(MemRequest(Master.CPU_D, IL, write=True, wdata=9))
    assert stalls == 0
    assert mem.access(MemRequest(Master.CPU_D, IL))[0] == 9


def test_two_masters_fair_over_100_cycles():
    mem = MemorySystem()
    grants = {Master.CPU_D: 0, Master.EFPGA_P0: 0}
    for _ in range(100):
        done = mem.cycle([MemRequest(Master.CPU_D, IL), MemRequest(Master.EFPGA_P0, IL + 16)])
        for r in done:
            grants[r.master] += 1
    assert grants == {Master.CPU_D: 50, Master.EFPGA_P0: 50}


@settings(max_examples=100, deadline=None)
@given(st.sets(st.sampled_from(list(Master)), min_size=1), st.integers(1, 200))
def test_round_robin_fairness(masters, cycles):
    mem = MemorySystem()
    grants = {m: 0 for m in masters}
    for _ in range(cycles):
        for r in mem.cycle([MemRequest(m, IL + 16 * i) for i, m in enumerate(sorted(masters))]):
            grants[r.master] += 1
    assert sum(grants.values()) == cycles
    assert max(grants.values()) - min(grants.values()) <= 1


def test_four_masters_interleaved_speedup():
    n = 1024
    one = stream_benchmark(MemorySystem(), [Master.CPU_D], n, IL)
    four = stream_benchmark(MemorySystem(), [Master.CPU_D, Master.UDMA_RX, Master.EFPGA_P0,
                                             Master.EFPGA_P1], n, IL)
    assert one["words_per_cycle"] == 1.0
    assert four["words"] == 4 * n
    assert four["words_per_cycle"] / one["words_per_cycle"] >= 3.9
    assert all(v == 0 for v in four["stalls"].values())


def test_private_bank_one_word_per_cycle():
    r = stream_benchmark(MemorySystem(), [Master.CPU_D], 2048, P0, start_offsets=[0])
    assert r["cycles"] == 2048 and r["words_per_cycle"] == 1.0


def test_two_masters_same_bank_half_rate():
    mem = MemorySystem()
    # both masters stride 16 bytes so every access hits bank 0
    moved = {Master.CPU_D: 0, Master.UDMA_TX: 0}
    cur = {Master.CPU_D: 0, Master.UDMA_TX: 0x1000}
    for _ in range(1000):
        for r in mem.cycle([MemRequest(m, IL + 16 * cur[m]) for m in cur]):
            moved[r.master] += 1
            cur[r.master] += 1
    assert moved[Master.CPU_D] / 1000 == pytest.approx(0.5, abs=1e-3)
    assert moved[Master.UDMA_TX] / 1000 == pytest.approx(0.5, abs=1e-3)


def test_byte_enable_coherence_exhaustive():
    mem = MemorySystem()
    rng = random.Random(3)
    for be in range(1, 16):
        old = rng.getrandbits(32)
        new = rng.getrandbits(32)
        mem.access(MemRequest(Master.CPU_D, IL + 4 * be, write=True, wdata=old))
        mem.access(MemRequest(Master.CPU_D, IL + 4 * be, write=True, wdata=new, byte_enable=be))
        got = mem.access(MemRequest(Master.CPU_D, IL + 4 * be))[0]
        for i in range(4):
            src = new if be >> i & 1 else old
            assert (got >> 8 * i) & 0xFF == (src >> 8 * i) & 0xFF


def test_efpga_cannot_reach_apb_or_rom():
    mem = MemorySystem()
    with pytest.raises(Forbidden):
        mem.check(MemRequest(Master.EFPGA_P0, DEFAULT_MAP.apb_base))
    with pytest.raises(Forbidden):
        mem.check(MemRequest(Master.EFPGA_P0, 0))


def test_rom_read_only():
    mem = MemorySystem()
    with pytest.raises(ReadOnly):
        mem.check(MemRequest(Master.CPU_D, 0, write=True, wdata=1))


def test_write_read_identity_random():
    mem = MemorySystem()
    rng = random.Random(11)
    expect = {}
    for _ in range(2000):
        a = rng.choice([IL, P0]) + 4 * rng.randrange(8192)
        v = rng.getrandbits(32)
        mem.write_word(a, v)
        expect[a] = v
    assert all(mem.read_word(a) == v for a, v in expect.items())
