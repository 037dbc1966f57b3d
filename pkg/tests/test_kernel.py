import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from efpgasoc.kernel import (ClockDomain, Domain, DualClockFifo, EventPropagator, FifoEmpty,
                             FifoFull, SimKernel, period_from_mhz)


def kernel(pm, pp, pe):
    return SimKernel([ClockDomain(Domain.MCU, pm), ClockDomain(Domain.PERI, pp),
                      ClockDomain(Domain.EFPGA, pe)])


def test_advance_zero_is_empty():
    k = SimKernel.from_mhz(600, 100, 125)
    assert k.advance(0) == []


def test_one_microsecond_at_600_and_125():
    k = SimKernel.from_mhz(600, 100, 125)
    k.advance(1_000_000)
    assert k.domains[Domain.MCU].edge_count == 600
    assert k.domains[Domain.EFPGA].edge_count == 125
    assert k.domains[Domain.PERI].edge_count == 100


def test_coincident_edges_run_mcu_first():
    k = kernel(3, 7, 5)
    ev = k.advance(15)
    # brute force over the window: MCU at 3,6,9,12,15; PERI at 7,14; EFPGA at 5,10,15
    expect = sorted([(t, Domain.MCU) for t in range(3, 16, 3)] + [(7, Domain.PERI), (14, Domain.PERI)]
                    + [(t, Domain.EFPGA) for t in range(5, 16, 5)])
    assert [(e.time, e.domain) for e in ev] == expect
    assert [e.domain for e in ev if e.time == 15] == [Domain.MCU, Domain.EFPGA]


def test_handlers_see_fixed_order():
    k = kernel(4, 4, 4)
    seen = []
    for d in (Domain.EFPGA, Domain.PERI, Domain.MCU):
        k.on_edge(d, lambda t, d=d: seen.append(d))
    k.advance(4)
    assert seen == [Domain.MCU, Domain.PERI, Domain.EFPGA]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 97), st.integers(1, 97), st.integers(1, 97),
       st.lists(st.integers(0, 500), min_size=1, max_size=6))
def test_edge_counts_floor(pm, pp, pe, steps):
    k = kernel(pm, pp, pe)
    t = 0
    prev = {d: 0 for d in Domain}
    for dt in steps:
        t += dt
        k.advance(t)
        for d, p in ((Domain.MCU, pm), (Domain.PERI, pp), (Domain.EFPGA, pe)):
            c = k.domains[d].edge_count
            assert c == t // p
            assert c >= prev[d]
            prev[d] = c
        assert k.now == t


def test_disabled_clock_freezes_count():
    k = kernel(10, 10, 10)
    k.advance(50)
    k.set_enabled(Domain.EFPGA, False)
    k.advance(100)
    assert k.domains[Domain.EFPGA].edge_count == 5
    assert k.domains[Domain.MCU].edge_count == 10


def test_advance_backwards_rejected():
    k = kernel(10, 10, 10)
    k.advance(20)
    with pytest.raises(ValueError):
        k.advance(10)


def test_period_rounding():
    assert period_from_mhz(600) == 1667
    assert period_from_mhz(125) == 8000
    assert period_from_mhz(193) == 5181


def test_trace_determinism():
    def run():
        k = SimKernel.from_mhz(600, 100, 193)
        k.on_edge(Domain.EFPGA, lambda t: k.log(Domain.EFPGA, "tick", t % 7))
        k.advance(200_000)
        return k.trace_lines, k.trace_hash()

    assert run() == run()


# -- FIFO ---------------------------------------------------------------------

def fifo(pp=1667, pc=8000, **kw):
    return DualClockFifo(ClockDomain(Domain.MCU, pp), ClockDomain(Domain.EFPGA, pc), **kw)


def test_push_into_empty():
    f = fifo()
    f.push(7, 0)
    assert f.occupancy == 1


def test_five_pushes_then_full():
    f = fifo()
    assert [f.try_push(i, 0) for i in range(4)] == [True] * 4
    with pytest.raises(FifoFull):
        f.push(5, 0)
    assert f.occupancy == 4 and f.pushed == 4


def test_visibility_example():
    # consumer period 8 ns: edges at 8000, 16000, 24000, 32000 ps
    f = fifo(pc=8000)
    f.push(1, 10_000)
    assert f.visible_time(10_000) == 24_000
    assert not f.can_pop(16_000)
    assert f.can_pop(24_000)
    # a push exactly on a consumer edge waits for two later edges
    assert f.visible_time(16_000) == 32_000


def test_pop_empty():
    with pytest.raises(FifoEmpty):
        fifo().pop(10**9)


def test_pop_order():
    f = fifo()
    f.push(0xA, 0)
    f.push(0xB, 0)
    assert [f.pop(10**6), f.pop(10**6)] == [0xA, 0xB]


def test_word_width_checked():
    with pytest.raises(ValueError):
        fifo().push(1 << 32, 0)


def consumer_edges_between(t0, t1, period):
    """Consumer edges in (t0, t1], counted by enumeration (edge k at floor(k * period))."""
    lo = max(1, int(t0 // period) - 1)
    return sum(1 for k in range(lo, int(t1 // period) + 2) if t0 < math.floor(k * period) <= t1)


@settings(max_examples=12, deadline=None)
@given(st.sampled_from([(600, 125), (600, 193), (125, 600), (193, 600), (100, 193), (600, 100)]),
       st.integers(0, 2**32 - 1), st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_fifo_randomized_schedule(freqs, seed, p_push, p_pop):
    fp, fc = freqs
    k = SimKernel.from_mhz(fp, 1, fc)
    prod, cons = k.domains[Domain.MCU], k.domains[Domain.EFPGA]
    f = DualClockFifo(prod, cons)
    rng = random.Random(seed)
    pushed, popped, push_time = [], [], {}
    counter = iter(range(1 << 30))

    def on_prod(t):
        if rng.random() < p_push:
            w = next(counter)
            if f.try_push(w, t):
                pushed.append(w)
                push_time[w] = t
            else:
                assert f.occupancy == 4
        check()

    def on_cons(t):
        if rng.random() < p_pop:
            if f.queue:
                front = f.queue[0][1]
                aged = consumer_edges_between(push_time[front], t, cons.period) >= 2
                assert f.can_pop(t) == aged
            if f.can_pop(t):
                w = f.pop(t)
                assert consumer_edges_between(push_time[w], t, cons.period) >= 2
                popped.append(w)
        check()

    def check():
        assert 0 <= f.occupancy <= 4
        assert f.pushed == f.popped + f.occupancy

    k.on_edge(Domain.MCU, on_prod)
    k.on_edge(Domain.EFPGA, on_cons)
    total = 10_000
    k.advance(total * prod.period * cons.period // (prod.period + cons.period) + cons.period)
    assert prod.edge_count + cons.edge_count >= total
    assert popped == pushed[:len(popped)]
    assert pushed[len(popped):] == [w for _, w in f.queue]


def test_event_propagator_latency():
    mcu = ClockDomain(Domain.MCU, 1667)
    fab = ClockDomain(Domain.EFPGA, 8000)
    ep = EventPropagator(fab, mcu)
    ep.raise_line(3, 8000)
    # MCU edges after 8000: 8335, 10002
    assert ep.deliver(8335) == []
    assert ep.deliver(10002) == [3]
