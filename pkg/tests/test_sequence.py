import numpy as np
import pytest

from axygate.operators import pi_rotation
from axygate.sequence import (AxyParams, ModulationFunction, PulseSchedule, axy_modulation, axy_phase_lists,
                              build_schedule, modulation)

TWO_PI = 2 * np.pi


def test_phase_lists():
    x, y = axy_phase_lists()
    assert np.allclose(x, [np.pi / 6, np.pi / 2, 0, np.pi / 2, np.pi / 6], atol=0)
    assert np.allclose(y, x + np.pi / 2, atol=1e-15)
    x3, y3 = axy_phase_lists(np.pi / 3)
    assert np.allclose(x3, x + np.pi / 3) and np.allclose(y3, y + np.pi / 3)


@pytest.mark.parametrize("kw", [dict(tauATilde=0.2, tauBTilde=0.2), dict(tauATilde=0.2, tauBTilde=0.5),
                                dict(tauATilde=0.0, tauBTilde=0.3), dict(nBlocks=3),
                                dict(stagger=1e-8, piTime1=2e-8)])
def test_params_rejected(kw):
    base = dict(r=1, nBlocks=4, tauATilde=0.1, tauBTilde=0.3)
    with pytest.raises(ValueError):
        AxyParams(**{**base, **kw})


def test_schedule_80us():
    p = AxyParams(r=3, nBlocks=4, tauATilde=0.1, tauBTilde=0.3)
    s1, s2 = build_schedule(p, TWO_PI * 150e3)
    assert s1.blockDuration == pytest.approx(20e-6, rel=1e-12)
    assert s1.sequenceTime == pytest.approx(80e-6, rel=1e-12)
    assert len(s1.events) == len(s2.events) == 20


def test_schedule_36us():
    p = AxyParams(r=2, nBlocks=4, tauATilde=0.1, tauBTilde=0.3)
    s1, _ = build_schedule(p, TWO_PI * 220e3)
    assert s1.sequenceTime == pytest.approx(36.36e-6, rel=1e-3)


def test_two_blocks_is_one_x_and_one_y():
    p = AxyParams(r=1, nBlocks=2, tauATilde=0.1, tauBTilde=0.3)
    s1, _ = build_schedule(p, TWO_PI * 150e3)
    x, y = axy_phase_lists()
    assert len(s1.events) == 10
    assert np.allclose([e.phase for e in s1.events], np.concatenate([x, y]))


def test_block_positions_and_symmetry():
    p = AxyParams(r=1, nBlocks=4, tauATilde=0.12, tauBTilde=0.31)
    s1, _ = build_schedule(p, TWO_PI)
    tau = s1.blockDuration
    c = np.array([e.center for e in s1.events]).reshape(4, 5)
    local = c - np.arange(4)[:, None] * tau
    assert np.allclose(local, [0.12, 0.31, 0.5, 0.69, 0.88], atol=1e-12)
    assert np.allclose(np.sort(tau - local, axis=1), local, atol=1e-12)


def test_stagger_and_no_overlap():
    tp = 75e-9
    p = AxyParams(r=3, nBlocks=4, tauATilde=0.25, tauBTilde=0.47, stagger=1.05 * tp, piTime1=tp, piTime2=tp)
    s1, s2 = build_schedule(p, TWO_PI * 150e3)
    d = np.array([e.center for e in s2.events]) - np.array([e.center for e in s1.events])
    assert np.allclose(d, 1.05 * tp, rtol=0, atol=1e-18)
    assert s2.totalTime == pytest.approx(s2.events[-1].end)
    for e in s1.events + s2.events:
        assert e.rabi * e.duration == pytest.approx(np.pi, rel=1e-12)
    ev = sorted(s1.events + s2.events, key=lambda e: e.start)
    assert all(b.start >= a.end for a, b in zip(ev, ev[1:]))


def test_overlap_rejected():
    tp = 2e-6
    p = AxyParams(r=1, nBlocks=2, tauATilde=0.01, tauBTilde=0.3, stagger=1.05 * tp, piTime1=tp, piTime2=tp)
    with pytest.raises(ValueError):
        build_schedule(p, TWO_PI * 150e3)


def test_schedule_json_roundtrip():
    tp = 75e-9
    p = AxyParams(r=3, nBlocks=4, tauATilde=0.25, tauBTilde=0.47, stagger=1.05 * tp, piTime1=tp, piTime2=tp)
    s1, _ = build_schedule(p, TWO_PI * 150e3)
    assert PulseSchedule.from_json(s1.to_json()) == s1


def test_modulation_simple():
    f = ModulationFunction((), 1.0)
    assert f(0.3) == 1 and f(0.99) == 1
    g = ModulationFunction((0.4,), 1.0)
    assert g(0.39) == 1 and g(0.41) == -1


def test_modulation_empty_schedule():
    s = PulseSchedule(events=(), blockDuration=1.0, nBlocks=2)
    f = modulation(s, 1)
    assert f.switches == () and f(1.5) == 1


def test_modulation_antiperiodic(rng):
    tau = 1.0
    f = axy_modulation(0.17, 0.41, 4, tau=tau)
    t = rng.uniform(0, 2 * tau, 1000)
    t = t[np.min(np.abs(t[:, None] - np.array(f.switches)[None, :]), axis=1) > 1e-9]
    assert np.all(f(t + tau) == -f(t))
    assert np.all(f(t + 2 * tau) == f(t))


def test_modulation_rejects_unsorted():
    with pytest.raises(ValueError):
        ModulationFunction((0.5, 0.2), 1.0)


def test_pulse_products():
    x, y = axy_phase_lists()
    seq = np.concatenate([x, y, x, y])
    U = np.eye(2, dtype=complex)
    for ph in seq:
        U = pi_rotation(ph) @ U
    assert abs(abs(np.trace(U)) / 2 - 1) < 1e-12
    # one X block followed by one Y block is exp(i theta sz) with theta = pi/2 (proportional to sz)
    V = np.eye(2, dtype=complex)
    for ph in np.concatenate([x, y]):
        V = pi_rotation(ph) @ V
    Z = np.diag([1.0, -1.0])
    assert abs(V[0, 1]) < 1e-12 and abs(V[1, 0]) < 1e-12
    assert abs(abs(np.trace(V @ Z)) / 2 - 1) < 1e-12
