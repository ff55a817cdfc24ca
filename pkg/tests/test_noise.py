"""Field-noise and radial-mode studies."""

from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from axygate import noise
from axygate.errors import TruncationOverflow
from axygate.physics import TWO_PI

OU = noise.OUParams.from_t2(50e-6, 3e-3)
RABI = TWO_PI * 20e6


@pytest.fixture(scope="module")
def four_level_base(design150):
    return noise.FourLevelConfig(rabi=RABI, schedule=noise.single_ion_schedule(design150, RABI))


def test_ou_parameters():
    assert OU.diffusion == pytest.approx(2 / (50e-6**2 * 3e-3))
    # motional-narrowing rate sigma^2 tau reproduces 1/T2
    assert OU.variance * OU.correlationTime == pytest.approx(1 / 3e-3)
    with pytest.raises(ValueError):
        noise.OUParams(-1.0, 1.0)


def test_ou_moments_and_correlation():
    dt = OU.correlationTime / 20
    x = noise.ou_trajectory(OU, dt, 20 * OU.correlationTime, seed=7, n=4000)
    assert np.var(x) == pytest.approx(OU.variance, rel=0.03)
    lag = 20
    c = np.mean(x[:, :-lag] * x[:, lag:]) / np.mean(x * x)
    assert c == pytest.approx(np.exp(-1.0), abs=0.02)


def test_ou_step_guard():
    with pytest.raises(ValueError):
        noise.ou_trajectory(OU, OU.correlationTime / 5, 1e-3)


def test_ou_seeded_reproducibility():
    a = noise.ou_trajectory(OU, 1e-6, 1e-4, seed=3)
    b = noise.ou_trajectory(OU, 1e-6, 1e-4, seed=3)
    assert np.array_equal(a, b)


@pytest.mark.slow
def test_fitted_t2():
    assert noise.fit_t2(OU, trajectories=100, seed=0) == pytest.approx(3e-3, rel=0.1)


def test_coherence_starts_at_one():
    c = noise.coherence_curve(OU, [0.0, 1e-4], trajectories=10, seed=1)
    assert c[0] == pytest.approx(1.0)
    assert c[1] < 1.0


def test_hyperfine_energies():
    E = noise.hyperfine_energies(100.0)
    assert E[2] == pytest.approx(noise.HYPERFINE)
    assert E[1] - E[2] == pytest.approx(E[2] - E[3])
    assert (E[1] - E[2]) / TWO_PI == pytest.approx(140e6, rel=1e-9)


def test_pulse_matches_lab_frame_ode():
    # reduced carrier so the lab-frame ODE oracle is affordable; level layout as in the real ion
    E = np.array([0.0, TWO_PI * 340e6, TWO_PI * 300e6, TWO_PI * 260e6])
    _, w, det, c = noise._four_level_parts(noise.FourLevelConfig(energies=tuple(E), leakage=0.2))
    zpat = np.array([0.0, 1.0, 0.0, -1.0])
    ph, t0, x = 0.7, 3.3e-8, TWO_PI * 1e5
    dur = np.pi / RABI
    V = np.zeros((4, 4))
    V[0] = c
    V = V + V.T
    Hd = np.diag(E + zpat * x)

    def rhs(t, y):
        return (-1j * (Hd + RABI * np.cos(w * t + ph) * V) @ y.reshape(4, 4)).ravel()
    Ul = solve_ivp(rhs, (t0, t0 + dur), np.eye(4, dtype=complex).ravel(), method="DOP853",
                   rtol=1e-12, atol=1e-12).y[:, -1].reshape(4, 4)
    frame = np.array([0.0, w, w, w])
    Ur = np.diag(np.exp(1j * frame * (t0 + dur))) @ Ul @ np.diag(np.exp(-1j * frame * t0))
    Up = noise._pulse(det, zpat, x, c, RABI, ph, t0, dur, carrier=w, steps_per_cycle=200)
    assert np.abs(Up - Ur).max() < 1e-5
    # the rotating-wave pulse misses the counter-rotating correction at this carrier
    assert np.abs(noise._pulse(det, zpat, x, c, RABI, ph, t0, dur) - Ur).max() > 1e-3


def test_four_level_noiseless_is_ideal(four_level_base):
    cfg = replace(four_level_base, trajectories=1, counterRotating=False)
    r = noise.four_level_run(cfg, noise.OUParams(50e-6, 0.0))
    assert r.meanInfidelity < 1e-10
    assert r.meanInfidelityFull < 1e-10


def test_four_level_leakage(four_level_base):
    cfg = replace(four_level_base, trajectories=5, leakage=0.2)
    r = noise.four_level_run(cfg, OU)
    assert r.leakagePopulation > 0
    assert r.meanInfidelity < 1e-4
    again = noise.four_level_run(cfg, OU)
    assert np.array_equal(r.infidelities, again.infidelities)


def test_full_block_ignores_spectator_phases():
    U = np.diag(np.exp(1j * np.array([0.3, 0.3, 1.0, -2.0])))
    assert noise.full_block_infidelity(U) == pytest.approx(0.0, abs=1e-15)


def test_four_level_config_checks():
    with pytest.raises(ValueError):
        noise.FourLevelConfig(leakage=1.5)
    with pytest.raises(ValueError):
        noise.four_level_run(noise.FourLevelConfig(), OU)


def test_radial_zero_coupling(design150):
    r = noise.radial_run(noise.RadialConfig(beta=0.0), design150, "psi4")
    assert r.infidelity == pytest.approx(0.0, abs=1e-12)


def test_radial_matches_closed_form(design150):
    r = noise.radial_run(noise.RadialConfig(beta=0.2), design150, "psi4")
    assert r.infidelity > 0
    assert r.infidelity == pytest.approx(r.analytic, rel=1e-6, abs=1e-12)
    assert r.branchWeight > 1 - 1e-6


def test_radial_truncation_guard():
    with pytest.raises(TruncationOverflow):
        noise.RadialConfig(beta=0.1, truncation=5).branch_count()


def test_sweep_csv_precision():
    text = noise.sweep_csv([(0.1, 1 / 3)], ["beta", "value"])
    assert text.splitlines()[1] == "0.10000000000000001,0.33333333333333331"
