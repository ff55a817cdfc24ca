"""Fast invariant checks run by ``axygate validate``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import analytic
from .lindblad import crosstalk_propagator, dephasing_factorization, staggered_crosstalk_product
from .operators import operator_fidelity
from .physics import TWO_PI, TrapConfig, heating_rates, magic_rabi
from .sequence import axy_phase_lists


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def check_com_decoupling(rng, samples: int = 50) -> Check:
    worst = 0.0
    for n in (2, 4, 8):
        for r in (1, 2, 3):
            b = rng.uniform(0.02, 0.5, samples)
            a = rng.uniform(0.01, 1.0, samples) * b
            worst = max(worst, float(np.max(np.abs(analytic.axy_g_tilde(a, b, r, n, mode=1)))))
    return Check("com-mode residual vanishes at multiples of the period", worst < 1e-10, f"max {worst:.2e}")


def check_frequency_invariance(rng) -> Check:
    from .sequence import axy_modulation
    worst = 0.0
    a, b = 0.13, 0.37
    base = None
    for nu in (TWO_PI * 150e3 * c for c in (1.0, 0.5, 2.0, 7.0)):
        tau = TWO_PI * 2 / nu
        f = axy_modulation(a, b, 4, tau=tau)
        p = analytic.phase_tilde(f, f, 2, 4, tau=tau)[2]
        g = nu * np.sqrt(3) * analytic.g_integral(f, np.sqrt(3) * nu)
        if base is None:
            base = (p, g)
        else:
            worst = max(worst, abs(p - base[0]) / abs(base[0]), abs(g - base[1]) / abs(base[1]))
    return Check("dimensionless phase and residual independent of the trap frequency", bool(worst < 1e-9),
                 f"max rel {worst:.2e}")


def check_magic_rabi() -> Check:
    delta = TWO_PI * 25.7e6
    worst = 0.0
    for k in (1, 2, 3):
        om = magic_rabi(delta, k)
        for ph in (0.0, 0.7, np.pi / 2):
            U = crosstalk_propagator(om, delta, ph, 0.0)
            worst = max(worst, 1.0 - operator_fidelity(U, dephasing_factorization(om, delta, ph)))
    return Check("crosstalk reduces to spectator dephasing at the magic Rabi frequency", worst < 1e-10,
                 f"max 1-F {worst:.2e}")


def check_dephasing_cancellation() -> Check:
    x, y = axy_phase_lists()
    ph = np.concatenate([x, y, x, y])
    U, V = staggered_crosstalk_product(ph, ph, TWO_PI * 25.7e6, magic_rabi(TWO_PI * 25.7e6, 2))
    inf = 1.0 - operator_fidelity(U, V)
    return Check("spectator dephasing cancels over staggered XYXY", inf < 1e-9, f"1-F {inf:.2e}")


def check_heating() -> Check:
    h = heating_rates(TrapConfig.from_hz(150e3, 150.0))
    ok = abs(h.rateCom / 133 - 1) < 0.03 and abs(h.rateBre / 9 - 1) < 0.03
    return Check("heating rates at 150 kHz, 150 um", ok, f"{h.rateCom:.1f}, {h.rateBre:.2f} quanta/s")


def run_invariants(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    return [check_com_decoupling(rng), check_frequency_invariance(rng), check_magic_rabi(),
            check_dephasing_cancellation(), check_heating()]
