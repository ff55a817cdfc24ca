"""Independent numerical oracles shared by the unit and acceptance tests."""

import mpmath as mp
import numpy as np
from scipy.integrate import solve_ivp

from axygate.analytic import MODE_SIGN
from axygate.operators import destroy, spin_signs
from axygate.sequence import ModulationFunction

mp.mp.dps = 30


def g_quad(f: ModulationFunction, nu: float, t: float) -> complex:
    """Adaptive quadrature of f(t') exp(-i nu t') with the switch times as breakpoints."""
    pts = [0.0, *[s for s in f.switches if 0 < s < t], t]
    re = im = mp.mpf(0)
    for a, b in zip(pts[:-1], pts[1:]):
        s = f(0.5 * (a + b))
        re += s * mp.quad(lambda x: mp.cos(nu * x), [a, b])
        im -= s * mp.quad(lambda x: mp.sin(nu * x), [a, b])
    return complex(re, im)


def phase_ode(f1: ModulationFunction, f2: ModulationFunction, nu: float, t: float) -> float:
    """Integrate G1, G2 and the phase kernel together as an ODE, piece by piece."""
    edges = sorted({0.0, t, *[s for s in f1.switches if 0 < s < t], *[s for s in f2.switches if 0 < s < t]})
    y = np.zeros(3, dtype=complex)
    for a, b in zip(edges[:-1], edges[1:]):
        s1, s2 = f1(0.5 * (a + b)), f2(0.5 * (a + b))

        def rhs(x, y):
            e = np.exp(-1j * nu * x)
            return [s1 * e, s2 * e, (s1 * y[1] + s2 * y[0]) / e]
        y = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=1e-13, atol=1e-16).y[:, -1]
    return float(y[2].imag)


def ode_propagator(f1, f2, deltas, nus, n, T):
    """Time-ordered propagator of the spin-dependent force in the interaction picture, block by spin sector."""
    b = destroy(n)
    eye = np.eye(n)
    ops = (np.kron(b, eye), np.kron(eye, b))
    s1, s2 = spin_signs()
    edges = sorted({0.0, T, *f1.switches, *f2.switches})
    m = n * n
    U = np.zeros((4 * m, 4 * m), dtype=complex)
    for q in range(4):
        u = np.eye(m, dtype=complex)
        for a, c in zip(edges[:-1], edges[1:]):
            sg = (f1(0.5 * (a + c)), f2(0.5 * (a + c)))
            amp = [(s1[q] * MODE_SIGN[0, k] * sg[0] + s2[q] * MODE_SIGN[1, k] * sg[1]) * deltas[k] for k in range(2)]

            def rhs(t, y):
                h = np.zeros((m, m), dtype=complex)
                for k in range(2):
                    x = ops[k] * np.exp(-1j * nus[k] * t)
                    h += amp[k] * (x + x.conj().T)
                return (-1j * h @ y.reshape(m, m)).ravel()
            u = solve_ivp(rhs, (a, c), u.ravel(), method="DOP853", rtol=1e-12, atol=1e-13).y[:, -1].reshape(m, m)
        U[q * m:(q + 1) * m, q * m:(q + 1) * m] = u
    return U


def low_block(U, n, keep=6):
    idx = [q * n * n + i * n + j for q in range(4) for i in range(keep) for j in range(keep)]
    return U[np.ix_(idx, idx)]
