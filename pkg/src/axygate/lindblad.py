"""Finite-pulse simulation of the two-ion gate with crosstalk, systematic errors and heating.

The state lives on qubits (x) com mode b (x) breathing mode c. Two integrators
are provided:

``"exact"`` (default)
    Piecewise-exact propagation. In gaps the generator is diagonal in the qubit
    basis, so each qubit block of rho is propagated by the product of two
    single-mode Liouvillian exponentials. Inside a pulse window a qubit frame
    rotating at the crosstalk detuning makes the Hamiltonian time independent;
    the window is one matrix exponential, with heating added by Strang
    splitting.
``"rk4"``
    Fixed-step fourth-order Runge-Kutta on the interaction-picture master
    equation, with a half-step audit of the first windows. Slow; used as a
    cross-check of the exact integrator.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace, asdict

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .designer import GateDesign
from .errors import StepRejection, TruncationOverflow
from .operators import (ZZ, destroy, on_ion, operator_fidelity, partial_trace_motion, pi_rotation,
                        sigma_phi, spin_signs, thermal_state, levels_for_tail, SP, SZ, I2)
from .physics import derive_couplings, heating_rates
from .analytic import peak_displacement
from .sequence import PulseEvent, build_schedule, modulation

_g = np.array([1, 0], dtype=complex)
_e = np.array([0, 1], dtype=complex)


def _ket(a, b):
    v = np.kron(a, b)
    return v / np.linalg.norm(v)


TABLE_STATES = {
    "psi1": _ket(_g, _g + _e),
    "psi2": _ket(_g + _e, _g + _e),
    "psi3": (np.kron(_g, _g + 1j * _e) + np.kron(_e, _e)) / np.sqrt(3),
    "psi4": (np.kron(_e, _g - 1j * _e) + np.kron(_g, _g)) / np.sqrt(3),
    "psi5": (np.kron(_e, _g - 1j * _e) + np.kron(_g, _g + 1j * _e)) / 2.0,
}


def qubit_state(spec) -> np.ndarray:
    """Resolve a state label ('psi1'..'psi5') or four amplitudes to a normalised vector."""
    if isinstance(spec, str):
        try:
            return TABLE_STATES[spec].copy()
        except KeyError:
            raise ValueError(f"unknown state label {spec!r}") from None
    v = np.asarray(spec, dtype=complex).ravel()
    if v.size != 4 or np.linalg.norm(v) == 0:
        raise ValueError("qubit state needs four amplitudes with non-zero norm")
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class ErrorInjection:
    rabiRelError: float = 0.0
    trapRelShift: float = 0.0
    qubitShift: float = 0.0       # rad/s, added as (qubitShift/2) sigma_z on both ions
    staggerFactor: float | None = None   # overrides the design stagger (units of t_pi)

    def __post_init__(self):
        if abs(self.rabiRelError) >= 0.2 or abs(self.trapRelShift) >= 0.2:
            raise ValueError("relative errors must have magnitude below 0.2")
        if self.staggerFactor is not None and not self.staggerFactor > 1:
            raise ValueError("staggerFactor must exceed 1")


# the systematic errors of the reference operating points, all with positive sign
REFERENCE_ERRORS = ErrorInjection(rabiRelError=0.01, trapRelShift=1e-3, qubitShift=2 * np.pi * 20e3)


@dataclass(frozen=True)
class IntegratorSettings:
    method: str = "exact"
    pulseStep: float | None = None   # s; default 2 pi / (80 delta_max)
    freeStep: float | None = None    # s; default min(2 pi / (40 nu_2), 10 ns)
    auditTol: float = 1e-7

    def __post_init__(self):
        if self.method not in ("exact", "rk4"):
            raise ValueError("method must be 'exact' or 'rk4'")
        for s in (self.pulseStep, self.freeStep):
            if s is not None and not s > 0:
                raise ValueError("steps must be positive")


@dataclass(frozen=True)
class SimConfig:
    design: GateDesign
    fockB: int | None = None         # None: sized from the predicted peak displacement
    fockC: int | None = None
    initThermal: float | tuple = 0.2
    initQubitState: object = "psi1"
    dissipation: bool = True
    heating: tuple | None = None     # (Gamma_b, Nbar_b, Gamma_c, Nbar_c); None derives it from the trap
    errors: ErrorInjection = field(default_factory=ErrorInjection)
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    pulses: str = "finite"           # or "instantaneous"
    crosstalk: bool = True
    motion: bool = True
    coShiftCouplings: bool = False
    truncationTol: float = 1e-8
    thermalTailTol: float = 1e-6
    overflowThreshold: float = 1e-6

    def __post_init__(self):
        for n in (self.fockB, self.fockC):
            if n is not None and n < 4:
                raise ValueError("truncations must be at least 4")
        if self.pulses not in ("finite", "instantaneous"):
            raise ValueError("pulses must be 'finite' or 'instantaneous'")
        ig = self.integrator
        if ig.pulseStep is not None:
            dmax = abs(derive_couplings(self.design.constants, self.design.trap).qubitSplitting)
            if ig.pulseStep > 2 * np.pi / (20 * dmax):
                raise ValueError("pulseStep does not resolve the crosstalk detuning")

    def heating_tuple(self) -> tuple:
        if self.heating is not None:
            return tuple(float(x) for x in self.heating)
        h = heating_rates(self.design.trap, constants=self.design.constants)
        return (h.gammaCom, h.nBarCom, h.gammaBre, h.nBarBre)

    def resolved(self) -> "SimConfig":
        """Copy with explicit truncations."""
        if self.fockB is not None and self.fockC is not None:
            return self
        nb, nc = auto_truncation(self.design, self.thermal_means(), self.truncationTol)
        return replace(self, fockB=self.fockB or nb, fockC=self.fockC or nc)

    def thermal_means(self) -> tuple[float, float]:
        if np.ndim(self.initThermal) == 0:
            return float(self.initThermal), float(self.initThermal)
        return tuple(float(x) for x in self.initThermal)


@dataclass
class SimReport:
    infidelities: dict
    phaseEstimate: float | None
    traceDrift: float
    hermiticityDrift: float
    minEigenvalue: float
    topPopulation: float
    truncationDelta: float | None
    wallTime: float
    method: str
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)


def auto_truncation(design: GateDesign, nBar=(0.2, 0.2), tol: float = 1e-8, minimum: int = 8) -> tuple[int, int]:
    """Fock cutoffs keeping the displaced thermal tail below ``tol`` along the ideal trajectory."""
    s1, s2 = build_schedule(design.params, design.trap.nuAxial)
    T = s1.sequenceTime
    f1 = modulation(s1, 1, horizon=max(T, s2.totalTime))
    f2 = modulation(s2, 2, horizon=max(T, s2.totalTime))
    cpl = derive_couplings(design.constants, design.trap)
    ab, ac = peak_displacement(f1, f2, cpl, design.trap.nu1, design.trap.nu2, T)
    return (levels_for_tail(ab, nBar[0], tol, minimum), levels_for_tail(ac, nBar[1], tol, minimum))


# -- model assembly ----------------------------------------------------------------

class _Model:
    """Frequencies, couplings and operators shared by both integrators."""

    def __init__(self, cfg: SimConfig):
        cfg = cfg.resolved()
        d = cfg.design
        err = cfg.errors
        self.cfg = cfg
        cpl = derive_couplings(d.constants, d.trap)
        nu1 = d.trap.nu1
        nu2 = d.trap.nu2
        s = 1.0 + err.trapRelShift
        self.nu = (nu1 * s, nu2 * s)
        co = s ** -0.5 if cfg.coShiftCouplings else 1.0
        on = 1.0 if cfg.motion else 0.0
        self.delta = (cpl.delta1 * co * on, cpl.delta2 * co * on)
        self.split = cpl.qubitSplitting
        self.qshift = err.qubitShift
        params = d.params
        if err.staggerFactor is not None:
            params = replace(params, stagger=err.staggerFactor * params.piTime1)
        s1, s2 = build_schedule(params, d.trap.nuAxial)
        rabi = (d.rabi1 * (1 + err.rabiRelError), d.rabi2 * (1 + err.rabiRelError))
        self.events = sorted((replace(e, rabi=rabi[e.ion - 1]) for e in s1.events + s2.events),
                             key=lambda e: e.center)
        self.horizon = s1.sequenceTime
        self.T = max(self.horizon, max(e.end for e in self.events)) if cfg.pulses == "finite" else self.horizon
        self.nb, self.nc = cfg.fockB, cfg.fockC
        self.m = self.nb * self.nc
        self.dim = 4 * self.m
        self.s1, self.s2 = spin_signs()
        self.splus = self.s1 + self.s2
        self.sminus = self.s2 - self.s1       # ion 1 couples to c with -Delta_2
        hb = cfg.heating_tuple() if cfg.dissipation else (0.0, 0.0, 0.0, 0.0)
        self.heat = hb

    # single-mode pieces
    def mode_ops(self, which):
        n = self.nb if which == 0 else self.nc
        a = destroy(n)
        return a, a.conj().T @ a

    def h_mode(self, which, q):
        """Lab-frame single-mode Hamiltonian for qubit configuration q (qubit shift folded into b)."""
        a, num = self.mode_ops(which)
        x = a + a.conj().T
        if which == 0:
            return self.nu[0] * num + self.delta[0] * self.splus[q] * x + 0.5 * self.qshift * self.splus[q] * np.eye(len(a))
        return self.nu[1] * num + self.delta[1] * self.sminus[q] * x

    def lindblad_super(self, which, hq=None, hq2=None):
        """Row-major superoperator of X -> -i(hq X - X hq2) + D(X) on one mode."""
        a, num = self.mode_ops(which)
        n = len(a)
        I = np.eye(n)
        gam, nbar = (self.heat[0], self.heat[1]) if which == 0 else (self.heat[2], self.heat[3])
        L = np.zeros((n * n, n * n), dtype=complex)
        if hq is not None:
            L += -1j * (np.kron(hq, I) - np.kron(I, hq2.T))
        if gam > 0:
            ad = a.conj().T
            for op, rate in ((a, gam * (nbar + 1)), (ad, gam * nbar)):
                od = op.conj().T
                k = od @ op
                L += rate * (np.kron(op, op.conj()) - 0.5 * np.kron(k, I) - 0.5 * np.kron(I, k.T))
        return L

    def full_motion_h(self):
        """H_m + H_c on the full space (block diagonal over qubit configurations)."""
        H = np.zeros((self.dim, self.dim), dtype=complex)
        for q in range(4):
            blk = np.kron(self.h_mode(0, q), np.eye(self.nc)) + np.kron(np.eye(self.nb), self.h_mode(1, q))
            H[q * self.m:(q + 1) * self.m, q * self.m:(q + 1) * self.m] = blk
        return H

    def h_motion_free_diag(self):
        nb = np.arange(self.nb)
        nc = np.arange(self.nc)
        e = (self.nu[0] * nb[:, None] + self.nu[1] * nc[None, :]).ravel()
        return np.tile(e, 4)


def _qubit_op(op2, m):
    return np.kron(op2, np.eye(m))


def hamiltonian_at(t: float, config: SimConfig) -> np.ndarray:
    """Rotating-frame Hamiltonian at time ``t`` (motion in its interaction picture)."""
    config = config.resolved()
    mod = _Model(config)
    if not -1e-15 <= t <= mod.T * (1 + 1e-12):
        raise ValueError("t outside the schedule horizon")
    m = mod.m
    b, _ = mod.mode_ops(0)
    c, _ = mod.mode_ops(1)
    Ib, Ic = np.eye(mod.nb), np.eye(mod.nc)
    xb = np.kron(b * np.exp(-1j * mod.nu[0] * t), Ic)
    xc = np.kron(Ib, c * np.exp(-1j * mod.nu[1] * t))
    xb = xb + xb.conj().T
    xc = xc + xc.conj().T
    splus = np.diag(mod.splus).astype(complex)
    sminus = np.diag(mod.sminus).astype(complex)
    H = mod.delta[0] * np.kron(splus, xb) + mod.delta[1] * np.kron(sminus, xc)
    H += 0.5 * mod.qshift * np.kron(splus, np.eye(m))
    if config.pulses == "finite":
        for ev in mod.events:
            if ev.start <= t < ev.end:
                H += _qubit_op(_pulse_qubit_h(ev, t, mod.split, config.crosstalk), m)
    return H


def _pulse_qubit_h(ev: PulseEvent, t: float, split: float, crosstalk: bool) -> np.ndarray:
    h = 0.5 * ev.rabi * on_ion(sigma_phi(ev.phase), ev.ion)
    if crosstalk:
        other = 2 if ev.ion == 1 else 1
        det = split if other == 2 else -split
        h = h + 0.5 * ev.rabi * on_ion(sigma_phi(ev.phase + det * t), other)
    return h


# -- exact piecewise integrator -----------------------------------------------------

class _ExactPropagator:
    def __init__(self, mod: _Model):
        self.mod = mod
        self.Hmot = mod.full_motion_h()
        self.dissipative = any(mod.heat)
        self._gap_cache = {}
        self._pulse_cache = {}
        self._diss_cache = {}
        # qubit configurations sharing a single-mode Hamiltonian
        self._cls = (np.unique(mod.splus, return_inverse=True)[1],
                     np.unique(mod.sminus, return_inverse=True)[1])

    def _mode_gap(self, which, dt):
        mod = self.mod
        cls = self._cls[which]
        reps = [int(np.flatnonzero(cls == k)[0]) for k in range(cls.max() + 1)]
        hs = [mod.h_mode(which, q) for q in reps]
        n = mod.nb if which == 0 else mod.nc
        if not self.dissipative:
            u = np.array([expm(-1j * h * dt) for h in hs])
            return u[cls]
        E = {}
        for i, hi in enumerate(hs):
            for j, hj in enumerate(hs):
                E[i, j] = expm(mod.lindblad_super(which, hi, hj) * dt)
        out = np.empty((4, 4, n * n, n * n), dtype=complex)
        for q in range(4):
            for q2 in range(4):
                out[q, q2] = E[cls[q], cls[q2]]
        return out

    def gap_propagators(self, dt):
        key = round(dt * 1e15)
        if key not in self._gap_cache:
            self._gap_cache[key] = (self._mode_gap(0, dt), self._mode_gap(1, dt))
        return self._gap_cache[key]

    def diss_super(self, dt):
        key = round(dt * 1e15)
        if key not in self._diss_cache:
            self._diss_cache[key] = [expm(self.mod.lindblad_super(w) * dt) for w in (0, 1)]
        return self._diss_cache[key]

    def apply_blocks(self, rho, Eb, Ec):
        """Apply mode superoperators (shared, or one per qubit block); rho has shape (S, D, D)."""
        mod = self.mod
        S = rho.shape[0]
        nb, nc = mod.nb, mod.nc
        R = rho.reshape(S, 4, nb, nc, 4, nb, nc).transpose(0, 1, 4, 2, 5, 3, 6)
        R = R.reshape(S, 4, 4, nb * nb, nc * nc)
        if Eb.ndim == 2:
            R = np.matmul(np.matmul(Eb, R), Ec.T)
        else:
            R = np.matmul(np.matmul(Eb[None], R), np.swapaxes(Ec, -1, -2)[None])
        R = R.reshape(S, 4, 4, nb, nb, nc, nc).transpose(0, 1, 3, 5, 2, 4, 6)
        return np.ascontiguousarray(R.reshape(rho.shape))

    def apply_mode_unitaries(self, rho, ub, uc):
        """rho_{qq'} -> (ub_q (x) uc_q) rho_{qq'} (ub_q' (x) uc_q')^dag."""
        mod = self.mod
        S = rho.shape[0]
        R = rho.reshape(S, 4, mod.nb, mod.nc, 4, mod.nb, mod.nc)
        R = np.einsum("qab,sqbcrde->sqacrde", ub, R, optimize=True)
        R = np.einsum("qab,sqcbrde->sqcarde", uc, R, optimize=True)
        R = np.einsum("sqcarde,rfd->sqcarfe", R, ub.conj(), optimize=True)
        R = np.einsum("sqcarfe,rge->sqcarfg", R, uc.conj(), optimize=True)
        return np.ascontiguousarray(R.reshape(rho.shape))

    def gap(self, rho, dt):
        if dt <= 0:
            return rho
        Pb, Pc = self.gap_propagators(dt)
        if self.dissipative:
            return self.apply_blocks(rho, Pb, Pc)
        return self.apply_mode_unitaries(rho, Pb, Pc)

    def pulse_unitary(self, ev: PulseEvent):
        mod = self.mod
        other = 2 if ev.ion == 1 else 1
        det = mod.split if other == 2 else -mod.split
        key = (ev.ion, round(ev.phase, 12), ev.rabi, ev.duration)
        if key not in self._pulse_cache:
            hq = 0.5 * ev.rabi * on_ion(sigma_phi(ev.phase), ev.ion)
            if mod.cfg.crosstalk:
                hq = hq + 0.5 * ev.rabi * on_ion(sigma_phi(ev.phase), other) + 0.5 * det * on_ion(SZ, other)
            K = self.Hmot + _qubit_op(hq, mod.m)
            self._pulse_cache[key] = expm(-1j * K * ev.duration)
        U = self._pulse_cache[key]
        if mod.cfg.crosstalk:
            # undo the spectator frame exp(i det t sz / 2) at both window edges
            zs = np.diag(on_ion(SZ, other)).real
            r0 = np.repeat(np.exp(0.5j * det * ev.start * zs), mod.m)
            r1 = np.repeat(np.exp(0.5j * det * ev.end * zs), mod.m)
            U = (r1[:, None] * U) * r0.conj()[None, :]
        return U

    def pulse(self, rho, ev: PulseEvent):
        U = self.pulse_unitary(ev)
        if self.dissipative:
            Db, Dc = self.diss_super(0.5 * ev.duration)
            rho = self.apply_blocks(rho, Db, Dc)
        rho = U @ rho @ U.conj().T
        if self.dissipative:
            rho = self.apply_blocks(rho, Db, Dc)
        return rho

    def ideal_pulse(self, rho, ev: PulseEvent):
        u = on_ion(pi_rotation(ev.phase), ev.ion)
        S, m = rho.shape[0], self.mod.m
        R = rho.reshape(S, 4, m, 4, m)
        R = np.einsum("qp,spatb->sqatb", u, R, optimize=True)
        R = np.einsum("sqatb,rt->sqarb", R, u.conj(), optimize=True)
        return np.ascontiguousarray(R.reshape(rho.shape))


@dataclass
class Evolution:
    rho: np.ndarray          # (S, D, D) in the motional interaction picture
    traceDrift: float
    hermiticityDrift: float
    topPopulation: float
    fockB: int
    fockC: int
    method: str
    timeseries: list | None = None   # rows of TIMESERIES_COLUMNS for the first state


TIMESERIES_COLUMNS = ("time", "trace", "p_gg", "p_ge", "p_eg", "p_ee", "n_com", "n_bre")


def _timeseries_row(t, rho, mod):
    r = rho[0]
    d = np.diag(r).real.reshape(4, mod.nb, mod.nc)
    nb = float(np.einsum("qij,i->", d, np.arange(mod.nb)))
    nc = float(np.einsum("qij,j->", d, np.arange(mod.nc)))
    return (float(t), float(np.trace(r).real), *[float(x) for x in d.sum(axis=(1, 2))], nb, nc)


def _diagnostics(rho, mod, state):
    tr = np.abs(np.einsum("sii->s", rho) - 1.0).max()
    herm = np.abs(rho - np.conj(np.swapaxes(rho, 1, 2))).max()
    diag = np.einsum("sii->si", rho).real.reshape(rho.shape[0], 4, mod.nb, mod.nc).sum(axis=1)
    top = max(diag[:, -1, :].sum(axis=1).max(), diag[:, :, -1].sum(axis=1).max())
    state["trace"] = max(state.get("trace", 0.0), float(tr))
    state["herm"] = max(state.get("herm", 0.0), float(herm))
    state["top"] = max(state.get("top", 0.0), float(top))


def initial_rho(config: SimConfig, states) -> np.ndarray:
    nbar_b, nbar_c = config.thermal_means()
    tb = thermal_state(nbar_b, config.fockB, config.thermalTailTol)
    tc = thermal_state(nbar_c, config.fockC, config.thermalTailTol)
    mot = np.kron(tb, tc)
    out = []
    for s in states:
        v = qubit_state(s)
        out.append(np.kron(np.outer(v, v.conj()), mot))
    return np.array(out)


def evolve(config: SimConfig, states=None, record: bool = False) -> Evolution:
    """Propagate one or several initial qubit states through the full schedule.

    ``states`` defaults to ``[config.initQubitState]``. The returned density
    operators carry a leading batch axis and are expressed in the interaction
    picture of the free motion, the frame used for all fidelities. With
    ``record`` the exact integrator also returns trace, qubit populations and
    mode occupations of the first state after every pulse.
    """
    states = [config.initQubitState] if states is None else list(states)
    config = config.resolved()
    mod = _Model(config)
    rho = initial_rho(config, states)
    if config.integrator.method == "rk4":
        return _evolve_rk4(config, mod, rho)
    prop = _ExactPropagator(mod)
    diag = {}
    _diagnostics(rho, mod, diag)
    t = 0.0
    ideal = config.pulses == "instantaneous"
    series = [_timeseries_row(0.0, rho, mod)] if record else None
    for ev in mod.events:
        if ideal:
            rho = prop.gap(rho, ev.center - t)
            rho = prop.ideal_pulse(rho, ev)
            t = ev.center
        else:
            rho = prop.gap(rho, ev.start - t)
            rho = prop.pulse(rho, ev)
            t = ev.end
        _diagnostics(rho, mod, diag)
        if record:
            series.append(_timeseries_row(t, rho, mod))
    rho = prop.gap(rho, mod.T - t)
    # back to the motional interaction picture
    ph = np.exp(1j * prop.mod.h_motion_free_diag() * mod.T)
    rho = ph[None, :, None] * rho * ph.conj()[None, None, :]
    _diagnostics(rho, mod, diag)
    if record:
        series.append(_timeseries_row(mod.T, rho, mod))
    return _finish(config, mod, rho, diag, "exact", series)


def _finish(config, mod, rho, diag, method, series=None):
    if diag["top"] > config.overflowThreshold:
        raise TruncationOverflow(
            f"top Fock level population reached {diag['top']:.2e} (threshold {config.overflowThreshold:.1e}); "
            f"increase fockB/fockC (now {config.fockB}/{config.fockC})")
    return Evolution(rho=rho, traceDrift=diag["trace"], hermiticityDrift=diag["herm"],
                     topPopulation=diag["top"], fockB=config.fockB, fockC=config.fockC, method=method,
                     timeseries=series)


# -- fixed-step RK4 reference integrator --------------------------------------------

class _RK4Rhs:
    def __init__(self, mod: _Model):
        self.mod = mod
        m, nb, nc = mod.m, mod.nb, mod.nc
        b = sp.csr_matrix(destroy(nb))
        c = sp.csr_matrix(destroy(nc))
        Ib, Ic = sp.identity(nb, format="csr"), sp.identity(nc, format="csr")
        splus = sp.diags(mod.splus.astype(complex))
        sminus = sp.diags(mod.sminus.astype(complex))
        self.Bop = (mod.delta[0] * sp.kron(splus, sp.kron(b, Ic))).tocsr()
        self.Cop = (mod.delta[1] * sp.kron(sminus, sp.kron(Ib, c))).tocsr()
        self.static = (0.5 * mod.qshift * sp.kron(splus, sp.identity(m))).tocsr()
        self.Im = sp.identity(m, format="csr")
        self.sp = {(ion): sp.kron(sp.csr_matrix(on_ion(SP, ion)), self.Im).tocsr() for ion in (1, 2)}
        gb, nbb, gc, nbc = mod.heat
        self.jumps = []
        for op, g, n in ((sp.kron(sp.identity(4), sp.kron(b, Ic)), gb, nbb),
                         (sp.kron(sp.identity(4), sp.kron(Ib, c)), gc, nbc)):
            if g > 0:
                op = op.tocsr()
                self.jumps.append((np.sqrt(g * (n + 1)) * op))
                self.jumps.append((np.sqrt(g * n) * op.conj().T).tocsr())
        self.heff_diss = sum((-0.5j) * (L.conj().T @ L) for L in self.jumps) if self.jumps else None

    def __call__(self, t, rho, ev):
        mod = self.mod
        e1 = np.exp(-1j * mod.nu[0] * t)
        e2 = np.exp(-1j * mod.nu[1] * t)
        Y = e1 * (self.Bop @ rho) + np.conj(e1) * (self.Bop.conj().T @ rho)
        Y += e2 * (self.Cop @ rho) + np.conj(e2) * (self.Cop.conj().T @ rho)
        Y += self.static @ rho
        if ev is not None:
            a = 0.5 * ev.rabi * np.exp(1j * ev.phase)
            P = self.sp[ev.ion]
            Y += a * (P @ rho) + np.conj(a) * (P.conj().T @ rho)
            if mod.cfg.crosstalk:
                other = 2 if ev.ion == 1 else 1
                det = mod.split if other == 2 else -mod.split
                a2 = a * np.exp(1j * det * t)
                P2 = self.sp[other]
                Y += a2 * (P2 @ rho) + np.conj(a2) * (P2.conj().T @ rho)
        Y = -1j * Y
        if self.heff_diss is not None:
            Y += -1j * (self.heff_diss @ rho)
            out = Y + Y.conj().T
            for L in self.jumps:
                out += L @ (L @ rho.conj().T).conj().T
            return out
        return Y + Y.conj().T


def _rk4_window(f, rho, t0, t1, h, ev):
    n = max(1, int(np.ceil((t1 - t0) / h - 1e-9)))
    dt = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = f(t, rho, ev)
        k2 = f(t + dt / 2, rho + dt / 2 * k1, ev)
        k3 = f(t + dt / 2, rho + dt / 2 * k2, ev)
        k4 = f(t + dt, rho + dt * k3, ev)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    return rho


def default_steps(mod: _Model, ig: IntegratorSettings) -> tuple[float, float]:
    dmax = max(abs(mod.split), max((e.rabi for e in mod.events), default=0.0))
    hp = ig.pulseStep or 2 * np.pi / (80 * dmax)
    hf = ig.freeStep or min(2 * np.pi / (40 * mod.nu[1]), 10e-9)
    return hp, hf


def _evolve_rk4(config, mod, rho_batch):
    if config.pulses != "finite":
        raise ValueError("the rk4 integrator supports finite pulses only")
    f = _RK4Rhs(mod)
    hp, hf = default_steps(mod, config.integrator)
    windows = []
    t = 0.0
    for ev in mod.events:
        if ev.start > t:
            windows.append((t, ev.start, hf, None))
        windows.append((ev.start, ev.end, hp, ev))
        t = ev.end
    if mod.T > t:
        windows.append((t, mod.T, hf, None))
    out = []
    diag = {}
    _diagnostics(rho_batch, mod, diag)
    for rho in rho_batch:
        for k, (a, b, h, ev) in enumerate(windows):
            new = _rk4_window(f, rho, a, b, h, ev)
            if k < 2:
                ref = _rk4_window(f, rho, a, b, h / 2, ev)
                err = np.abs(new - ref).max()
                if err > config.integrator.auditTol:
                    raise StepRejection(f"half-step audit difference {err:.2e} on window [{a:.3e}, {b:.3e}]")
            rho = new
        out.append(rho)
    rho = np.array(out)
    _diagnostics(rho, mod, diag)
    return _finish(config, mod, rho, diag, "rk4")


# -- targets and fidelities -----------------------------------------------------------

def ideal_pulse_product(design: GateDesign) -> np.ndarray:
    """Two-qubit product of all ideal pi pulses (time ordered per ion)."""
    s1, s2 = build_schedule(design.params, design.trap.nuAxial)
    U = np.eye(4, dtype=complex)
    for ev in sorted(s1.events + s2.events, key=lambda e: e.center):
        U = on_ion(pi_rotation(ev.phase), ev.ion) @ U
    return U


def target_state(design: GateDesign, initState, phase: float | None = None) -> np.ndarray:
    phi = design.phaseSign * design.targetPhase if phase is None else phase
    v = qubit_state(initState)
    return ideal_pulse_product(design) @ (np.exp(1j * phi * np.diag(ZZ)) * v)


def state_infidelity(rho: np.ndarray, design: GateDesign, initState, phase: float | None = None,
                     tol: float = 1e-6) -> float:
    """1 - <psi_t| Tr_motion(rho) |psi_t> for the ideal phase gate applied to ``initState``."""
    rho = np.asarray(rho)
    tr = np.trace(rho).real
    if abs(tr - 1) > tol:
        raise ValueError(f"density operator trace {tr} is not normalised")
    rq = partial_trace_motion(rho) if rho.shape[0] > 4 else rho
    psi = target_state(design, initState, phase)
    return float(min(1.0, max(0.0, 1.0 - np.vdot(psi, rq @ psi).real)))


def phase_estimate(rho: np.ndarray, design: GateDesign, reference: float | None = None) -> float:
    """Two-qubit phase from the coherences of the evolved (|g>+|e>)(|g>+|e>) state.

    Local z rotations cancel in the product rho[gg,ge] rho[ee,eg]; the branch is
    chosen nearest to ``reference`` (default: the design phase).
    """
    rq = partial_trace_motion(rho) if rho.shape[0] > 4 else rho
    P = ideal_pulse_product(design)
    rq = P.conj().T @ rq @ P
    raw = np.angle(rq[0, 1] * rq[3, 2]) / 4.0
    ref = design.phaseSign * design.targetPhase if reference is None else reference
    return float(raw + np.round((ref - raw) / (np.pi / 2)) * np.pi / 2)


# -- reporting ------------------------------------------------------------------------

TABLE_LABELS = ("psi1", "psi2", "psi3", "psi4", "psi5")


def run_table(config: SimConfig, states=TABLE_LABELS, truncation_check: bool = False) -> SimReport:
    """Evolve a batch of initial states and collect infidelities and hygiene metrics."""
    t0 = time.perf_counter()
    states = list(states)
    run_states = states if "psi2" in states else states + ["psi2"]
    ev = evolve(config, run_states)
    inf = {s: state_infidelity(ev.rho[i], config.design, s) for i, s in enumerate(run_states) if s in states}
    phase = phase_estimate(ev.rho[run_states.index("psi2")], config.design)
    mins = min(float(np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min()) for r in ev.rho)
    delta = None
    if truncation_check:
        big = replace(config, fockB=ev.fockB + 4, fockC=ev.fockC + 4)
        ev2 = evolve(big, states)
        inf2 = {s: state_infidelity(ev2.rho[i], config.design, s) for i, s in enumerate(states)}
        delta = max(abs(inf[s] - inf2[s]) for s in states)
    return SimReport(infidelities=inf, phaseEstimate=phase, traceDrift=ev.traceDrift,
                     hermiticityDrift=ev.hermiticityDrift, minEigenvalue=mins, topPopulation=ev.topPopulation,
                     truncationDelta=delta, wallTime=time.perf_counter() - t0, method=ev.method,
                     meta={"fockB": ev.fockB, "fockC": ev.fockC, "pulses": config.pulses,
                           "dissipation": config.dissipation, "heating": list(config.heating_tuple())})


# -- crosstalk propagators -----------------------------------------------------------

def crosstalk_propagator(omega: float, delta: float, phase: float, t0: float) -> np.ndarray:
    """Factorised two-qubit propagator of one ion-1 pi pulse starting at ``t0``.

    Ion 2 sees the same drive detuned by ``delta``. Returns
    exp(-i (Omega/2) s1^phi t_pi) exp(i (delta/2) s2^z t_pi) exp(-i gamma t_pi s~2)
    with gamma = sqrt(Omega^2 + delta^2)/2 and s~2 = [(Omega/2) s^{phi+delta t0} + (delta/2) s^z]/gamma.
    """
    if not (omega > 0 and delta > 0):
        raise ValueError("omega and delta must be positive")
    tp = np.pi / omega
    gam = 0.5 * np.hypot(omega, delta)
    st = (0.5 * omega * sigma_phi(phase + delta * t0) + 0.5 * delta * SZ) / gam
    c, s = np.cos(gam * tp), np.sin(gam * tp)
    rot = c * I2 - 1j * s * st
    u1 = np.cos(np.pi / 2) * I2 - 1j * np.sin(np.pi / 2) * sigma_phi(phase)
    zph = np.diag(np.exp(0.5j * delta * tp * np.diag(SZ).real))
    return np.kron(u1, zph @ rot)


def dephasing_factorization(omega: float, delta: float, phase: float) -> np.ndarray:
    """Crosstalk propagator with the spectator rotation dropped (exact at the magic Rabi frequency)."""
    tp = np.pi / omega
    zph = np.diag(np.exp(0.5j * delta * tp * np.diag(SZ).real))
    return np.kron(pi_rotation(phase), zph)


def crosstalk_ladder(omegas, delta: float, nPulses: int = 20, phases=None) -> np.ndarray:
    """Fidelity between back-to-back ion-1 pulses with and without spectator crosstalk.

    For each Rabi frequency, ``nPulses`` pulses (AXY phase pattern by default)
    are applied without gaps; the bare reference acts on ion 1 only.
    """
    from .sequence import axy_phase_lists
    if phases is None:
        x, y = axy_phase_lists()
        blocks = [x if k % 2 == 0 else y for k in range(-(-nPulses // 5))]
        phases = np.concatenate(blocks)[:nPulses]
    out = []
    for om in omegas:
        tp = np.pi / om
        U = np.eye(4, dtype=complex)
        V = np.eye(4, dtype=complex)
        for k, ph in enumerate(phases):
            U = crosstalk_propagator(om, delta, ph, k * tp) @ U
            V = on_ion(pi_rotation(ph), 1) @ V
        out.append(operator_fidelity(U, V))
    return np.array(out)


def staggered_crosstalk_product(design_phases1, design_phases2, delta: float, omega: float, k: int | None = None):
    """Ideal pi pulses on alternating ions, each followed by its spectator dephasing factor.

    Returns (propagator with dephasing factors, bare pulse product).
    """
    tp = np.pi / omega
    U = np.eye(4, dtype=complex)
    V = np.eye(4, dtype=complex)
    zph = lambda d: np.diag(np.exp(0.5j * d * tp * np.diag(SZ).real))
    for p1, p2 in zip(design_phases1, design_phases2):
        U = np.kron(pi_rotation(p1), zph(delta)) @ U
        V = on_ion(pi_rotation(p1), 1) @ V
        U = np.kron(zph(-delta), pi_rotation(p2)) @ U
        V = on_ion(pi_rotation(p2), 2) @ V
    return U, V


# -- ideal-pulse (Magnus) predictions -------------------------------------------------

def magnus_infidelity(design: GateDesign, initState, trapRelShift: float = 0.0, nBar=(0.2, 0.2),
                      levels=(12, 8), stagger: bool = True) -> float:
    """State infidelity of the ideal-pulse propagator when the trap frequencies are scaled by 1 + shift.

    Pulses are instantaneous at the designed centres; the couplings stay nominal.
    """
    from .analytic import MODE_SIGN, g_integral, magnus_unitary, MagnusResult, phase_integral
    p = design.params if stagger else replace(design.params, stagger=0.0, piTime1=0.0, piTime2=0.0)
    s1, s2 = build_schedule(p, design.trap.nuAxial)
    T = s1.sequenceTime
    f1 = modulation(s1, 1, horizon=T)
    f2 = modulation(s2, 2, horizon=T)
    cpl = derive_couplings(design.constants, design.trap)
    nus = (design.trap.nu1 * (1 + trapRelShift), design.trap.nu2 * (1 + trapRelShift))
    d = (cpl.delta1, cpl.delta2)
    g = np.array([[g_integral(f, nu, 0.0, T) for nu in nus] for f in (f1, f2)])
    # displacements are defined in the interaction picture of the shifted modes
    phase = sum(MODE_SIGN[0, m] * MODE_SIGN[1, m] * d[m] ** 2 * phase_integral(f1, f2, nus[m], T) for m in range(2))
    res = MagnusResult(displacement=MODE_SIGN * np.array(d)[None, :] * g, phase=float(phase), g=g)
    U = magnus_unitary(res, *levels)
    mot = np.kron(thermal_state(nBar[0], levels[0], 1.0), thermal_state(nBar[1], levels[1], 1.0))
    v = qubit_state(initState)
    rho = U @ np.kron(np.outer(v, v.conj()), mot) @ U.conj().T
    rq = partial_trace_motion(rho)
    psi = np.exp(1j * design.phaseSign * design.targetPhase * np.diag(ZZ)) * v
    return float(1.0 - np.vdot(psi, rq @ psi).real)
