"""Magnetic-field noise on a four-level hyperfine manifold, and coupling to a radial mode."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm
from scipy.special import eval_laguerre

from .designer import GateDesign
from .errors import TruncationOverflow
from .operators import destroy, on_ion, operator_fidelity, pi_rotation, spin_signs
from .physics import GAMMA_E_ROUNDED, derive_couplings
from .sequence import PulseEvent, PulseSchedule, build_schedule, modulation

TWO_PI = 2.0 * np.pi
HYPERFINE = TWO_PI * 12.642812118e9      # rad/s, 171Yb+ ground-state hyperfine splitting
TESLA_PER_GAUSS = 1e-4


# -- Ornstein-Uhlenbeck field noise ---------------------------------------------------

@dataclass(frozen=True)
class OUParams:
    """Stationary OU process X(t) in rad/s.

    ``diffusion`` is c in dX = -X/tau dt + sqrt(c) dW, so the stationary variance
    is c*tau/2.
    """

    correlationTime: float
    diffusion: float
    targetT2: float | None = None

    def __post_init__(self):
        if not (self.correlationTime > 0 and self.diffusion >= 0):
            raise ValueError("correlation time must be positive and diffusion non-negative")

    @property
    def variance(self) -> float:
        return 0.5 * self.diffusion * self.correlationTime

    @classmethod
    def from_t2(cls, correlationTime: float, T2: float) -> "OUParams":
        """Noise whose motional-narrowing dephasing rate sigma^2 tau equals 1/T2.

        This gives c = 2 / (tau^2 T2).
        """
        return cls(correlationTime, 2.0 / (correlationTime**2 * T2), T2)


def ou_trajectory(params: OUParams, dt: float, horizon: float, seed=None, n: int | None = None) -> np.ndarray:
    """Exact-update OU samples X(k dt), k = 0..N, with X(0) drawn from the stationary law.

    ``n`` draws that many independent paths at once (shape ``(n, N+1)``).
    """
    if not dt < params.correlationTime / 10:
        raise ValueError("dt must be below a tenth of the correlation time")
    steps = int(round(horizon / dt))
    rng = np.random.default_rng(seed)
    shape = (steps + 1,) if n is None else (n, steps + 1)
    xi = rng.standard_normal(shape)
    a = np.exp(-dt / params.correlationTime)
    s = np.sqrt(params.variance)
    b = s * np.sqrt(1.0 - a * a)
    x = np.empty(shape)
    x[..., 0] = s * xi[..., 0]
    for k in range(1, steps + 1):
        x[..., k] = a * x[..., k - 1] + b * xi[..., k]
    return x


def coherence_curve(params: OUParams, lags, trajectories: int = 100, horizon: float | None = None,
                    dt: float | None = None, seed=None) -> np.ndarray:
    """|<exp(i int_t0^{t0+lag} X)>| averaged over trajectories and time origins t0.

    Each trajectory is long (default 40 T2) and every sample point serves as an
    origin, which reduces the scatter of the estimate at a fixed trajectory count.
    """
    dt = dt or params.correlationTime / 20
    lags = np.asarray(lags, dtype=float)
    horizon = horizon or (lags.max() + 40 * (params.targetT2 or lags.max()))
    x = ou_trajectory(params, dt, horizon, seed=seed, n=trajectories)
    phi = np.concatenate([np.zeros((trajectories, 1)), np.cumsum(0.5 * (x[:, 1:] + x[:, :-1]) * dt, axis=1)], axis=1)
    out = np.empty(lags.size)
    for i, L in enumerate(lags):
        k = int(round(L / dt))
        d = phi[:, k:] - phi[:, :phi.shape[1] - k]
        out[i] = abs(np.mean(np.exp(1j * d)))
    return out


def fit_t2(params: OUParams, trajectories: int = 100, seed=None, window=(0.1, 1.0), points: int = 25) -> float:
    """T2 from a straight-line fit of log coherence over ``window`` (in units of the target T2)."""
    T2 = params.targetT2 or 1.0 / (params.variance * params.correlationTime)
    lags = np.linspace(window[0] * T2, window[1] * T2, points)
    c = coherence_curve(params, lags, trajectories=trajectories, seed=seed)
    slope = np.polyfit(lags, np.log(c), 1)[0]
    return float(-1.0 / slope)


# -- four-level hyperfine model ------------------------------------------------------

def hyperfine_energies(field_gauss: float = 100.0, gammaE: float = GAMMA_E_ROUNDED) -> np.ndarray:
    """E0..E3 (rad/s): |F=0>, then F=1 with m=+1, 0, -1; first-order Zeeman only."""
    z = 0.5 * gammaE * field_gauss * TESLA_PER_GAUSS
    return np.array([0.0, HYPERFINE + z, HYPERFINE, HYPERFINE - z])


@dataclass(frozen=True)
class FourLevelConfig:
    energies: tuple = tuple(hyperfine_energies())
    leakage: float = 0.0
    rabi: float = TWO_PI * 20e6
    schedule: PulseSchedule | None = None
    trajectories: int = 100
    seed: int = 0
    noiseStep: float | None = None           # OU sampling step; default tau/20
    counterRotating: bool = True
    carrier: float | None = None             # drive frequency; default E1 - E0
    stepsPerCycle: int = 40

    def __post_init__(self):
        if not 0 <= self.leakage < 1:
            raise ValueError("leakage must be in [0, 1)")
        if self.trajectories < 1:
            raise ValueError("need at least one trajectory")


def single_ion_schedule(design: GateDesign, rabi: float) -> PulseSchedule:
    """Ion-1 pulses of a design replayed with a different Rabi frequency."""
    s1, _ = build_schedule(replace(design.params, stagger=0.0, piTime1=0.0, piTime2=0.0), design.trap.nuAxial)
    tp = np.pi / rabi
    ev = tuple(PulseEvent(1, e.center, tp, e.phase, rabi) for e in s1.events)
    return PulseSchedule(events=ev, blockDuration=s1.blockDuration, nBlocks=s1.nBlocks)


@dataclass
class FourLevelResult:
    meanInfidelity: float            # qubit 2x2 block against the identity
    meanInfidelityFull: float        # full 4x4, spectator-level phases left free
    infidelities: np.ndarray
    leakagePopulation: float


def _four_level_parts(cfg: FourLevelConfig):
    E = np.asarray(cfg.energies, dtype=float)
    w = E[1] - E[0]
    det = E - E[0] - np.array([0.0, w, w, w])   # rotating-frame level offsets
    c = np.array([0.0, 1.0, cfg.leakage, cfg.leakage])
    return E, w, det, c


def four_level_run(config: FourLevelConfig, ou: OUParams) -> FourLevelResult:
    """Mean propagator infidelity of a pi-pulse train on the four-level manifold.

    Works in the frame rotating at the drive (resonant with 0 <-> 1), which
    removes the GHz carrier but keeps the full cosine drive, so the
    counter-rotating terms appear at twice the carrier. X(t) is frozen at each
    pulse centre (pulses are far shorter than the correlation time); gaps are
    exact diagonal phases with the trapezoid integral of X. Trajectories use independent child seeds of
    ``config.seed`` (``numpy.random.SeedSequence.spawn``).
    """
    if config.schedule is None:
        raise ValueError("a pulse schedule is required")
    E, w, det, c = _four_level_parts(config)
    carrier = config.carrier or w
    ev = sorted(config.schedule.events, key=lambda e: e.center)
    T = config.schedule.horizon
    dt = config.noiseStep or ou.correlationTime / 20
    zpat = np.array([0.0, 1.0, 0.0, -1.0])
    children = np.random.SeedSequence(config.seed).spawn(config.trajectories)
    qubit_inf, full_inf, leak = [], [], []
    for ss in children:
        x = ou_trajectory(ou, dt, T + dt, seed=ss)
        tgrid = np.arange(x.size) * dt
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (x[1:] + x[:-1]) * dt)])
        integ = lambda t: np.interp(t, tgrid, cum)
        U = np.eye(4, dtype=complex)
        t = 0.0
        for e in ev:
            U = _free(det, zpat, integ(e.start) - integ(t), e.start - t) @ U
            xc = float(np.interp(e.center, tgrid, x))
            U = _pulse(det, zpat, xc, c, e.rabi, e.phase, e.start, e.duration,
                       carrier if config.counterRotating else None, config.stepsPerCycle) @ U
            t = e.end
        U = _free(det, zpat, integ(T) - integ(t), T - t) @ U
        qubit_inf.append(1.0 - operator_fidelity(U[:2, :2], np.eye(2)))
        full_inf.append(full_block_infidelity(U))
        leak.append(float(np.sum(np.abs(U[2:, :2]) ** 2) / 2))
    q = np.array(qubit_inf)
    return FourLevelResult(float(q.mean()), float(np.mean(full_inf)), q, float(np.mean(leak)))


def full_block_infidelity(U: np.ndarray) -> float:
    """1 - F of a 4x4 propagator against identity on the qubit block times arbitrary spectator phases.

    The spectator levels carry unobservable phases (Zeeman detuning, field noise),
    so each one is matched by its own best phase.
    """
    return float(1.0 - (abs(np.trace(U[:2, :2])) + abs(U[2, 2]) + abs(U[3, 3])) / 4.0)


def _free(det, zpat, phase_noise, dt):
    return np.diag(np.exp(-1j * (det * dt + zpat * phase_noise)))


def _drive_terms(det, zpat, x, c, rabi, phase):
    """Static part and e^{-2i omega t} coefficient of the rotating-frame Hamiltonian during a pulse."""
    coup = np.outer(np.eye(4)[0], c)
    h = 0.5 * rabi * np.exp(1j * phase) * coup                 # (Omega/2) e^{i phi} sum c_k |0><k|
    H0 = np.diag(det + zpat * x).astype(complex) + h + h.conj().T
    A = 0.5 * rabi * np.exp(-1j * phase) * coup                # multiplies e^{-2i omega t}; h.c. added later
    return H0, A


def _stepped(H0, A, carrier, t0, dur, steps):
    """Midpoint exponentials of H0 + A e^{-2i w t} + h.c. over ``steps`` equal slices of [t0, t0 + dur]."""
    h = dur / steps
    tm = t0 + (np.arange(steps) + 0.5) * h
    ph = np.exp(-2j * carrier * tm)[:, None, None]
    H = H0[None] + A[None] * ph + A.conj().T[None] * ph.conj()
    Us = expm(-1j * h * H)
    U = np.eye(4, dtype=complex)
    for u in Us:
        U = u @ U
    return U


def _pulse(det, zpat, x, c, rabi, phase, t0, dur, carrier=None, steps_per_cycle=40):
    """One square pulse starting at lab time ``t0``.

    With ``carrier`` set the counter-rotating drive is kept exactly: the
    Hamiltonian repeats with period pi/carrier, so one period is stepped finely
    and raised to the number of whole periods, and the remainder is stepped
    separately. Without it the rotating-wave pulse is a single exponential.
    """
    H0, A = _drive_terms(det, zpat, x, c, rabi, phase)
    if carrier is None:
        return expm(-1j * H0 * dur)
    period = np.pi / carrier
    k = int(dur // period)
    rest = dur - k * period
    U = np.linalg.matrix_power(_stepped(H0, A, carrier, t0, period, steps_per_cycle), k)
    if rest > 0:
        n = max(1, int(np.ceil(steps_per_cycle * rest / period)))
        U = _stepped(H0, A, carrier, t0 + k * period, rest, n) @ U
    return U


def leakage_sweep(base: FourLevelConfig, ou: OUParams, eps_values) -> list[tuple[float, float, float]]:
    """(epsilon, mean qubit-block infidelity, mean full infidelity) for each leakage value."""
    out = []
    for e in eps_values:
        r = four_level_run(replace(base, leakage=float(e)), ou)
        out.append((float(e), r.meanInfidelity, r.meanInfidelityFull))
    return out


# -- radial mode ----------------------------------------------------------------------

@dataclass(frozen=True)
class RadialConfig:
    beta: float = 0.0
    nuRadial: float = TWO_PI * 2.5e6
    thermalN: float = 2.0
    truncation: int | None = None     # branch cutoff; default from weightTol
    weightTol: float = 1e-6

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not self.nuRadial > 0 or self.thermalN < 0:
            raise ValueError("invalid radial mode parameters")

    def branch_count(self) -> int:
        if self.thermalN == 0:
            return 1
        x = self.thermalN / (1 + self.thermalN)
        need = int(np.ceil(np.log(self.weightTol) / np.log(x)))
        if self.truncation is not None:
            if self.truncation < need:
                raise TruncationOverflow(
                    f"radial truncation {self.truncation} leaves more than {self.weightTol:g} thermal weight")
            return self.truncation
        return need


@dataclass
class RadialResult:
    infidelity: float
    branchWeight: float
    branches: int
    analytic: float


def _radial_schedule(design: GateDesign):
    p = replace(design.params, piTime1=0.0, piTime2=0.0)
    s1, s2 = build_schedule(p, design.trap.nuAxial)
    return s1, s2, s1.sequenceTime


def radial_run(config: RadialConfig, design: GateDesign, initQubitState) -> RadialResult:
    """Infidelity between final states evolved with and without a radial-mode coupling.

    The radial mode couples through beta*Delta_1 (d + d^dag)(s1z + s2z). With
    ideal pulses every coupling term is diagonal in the qubit basis, so the
    axial modes drop out of the overlap and only qubits (x) radial mode are
    evolved. Fock branches of the thermal radial state are propagated as pure
    states and their fidelities averaged with Boltzmann weights.
    """
    from .lindblad import qubit_state
    s1, s2, T = _radial_schedule(design)
    cpl = derive_couplings(design.constants, design.trap)
    dr = config.beta * cpl.delta1
    nb = config.branch_count()
    x = config.thermalN / (1 + config.thermalN) if config.thermalN > 0 else 0.0
    w = (1 - x) * x ** np.arange(nb)
    # radial displacements stay small, so a few extra levels above the top branch suffice
    dim = nb + 12
    d = destroy(dim)
    num = np.diag(np.arange(dim)).astype(complex)
    sp1, sp2 = spin_signs()
    splus = sp1 + sp2
    hq = [config.nuRadial * num + dr * splus[q] * (d + d.conj().T) for q in range(4)]
    events = sorted(s1.events + s2.events, key=lambda e: e.center)
    v = qubit_state(initQubitState)
    fids = []
    for n in range(nb):
        psi = np.zeros((4, dim), dtype=complex)
        psi[:, n] = v
        ref = psi.copy()
        t = 0.0
        for e in events + [None]:
            tn = T if e is None else e.center
            if tn > t:
                for q in range(4):
                    psi[q] = expm(-1j * hq[q] * (tn - t)) @ psi[q]
                ref *= np.exp(-1j * config.nuRadial * np.arange(dim) * (tn - t))[None, :]
            if e is not None:
                u = on_ion(pi_rotation(e.phase), e.ion)
                psi = u @ psi
                ref = u @ ref
            t = tn
        if np.sum(np.abs(psi[:, -3:]) ** 2) > 1e-10:
            raise TruncationOverflow("radial displacement reaches the top of the branch space")
        fids.append(abs(np.vdot(ref, psi)) ** 2)
    fid = float(np.dot(w, fids) / w.sum())
    return RadialResult(infidelity=1.0 - fid, branchWeight=float(w.sum()), branches=nb,
                        analytic=radial_infidelity_analytic(config, design, initQubitState))


def radial_infidelity_analytic(config: RadialConfig, design: GateDesign, initQubitState) -> float:
    """Closed form of :func:`radial_run`: Laguerre overlaps of the residual displacement plus the extra phase."""
    from .analytic import g_integral, phase_integral
    from .lindblad import qubit_state
    s1, s2, T = _radial_schedule(design)
    f1 = modulation(s1, 1, horizon=T)
    f2 = modulation(s2, 2, horizon=T)
    cpl = derive_couplings(design.constants, design.trap)
    dr = config.beta * cpl.delta1
    nu = config.nuRadial
    g1 = g_integral(f1, nu, 0.0, T)
    g2 = g_integral(f2, nu, 0.0, T)
    # both ions couple with +Delta_r; the induced phase multiplies s1 s2 (single-ion parts are global)
    phr = dr**2 * phase_integral(f1, f2, nu, T)
    # self terms Im int f_j G_j e^{i nu t} give a state-independent phase plus nothing else since s_j^2 = 1
    sp1, sp2 = spin_signs()
    p = np.abs(qubit_state(initQubitState)) ** 2
    nb = config.branch_count()
    x = config.thermalN / (1 + config.thermalN) if config.thermalN > 0 else 0.0
    w = (1 - x) * x ** np.arange(nb)
    fid = 0.0
    for n in range(nb):
        amp = 0j
        for q in range(4):
            a = dr * (sp1[q] * g1 + sp2[q] * g2)
            a2 = abs(a) ** 2
            amp += p[q] * np.exp(1j * phr * sp1[q] * sp2[q]) * np.exp(-a2 / 2) * eval_laguerre(n, a2)
        fid += w[n] * abs(amp) ** 2
    return float(1.0 - fid / w.sum())


def radial_sweep(design: GateDesign, betas, initQubitState="psi4", base: RadialConfig | None = None):
    base = base or RadialConfig()
    return [(float(b), radial_run(replace(base, beta=float(b)), design, initQubitState).infidelity) for b in betas]


def sweep_csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()
