"""Search of the (tauA, tauB) plane for decoupling solutions and physical gate designs."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, asdict, field

import numpy as np
from scipy import ndimage, optimize

from . import analytic
from .errors import NoSolutionRegion, PhaseUnreachable
from .physics import PhysicalConstants, TrapConfig, derive_couplings, magic_rabi
from .sequence import STAGGER_FACTOR, AxyParams, axy_modulation, build_schedule, modulation

DEFAULT_GRID = 201
LOW_FRACTION = 0.05


@dataclass(frozen=True)
class ScanResult:
    """Residual and phase on a mesh; arrays are indexed ``[i, j]`` = (tauA[i], tauB[j])."""

    tauA: np.ndarray
    tauB: np.ndarray
    absG12: np.ndarray
    absG22: np.ndarray
    phiTilde: np.ndarray
    valid: np.ndarray
    r: int
    nBlocks: int

    def cell(self, tauA: float, tauB: float) -> dict:
        i = int(np.argmin(abs(self.tauA - tauA)))
        j = int(np.argmin(abs(self.tauB - tauB)))
        return {"tauA": self.tauA[i], "tauB": self.tauB[j], "absG12": self.absG12[i, j],
                "absG22": self.absG22[i, j], "phiTilde": self.phiTilde[i, j], "valid": bool(self.valid[i, j])}

    @property
    def residual(self) -> np.ndarray:
        return np.maximum(self.absG12, self.absG22)

    def low_regions(self, fraction: float = LOW_FRACTION) -> tuple[np.ndarray, int]:
        """Connected labels of valid cells with residual below ``fraction`` of the scan maximum."""
        res = self.residual
        mask = self.valid & (res < fraction * np.nanmax(res))
        return ndimage.label(mask)

    def region_seeds(self, fraction: float = LOW_FRACTION) -> list[tuple[float, float]]:
        """Lowest-residual cell of every connected low region."""
        lab, n = self.low_regions(fraction)
        res = np.where(self.valid, self.residual, np.inf)
        seeds = []
        for k in range(1, n + 1):
            idx = np.flatnonzero((lab == k).ravel())
            best = idx[np.argmin(res.ravel()[idx])]
            i, j = np.unravel_index(best, res.shape)
            seeds.append((float(self.tauA[i]), float(self.tauB[j])))
        return seeds

    def to_csv(self, stream=None, header_lines: tuple[str, ...] = ()) -> str:
        buf = io.StringIO()
        for h in header_lines:
            buf.write(f"# {h}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tauA", "tauB", "absG12", "absG22", "phiTilde", "valid"])
        for i, a in enumerate(self.tauA):
            for j, b in enumerate(self.tauB):
                w.writerow([f"{a:.17g}", f"{b:.17g}", f"{self.absG12[i, j]:.17g}",
                            f"{self.absG22[i, j]:.17g}", f"{self.phiTilde[i, j]:.17g}", int(self.valid[i, j])])
        text = buf.getvalue()
        if stream is not None:
            stream.write(text)
        return text


def grid_axis(gridN: int, bounds: tuple[float, float] = (0.0, 0.5)) -> np.ndarray:
    """Interior points of a uniform mesh over the open interval ``bounds`` (default (0, 1/2))."""
    lo, hi = bounds
    if not 0.0 <= lo < hi <= 0.5:
        raise ValueError("tau~ bounds must satisfy 0 <= lo < hi <= 1/2")
    return np.linspace(lo, hi, gridN + 2)[1:-1]


def scan_plane(r: int, nBlocks: int, gridN: int = DEFAULT_GRID,
               bounds: tuple[float, float] = (0.0, 0.5)) -> ScanResult:
    """Evaluate |nu_2 G_j2(n tau)| and phi~ on the ordered simplex 0 < tauA < tauB < 1/2."""
    if gridN < 2:
        raise ValueError("gridN must be at least 2")
    ax = grid_axis(gridN, bounds)
    A, B = np.meshgrid(ax, ax, indexing="ij")
    valid = A < B
    a, b = A[valid], B[valid]
    g = np.abs(analytic.axy_g_tilde(a, b, r, nBlocks, mode=2))
    ph = analytic.axy_phi_tilde(a, b, r, nBlocks)
    absG = np.full(A.shape, np.nan)
    phi = np.full(A.shape, np.nan)
    absG[valid] = g
    phi[valid] = ph
    # identical modulation on both ions, so both residuals coincide
    return ScanResult(ax, ax.copy(), absG, absG.copy(), phi, valid, r, nBlocks)


@dataclass(frozen=True)
class RefineResult:
    tauA: float
    tauB: float
    phiTilde: float
    objective: float
    converged: bool
    evaluations: int


_EDGE = 1e-9


def _project(x):
    """Closest point of the closed, slightly shrunk ordered simplex."""
    a, b = float(x[0]), float(x[1])
    if a > b:
        a = b = 0.5 * (a + b)
    a = min(max(a, _EDGE), 0.5 - 2 * _EDGE)
    b = min(max(b, a + _EDGE), 0.5 - _EDGE)
    return a, b


def decoupling_objective(tauA, tauB, r: int, nBlocks: int):
    g = analytic.axy_g_tilde(tauA, tauB, r, nBlocks, mode=2)
    return 2.0 * np.abs(g) ** 2


def refine_solution(seed: tuple[float, float], r: int, nBlocks: int, tol: float = 1e-10,
                    budget: int = 500, restarts: int = 3) -> RefineResult:
    """Nelder-Mead minimisation of |G~_12|^2 + |G~_22|^2 from ``seed``.

    Points outside the ordered simplex are projected back and penalised, so the
    returned point always satisfies 0 < tauA < tauB < 1/2. ``converged`` is False
    when the objective is still above ``tol`` once the budget is spent.
    """
    a0, b0 = seed
    if not 0 < a0 < b0 < 0.5:
        raise ValueError("seed must lie inside the ordered simplex")
    nev = 0

    def fun(x):
        a, b = _project(x)
        pen = (x[0] - a) ** 2 + (x[1] - b) ** 2
        return float(decoupling_objective(a, b, r, nBlocks)) + 1e3 * pen

    best = np.array(seed, dtype=float)
    fbest = fun(best)
    nev += 1
    if fbest < tol:
        return RefineResult(a0, b0, float(analytic.axy_phi_tilde(a0, b0, r, nBlocks)), fbest, True, nev)
    step = 0.02
    for _ in range(restarts + 1):
        left = budget - nev
        if left <= 3:
            break
        simplex = np.array([best, best + [step, 0.0], best + [0.0, step]])
        res = optimize.minimize(fun, best, method="Nelder-Mead",
                                options={"maxfev": left, "xatol": 1e-13, "fatol": tol * 1e-3,
                                         "initial_simplex": simplex})
        nev += res.nfev
        if res.fun < fbest:
            best, fbest = np.array(_project(res.x)), float(res.fun)
        if fbest < tol:
            break
        step *= 0.25
    a, b = _project(best)
    fval = float(decoupling_objective(a, b, r, nBlocks))
    return RefineResult(a, b, float(analytic.axy_phi_tilde(a, b, r, nBlocks)), fval, fval < tol, nev)


@dataclass(frozen=True)
class GateDesign:
    params: AxyParams
    trap: TrapConfig
    rabi1: float
    rabi2: float
    k: int
    targetPhase: float
    phaseSign: int
    achievedPhiTilde: float
    achievedPhase: float
    residuals: list            # |nu_m G_jm(n tau)| with the stagger, rows ion, columns mode
    idealResiduals: list       # same without stagger
    gateTime: float
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    @property
    def piTime(self) -> float:
        return np.pi / self.rabi1

    def schedules(self):
        return build_schedule(self.params, self.trap.nuAxial)

    def to_dict(self) -> dict:
        d = {"params": asdict(self.params), "trap": asdict(self.trap), "constants": asdict(self.constants)}
        for k in ("rabi1", "rabi2", "k", "targetPhase", "phaseSign", "achievedPhiTilde",
                  "achievedPhase", "residuals", "idealResiduals", "gateTime"):
            d[k] = getattr(self, k)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "GateDesign":
        d = dict(d)
        d["params"] = AxyParams(**d["params"])
        d["trap"] = TrapConfig(**d["trap"])
        d["constants"] = PhysicalConstants(**d.get("constants", {}))
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "GateDesign":
        return cls.from_dict(json.loads(text))


def _zero_crossings(scan: ScanResult, S: np.ndarray):
    """Linear-interpolated points where the signed residual changes sign between neighbours."""
    pts = []
    A, B = np.meshgrid(scan.tauA, scan.tauB, indexing="ij")
    for axis in (0, 1):
        s0 = S.take(range(S.shape[axis] - 1), axis=axis)
        s1 = S.take(range(1, S.shape[axis]), axis=axis)
        ok = np.isfinite(s0) & np.isfinite(s1) & (np.sign(s0) != np.sign(s1))
        w = np.where(ok, s0 / np.where(ok, s0 - s1, 1.0), 0.0)
        a0, a1 = A.take(range(A.shape[axis] - 1), axis=axis), A.take(range(1, A.shape[axis]), axis=axis)
        b0, b1 = B.take(range(B.shape[axis] - 1), axis=axis), B.take(range(1, B.shape[axis]), axis=axis)
        pts.append(np.stack([(a0 + w * (a1 - a0))[ok], (b0 + w * (b1 - b0))[ok]], axis=-1))
    return np.concatenate(pts)


def _dedupe(points, tol=1e-7):
    out = []
    for p in points:
        if all(abs(p[0] - q[0]) > tol or abs(p[1] - q[1]) > tol for q in out):
            out.append(p)
    return out


@dataclass(frozen=True)
class Candidate:
    tauA: float
    tauB: float
    sign: int          # sign of the achieved phase
    minGap: float      # smallest centre spacing in units of tau


def gate_candidates(trap: TrapConfig, targetPhase: float, r: int, k: int, nBlocks: int = 4,
                    constants: PhysicalConstants | None = None, gridN: int = DEFAULT_GRID,
                    residualTol: float = 1e-8, seeds: int = 40) -> list[Candidate]:
    """All decoupling points reaching ``|targetPhase|`` that leave room for the staggered pulses.

    The breathing-mode residual of an AXY block has a fixed complex direction, so
    its zeros form curves in the plane. Points on these curves are located on the
    scan mesh and then polished by solving residual = 0 and phi = +-|target|
    jointly. Ion 2 is delayed by the stagger when the phase is evaluated, so the
    phase refers to the pulse timing actually played.
    """
    if targetPhase == 0:
        raise ValueError("targetPhase must be non-zero for an entangling gate")
    c = constants or PhysicalConstants()
    cpl = derive_couplings(c, trap)
    nu = trap.nuAxial
    pref = analytic.phase_prefactor(cpl, nu)
    tau = 2 * np.pi * r / nu
    tp = float(np.pi / magic_rabi(cpl.qubitSplitting, k))
    stagger = float(STAGGER_FACTOR * tp)
    shift = stagger / tau
    target_t = abs(targetPhase) / pref

    scan = scan_plane(r, nBlocks, gridN)
    A, B = np.meshgrid(scan.tauA, scan.tauB, indexing="ij")
    S = np.full(A.shape, np.nan)
    S[scan.valid] = analytic.signed_residual(A[scan.valid], B[scan.valid], r, nBlocks)
    cross = _zero_crossings(scan, S)
    if len(cross) == 0:
        raise NoSolutionRegion(f"no decoupling solution found at r={r}, nBlocks={nBlocks}")
    phi_c = analytic.axy_phi_tilde(cross[:, 0], cross[:, 1], r, nBlocks, shift2=shift)
    maxabs = float(np.max(np.abs(phi_c)))
    if target_t > maxabs * (1 + 1e-9):
        raise PhaseUnreachable(
            f"|phase| {abs(targetPhase):.6g} rad exceeds the maximum {maxabs * pref:.6g} rad reachable at r={r}",
            maxabs * pref)

    sscale = float(np.nanmax(np.abs(S)))
    roots = []
    for sgn in (1, -1):
        goal = sgn * target_t

        def F(x):
            a, b = x
            return [float(analytic.signed_residual(a, b, r, nBlocks)) / sscale,
                    (float(analytic.axy_phi_tilde(a, b, r, nBlocks, shift2=shift)) - goal) / target_t]

        # seeds: crossings where the phase along the mesh passes the goal, plus the closest ones
        d = phi_c - goal
        for i in np.argsort(np.abs(d))[:seeds]:
            sol = optimize.root(F, cross[i], method="hybr", options={"xtol": 1e-14})
            a, b = sol.x
            if not (0 < a < b < 0.5):
                continue
            fa = F(sol.x)
            if abs(fa[0]) * sscale > residualTol or abs(fa[1]) > 1e-10:
                continue
            roots.append((float(a), float(b), sgn))
    out = []
    for a, b, sgn in _dedupe(roots):
        gap = min(2 * a, b - a, 0.5 - b)
        if gap * tau > stagger + tp and a * tau > stagger + tp:
            out.append(Candidate(a, b, sgn, gap))
    return out


def trap_shift_score(design: "GateDesign", shift: float = 1e-3, states=("psi1", "psi2", "psi3", "psi4", "psi5")) -> float:
    """Worst ideal-pulse infidelity, averaged over ``states``, for trap frequencies scaled by 1 +- shift."""
    from .lindblad import magnus_infidelity
    return max(float(np.mean([magnus_infidelity(design, s, sgn * shift) for s in states])) for sgn in (1, -1))


def design_gate(trap: TrapConfig, targetPhase: float, r: int, k: int, nBlocks: int = 4,
                constants: PhysicalConstants | None = None, gridN: int = DEFAULT_GRID,
                residualTol: float = 1e-8, zeta: float = 0.0, selection: str = "robust",
                robustShift: float = 1e-3) -> GateDesign:
    """Physical AXY gate with two-qubit phase ``targetPhase`` at harmonic index ``r``.

    Candidates realising the phase with its requested sign come first. With
    ``selection="robust"`` the remaining order is by :func:`trap_shift_score`
    (an unseen trap-frequency error of ``robustShift`` otherwise dominates the
    gate error); ``selection="gap"`` orders by the widest minimum pulse spacing.
    Remaining ties go to the wider spacing and then the smaller tauB.
    """
    if selection not in ("robust", "gap"):
        raise ValueError("selection must be 'robust' or 'gap'")
    c = constants or PhysicalConstants()
    cands = gate_candidates(trap, targetPhase, r, k, nBlocks, c, gridN, residualTol)
    if not cands:
        raise NoSolutionRegion(
            f"no decoupling solution reaches phase {targetPhase:.6g} rad with room for the pulses at r={r}")
    want = 1 if targetPhase > 0 else -1
    designs = [build_design(trap, targetPhase, p.tauA, p.tauB, r, k, nBlocks, c, zeta) for p in cands]
    if selection == "robust":
        score = [trap_shift_score(d, robustShift) for d in designs]
    else:
        score = [0.0] * len(designs)
    order = sorted(range(len(cands)), key=lambda i: (cands[i].sign != want, float(f"{score[i]:.3g}"),
                                                     -round(cands[i].minGap, 12), cands[i].tauB))
    return designs[order[0]]


def build_design(trap: TrapConfig, targetPhase: float, tauA: float, tauB: float, r: int, k: int,
                 nBlocks: int = 4, constants: PhysicalConstants | None = None, zeta: float = 0.0) -> GateDesign:
    """Assemble a GateDesign (pulse timing, Rabi frequencies, residuals) at a given (tauA, tauB)."""
    c = constants or PhysicalConstants()
    cpl = derive_couplings(c, trap)
    nu = trap.nuAxial
    rabi = magic_rabi(cpl.qubitSplitting, k)
    tp = float(np.pi / rabi)
    params = AxyParams(r=r, nBlocks=nBlocks, tauATilde=tauA, tauBTilde=tauB, zeta=zeta,
                       stagger=float(STAGGER_FACTOR * tp), piTime1=tp, piTime2=tp)
    tau = params.block_duration(nu)
    s1, s2 = build_schedule(params, nu)
    T = nBlocks * tau
    f1 = modulation(s1, 1, horizon=T)
    f2 = modulation(s2, 2, horizon=T)
    rep = analytic.gate_report(f1, f2, r, nBlocks, cpl, nu)
    fi = axy_modulation(tauA, tauB, nBlocks, tau=tau)
    ideal = analytic.gate_report(fi, fi, r, nBlocks, cpl, nu)
    phase_sign = 1 if np.sign(rep.phiTilde) == np.sign(targetPhase) else -1
    return GateDesign(params=params, trap=trap, rabi1=rabi, rabi2=rabi, k=k, targetPhase=float(targetPhase),
                      phaseSign=phase_sign, achievedPhiTilde=rep.phiTilde, achievedPhase=rep.phiPhysical,
                      residuals=np.abs(rep.gTilde).tolist(), idealResiduals=np.abs(ideal.gTilde).tolist(),
                      gateTime=T, constants=c)
