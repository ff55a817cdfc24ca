"""AXY-n pulse schedules and their ideal modulation functions."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, replace

import numpy as np

# phases of the five pulses of an X block; the Y block adds pi/2
_X_BLOCK = (np.pi / 6, np.pi / 2, 0.0, np.pi / 2, np.pi / 6)
STAGGER_FACTOR = 1.05


def axy_phase_lists(zeta: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Axis phases of the X and Y composite blocks, offset by ``zeta``."""
    x = np.array(_X_BLOCK) + zeta
    return x, x + np.pi / 2


@dataclass(frozen=True)
class AxyParams:
    r: int
    nBlocks: int
    tauATilde: float
    tauBTilde: float
    zeta: float = 0.0
    stagger: float = 0.0
    piTime1: float = 0.0
    piTime2: float = 0.0

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ValueError("r must be a positive integer")
        if int(self.nBlocks) != self.nBlocks or self.nBlocks < 2 or self.nBlocks % 2:
            raise ValueError("nBlocks must be an even positive integer")
        if not 0.0 < self.tauATilde < self.tauBTilde < 0.5:
            raise ValueError(
                f"need 0 < tauA < tauB < 1/2, got tauA={self.tauATilde}, tauB={self.tauBTilde}")
        if self.piTime1 < 0 or self.piTime2 < 0:
            raise ValueError("pi times must be non-negative")
        tp = max(self.piTime1, self.piTime2)
        if tp > 0 and not self.stagger > tp:
            raise ValueError("stagger must exceed the pi-pulse time")
        if self.stagger < 0:
            raise ValueError("stagger must be non-negative")

    def block_duration(self, nu1: float) -> float:
        return 2.0 * np.pi * self.r / nu1

    def min_gap(self) -> float:
        """Smallest spacing between consecutive pulse centres, in units of tau."""
        a, b = self.tauATilde, self.tauBTilde
        return min(2.0 * a, b - a, 0.5 - b)


@dataclass(frozen=True)
class PulseEvent:
    ion: int
    center: float
    duration: float
    phase: float
    rabi: float

    @property
    def start(self) -> float:
        return self.center - 0.5 * self.duration

    @property
    def end(self) -> float:
        return self.center + 0.5 * self.duration


@dataclass(frozen=True)
class PulseSchedule:
    events: tuple[PulseEvent, ...]
    blockDuration: float
    nBlocks: int

    @property
    def sequenceTime(self) -> float:
        """n * tau, the nominal gate window."""
        return self.blockDuration * self.nBlocks

    @property
    def totalTime(self) -> float:
        """Time of the last pulse edge (or the nominal window if there are no pulses)."""
        if not self.events:
            return self.sequenceTime
        return max(e.end for e in self.events)

    @property
    def horizon(self) -> float:
        return max(self.sequenceTime, self.totalTime)

    def for_ion(self, ion: int) -> "PulseSchedule":
        return replace(self, events=tuple(e for e in self.events if e.ion == ion))

    def merged(self, other: "PulseSchedule") -> "PulseSchedule":
        ev = tuple(sorted(self.events + other.events, key=lambda e: (e.center, e.ion)))
        return replace(self, events=ev)

    def to_json(self) -> str:
        return json.dumps({
            "block_duration": self.blockDuration,
            "n_blocks": self.nBlocks,
            "events": [{"ion": e.ion, "center": e.center, "duration": e.duration,
                        "phase": e.phase, "rabi": e.rabi} for e in self.events],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PulseSchedule":
        d = json.loads(text)
        ev = tuple(PulseEvent(**e) for e in d["events"])
        return cls(events=ev, blockDuration=d["block_duration"], nBlocks=d["n_blocks"])


def ideal_centers(params: AxyParams, tau: float) -> np.ndarray:
    """Pulse centres of one ion without stagger, shape (nBlocks*5,)."""
    a, b = params.tauATilde, params.tauBTilde
    local = np.array([a, b, 0.5, 1.0 - b, 1.0 - a])
    return ((np.arange(params.nBlocks)[:, None] + local[None, :]) * tau).ravel()


def _check_no_overlap(events) -> None:
    ev = sorted(events, key=lambda e: e.start)
    for p, q in zip(ev, ev[1:]):
        if q.start < p.end:
            raise ValueError(
                f"pulse on ion {q.ion} at {q.center:.6e} s overlaps pulse on ion {p.ion} at {p.center:.6e} s")
    if ev and ev[0].start < 0:
        raise ValueError("first pulse starts before t = 0")


def build_schedule(params: AxyParams, nu1: float) -> tuple[PulseSchedule, PulseSchedule]:
    """Schedules of ion 1 and ion 2; ion 2 is ion 1 translated by ``params.stagger``."""
    tau = params.block_duration(nu1)
    centers = ideal_centers(params, tau)
    xph, yph = axy_phase_lists(params.zeta)
    phases = np.concatenate([xph if k % 2 == 0 else yph for k in range(params.nBlocks)])
    out = []
    for ion, shift, tp in ((1, 0.0, params.piTime1), (2, params.stagger, params.piTime2)):
        rabi = np.pi / tp if tp > 0 else np.inf
        ev = tuple(PulseEvent(ion, float(c + shift), tp, float(p), rabi) for c, p in zip(centers, phases))
        out.append(PulseSchedule(events=ev, blockDuration=tau, nBlocks=params.nBlocks))
    if max(params.piTime1, params.piTime2) > 0:
        _check_no_overlap(out[0].events + out[1].events)
    return out[0], out[1]


@dataclass(frozen=True)
class ModulationFunction:
    """Piecewise +-1 sign function that flips at each switch time.

    ``switches`` must be strictly increasing and lie in ``[0, horizon]``.
    """

    switches: tuple[float, ...]
    horizon: float
    initial: int = 1

    def __post_init__(self):
        s = np.asarray(self.switches, dtype=float)
        if s.size and (np.any(np.diff(s) <= 0) or s[0] < 0 or s[-1] > self.horizon):
            raise ValueError("switch times must be strictly increasing and inside [0, horizon]")
        if self.initial not in (1, -1):
            raise ValueError("initial sign must be +1 or -1")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        n = np.searchsorted(np.asarray(self.switches), t, side="right")
        v = self.initial * np.where(n % 2 == 0, 1, -1)
        return v if v.ndim else int(v)

    def segments(self, t0: float = 0.0, t1: float | None = None):
        """Yield ``(a, b, sign)`` for each constant piece of ``[t0, t1]``."""
        t1 = self.horizon if t1 is None else t1
        edges = [t0] + [s for s in self.switches if t0 < s < t1] + [t1]
        for a, b in zip(edges[:-1], edges[1:]):
            if b > a:
                yield a, b, self(0.5 * (a + b))

    def shifted(self, dt: float, horizon: float | None = None) -> "ModulationFunction":
        h = self.horizon if horizon is None else horizon
        return ModulationFunction(tuple(s + dt for s in self.switches if 0 <= s + dt <= h), h, self.initial)

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def modulation(schedule: PulseSchedule, ion: int, horizon: float | None = None) -> ModulationFunction:
    """Ideal sign function of ``ion``: +1 at t=0, flipping at every pulse centre."""
    c = sorted(e.center for e in schedule.events if e.ion == ion)
    h = schedule.horizon if horizon is None else horizon
    return ModulationFunction(tuple(c), h)


def axy_modulation(tauA: float, tauB: float, nBlocks: int, tau: float = 1.0, shift: float = 0.0,
                   horizon: float | None = None) -> ModulationFunction:
    """Modulation function straight from the dimensionless spacings."""
    p = AxyParams(r=1, nBlocks=nBlocks, tauATilde=tauA, tauBTilde=tauB)
    h = nBlocks * tau if horizon is None else horizon
    return ModulationFunction(tuple(ideal_centers(p, tau) + shift), h)
