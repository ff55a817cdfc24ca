"""Physical constants, trap configuration and derived coupling strengths.

Everything is SI; frequencies are angular (rad/s). Conversion from ordinary
frequencies happens at the configuration boundary (see :mod:`axygate.config`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi

HBAR = 1.054571817e-34          # J s
KB = 1.380649e-23               # J / K
ELEM_CHARGE = 1.602176634e-19   # C
VAC_PERMITTIVITY = 8.8541878128e-12  # F / m
AMU = 1.66053906660e-27         # kg
YB171_MASS = 170.9363258 * AMU  # kg

# 2pi x 2.8 MHz/G, the rounded value used to quote the reference gate numbers
GAMMA_E_ROUNDED = TWO_PI * 2.8e10     # rad / (s T)
GAMMA_E_CODATA = 1.76085963023e11     # rad / (s T)


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = HBAR
    kB: float = KB
    gammaE: float = GAMMA_E_ROUNDED
    ionMass: float = YB171_MASS
    elemCharge: float = ELEM_CHARGE
    vacPermittivity: float = VAC_PERMITTIVITY

    def __post_init__(self):
        for name in ("hbar", "kB", "gammaE", "ionMass", "elemCharge", "vacPermittivity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def gamma(self) -> float:
        """Qubit gyromagnetic ratio, half the electronic one."""
        return self.gammaE / 2.0

    @classmethod
    def codata(cls) -> "PhysicalConstants":
        return cls(gammaE=GAMMA_E_CODATA)


@dataclass(frozen=True)
class TrapConfig:
    nuAxial: float              # rad/s
    gradB: float                # T/m
    temperature: float = 50.0   # K
    electrodeDistance: float = 150e-6  # m
    ionSeparation: float | None = None  # m, overrides the Coulomb equilibrium value

    def __post_init__(self):
        if not self.nuAxial > 0:
            raise ValueError("nuAxial must be positive")
        if self.gradB < 0:
            raise ValueError("gradB must be non-negative")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not self.electrodeDistance > 0:
            raise ValueError("electrodeDistance must be positive")
        if self.ionSeparation is not None and not self.ionSeparation > 0:
            raise ValueError("ionSeparation override must be positive")

    @property
    def nu1(self) -> float:
        return self.nuAxial

    @property
    def nu2(self) -> float:
        return np.sqrt(3.0) * self.nuAxial

    @classmethod
    def from_hz(cls, nu_axial_hz: float, gradB: float, **kw) -> "TrapConfig":
        return cls(nuAxial=TWO_PI * nu_axial_hz, gradB=gradB, **kw)


@dataclass(frozen=True)
class HeatingReference:
    nDotComRef: float = 41.0
    nuComRef: float = TWO_PI * 427e3
    nDotBreRef: float = 7.0
    nuBreRef: float = TWO_PI * 459e3
    distRef: float = 310e-6
    tempRef: float = 300.0
    tempExponent: float = 2.13


@dataclass(frozen=True)
class CouplingSet:
    delta1: float           # rad/s, com mode
    delta2: float           # rad/s, breathing mode
    qubitSplitting: float   # omega_2 - omega_1, rad/s
    ionSeparation: float    # m


@dataclass(frozen=True)
class HeatingRates:
    """Heating of both axial modes.

    ``rateCom``/``rateBre`` are in quanta per second. ``gammaCom``/``gammaBre`` are
    the dissipator rates (1/s) and ``nBarCom``/``nBarBre`` the bath occupations.
    """

    rateCom: float
    rateBre: float
    gammaCom: float
    gammaBre: float
    nBarCom: float
    nBarBre: float
    notes: dict = field(default_factory=dict)

    def as_report(self) -> dict:
        return {
            "ndot_com_quanta_per_s": self.rateCom,
            "ndot_bre_quanta_per_s": self.rateBre,
            # same numbers read as angular frequencies, i.e. labelled (2pi) x Hz
            "gamma_nbar_com_2pi_hz": self.rateCom / TWO_PI,
            "gamma_nbar_bre_2pi_hz": self.rateBre / TWO_PI,
            "gamma_com_per_s": self.gammaCom,
            "gamma_bre_per_s": self.gammaBre,
            "nbar_com": self.nBarCom,
            "nbar_bre": self.nBarBre,
        }


def equilibrium_separation(constants: PhysicalConstants, nu: float) -> float:
    """Distance between two ions in a harmonic well of axial frequency ``nu``."""
    if not nu > 0:
        raise ValueError("trap frequency must be positive")
    q2 = constants.elemCharge**2
    return (q2 / (TWO_PI * constants.vacPermittivity * constants.ionMass * nu**2)) ** (1.0 / 3.0)


def derive_couplings(constants: PhysicalConstants, trap: TrapConfig) -> CouplingSet:
    """Qubit-mode couplings, qubit frequency splitting and ion separation."""
    if not trap.nuAxial > 0 or not constants.ionMass > 0 or not trap.electrodeDistance > 0:
        raise ValueError("trap frequency, ion mass and electrode distance must be positive")
    dz = trap.ionSeparation
    if dz is None:
        dz = equilibrium_separation(constants, trap.nuAxial)
    pref = constants.gammaE * trap.gradB / 8.0
    d1 = pref * np.sqrt(constants.hbar / (constants.ionMass * trap.nu1))
    d2 = pref * np.sqrt(constants.hbar / (constants.ionMass * trap.nu2))
    split = constants.gamma * trap.gradB * dz
    return CouplingSet(delta1=float(d1), delta2=float(d2), qubitSplitting=float(split), ionSeparation=float(dz))


def magic_rabi(delta: float, k: int) -> float:
    """Rabi frequency for which the off-resonant crosstalk rotation closes.

    Returns ``delta / sqrt(4 k^2 - 1)``, so that ``0.5*sqrt(Omega^2+delta^2) * pi/Omega = pi*k``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    return delta / np.sqrt(4.0 * k * k - 1.0)


def thermal_occupation(nu, T, constants: PhysicalConstants | None = None):
    """Bose-Einstein mean occupation of a mode of angular frequency ``nu`` at ``T``."""
    c = constants or PhysicalConstants()
    nu = np.asarray(nu, dtype=float)
    T = np.asarray(T, dtype=float)
    with np.errstate(over="ignore"):
        x = c.hbar * nu / (c.kB * T)
        out = 1.0 / np.expm1(x)
    return out if out.ndim else float(out)


def heating_rates(trap: TrapConfig, ref: HeatingReference | None = None,
                  constants: PhysicalConstants | None = None) -> HeatingRates:
    """Scale the reference heating rates to ``trap`` (frequency, distance, temperature)."""
    ref = ref or HeatingReference()
    c = constants or PhysicalConstants()
    geom = (ref.distRef / trap.electrodeDistance) ** 4 * (ref.tempRef / trap.temperature) ** (-ref.tempExponent)
    n_com = ref.nDotComRef * (ref.nuComRef / trap.nu1) ** 2 * geom
    n_bre = ref.nDotBreRef * (ref.nuBreRef / trap.nu2) ** 2 * geom
    nb_com = thermal_occupation(trap.nu1, trap.temperature, c)
    nb_bre = thermal_occupation(trap.nu2, trap.temperature, c)
    return HeatingRates(rateCom=float(n_com), rateBre=float(n_bre),
                        gammaCom=float(n_com / nb_com), gammaBre=float(n_bre / nb_bre),
                        nBarCom=float(nb_com), nBarBre=float(nb_bre))


def distance_for_gradient(gradB_target: float, anchor: tuple[float, float]) -> float:
    """Ion-electrode distance giving ``gradB_target`` assuming g_B ~ 1/d^2."""
    g_anchor, d_anchor = anchor
    if not (gradB_target > 0 and g_anchor > 0 and d_anchor > 0):
        raise ValueError("inputs must be positive")
    return d_anchor * np.sqrt(g_anchor / gradB_target)
