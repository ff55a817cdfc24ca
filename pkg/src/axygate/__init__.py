"""Two-ion phase gates driven by staggered AXY microwave pulse sequences in a magnetic-gradient trap."""

__version__ = "0.1.0"

from .designer import GateDesign, build_design, design_gate, refine_solution, scan_plane
from .errors import (AxyGateError, ConfigError, NoSolutionRegion, NonConvergence, PhaseUnreachable,
                     StepRejection, TruncationOverflow)
from .physics import PhysicalConstants, TrapConfig, derive_couplings, heating_rates, magic_rabi

__all__ = [
    "__version__", "GateDesign", "build_design", "design_gate", "refine_solution", "scan_plane",
    "AxyGateError", "ConfigError", "NoSolutionRegion", "NonConvergence", "PhaseUnreachable",
    "StepRejection", "TruncationOverflow", "PhysicalConstants", "TrapConfig", "derive_couplings",
    "heating_rates", "magic_rabi",
]
