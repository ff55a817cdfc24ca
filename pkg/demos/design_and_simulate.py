"""Design a pi/4 gate for a 150 kHz trap and simulate it with reference control errors."""

import numpy as np

from axygate.designer import design_gate
from axygate.lindblad import REFERENCE_ERRORS, SimConfig, run_table
from axygate.physics import TrapConfig

trap = TrapConfig.from_hz(150e3, 150.0)
design = design_gate(trap, np.pi / 4, r=3, k=2)
p = design.params
print(f"gate time {design.gateTime * 1e6:.2f} us, pi time {design.piTime * 1e9:.1f} ns")
print(f"spacings tauA={p.tauATilde:.6f} tauB={p.tauBTilde:.6f}, achieved phase {design.achievedPhase:.6f}")

for label, cfg in (("no errors", SimConfig(design=design, dissipation=False)),
                   ("errors+heating", SimConfig(design=design, errors=REFERENCE_ERRORS))):
    rep = run_table(cfg)
    row = "  ".join(f"{s}={v:.3e}" for s, v in rep.infidelities.items())
    print(f"{label:>15}: {row}")
