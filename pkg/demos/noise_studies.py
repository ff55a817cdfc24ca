"""Field-noise and radial-mode studies on the 150 kHz pi/4 design."""

import numpy as np

from axygate import noise
from axygate.designer import design_gate
from axygate.physics import TWO_PI, TrapConfig

design = design_gate(TrapConfig.from_hz(150e3, 150.0), np.pi / 4, r=3, k=2)

ou = noise.OUParams.from_t2(50e-6, 3e-3)
print(f"fitted T2 {noise.fit_t2(ou, trajectories=100, seed=0) * 1e3:.3f} ms (target 3 ms)")

rabi = TWO_PI * 20e6
base = noise.FourLevelConfig(rabi=rabi, schedule=noise.single_ion_schedule(design, rabi), trajectories=20, seed=1)
for row in noise.leakage_sweep(base, ou, [0.0, 0.1, 0.2]):
    print("leakage eps={:.2f}  mean infidelity {:.3e}  full block {:.3e}".format(*row))

for beta in (0.0, 0.1, 0.2, 0.3):
    r = noise.radial_run(noise.RadialConfig(beta=beta), design, "psi4")
    print(f"radial beta={beta:.1f}  infidelity {r.infidelity:.3e}  closed form {r.analytic:.3e}")
