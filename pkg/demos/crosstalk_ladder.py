"""Crosstalk on the undriven ion: fidelity of a 20-pulse train and the pure-phase property of magic Rabi values."""

import numpy as np

from axygate.lindblad import crosstalk_ladder, crosstalk_propagator, dephasing_factorization
from axygate.operators import operator_fidelity
from axygate.physics import TWO_PI, magic_rabi

delta = TWO_PI * 45e6
om = TWO_PI * np.linspace(1e6, 4e6, 5)
for o, f in zip(om, crosstalk_ladder(om, delta, 20)):
    print(f"Rabi {o / TWO_PI / 1e6:5.2f} MHz  train fidelity {f:.4f}")
# at magic values one pulse is a diagonal phase, which staggered sequences cancel
for k in (1, 2, 3):
    m = magic_rabi(delta, k)
    U = crosstalk_propagator(m, delta, 0.3, 0.0)
    err = 1 - operator_fidelity(U, dephasing_factorization(m, delta, 0.3))
    print(f"magic k={k}: Rabi {m / TWO_PI / 1e6:6.3f} MHz  distance from pure phase {abs(err):.1e}")
