"""Residual-displacement map over the spacing plane and its refined zero points."""

import numpy as np

from axygate.designer import refine_solution, scan_plane

for r in (1, 2, 3):
    scan = scan_plane(r, 4, 101)
    print(f"r={r}: min |G| on grid {np.nanmin(scan.absG12 + scan.absG22):.2e}")
    for seed in scan.region_seeds():
        res = refine_solution(seed, r, 4)
        print(f"   zero at tauA={res.tauA:.6f} tauB={res.tauB:.6f} residual {res.objective:.1e}")
