"""Shear flow suppresses chemotactic blow-up.

Two species with masses well above the critical mass aggregate and blow up
when the fluid is at rest.  Adding the Poiseuille shear at large amplitude A
mixes them faster than they can concentrate.  The same physical horizon is
used for every A, so each run sees the same amount of chemotactic time.

This is a coarse 64^2 version of the acceptance experiment; the full
version is ``pksns bisect --config demos/configs/suppression.ini``.

Run:  python3 demos/02_suppression.py
"""

import math

from pksns import dynamics as dy
from pksns.grid import ChannelGrid

grid = ChannelGrid(64, 64)
bumps = [dy.Bump(1, math.pi, 0.0, 0.25), dy.Bump(2, math.pi, 0.0, 0.25)]
s0 = dy.make_initial(grid, bumps, (12 * math.pi, 0.1))

T_PHYS, DT_PHYS = 0.1, 5e-4
for A in (0.0, 300.0, 3000.0):
    scale = A if A > 0 else 1.0  # rescaled time runs A times slower
    p = dy.SimParams(A=A, dt=DT_PHYS * scale, t_end=T_PHYS * scale,
                     scheme="etd1" if A > 0 else "imex_euler", blowup_factor=100)
    tr = dy.run(s0, p)
    ratio = tr.peak[0] / tr.initial_max[0]
    print(f"A = {A:6.0f}: {tr.termination:10s} physical t = {tr.final_state.t / scale:.4f} "
          f"peak n1 / initial = {ratio:.2f}")
