"""The functional inequalities behind the stability argument, checked numerically.

Random smooth states are drawn on the channel, and each inequality is
evaluated with its constant.  A ratio lhs/rhs above one would mean either a
wrong constant or a solver bug.  Flipping the operands of the x-Poincare
inequality shows what a violation looks like.

Run:  python3 demos/03_functional_inequalities.py
"""

from pksns.cli import verify_suite
from pksns.elliptic import DensityBC
from pksns.grid import ChannelGrid

grid = ChannelGrid(48, 48)
for bc in DensityBC:
    report = verify_suite(grid, bc, 50, seed=7)
    print(f"{bc.value}: {len(report['violations'])} violations")
    for name, entry in sorted(report["inequalities"].items()):
        if entry["theorem"]:
            print(f"  {name:26s} worst lhs/rhs {entry['max_ratio']:.3f}")
        else:
            # no closed-form constant: the sharpest constant seen is reported instead
            print(f"  {name:26s} empirical constant {entry['max_constant']:.3g}")

flipped = verify_suite(grid, DensityBC.NEUMANN, 10, seed=7, flip_poincare=True)
print(f"flipped Poincare operands: {len(flipped['violations'])} violations (expected > 0)")
