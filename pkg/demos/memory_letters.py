"""
Driving a memory network from "H" to "T"
========================================

Ten of the 25 oscillators receive inputs. The control error drops in the
first step and then stays flat while the inputs hold the network.
"""

import numpy as np

from netctl import pipelines as P
from netctl.config import load_config, replace

spec = load_config("memory-n25")
exp = P.resolve(spec)

res = P.algorithm1(exp)
print("selected nodes (5x5 mesh):")
print("\n".join(res.selection.bits[5 * r:5 * r + 5] for r in range(5)))
print(f"final error {res.error:.4f}")

e = P.error_vs_steps(res, exp)
print("error per step:", np.round(e, 4))

###############################################################################
# More actuated nodes, smaller error

for frac in (0.4, 0.6, 0.8):
    r = P.algorithm1(replace(spec, fraction=frac))
    print(f"{int(frac * 100)}% actuated: e = {r.error:.4f}")
