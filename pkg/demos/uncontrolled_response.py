"""
Uncontrolled responses of the two benchmark networks
====================================================

A Duffing network relaxes to an equilibrium; the associative memory
network, started from a noisy "H", falls back into the "H" attractor.
"""

import numpy as np

from netctl import models
from netctl import pipelines as P
from netctl.config import load_config
from netctl.integrate import Scheme, simulate

# Duffing network, TI and FE with the same coarse step
spec = load_config("duffing-n10")
duffing, graph = P.build_model(spec)
print(f"{graph.N} nodes, {len(graph.edges)} edges, radius {graph.radius:.4f}")

x = P.start_state(spec, duffing)
free = np.zeros((1501, duffing.N))
for kind in ("TI", "FE"):
    tr = simulate(duffing, Scheme(kind, 1e-2), x, free)
    v = np.abs(tr.states[:, 1::2]).max(1)
    print(f"{kind}: max |velocity| at t=0, 5, 15: {v[0]:.3g} {v[500]:.3g} {v[-1]:.3g}")

###############################################################################
# Memory network: noisy H settles back to H

spec = load_config("memory-n25")
memory, _ = P.build_model(spec)
x = P.start_state(spec, memory)
tr = simulate(memory, Scheme("FE", 1e-2), x, np.zeros((3001, memory.N)))


def show(phases):
    # phase differences to node 0 decide the letter (the dynamics are
    # invariant to a common phase shift)
    d = np.cos(phases - phases[0]).reshape(5, 5)
    return "\n".join("".join("#" if c > 0 else "." for c in row) for row in d)


print("start:\n" + show(tr.states[0]))
print("after 30 time units:\n" + show(tr.states[-1]))
H = models.pattern_to_phases(models.letter_patterns("H")[0])
print("overlap with H:", abs(np.mean(np.exp(1j * (tr.states[-1] - H)))).round(4))
