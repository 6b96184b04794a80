"""Likelihood-free sampling of the same kind of network.

Only the simulator is used: a proposal survives when its simulated
findings land within a tolerance of the observed ones.  Drawing that
tolerance afresh from an exponential for every proposal lets chains
escape early plateaus.
"""

import numpy as np

from discrete_abc import EpsilonSchedule, KernelSpec, RngStream, run
from discrete_abc.problems import QmrProblem

rng = RngStream(5)
prob = QmrProblem.sample(10, 20, rng.substream("instance"))
print("true diseases:", prob.x_true)

for kind in ("dde-mc", "mut+xor", "ind-samp"):
    for sched in (EpsilonSchedule.exponential(2.0), EpsilonSchedule.fixed(2.0)):
        acc = props = 0
        for st in run(prob, KernelSpec(kind, p_flip=0.01), sched, 2000, rng.substream(kind, str(sched)), size=24):
            acc += st.accepted
            props += st.proposals
        print(f"{kind:>9} eps={str(sched):>8}: acceptance {100 * acc / props:5.1f}%, "
              f"final mean Hamming error {np.mean(st.errors):.2f}")
