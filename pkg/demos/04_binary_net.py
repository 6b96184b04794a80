"""Training a tiny binary network without gradients or likelihoods.

The labels come from a hidden linear teacher, so a perfect net exists.
The final populations are pooled into a majority-vote ensemble.
"""

import numpy as np

from discrete_abc import EpsilonSchedule, KernelSpec, RngStream, run
from discrete_abc.harness.experiment import ensemble_report
from discrete_abc.problems import BinNNProblem

rng = RngStream(9)
prob = BinNNProblem.synthetic(16, 4, 400, rng.substream("data"), n_test=400)
print(f"{prob.dim} weight bits, {len(prob.train)} training examples")

last = []
for st in run(prob, KernelSpec("dde-mc", p_flip=0.01), EpsilonSchedule.exponential(0.1), 3000,
              rng.substream("chain"), size=24):
    if st.iteration % 500 == 0:
        print(f"sweep {st.iteration:5d}: best train error {min(st.errors):.3f}, mean {np.mean(st.errors):.3f}")
    last = (last + [st.population])[-5:]

rep = ensemble_report([last], prob)
print(f"ensemble test error {rep['ensemble_error']:.3f} over {rep['models']} models; "
      f"best single model {rep['single_error']['mean']:.3f}")
