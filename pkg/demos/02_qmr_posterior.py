"""Likelihood-based sampling of a noisy-OR disease network.

With ten diseases the posterior can be enumerated, so the chain's
occupancy can be checked state by state.
"""

import numpy as np

from discrete_abc import KernelSpec, RngStream, StatePmf, run
from discrete_abc.problems import QmrProblem, qmr_exact_posterior

rng = RngStream(3)
prob = QmrProblem.sample(10, 20, rng.substream("instance"), beta_a=0.5, beta_b=0.5, prior_p=0.2)
exact = qmr_exact_posterior(prob.model, prob.observed)
print("true diseases:", prob.x_true)
print("posterior mode:", exact.argmax())

counts = np.zeros(1 << 10)
for st in run(prob, KernelSpec("dde-mc", p_flip=0.01), None, 6000, rng.substream("chain"),
              size=12, mode="likelihood", track_errors=False):
    if st.iteration > 2000:
        for x in st.population:
            counts[x.bits] += 1

est = StatePmf(10, counts / counts.sum())
print(f"total variation to the exact posterior: {exact.tv_distance(est):.3f}")

# Posterior marginals, exact vs sampled.
bits = (np.arange(1 << 10)[:, None] >> np.arange(10)) & 1
print("exact marginals:  ", np.round(exact.probs @ bits, 2))
print("sampled marginals:", np.round(est.probs @ bits, 2))
