"""Tour of the population proposals on a tiny space.

Every kernel's proposal distribution can be enumerated exactly for small
dimensions, which makes their differences easy to see.
"""

import numpy as np

from discrete_abc import BitVector, KernelSpec, Population, RngStream, propose, proposal_pmf_exact

# Three chains in four bits.  Chain 0 is the one being moved.
pop = Population.from_strings("0000", "0011", "0110")
print("population:", list(map(str, pop)))

# The xor move shifts chain 0 by the difference of the other two chains.
# With only two partners both ordered pairs give the same difference 0101,
# so plain xor always proposes 0000 ^ 0101.  Mutation restores full support.
for kind in ("xor", "mut+xor", "dde-mc", "ind-samp"):
    pmf = proposal_pmf_exact(KernelSpec(kind, p_flip=0.1), 0, pop)
    support = np.count_nonzero(pmf.probs > 0)
    top = np.argsort(pmf.probs)[::-1][:3]
    best = ", ".join(f"{BitVector(4, int(s))}:{pmf.probs[s]:.3f}" for s in top)
    print(f"{kind:>9}: support {support:2d}/16, most likely {best}")

# Drawing proposals is cheap and reproducible from a seeded stream.
rng = RngStream(7)
draws = [str(propose(KernelSpec("dde-mc", p_flip=0.1), 0, pop, rng)) for _ in range(8)]
print("eight dde-mc draws:", draws)
