"""Population-conditioned proposal kernels over {0,1}^D.

Each kernel is a pure function of ``(spec, i, population, rng)``: it reads the
population, never modifies it, and returns a candidate for chain ``i``.
:func:`proposal_pmf_exact` computes the same distributions by enumeration for
small dimensions and serves as the test oracle for :func:`propose`.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .bitstate import (
    BitVector,
    DimensionError,
    RngStream,
    StatePmf,
    bernoulli_vector,
    mutate,
)

__all__ = [
    "Kind",
    "KernelSpec",
    "Population",
    "PopulationError",
    "crossover",
    "delta_sample",
    "propose",
    "proposal_pmf_exact",
]

MAX_EXACT_DIM = 16


class PopulationError(ValueError):
    """The population is too small (or malformed) for the requested kernel."""


class Kind(str, Enum):
    IND_SAMP = "ind-samp"
    MUT = "mut"
    MUT_CRX = "mut+crx"
    MUT_XOR = "mut+xor"
    XOR = "xor"
    DDE_MC = "dde-mc"
    DDE_MC1 = "dde-mc1"
    DDE_MC2 = "dde-mc2"

    def __str__(self) -> str:
        return self.value


DIFFERENCE_KINDS = frozenset(
    {Kind.XOR, Kind.MUT_XOR, Kind.DDE_MC, Kind.DDE_MC1, Kind.DDE_MC2}
)
MIXTURE_KINDS = frozenset({Kind.MUT_XOR, Kind.MUT_CRX})


@dataclass(frozen=True)
class KernelSpec:
    """One proposal kernel and its hyperparameters.

    ``p_flip`` drives the bit-flip noise (mut, mut+crx, mut+xor, dde-mc,
    dde-mc1), ``pi`` is the probability of taking the mut branch of a mixture,
    and ``theta`` is the Bernoulli parameter of ind-samp and of the dde-mc2
    noise string.
    """

    kind: Kind
    p_flip: float = 0.01
    pi: float = 0.5
    theta: float = 0.5

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", Kind(self.kind))
        except ValueError:
            raise ValueError(f"unknown kernel kind {self.kind!r}") from None
        for name in ("p_flip", "pi", "theta"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)
        if self.kind in MIXTURE_KINDS and not 0.0 < self.pi < 1.0:
            raise ValueError(f"mixture weight pi must lie in (0, 1), got {self.pi}")

    @property
    def symmetric(self) -> bool:
        """Whether q(x'|x) == q(x|x') with the rest of the population fixed."""
        if self.kind is Kind.MUT_CRX:
            return False
        if self.kind is Kind.IND_SAMP:
            return self.theta == 0.5
        return True

    @property
    def min_population(self) -> int:
        if self.kind in DIFFERENCE_KINDS:
            return 3
        if self.kind is Kind.MUT_CRX:
            return 2
        return 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(**d)


class Population(Sequence):
    """Ordered, immutable collection of equal-dimension chains."""

    __slots__ = ("chains", "dim")

    def __init__(self, chains):
        chains = tuple(chains)
        if not chains:
            raise PopulationError("population must contain at least one chain")
        dim = chains[0].dim
        if any(c.dim != dim for c in chains):
            raise DimensionError("all chains must share one dimension")
        self.chains = chains
        self.dim = dim

    @classmethod
    def from_strings(cls, *texts: str) -> "Population":
        return cls(BitVector.from_string(t) for t in texts)

    def __getitem__(self, i):
        return self.chains[i]

    def __len__(self) -> int:
        return len(self.chains)

    def __eq__(self, other) -> bool:
        if isinstance(other, Population):
            return self.chains == other.chains
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.chains)

    def replace(self, i: int, x: BitVector) -> "Population":
        chains = list(self.chains)
        chains[i] = x
        return Population(chains)

    def __repr__(self) -> str:
        return f"Population({[str(c) for c in self.chains]})"


def _check_index(i: int, pop: Sequence) -> None:
    if not 0 <= i < len(pop):
        raise IndexError(f"chain index {i} outside population of {len(pop)}")


def _pair_indices(i: int, c: int, rng: RngStream) -> tuple[int, int]:
    # uniform ordered pair (j, k), j != k, both != i
    j = rng.integer(c - 1)
    if j >= i:
        j += 1
    k = rng.integer(c - 2)
    lo, hi = (i, j) if i < j else (j, i)
    if k >= lo:
        k += 1
    if k >= hi:
        k += 1
    return j, k


def delta_sample(i: int, pop: Sequence[BitVector], rng: RngStream) -> BitVector:
    """Difference ``pop[j] xor pop[k]`` for a uniform ordered pair excluding ``i``."""
    c = len(pop)
    if c < 3:
        raise PopulationError(f"difference kernels need at least 3 chains, got {c}")
    _check_index(i, pop)
    j, k = _pair_indices(i, c, rng)
    a, b = pop[j], pop[k]
    return BitVector._raw(a.dim, a.bits ^ b.bits)


def crossover(x: BitVector, partner: BitVector, rng: RngStream) -> BitVector:
    """Uniform crossover: each position comes from ``partner`` with probability 1/2."""
    if x.dim != partner.dim:
        raise DimensionError(f"dimension mismatch: {x.dim} != {partner.dim}")
    mask = bernoulli_vector(x.dim, 0.5, rng).bits
    return BitVector._raw(x.dim, x.bits ^ ((x.bits ^ partner.bits) & mask))


def _partner(i: int, c: int, rng: RngStream) -> int:
    j = rng.integer(c - 1)
    return j + 1 if j >= i else j


def propose(spec: KernelSpec, i: int, pop: Sequence[BitVector], rng: RngStream) -> BitVector:
    """Draw a candidate state for chain ``i``.

    Mixture kernels consume their branch uniform before anything else.
    """
    kind = spec.kind
    if len(pop) < spec.min_population:
        raise PopulationError(
            f"{kind} needs at least {spec.min_population} chains, got {len(pop)}"
        )
    _check_index(i, pop)
    x = pop[i]

    if kind is Kind.MUT_XOR:
        kind = Kind.MUT if rng.uniform() < spec.pi else Kind.XOR
    elif kind is Kind.MUT_CRX:
        if rng.uniform() < spec.pi:
            kind = Kind.MUT
        else:
            return crossover(x, pop[_partner(i, len(pop), rng)], rng)

    if kind is Kind.IND_SAMP:
        return bernoulli_vector(x.dim, spec.theta, rng)
    if kind is Kind.MUT:
        return mutate(x, spec.p_flip, rng)
    delta = delta_sample(i, pop, rng)
    if kind is Kind.XOR:
        return BitVector._raw(x.dim, x.bits ^ delta.bits)
    if kind is Kind.DDE_MC:
        return BitVector._raw(x.dim, x.bits ^ mutate(delta, spec.p_flip, rng).bits)
    if kind is Kind.DDE_MC1:
        return mutate(BitVector._raw(x.dim, x.bits ^ delta.bits), spec.p_flip, rng)
    if kind is Kind.DDE_MC2:
        noise = bernoulli_vector(x.dim, spec.theta, rng)
        return BitVector._raw(x.dim, x.bits ^ delta.bits ^ noise.bits)
    raise ValueError(f"unknown kernel kind {kind!r}")  # pragma: no cover


# --- exact enumeration -------------------------------------------------------


def _popcounts(dim: int) -> np.ndarray:
    return np.bitwise_count(np.arange(1 << dim, dtype=np.uint32)).astype(np.int64)


def _iid_pmf(dim: int, p: float) -> np.ndarray:
    """Mass of every pattern under i.i.d. Bernoulli(p) bits."""
    k = _popcounts(dim)
    return np.power(p, k) * np.power(1.0 - p, dim - k)


def _point(dim: int, state: int) -> np.ndarray:
    out = np.zeros(1 << dim)
    out[state] = 1.0
    return out


def _shift(pmf: np.ndarray, x: int) -> np.ndarray:
    # law of (Z xor x) given the law of Z
    return pmf[np.arange(pmf.size) ^ x]


def _xor_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # law of (Y xor F) for independent Y ~ a, F ~ b
    if np.count_nonzero(a) > np.count_nonzero(b):
        a, b = b, a
    idx = np.arange(a.size)
    out = np.zeros(a.size)
    for y in np.flatnonzero(a):
        out += a[y] * b[idx ^ y]
    return out


def _delta_pmf(i: int, pop: Sequence[BitVector]) -> np.ndarray:
    dim = pop[0].dim
    others = [k for k in range(len(pop)) if k != i]
    out = np.zeros(1 << dim)
    n_pairs = len(others) * (len(others) - 1)
    for j in others:
        for k in others:
            if j != k:
                out[pop[j].bits ^ pop[k].bits] += 1.0 / n_pairs
    return out


def _crossover_pmf(x: int, partner: int, dim: int) -> np.ndarray:
    diff = x ^ partner
    idx = np.arange(1 << dim)
    reachable = ((idx ^ x) & ~diff) == 0
    return np.where(reachable, 2.0 ** -bin(diff).count("1"), 0.0)


def proposal_pmf_exact(spec: KernelSpec, i: int, pop: Sequence[BitVector]) -> StatePmf:
    """Exact law of ``propose(spec, i, pop, rng)`` by enumeration (dim <= 16)."""
    dim = pop[0].dim
    if dim > MAX_EXACT_DIM:
        raise ValueError(f"exact enumeration limited to dim <= {MAX_EXACT_DIM}, got {dim}")
    if len(pop) < spec.min_population:
        raise PopulationError(
            f"{spec.kind} needs at least {spec.min_population} chains, got {len(pop)}"
        )
    _check_index(i, pop)
    x = pop[i].bits
    kind = spec.kind

    def mut_branch():
        return _xor_convolve(_point(dim, x), _iid_pmf(dim, spec.p_flip))

    def xor_branch():
        return _shift(_delta_pmf(i, pop), x)

    if kind is Kind.IND_SAMP:
        probs = _iid_pmf(dim, spec.theta)
    elif kind is Kind.MUT:
        probs = mut_branch()
    elif kind is Kind.XOR:
        probs = xor_branch()
    elif kind is Kind.MUT_XOR:
        probs = spec.pi * mut_branch() + (1.0 - spec.pi) * xor_branch()
    elif kind is Kind.MUT_CRX:
        others = [k for k in range(len(pop)) if k != i]
        crx = sum(_crossover_pmf(x, pop[k].bits, dim) for k in others) / len(others)
        probs = spec.pi * mut_branch() + (1.0 - spec.pi) * crx
    elif kind is Kind.DDE_MC:
        probs = _shift(_xor_convolve(_delta_pmf(i, pop), _iid_pmf(dim, spec.p_flip)), x)
    elif kind is Kind.DDE_MC1:
        probs = _xor_convolve(_shift(_delta_pmf(i, pop), x), _iid_pmf(dim, spec.p_flip))
    elif kind is Kind.DDE_MC2:
        probs = _shift(_xor_convolve(_delta_pmf(i, pop), _iid_pmf(dim, spec.theta)), x)
    else:  # pragma: no cover
        raise ValueError(f"unknown kernel kind {kind!r}")
    return StatePmf(dim, probs)
