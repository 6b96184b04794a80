"""Packed binary vectors and the seeded random stream used by every kernel.

A :class:`BitVector` stores ``dim`` bits inside a single Python integer, bit
``l`` of the integer being position ``l`` of the vector.  Python integers are
themselves arrays of machine digits, so xor and popcount run word-at-a-time;
:attr:`BitVector.words` exposes the same bits as little-endian ``uint64``
words.  The textual form (``str(v)``) lists the most significant position
first, exactly like ``format(bits, "0{dim}b")``.
"""

from __future__ import annotations

import hashlib
import math
from typing import Iterable, Union

import numpy as np

__all__ = [
    "BitVector",
    "DimensionError",
    "RngStream",
    "StatePmf",
    "bernoulli_vector",
    "hamming",
    "mutate",
    "popcount",
    "xor",
]

WORD_BITS = 64


class DimensionError(ValueError):
    """Two bit vectors (or a vector and a model) disagree on dimension."""


class BitVector:
    """Immutable fixed-dimension bit string.

    Construct from an integer whose set bits must all lie below ``dim``; use
    :meth:`from_string` / :meth:`from_array` for the other encodings.
    """

    __slots__ = ("dim", "bits")

    def __init__(self, dim: int, bits: int = 0):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        if bits < 0 or bits >> dim:
            raise ValueError(f"bits {bits:#x} do not fit in dim={dim}")
        self.dim = int(dim)
        self.bits = int(bits)

    @classmethod
    def _raw(cls, dim: int, bits: int) -> "BitVector":
        # unchecked constructor for the hot paths; callers guarantee masking
        v = object.__new__(cls)
        v.dim = dim
        v.bits = bits
        return v

    @classmethod
    def zeros(cls, dim: int) -> "BitVector":
        return cls(dim, 0)

    @classmethod
    def ones(cls, dim: int) -> "BitVector":
        return cls(dim, (1 << dim) - 1)

    @classmethod
    def from_string(cls, text: str) -> "BitVector":
        """Parse a 0/1 string, most significant position first."""
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"not a 0/1 string: {text!r}")
        return cls(len(text), int(text, 2))

    @classmethod
    def from_array(cls, arr) -> "BitVector":
        """Build from a 0/1 sequence where ``arr[l]`` is position ``l``."""
        a = np.asarray(arr)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("expected a non-empty 1-d array")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("array must contain only 0 and 1")
        return cls._raw(a.size, _bool_to_int(a.astype(bool)))

    @classmethod
    def from_words(cls, words, dim: int) -> "BitVector":
        w = np.asarray(words, dtype="<u8")
        if w.size != n_words(dim):
            raise DimensionError(f"{w.size} words cannot hold dim={dim}")
        return cls(dim, int.from_bytes(w.tobytes(), "little"))

    @property
    def words(self) -> np.ndarray:
        """The bits as little-endian uint64 words; unused high bits are zero."""
        n = n_words(self.dim)
        return np.frombuffer(self.bits.to_bytes(8 * n, "little"), dtype="<u8").copy()

    def to_array(self) -> np.ndarray:
        """uint8 array with ``out[l]`` equal to position ``l``."""
        raw = np.frombuffer(self.bits.to_bytes((self.dim + 7) // 8, "little"), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little", count=self.dim)

    def popcount(self) -> int:
        return self.bits.bit_count()

    def __getitem__(self, pos: int) -> int:
        if not -self.dim <= pos < self.dim:
            raise IndexError(pos)
        return (self.bits >> (pos % self.dim)) & 1

    def __len__(self) -> int:
        return self.dim

    def __xor__(self, other: "BitVector") -> "BitVector":
        return xor(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitVector):
            return NotImplemented
        return self.dim == other.dim and self.bits == other.bits

    def __hash__(self) -> int:
        return hash((self.dim, self.bits))

    def __str__(self) -> str:
        return format(self.bits, f"0{self.dim}b")

    def __repr__(self) -> str:
        return f"BitVector('{self}')"


def n_words(dim: int) -> int:
    return (dim + WORD_BITS - 1) // WORD_BITS


def _bool_to_int(mask: np.ndarray) -> int:
    return int.from_bytes(np.packbits(mask, bitorder="little").tobytes(), "little")


def _check_dims(a: BitVector, b: BitVector) -> None:
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} != {b.dim}")


def xor(a: BitVector, b: BitVector) -> BitVector:
    _check_dims(a, b)
    return BitVector._raw(a.dim, a.bits ^ b.bits)


def popcount(v: BitVector) -> int:
    return v.bits.bit_count()


def hamming(a: BitVector, b: BitVector) -> int:
    _check_dims(a, b)
    return (a.bits ^ b.bits).bit_count()


def _check_prob(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


def mutate(x: BitVector, p_flip: float, rng: "RngStream") -> BitVector:
    """Flip each bit independently with probability ``p_flip``.

    Consumes exactly ``x.dim`` uniforms, position 0 first; bit ``l`` flips
    when its uniform is below ``p_flip``.
    """
    _check_prob("p_flip", p_flip)
    u = rng.uniforms(x.dim)
    return BitVector._raw(x.dim, x.bits ^ _bool_to_int(u < p_flip))


def bernoulli_vector(dim: int, theta: float, rng: "RngStream") -> BitVector:
    """I.i.d. Bernoulli(theta) bits, one uniform per position."""
    _check_prob("theta", theta)
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    return BitVector._raw(dim, _bool_to_int(rng.uniforms(dim) < theta))


Label = Union[int, str]


def _label_key(label: Label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer substream labels must be non-negative")
        return int(label)
    digest = hashlib.blake2b(str(label).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """Seeded, splittable stream of uniforms on top of numpy's Philox.

    Every derived draw (integers, exponentials, Bernoulli bits) is computed
    from the single sequence of doubles the Philox generator emits, read in
    order through an internal buffer, so the output depends only on the seed,
    the substream path and the order of calls.  Streams are single-owner.
    """

    _BLOCK = 4096

    def __init__(self, seed: int, path: Iterable[Label] = ()):
        self.seed = int(seed)
        self.path = tuple(_label_key(p) for p in path)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(seq))
        self._buf = np.empty(0)
        self._pos = 0

    def substream(self, *labels: Label) -> "RngStream":
        """Independent stream addressed by this stream's path plus ``labels``."""
        return RngStream(self.seed, self.path + tuple(_label_key(x) for x in labels))

    def uniforms(self, n: int) -> np.ndarray:
        """Next ``n`` doubles in [0, 1); the returned array must not be written."""
        pos = self._pos
        end = pos + n
        if end > self._buf.size:
            rest = self._buf[pos:]
            fresh = self._gen.random(max(self._BLOCK, n - rest.size))
            self._buf = np.concatenate([rest, fresh]) if rest.size else fresh
            pos, end = 0, n
        self._pos = end
        return self._buf[pos:end]

    def uniform(self) -> float:
        if self._pos >= self._buf.size:
            self._buf = self._gen.random(self._BLOCK)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)

    def integer(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` from one uniform."""
        return int(self.uniform() * n)

    def exponential(self, mean: float) -> float:
        """Exponential draw with the given mean, ``-mean * ln(u)`` with u in (0, 1)."""
        # shift by half an ulp of the 53-bit grid so u is never 0
        return -mean * math.log(self.uniform() + 2.0**-54)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"


class StatePmf:
    """Probability mass over all ``2**dim`` bit vectors, stored densely.

    Behaves as a read-only mapping from :class:`BitVector` to probability;
    iteration yields only states with non-zero mass.  ``probs[s]`` is the mass
    of the vector whose integer encoding is ``s``.
    """

    def __init__(self, dim: int, probs: np.ndarray):
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (1 << dim,):
            raise ValueError(f"expected {1 << dim} probabilities, got {probs.shape}")
        self.dim = dim
        self.probs = probs

    def __getitem__(self, v: BitVector) -> float:
        if v.dim != self.dim:
            raise DimensionError(f"dimension mismatch: {v.dim} != {self.dim}")
        return float(self.probs[v.bits])

    def get(self, v: BitVector, default: float = 0.0) -> float:
        return self[v] if v.dim == self.dim else default

    def support(self) -> list[BitVector]:
        return [BitVector._raw(self.dim, int(s)) for s in np.flatnonzero(self.probs)]

    def __iter__(self):
        return iter(self.support())

    def __len__(self) -> int:
        return int(np.count_nonzero(self.probs))

    def items(self):
        return [(v, float(self.probs[v.bits])) for v in self.support()]

    def total(self) -> float:
        return float(self.probs.sum())

    def argmax(self) -> BitVector:
        return BitVector._raw(self.dim, int(np.argmax(self.probs)))

    def tv_distance(self, other) -> float:
        """Total variation distance to another pmf or a dense probability array."""
        q = other.probs if isinstance(other, StatePmf) else np.asarray(other, dtype=float)
        return 0.5 * float(np.abs(self.probs - q).sum())

    @classmethod
    def from_samples(cls, dim: int, samples: Iterable[BitVector]) -> "StatePmf":
        codes = np.fromiter((s.bits for s in samples), dtype=np.int64)
        if codes.size == 0:
            raise ValueError("no samples")
        counts = np.bincount(codes, minlength=1 << dim).astype(float)
        return cls(dim, counts / codes.size)
