import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from discrete_abc.bitstate import (
    BitVector,
    DimensionError,
    RngStream,
    StatePmf,
    bernoulli_vector,
    hamming,
    mutate,
    popcount,
    xor,
)

DIMS = [1, 7, 63, 64, 65, 4000]


def bv(text):
    return BitVector.from_string(text)


# naive per-bit references, operating on plain lists of 0/1 by position
def naive_bits(v):
    return [(v.bits >> l) & 1 for l in range(v.dim)]


def naive_xor(a, b):
    return [x ^ y for x, y in zip(a, b)]


def naive_popcount(a):
    return sum(a)


@st.composite
def vector_pairs(draw, dims=st.integers(1, 200)):
    d = draw(dims)
    a = draw(st.integers(0, (1 << d) - 1))
    b = draw(st.integers(0, (1 << d) - 1))
    return BitVector(d, a), BitVector(d, b)


def random_vector(dim, rng):
    return BitVector.from_array(rng.integers(0, 2, dim))


class TestExamples:
    def test_xor(self):
        assert xor(bv("1010"), bv("1010")) == bv("0000")
        assert xor(bv("1010"), bv("0000")) == bv("1010")
        assert xor(bv("1100"), bv("1010")) == bv("0110")

    def test_hamming(self):
        x = bv("1011")
        assert hamming(x, x) == 0
        assert hamming(bv("0000"), bv("1111")) == 4
        assert hamming(bv("1100"), bv("1010")) == 2

    def test_popcount(self):
        assert popcount(bv("0000")) == 0
        assert popcount(bv("1111")) == 4

    def test_mutate_limits(self):
        rng = RngStream(1)
        x = bv("1100101")
        assert mutate(x, 0.0, rng) == x
        assert mutate(x, 1.0, rng) == bv("0011010")

    def test_bernoulli_limits(self):
        rng = RngStream(2)
        assert bernoulli_vector(4, 0.0, rng) == bv("0000")
        assert bernoulli_vector(4, 1.0, rng) == bv("1111")

    def test_errors(self):
        with pytest.raises(DimensionError):
            xor(bv("10"), bv("101"))
        with pytest.raises(DimensionError):
            hamming(bv("10"), bv("101"))
        with pytest.raises(ValueError):
            mutate(bv("10"), 1.5, RngStream(0))
        with pytest.raises(ValueError):
            mutate(bv("10"), -0.1, RngStream(0))
        with pytest.raises(ValueError):
            bernoulli_vector(3, 2.0, RngStream(0))
        with pytest.raises(ValueError):
            BitVector(3, 8)
        with pytest.raises(ValueError):
            BitVector(0)
        with pytest.raises(ValueError):
            BitVector.from_string("10a")


class TestEncoding:
    def test_text_is_msb_first(self):
        v = BitVector(5, 0b00011)
        assert str(v) == "00011"
        assert v[0] == 1 and v[1] == 1 and v[4] == 0
        assert list(v.to_array()) == [1, 1, 0, 0, 0]

    def test_array_round_trip(self):
        arr = np.array([1, 0, 0, 1, 1, 0, 1])
        v = BitVector.from_array(arr)
        assert np.array_equal(v.to_array(), arr)
        assert BitVector.from_string(str(v)) == v

    @pytest.mark.parametrize("dim", DIMS)
    def test_words_mask_high_bits(self, dim):
        v = BitVector.ones(dim)
        w = v.words
        assert w.dtype == np.dtype("<u8")
        assert w.size == (dim + 63) // 64
        total = sum(int(x).bit_count() for x in w)
        assert total == dim
        assert BitVector.from_words(w, dim) == v


class TestOracle:
    @pytest.mark.parametrize("dim", DIMS)
    def test_packed_ops_match_per_bit_loops(self, dim):
        rng = np.random.default_rng(dim)
        for _ in range(5):
            a, b = random_vector(dim, rng), random_vector(dim, rng)
            na, nb = naive_bits(a), naive_bits(b)
            assert naive_bits(xor(a, b)) == naive_xor(na, nb)
            assert popcount(a) == naive_popcount(na)
            assert hamming(a, b) == naive_popcount(naive_xor(na, nb))
            assert list(a.to_array()) == na

    @pytest.mark.parametrize("dim", DIMS)
    def test_mutate_matches_uniform_threshold(self, dim):
        x = random_vector(dim, np.random.default_rng(0))
        out = mutate(x, 0.3, RngStream(5))
        u = RngStream(5).uniforms(dim)
        expect = [b ^ int(ul < 0.3) for b, ul in zip(naive_bits(x), u)]
        assert naive_bits(out) == expect

    @pytest.mark.parametrize("dim", DIMS)
    def test_ops_keep_high_bits_zero(self, dim):
        rng = RngStream(dim)
        v = BitVector.zeros(dim)
        for step in range(20):
            v = mutate(v, 0.5, rng)
            v = xor(v, bernoulli_vector(dim, 0.7, rng))
            assert v.bits >> dim == 0
            assert 0 <= popcount(v) <= dim


class TestProperties:
    @given(vector_pairs())
    def test_involution_and_commutativity(self, ab):
        a, b = ab
        assert xor(xor(a, b), b) == a
        assert xor(a, b) == xor(b, a)
        assert hamming(a, b) == hamming(b, a)
        assert xor(a, a) == BitVector.zeros(a.dim)

    @given(vector_pairs(), st.integers(0, 2**64))
    def test_triangle_inequality(self, ab, seed):
        a, b = ab
        c = bernoulli_vector(a.dim, 0.5, RngStream(seed))
        assert hamming(a, c) <= hamming(a, b) + hamming(b, c)
        assert popcount(xor(a, b)) == hamming(a, b)

    @given(st.integers(0, 2**63), st.integers(1, 300), st.floats(0, 1))
    @settings(max_examples=50)
    def test_determinism(self, seed, dim, p):
        x = bernoulli_vector(dim, 0.5, RngStream(seed))
        assert mutate(x, p, RngStream(seed, ("m",))) == mutate(x, p, RngStream(seed, ("m",)))
        assert bernoulli_vector(dim, p, RngStream(seed)) == bernoulli_vector(dim, p, RngStream(seed))

    def test_mutate_does_not_modify_input(self):
        x = bv("101010")
        before = (x.dim, x.bits)
        mutate(x, 0.5, RngStream(3))
        assert (x.dim, x.bits) == before


class TestDistributions:
    def test_mutate_half_is_uniform_on_three_bits(self):
        rng = RngStream(11)
        n = 100_000
        x = bv("000")
        counts = np.bincount([mutate(x, 0.5, rng).bits for _ in range(n)], minlength=8)
        p = 1 / 8
        se = math.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) < 3 * se)

    def test_bernoulli_popcount_mean(self):
        rng = RngStream(12)
        dim, reps = 3940, 400
        mean = np.mean([popcount(bernoulli_vector(dim, 0.5, rng)) for _ in range(reps)])
        sd_single = math.sqrt(dim * 0.25)
        assert abs(mean - 1970) < 3 * sd_single / math.sqrt(reps)
        # every single draw also within the per-draw band most of the time
        assert abs(popcount(bernoulli_vector(dim, 0.5, rng)) - 1970) < 5 * sd_single


class TestRngStream:
    def test_same_seed_same_sequence(self):
        a, b = RngStream(42), RngStream(42)
        assert np.array_equal(a.uniforms(5000), b.uniforms(5000))
        assert a.uniform() == b.uniform()

    def test_substreams_differ_and_replay(self):
        root = RngStream(7)
        s1, s2 = root.substream("repeat", 0), root.substream("repeat", 1)
        x1, x2 = s1.uniforms(100).copy(), s2.uniforms(100).copy()
        assert not np.array_equal(x1, x2)
        assert np.array_equal(RngStream(7).substream("repeat", 0).uniforms(100), x1)
        # correlation between independent substreams is small
        assert abs(np.corrcoef(x1, x2)[0, 1]) < 0.35

    def test_substream_does_not_consume_parent(self):
        a, b = RngStream(9), RngStream(9)
        a.substream("x").uniforms(10)
        assert a.uniform() == b.uniform()

    def test_buffering_is_invisible(self):
        # draw sizes straddling the internal block boundary
        a, b = RngStream(3), RngStream(3)
        seq_a = np.concatenate([a.uniforms(n).copy() for n in (4000, 200, 9000, 1)])
        seq_b = b.uniforms(4000 + 200 + 9000 + 1)
        assert np.array_equal(seq_a, seq_b)

    def test_integer_and_exponential(self):
        rng = RngStream(4)
        ints = [rng.integer(5) for _ in range(10000)]
        assert set(ints) == {0, 1, 2, 3, 4}
        exps = [rng.exponential(2.0) for _ in range(1000)]
        assert min(exps) > 0

    def test_negative_label_rejected(self):
        with pytest.raises(ValueError):
            RngStream(0).substream(-1)


class TestStatePmf:
    def test_mapping_interface(self):
        pmf = StatePmf(2, [0.5, 0.0, 0.25, 0.25])
        assert len(pmf) == 3
        assert pmf[bv("00")] == 0.5
        assert pmf.total() == pytest.approx(1.0)
        assert pmf.argmax() == bv("00")
        assert set(map(str, pmf)) == {"00", "10", "11"}
        with pytest.raises(DimensionError):
            pmf[bv("000")]

    def test_from_samples_and_tv(self):
        samples = [bv("01")] * 3 + [bv("10")]
        pmf = StatePmf.from_samples(2, samples)
        assert pmf[bv("01")] == 0.75
        assert pmf.tv_distance(StatePmf(2, [0, 0.75, 0.25, 0])) == 0.0
        assert pmf.tv_distance([0, 0, 0, 1]) == 1.0
