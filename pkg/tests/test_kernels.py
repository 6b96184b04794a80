import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from discrete_abc.bitstate import BitVector, RngStream
from discrete_abc.kernels import (
    Kind,
    KernelSpec,
    Population,
    PopulationError,
    crossover,
    delta_sample,
    propose,
    proposal_pmf_exact,
)

SYMMETRIC = [k for k in Kind if k is not Kind.MUT_CRX]


def pop(*texts):
    return Population.from_strings(*texts)


@st.composite
def populations(draw, max_dim=6, sizes=(3, 4, 5)):
    dim = draw(st.integers(1, max_dim))
    c = draw(st.sampled_from(sizes))
    codes = draw(st.lists(st.integers(0, (1 << dim) - 1), min_size=c, max_size=c))
    i = draw(st.integers(0, c - 1))
    return Population(BitVector(dim, b) for b in codes), i


def brute_force_pmf(spec, i, p):
    """Independent oracle: enumerate every random choice and multiply probabilities."""
    dim, c = p.dim, len(p)
    x = p[i].bits
    others = [k for k in range(c) if k != i]
    pairs = [(j, k) for j in others for k in others if j != k]
    states = range(1 << dim)

    def flip_prob(mask, q):
        f = bin(mask).count("1")
        return q**f * (1 - q) ** (dim - f)

    out = np.zeros(1 << dim)
    for target in states:
        total = 0.0
        kind = spec.kind
        mut = flip_prob(target ^ x, spec.p_flip)
        if kind is Kind.IND_SAMP:
            total = flip_prob(target, spec.theta)
        elif kind is Kind.MUT:
            total = mut
        else:
            for j, k in pairs:
                d = p[j].bits ^ p[k].bits
                w = 1.0 / len(pairs)
                if kind is Kind.XOR:
                    total += w * (target == x ^ d)
                elif kind is Kind.MUT_XOR:
                    total += w * (1 - spec.pi) * (target == x ^ d)
                elif kind in (Kind.DDE_MC, Kind.DDE_MC1):
                    total += w * flip_prob(target ^ x ^ d, spec.p_flip)
                elif kind is Kind.DDE_MC2:
                    total += w * flip_prob(target ^ x ^ d, spec.theta)
            if kind is Kind.MUT_XOR:
                total += spec.pi * mut
        out[target] = total
    return out


class TestSpec:
    def test_defaults(self):
        s = KernelSpec("dde-mc")
        assert (s.p_flip, s.pi, s.theta) == (0.01, 0.5, 0.5)
        assert s.kind is Kind.DDE_MC

    def test_invalid(self):
        with pytest.raises(ValueError):
            KernelSpec("nope")
        with pytest.raises(ValueError):
            KernelSpec("mut", p_flip=1.5)
        with pytest.raises(ValueError):
            KernelSpec("mut+xor", pi=1.0)
        with pytest.raises(ValueError):
            KernelSpec("mut+crx", pi=0.0)

    def test_round_trip(self):
        s = KernelSpec("mut+xor", p_flip=0.05, pi=0.3)
        assert KernelSpec.from_dict(s.to_dict()) == s

    def test_symmetry_flags(self):
        assert not KernelSpec("mut+crx").symmetric
        assert KernelSpec("ind-samp").symmetric
        assert not KernelSpec("ind-samp", theta=0.3).symmetric
        assert KernelSpec("dde-mc").symmetric


class TestDelta:
    def test_identical_chains(self):
        rng = RngStream(0)
        p = pop("000", "000", "000")
        assert all(delta_sample(i, p, rng) == BitVector.zeros(3) for i in range(3) for _ in range(20))

    def test_two_bit_example(self):
        rng = RngStream(1)
        p = pop("00", "01", "10")
        assert {str(delta_sample(0, p, rng)) for _ in range(50)} == {"11"}

    def test_uniform_over_three_differences(self):
        rng = RngStream(2)
        p = pop("000", "001", "011", "111")
        n = 30000
        counts = Counter(str(delta_sample(0, p, rng)) for _ in range(n))
        assert set(counts) == {"010", "110", "100"}
        se = math.sqrt(n / 3 * 2 / 3)
        assert all(abs(v - n / 3) < 4 * se for v in counts.values())

    def test_pairs_are_uniform_and_exclude_i(self):
        rng = RngStream(3)
        c = 5
        p = Population(BitVector(8, 1 << k) for k in range(c))
        for i in range(c):
            seen = Counter(delta_sample(i, p, rng).bits for _ in range(6000))
            expected = {(1 << j) | (1 << k) for j in range(c) for k in range(c) if len({i, j, k}) == 3}
            assert set(seen) == expected
            # each unordered pair gets 2 of 12 ordered pairs
            assert all(abs(v - 1000) < 150 for v in seen.values())

    def test_too_small(self):
        with pytest.raises(PopulationError):
            delta_sample(0, pop("0", "1"), RngStream(0))


class TestCrossover:
    def test_identical_parents(self):
        x = BitVector.from_string("101101")
        assert crossover(x, x, RngStream(0)) == x

    def test_agreement_preserved(self):
        rng = RngStream(1)
        a, b = BitVector.from_string("110010"), BitVector.from_string("100111")
        agree = ~(a.bits ^ b.bits) & 0b111111
        for _ in range(200):
            c = crossover(a, b, rng)
            assert (c.bits ^ a.bits) & agree == 0

    def test_uniform_on_two_bits(self):
        rng = RngStream(2)
        n = 40000
        counts = Counter(str(crossover(BitVector.from_string("00"), BitVector.from_string("11"), rng)) for _ in range(n))
        assert set(counts) == {"00", "01", "10", "11"}
        assert all(abs(v - n / 4) < 4 * math.sqrt(n * 3 / 16) for v in counts.values())


class TestPropose:
    def test_dde_mc_exact_example(self):
        p = pop("000", "001", "010")
        pmf = proposal_pmf_exact(KernelSpec("dde-mc", p_flip=0.1), 0, p)
        expect = {"011": 0.729, "001": 0.081, "010": 0.081, "111": 0.081,
                  "000": 0.009, "110": 0.009, "101": 0.009, "100": 0.001}
        for s, v in expect.items():
            assert pmf[BitVector.from_string(s)] == pytest.approx(v, abs=1e-12)

    def test_dde_mc_zero_flip_is_xor(self):
        p = pop("0110", "1010", "0011")
        pmf = proposal_pmf_exact(KernelSpec("dde-mc", p_flip=0.0), 0, p)
        target = p[0] ^ (p[1] ^ p[2])
        assert pmf.support() == [target]
        rng = RngStream(0)
        assert all(propose(KernelSpec("dde-mc", p_flip=0.0), 0, p, rng) == target for _ in range(20))

    def test_dde_mc2_uniform(self):
        p = pop("01", "10", "11")
        pmf = proposal_pmf_exact(KernelSpec("dde-mc2"), 1, p)
        assert np.allclose(pmf.probs, 0.25, atol=1e-15)

    def test_does_not_modify_population(self):
        p = pop("0101", "1100", "0011", "1111")
        snapshot = tuple(x.bits for x in p)
        rng = RngStream(3)
        for kind in Kind:
            for i in range(4):
                propose(KernelSpec(kind, p_flip=0.3), i, p, rng)
        assert tuple(x.bits for x in p) == snapshot

    def test_population_too_small(self):
        with pytest.raises(PopulationError):
            propose(KernelSpec("dde-mc"), 0, pop("0", "1"), RngStream(0))
        with pytest.raises(PopulationError):
            propose(KernelSpec("mut+crx"), 0, pop("0"), RngStream(0))
        assert propose(KernelSpec("mut"), 0, pop("0"), RngStream(0)).dim == 1

    def test_bad_index(self):
        with pytest.raises(IndexError):
            propose(KernelSpec("mut"), 3, pop("0", "1"), RngStream(0))

    def test_mixture_branch_drawn_first(self):
        # the branch uniform is the first draw; with pi=0.5 a uniform < 0.5 picks mut
        p = pop("0000", "1111", "0101")
        for seed in range(20):
            u = RngStream(seed).uniform()
            out = propose(KernelSpec("mut+xor", p_flip=0.0), 0, p, RngStream(seed))
            if u < 0.5:
                assert out == p[0]
            else:
                assert out in (p[0] ^ p[1] ^ p[2],)

    def test_exact_dim_bound(self):
        p = Population(BitVector(17, k) for k in range(3))
        with pytest.raises(ValueError):
            proposal_pmf_exact(KernelSpec("mut"), 0, p)


class TestExactPmf:
    @given(populations(), st.sampled_from(list(Kind)), st.sampled_from([0.01, 0.1, 0.37]))
    @settings(max_examples=120, deadline=None)
    def test_matches_brute_force_and_normalizes(self, pi_, kind, q):
        p, i = pi_
        spec = KernelSpec(kind, p_flip=q, pi=0.4, theta=0.5 if kind is Kind.IND_SAMP else 0.3)
        pmf = proposal_pmf_exact(spec, i, p)
        assert abs(pmf.total() - 1.0) < 1e-12
        if kind is not Kind.MUT_CRX:
            assert np.allclose(pmf.probs, brute_force_pmf(spec, i, p), atol=1e-12)

    def test_crossover_pmf_by_enumeration(self):
        p = pop("010", "111", "100")
        spec = KernelSpec("mut+crx", p_flip=0.2, pi=0.3)
        pmf = proposal_pmf_exact(spec, 0, p)
        x = p[0].bits
        expect = np.zeros(8)
        for t in range(8):
            f = bin(t ^ x).count("1")
            expect[t] += 0.3 * 0.2**f * 0.8 ** (3 - f)
        for partner in (1, 2):
            for mask in range(8):
                child = x ^ ((x ^ p[partner].bits) & mask)
                expect[child] += 0.7 * 0.5 * (1 / 8)
        assert np.allclose(pmf.probs, expect, atol=1e-15)

    @given(populations(), st.sampled_from(SYMMETRIC), st.sampled_from([0.01, 0.1]))
    @settings(max_examples=150, deadline=None)
    def test_symmetry(self, pi_, kind, q):
        p, i = pi_
        spec = KernelSpec(kind, p_flip=q)
        fwd = proposal_pmf_exact(spec, i, p)
        for target in range(1 << p.dim):
            back = proposal_pmf_exact(spec, i, p.replace(i, BitVector(p.dim, target)))
            assert abs(fwd.probs[target] - back.probs[p[i].bits]) < 1e-12

    @given(populations(), st.sampled_from([0.01, 0.1]))
    @settings(max_examples=80, deadline=None)
    def test_full_support_and_dde_mc1_equivalence(self, pi_, q):
        p, i = pi_
        dde = proposal_pmf_exact(KernelSpec("dde-mc", p_flip=q), i, p)
        mx = proposal_pmf_exact(KernelSpec("mut+xor", p_flip=q), i, p)
        assert (dde.probs > 0).all() and (mx.probs > 0).all()
        dde1 = proposal_pmf_exact(KernelSpec("dde-mc1", p_flip=q), i, p)
        assert np.max(np.abs(dde.probs - dde1.probs)) <= 1e-12

    @given(populations())
    @settings(max_examples=80, deadline=None)
    def test_xor_support_within_differences(self, pi_):
        p, i = pi_
        pmf = proposal_pmf_exact(KernelSpec("xor"), i, p)
        others = [k for k in range(len(p)) if k != i]
        allowed = {p[i].bits ^ p[j].bits ^ p[k].bits for j in others for k in others if j != k}
        assert {v.bits for v in pmf.support()} <= allowed
        assert len(pmf) <= len(allowed)


MC_CASES = [
    ("dde-mc", ("010", "111", "100", "001")),
    ("mut+xor", ("010", "111", "100", "001")),
    ("mut+crx", ("0110", "1011", "0001")),
    ("dde-mc1", ("011", "110", "101")),
    ("dde-mc2", ("01", "11", "10")),
    ("ind-samp", ("101", "000", "011")),
    ("mut", ("1010", "0000", "1111")),
    ("xor", ("0110", "1011", "0001", "1111")),
]


@pytest.mark.parametrize("kind,texts", MC_CASES)
def test_monte_carlo_matches_exact(kind, texts):
    p = pop(*texts)
    spec = KernelSpec(kind, p_flip=0.15, pi=0.5, theta=0.5 if kind != "ind-samp" else 0.3)
    pmf = proposal_pmf_exact(spec, 1, p)
    rng = RngStream(2024, (kind,))
    n = 200_000
    counts = np.bincount([propose(spec, 1, p, rng).bits for _ in range(n)], minlength=1 << p.dim)
    expected = n * pmf.probs
    sd = np.sqrt(n * pmf.probs * (1 - pmf.probs))
    assert np.all(counts[pmf.probs == 0] == 0)
    nz = pmf.probs > 0
    assert np.all(np.abs(counts[nz] - expected[nz]) <= 4 * sd[nz] + 1e-9)


@pytest.mark.slow
def test_monte_carlo_million_draws_dde_mc():
    p = pop("010", "111", "100", "001")
    spec = KernelSpec("dde-mc", p_flip=0.1)
    pmf = proposal_pmf_exact(spec, 0, p)
    rng = RngStream(99)
    n = 1_000_000
    counts = np.bincount([propose(spec, 0, p, rng).bits for _ in range(n)], minlength=8)
    sd = np.sqrt(n * pmf.probs * (1 - pmf.probs))
    assert np.all(np.abs(counts - n * pmf.probs) <= 4 * sd)
