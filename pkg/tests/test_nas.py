import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from discrete_abc.bitstate import BitVector, DimensionError, RngStream
from discrete_abc.problems.nas import (
    EDGES,
    INVALID_DISTANCE,
    NAS_DIM,
    NasLookupError,
    NasProblem,
    NasTable,
    nas_decode,
    nas_encode,
    nas_key,
    nas_query,
    nas_synth_table,
    path_counts,
)


def from_edges(edges):
    bits = 0
    for e in edges:
        bits |= 1 << EDGES.index(e)
    return BitVector(NAS_DIM, bits)


def naive_valid(x):
    edges = [EDGES[k] for k in range(NAS_DIM) if (x.bits >> k) & 1]
    if len(edges) > 9:
        return False
    reach, frontier = {0}, [0]
    while frontier:
        u = frontier.pop()
        for a, b in edges:
            if a == u and b not in reach:
                reach.add(b)
                frontier.append(b)
    return 6 in reach


def naive_paths(x):
    edges = [EDGES[k] for k in range(NAS_DIM) if (x.bits >> k) & 1]

    def count(u):
        if u == 6:
            return 1
        return sum(count(b) for a, b in edges if a == u)

    return count(0)


@pytest.fixture(scope="module")
def table():
    return nas_synth_table(RngStream(5, ("nas-table",)))


class TestEncode:
    def test_examples(self):
        assert nas_encode(BitVector.zeros(NAS_DIM)) is None
        chain = from_edges([(k, k + 1) for k in range(6)])
        adj = nas_encode(chain)
        assert adj is not None and adj.sum() == 6
        assert nas_encode(BitVector.ones(NAS_DIM)) is None

    def test_direct_edge_is_valid(self):
        assert nas_encode(from_edges([(0, 6)])) is not None
        assert nas_encode(from_edges([(0, 1), (2, 6)])) is None

    def test_wrong_dim(self):
        with pytest.raises(DimensionError):
            nas_encode(BitVector.zeros(20))

    def test_bit_order(self):
        # bit 0 is (0,1), bit 5 is (0,6), bit 20 is (5,6)
        assert EDGES[0] == (0, 1) and EDGES[5] == (0, 6) and EDGES[20] == (5, 6)
        x = from_edges([(0, 6)])
        assert nas_key(x) == "000001" + "0" * 15

    @given(st.integers(0, (1 << NAS_DIM) - 1))
    @settings(max_examples=300)
    def test_validity_and_round_trip(self, code):
        x = BitVector(NAS_DIM, code)
        adj = nas_encode(x)
        assert (adj is not None) == naive_valid(x)
        if adj is not None:
            assert nas_decode(adj) == x
            assert np.array_equal(np.triu(adj, 1), adj)
        assert path_counts(code) == naive_paths(x)

    def test_decode_rejects_lower_triangle(self):
        a = np.zeros((7, 7), dtype=int)
        a[3, 1] = 1
        with pytest.raises(ValueError):
            nas_decode(a)


class TestTable:
    def test_keys_valid_and_complete(self, table):
        codes = table.codes()
        rng = np.random.default_rng(0)
        for c in rng.choice(codes, 300, replace=False):
            assert nas_encode(BitVector(NAS_DIM, int(c))) is not None
        # every valid cell is present: count by brute force over a random sample of codes
        for c in rng.integers(0, 1 << NAS_DIM, 2000):
            x = BitVector(NAS_DIM, int(c))
            assert (x in table) == naive_valid(x)

    def test_global_minimum_matches_scan(self, table):
        codes = table.codes()
        vals = table.val[codes]
        best = codes[vals == vals.min()]
        assert best.size == 1
        key = format(int(best[0]), "021b")[::-1]
        assert table.metadata["global_min_key"] == key
        assert table.metadata["global_min_val"] == vals.min()
        x, v = table.global_minimum()
        assert nas_key(x) == key and v == vals.min()

    def test_values_in_range(self, table):
        c = table.codes()
        assert np.all((table.val[c] >= 0) & (table.val[c] <= 1))
        assert np.all((table.test[c] >= 0) & (table.test[c] <= 1))

    def test_same_seed_same_bytes(self, table, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        table.save(a)
        nas_synth_table(RngStream(5, ("nas-table",))).save(b)
        assert a.read_bytes() == b.read_bytes()
        other = nas_synth_table(RngStream(6, ("nas-table",)))
        assert not np.array_equal(other.val, table.val, equal_nan=True)

    def test_file_round_trip(self, tmp_path):
        t = NasTable.from_entries(
            {from_edges([(0, 6)]): (0.07, 0.08), "10000000001" + "0" * 10: (0.2, 0.25)},
            metadata={"note": "tiny"},
        )
        path = tmp_path / "t.txt"
        t.save(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "vertex_count=7 max_edges=9"
        assert "000001000000000000000 0.07 0.08" in lines
        back = NasTable.load(path)
        assert len(back) == 2 and back.metadata == {"note": "tiny"}
        assert back.lookup(from_edges([(0, 6)])) == (0.07, 0.08)

    def test_rejects_invalid_entries(self):
        with pytest.raises(ValueError):
            NasTable.from_entries({BitVector.zeros(NAS_DIM): (0.1, 0.1)})
        with pytest.raises(ValueError):
            NasTable.from_entries({from_edges([(0, 6)]): (1.5, 0.1)})


class TestQuery:
    def test_penalty_lookup_and_missing(self):
        t = NasTable.from_entries({from_edges([(0, 6)]): (0.07, 0.09)})
        assert nas_query(t, BitVector.zeros(NAS_DIM))[0] == INVALID_DISTANCE
        val, meta = nas_query(t, from_edges([(0, 6)]))
        assert val == 0.07 and meta["test_error"] == 0.09
        with pytest.raises(NasLookupError):
            nas_query(t, from_edges([(0, 1), (1, 6)]))

    def test_problem_contract(self, table):
        prob = NasProblem(table)
        rng = RngStream(0)
        for _ in range(200):
            x = prob.sample_prior(rng)
            y = prob.simulate(x, rng)
            assert y == nas_query(table, x)[0]
            assert prob.distance(y, prob.observed) == y == prob.error(x)
        assert prob.log_prior(BitVector.ones(NAS_DIM)) == -1.0
        assert prob.log_prior(BitVector.zeros(NAS_DIM)) == 0.0

    def test_prior_density_of_ones(self, table):
        prob = NasProblem(table)
        rng = RngStream(3)
        ones = np.mean([prob.sample_prior(rng).popcount() for _ in range(4000)]) / NAS_DIM
        # normalized exp(-popcount/21) gives each bit P(1) = 1/(1+e^{1/21}) ~ 0.488
        assert abs(ones - 1 / (1 + math.exp(1 / 21))) < 0.01
