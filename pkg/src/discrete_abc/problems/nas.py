"""Cell-topology search over a tabulated benchmark.

A cell is a DAG on 7 vertices (0 is the input, 6 the output) whose edges
only run from lower to higher vertex numbers, so the 21 entries of the
strict upper triangle of the adjacency matrix describe it completely.  Bit
``k`` of the 21-bit state is the ``k``-th upper-triangle entry in row-major
order: ``(0,1), (0,2), ..., (0,6), (1,2), ..., (5,6)``.  A cell is valid when
it has at most 9 edges and the output is reachable from the input.

Tables live in dense arrays indexed by the 21-bit integer, with NaN marking
entries that are absent.  On disk every record is ``key val test`` where the
key lists the upper-triangle entries in the same row-major order (so the key
is the reverse of ``str(BitVector)``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..bitstate import BitVector, DimensionError, RngStream, bernoulli_vector
from .binnn import boltzmann_bit_prob, boltzmann_log_prior

__all__ = [
    "INVALID_DISTANCE",
    "MAX_EDGES",
    "NAS_DIM",
    "NasLookupError",
    "NasProblem",
    "NasTable",
    "VERTEX_COUNT",
    "nas_decode",
    "nas_encode",
    "nas_key",
    "nas_query",
    "nas_synth_table",
    "path_counts",
]

VERTEX_COUNT = 7
MAX_EDGES = 9
NAS_DIM = VERTEX_COUNT * (VERTEX_COUNT - 1) // 2
INVALID_DISTANCE = 1.0

EDGES = [(u, v) for u in range(VERTEX_COUNT) for v in range(u + 1, VERTEX_COUNT)]
_EDGE_BIT = {e: k for k, e in enumerate(EDGES)}


class NasLookupError(KeyError):
    """A valid architecture has no entry in the table."""


def _check_dim(x: BitVector) -> None:
    if x.dim != NAS_DIM:
        raise DimensionError(f"architecture encodings have dim {NAS_DIM}, got {x.dim}")


def path_counts(codes) -> np.ndarray:
    """Number of input-to-output paths for each 21-bit code (vectorized)."""
    codes = np.asarray(codes, dtype=np.int64)
    paths = [np.ones_like(codes)]
    for v in range(1, VERTEX_COUNT):
        acc = np.zeros_like(codes)
        for u in range(v):
            acc += paths[u] * ((codes >> _EDGE_BIT[(u, v)]) & 1)
        paths.append(acc)
    return paths[-1]


def _valid_mask(codes: np.ndarray) -> np.ndarray:
    edges = np.bitwise_count(codes.astype(np.uint32))
    return (edges <= MAX_EDGES) & (path_counts(codes) > 0)


def nas_encode(x: BitVector) -> Optional[np.ndarray]:
    """7x7 upper-triangular adjacency matrix of ``x``, or None when invalid."""
    _check_dim(x)
    if x.popcount() > MAX_EDGES or path_counts(x.bits) == 0:
        return None
    adj = np.zeros((VERTEX_COUNT, VERTEX_COUNT), dtype=np.uint8)
    for k, (u, v) in enumerate(EDGES):
        adj[u, v] = (x.bits >> k) & 1
    return adj


def nas_decode(adj) -> BitVector:
    """Bit vector of an upper-triangular adjacency matrix."""
    a = np.asarray(adj)
    if a.shape != (VERTEX_COUNT, VERTEX_COUNT):
        raise DimensionError(f"adjacency must be {VERTEX_COUNT}x{VERTEX_COUNT}, got {a.shape}")
    if np.tril(a).any():
        raise ValueError("adjacency must be strictly upper triangular")
    bits = 0
    for k, (u, v) in enumerate(EDGES):
        if a[u, v]:
            bits |= 1 << k
    return BitVector(NAS_DIM, bits)


def nas_key(x: BitVector) -> str:
    """Row-major upper-triangle listing used as the table key."""
    _check_dim(x)
    return str(x)[::-1]


def _key_code(key: str) -> int:
    if len(key) != NAS_DIM or set(key) - {"0", "1"}:
        raise ValueError(f"bad architecture key {key!r}")
    return int(key[::-1], 2)


@dataclass(eq=False)
class NasTable:
    """Validation/test errors for valid architectures, indexed by 21-bit code."""

    val: np.ndarray
    test: np.ndarray
    metadata: dict = field(default_factory=dict)
    vertex_count: int = VERTEX_COUNT
    max_edges: int = MAX_EDGES

    def __post_init__(self):
        size = 1 << NAS_DIM
        self.val = np.asarray(self.val, dtype=float)
        self.test = np.asarray(self.test, dtype=float)
        if self.val.shape != (size,) or self.test.shape != (size,):
            raise ValueError(f"tables must have {size} entries")
        if (self.vertex_count, self.max_edges) != (VERTEX_COUNT, MAX_EDGES):
            raise ValueError("only 7-vertex, 9-edge tables are supported")
        present = ~np.isnan(self.val)
        if not np.array_equal(present, ~np.isnan(self.test)):
            raise ValueError("validation and test entries must be present together")
        codes = np.flatnonzero(present)
        if not _valid_mask(codes).all():
            raise ValueError("table contains invalid architectures")
        for arr in (self.val, self.test):
            vals = arr[present]
            if ((vals < 0) | (vals > 1)).any():
                raise ValueError("errors must lie in [0, 1]")

    @classmethod
    def from_entries(cls, entries: dict, metadata: Optional[dict] = None) -> "NasTable":
        """Build from ``{BitVector or key: (val, test)}``."""
        size = 1 << NAS_DIM
        val, test = np.full(size, np.nan), np.full(size, np.nan)
        for k, (v, t) in entries.items():
            code = k.bits if isinstance(k, BitVector) else _key_code(k)
            val[code], test[code] = v, t
        return cls(val, test, dict(metadata or {}))

    def codes(self) -> np.ndarray:
        return np.flatnonzero(~np.isnan(self.val))

    def __len__(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.val)))

    def __contains__(self, x: BitVector) -> bool:
        return x.dim == NAS_DIM and not np.isnan(self.val[x.bits])

    def lookup(self, x: BitVector) -> tuple[float, float]:
        _check_dim(x)
        v = self.val[x.bits]
        if np.isnan(v):
            raise NasLookupError(nas_key(x))
        return float(v), float(self.test[x.bits])

    def global_minimum(self) -> tuple[BitVector, float]:
        """Exhaustive scan for the lowest validation error."""
        code = int(np.nanargmin(self.val))
        return BitVector(NAS_DIM, code), float(self.val[code])

    def save(self, path) -> None:
        lines = [f"vertex_count={self.vertex_count} max_edges={self.max_edges}"]
        for k in sorted(self.metadata):
            lines.append(f"# {k} = {json.dumps(self.metadata[k], sort_keys=True)}")
        codes = self.codes()
        for code, v, t in zip(codes.tolist(), self.val[codes].tolist(), self.test[codes].tolist()):
            lines.append(f"{format(code, '021b')[::-1]} {v!r} {t!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "NasTable":
        text = Path(path).read_text().splitlines()
        if not text:
            raise ValueError(f"{path}: empty table file")
        header = dict(tok.split("=", 1) for tok in text[0].split())
        try:
            vc, me = int(header["vertex_count"]), int(header["max_edges"])
        except (KeyError, ValueError):
            raise ValueError(f"{path}: bad header {text[0]!r}") from None
        metadata, size = {}, 1 << NAS_DIM
        val, test = np.full(size, np.nan), np.full(size, np.nan)
        for n, line in enumerate(text[1:], start=2):
            if not line.strip():
                continue
            if line.startswith("#"):
                k, _, v = line[1:].partition("=")
                metadata[k.strip()] = json.loads(v)
                continue
            parts = line.split(" ")
            if len(parts) != 3:
                raise ValueError(f"{path}:{n}: expected 'key val test'")
            code = _key_code(parts[0])
            val[code], test[code] = float(parts[1]), float(parts[2])
        return cls(val, test, metadata, vc, me)


def nas_query(table: NasTable, x: BitVector) -> tuple[float, dict]:
    """Validation error of ``x`` and lookup metadata; invalid cells score 1.0."""
    _check_dim(x)
    if x.popcount() > MAX_EDGES or path_counts(x.bits) == 0:
        return INVALID_DISTANCE, {"valid": False}
    val, test = table.lookup(x)
    return val, {"valid": True, "test_error": test}


def nas_synth_table(
    rng: RngStream,
    *,
    floor: float = 0.05,
    spread: float = 0.6,
    length_scale: float = 4.0,
    path_weight: float = 0.1,
    noise: float = 0.004,
    test_noise: float = 0.003,
) -> NasTable:
    """Synthetic table over every valid cell with a single planted optimum.

    One cell with the largest input-to-output path count is drawn as the
    reference.  A cell's validation error is

        floor + spread * (1 - exp(-h / length_scale))
              + path_weight * (1 - paths / max_paths) + |noise|

    with ``h`` the Hamming distance to the reference and the absolute
    Gaussian noise term zero at the reference, which is therefore the unique
    global minimum.  Test errors add independent Gaussian noise to the
    validation error.  Everything is clipped to [0, 1].
    """
    all_codes = np.arange(1 << NAS_DIM, dtype=np.int64)
    codes = all_codes[np.bitwise_count(all_codes.astype(np.uint32)) <= MAX_EDGES]
    paths = path_counts(codes)
    codes, paths = codes[paths > 0], paths[paths > 0]
    max_paths = int(paths.max())
    best = codes[paths == max_paths]
    ref = int(best[rng.integer(best.size)])

    h = np.bitwise_count((codes ^ ref).astype(np.uint32)).astype(float)
    jitter = np.abs(noise * _normals(rng, codes.size))
    jitter[codes == ref] = 0.0
    val = floor + spread * (1.0 - np.exp(-h / length_scale)) + path_weight * (1.0 - paths / max_paths) + jitter
    test = val + test_noise * _normals(rng, codes.size)
    val, test = np.clip(val, 0.0, 1.0), np.clip(test, 0.0, 1.0)

    size = 1 << NAS_DIM
    full_val, full_test = np.full(size, np.nan), np.full(size, np.nan)
    full_val[codes], full_test[codes] = val, test
    order = np.argsort(val, kind="stable")
    if val[order[0]] == val[order[1]]:  # pragma: no cover - excluded by construction
        raise RuntimeError("synthetic table has a tied minimum")
    metadata = {
        "generator": "nas_synth_table",
        "seed": rng.seed,
        "params": {
            "floor": floor, "spread": spread, "length_scale": length_scale,
            "path_weight": path_weight, "noise": noise, "test_noise": test_noise,
        },
        "entries": int(codes.size),
        "global_min_key": format(int(codes[order[0]]), "021b")[::-1],
        "global_min_val": float(val[order[0]]),
    }
    return NasTable(full_val, full_test, metadata)


def _normals(rng: RngStream, n: int) -> np.ndarray:
    from scipy.special import ndtri

    # inverse-CDF normals keep every draw on the stream's uniform sequence
    u = rng.uniforms(n)
    return ndtri(np.clip(u, 2.0**-54, 1.0 - 2.0**-54))


class NasProblem:
    """Likelihood-free search: the simulator is a table lookup and the distance the value itself.

    The prior is the same Boltzmann prior as for binary nets, favouring
    sparse cells.
    """

    observed = 0.0

    def __init__(self, table: NasTable):
        self.table = table
        self._val = table.val
        self._ok = np.zeros(1 << NAS_DIM, dtype=bool)
        self._ok[table.codes()] = True

    @property
    def dim(self) -> int:
        return NAS_DIM

    def sample_prior(self, rng: RngStream) -> BitVector:
        return bernoulli_vector(NAS_DIM, boltzmann_bit_prob(NAS_DIM), rng)

    def log_prior(self, x: BitVector) -> float:
        return boltzmann_log_prior(x)

    def simulate(self, x: BitVector, rng: RngStream) -> float:
        if self._ok[x.bits]:
            return float(self._val[x.bits])
        return nas_query(self.table, x)[0]

    def distance(self, y: float, y_data: float) -> float:
        return abs(y - y_data)

    def error(self, x: BitVector) -> float:
        return self.simulate(x, None)

    def test_error(self, x: BitVector) -> float:
        if self._ok[x.bits]:
            return float(self.table.test[x.bits])
        return INVALID_DISTANCE
