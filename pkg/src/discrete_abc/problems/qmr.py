"""Noisy-OR QMR-DT disease/finding network.

Finding ``i`` fires with probability
``1 - (1 - leak[i]) * prod_l (1 - assoc[i, l]) ** x[l]``; diseases are
independent a priori with probabilities ``prior_p``.  All evaluations happen in
log space as ``s_i = log(1 - leak[i]) + sum_{l: x_l = 1} log(1 - assoc[i, l])``,
the log-probability that finding ``i`` stays off.  Association or leak values
of exactly 1 make ``s_i = -inf``; they are tracked separately so that
``0 * log(0)`` never produces NaN.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import betaincinv

from ..bitstate import BitVector, DimensionError, RngStream, StatePmf, hamming

__all__ = [
    "QmrDtModel",
    "QmrProblem",
    "load_instance",
    "qmr_distance",
    "qmr_exact_posterior",
    "qmr_log_likelihood",
    "qmr_log_prior",
    "qmr_sample_instance",
    "qmr_simulate",
    "save_instance",
]

MAX_ENUMERATION_L = 20


@dataclass(frozen=True, eq=False)
class QmrDtModel:
    leak: np.ndarray    # (M,)
    assoc: np.ndarray   # (M, L)
    prior_p: np.ndarray  # (L,)

    def __post_init__(self):
        leak = np.asarray(self.leak, dtype=float)
        assoc = np.asarray(self.assoc, dtype=float)
        prior_p = np.asarray(self.prior_p, dtype=float)
        if assoc.ndim != 2 or leak.shape != (assoc.shape[0],) or prior_p.shape != (assoc.shape[1],):
            raise DimensionError(
                f"inconsistent shapes leak={leak.shape} assoc={assoc.shape} prior_p={prior_p.shape}"
            )
        for name, arr in (("leak", leak), ("assoc", assoc)):
            if not ((arr >= 0) & (arr <= 1)).all():
                raise ValueError(f"{name} probabilities must lie in [0, 1]")
        if not ((prior_p > 0) & (prior_p < 1)).all():
            raise ValueError("prior_p must lie strictly inside (0, 1)")
        object.__setattr__(self, "leak", leak)
        object.__setattr__(self, "assoc", assoc)
        object.__setattr__(self, "prior_p", prior_p)
        with np.errstate(divide="ignore"):
            log_off_leak = np.log1p(-leak)
            log_off_assoc = np.log1p(-assoc)
        # finite parts and "certain to fire" masks, kept apart for the matmuls
        object.__setattr__(self, "_leak_hard", np.isneginf(log_off_leak))
        object.__setattr__(self, "_leak_log", np.where(self._leak_hard, 0.0, log_off_leak))
        object.__setattr__(self, "_assoc_hard", np.isneginf(log_off_assoc).astype(float))
        object.__setattr__(self, "_assoc_log", np.where(np.isneginf(log_off_assoc), 0.0, log_off_assoc))
        object.__setattr__(self, "_leak_full", log_off_leak)
        object.__setattr__(self, "_assoc_full", np.ascontiguousarray(log_off_assoc.T))
        object.__setattr__(self, "_log_p", np.log(prior_p))
        object.__setattr__(self, "_log_q", np.log1p(-prior_p))

    @property
    def L(self) -> int:
        return self.assoc.shape[1]

    @property
    def M(self) -> int:
        return self.assoc.shape[0]

    def log_off(self, xs: np.ndarray) -> np.ndarray:
        """``s`` for a batch of 0/1 disease rows ``xs`` of shape (n, L) -> (n, M)."""
        xs = np.asarray(xs, dtype=float)
        s = self._leak_log + xs @ self._assoc_log.T
        hard = self._leak_hard | ((xs @ self._assoc_hard.T) > 0)
        return np.where(hard, -np.inf, s)

    def log_off_state(self, x: BitVector) -> np.ndarray:
        """``s`` for a single state, summing only the active diseases' rows."""
        self._check(x)
        active = np.flatnonzero(x.to_array())
        return self._leak_full + self._assoc_full[active].sum(axis=0)

    def fire_prob(self, x: BitVector) -> np.ndarray:
        return -np.expm1(self.log_off_state(x))

    def _check(self, x: BitVector) -> None:
        if x.dim != self.L:
            raise DimensionError(f"disease vector has dim {x.dim}, model has L={self.L}")


def _as_findings(y, m: int) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(y))
    if arr.shape[-1] != m:
        raise DimensionError(f"finding vectors have {arr.shape[-1]} entries, model has M={m}")
    return arr.astype(bool)


def _loglik_rows(model: QmrDtModel, s: np.ndarray, counts: np.ndarray, n: int) -> np.ndarray:
    # s: (k, M) log-off values; counts: (M,) number of observations with y_i = 1
    with np.errstate(divide="ignore", invalid="ignore"):
        log_on = np.log(-np.expm1(s))
        on = np.where(counts > 0, counts * log_on, 0.0)
        off = np.where(counts < n, (n - counts) * s, 0.0)
    return (on + off).sum(axis=1)


def qmr_log_likelihood(model: QmrDtModel, x: BitVector, y) -> float:
    """Log-probability of one finding vector (M,) or a stack (N, M) given ``x``.

    Returns ``-inf`` when an observation contradicts a probability of exactly
    0 or 1.
    """
    model._check(x)
    obs = _as_findings(y, model.M)
    s = model.log_off(x.to_array()[None, :])
    return float(_loglik_rows(model, s, obs.sum(axis=0), obs.shape[0])[0])


def qmr_log_prior(model: QmrDtModel, x: BitVector) -> float:
    model._check(x)
    bits = x.to_array().astype(bool)
    return float(np.where(bits, model._log_p, model._log_q).sum())


def qmr_simulate(model: QmrDtModel, x: BitVector, rng: RngStream, n: int = 1) -> np.ndarray:
    """Draw ``n`` finding vectors at ``x``; shape (M,) for n == 1 else (n, M)."""
    p = model.fire_prob(x)
    u = rng.uniforms(n * model.M).reshape(n, model.M)
    y = (u < p).astype(np.uint8)
    return y[0] if n == 1 else y


def qmr_distance(sim, obs) -> float:
    """Mean Hamming distance between index-paired finding vectors."""
    a = np.atleast_2d(np.asarray(sim))
    b = np.atleast_2d(np.asarray(obs))
    if a.shape != b.shape:
        raise DimensionError(f"finding sets differ in shape: {a.shape} vs {b.shape}")
    return np.count_nonzero(a != b) / a.shape[0]


def _all_states(L: int, start: int, stop: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)
    return ((codes[:, None] >> np.arange(L)) & 1).astype(np.uint8)


def qmr_log_joint_table(model: QmrDtModel, y, max_L: int = MAX_ENUMERATION_L) -> np.ndarray:
    """``log p(x) + log p(y|x)`` for every state, indexed by the state's integer code."""
    L = model.L
    if L > max_L:
        raise ValueError(f"enumeration over 2**{L} states exceeds the bound L <= {max_L}")
    obs = _as_findings(y, model.M)
    counts, n = obs.sum(axis=0), obs.shape[0]
    total = 1 << L
    out = np.empty(total)
    block = 1 << 14
    for start in range(0, total, block):
        xs = _all_states(L, start, min(total, start + block))
        s = model.log_off(xs)
        prior = np.where(xs.astype(bool), model._log_p, model._log_q).sum(axis=1)
        out[start:start + xs.shape[0]] = prior + _loglik_rows(model, s, counts, n)
    return out


def qmr_exact_posterior(model: QmrDtModel, y, max_L: int = MAX_ENUMERATION_L) -> StatePmf:
    """Normalised posterior over all ``2**L`` disease vectors."""
    logp = qmr_log_joint_table(model, y, max_L)
    top = logp.max()
    if not np.isfinite(top):
        raise ValueError("observed data have zero probability under every state")
    w = np.exp(logp - top)
    return StatePmf(model.L, w / w.sum())


def _beta(a: float, b: float, size, rng: RngStream) -> np.ndarray:
    # inverse-CDF sampling keeps every draw on the stream's uniform sequence
    n = int(np.prod(size))
    return betaincinv(a, b, rng.uniforms(n)).reshape(size)


def qmr_sample_instance(
    L: int,
    M: int,
    beta_a: float,
    beta_b: float,
    rng: RngStream,
    *,
    n_obs: int = 10,
    prior_p: float = 0.5,
):
    """Random network with Beta leak/association probabilities.

    Returns ``(model, x_true, observed)`` where ``x_true`` is a prior draw and
    ``observed`` stacks ``n_obs`` simulator draws at ``x_true``.
    """
    if L < 1 or M < 1:
        raise ValueError(f"need L, M >= 1, got L={L}, M={M}")
    if not (beta_a > 0 and beta_b > 0):
        raise ValueError(f"Beta parameters must be positive, got ({beta_a}, {beta_b})")
    if n_obs < 1:
        raise ValueError(f"n_obs must be positive, got {n_obs}")
    leak = _beta(beta_a, beta_b, (M,), rng)
    assoc = _beta(beta_a, beta_b, (M, L), rng)
    model = QmrDtModel(leak, assoc, np.full(L, float(prior_p)))
    x_true = BitVector.from_array((rng.uniforms(L) < model.prior_p).astype(np.uint8))
    observed = qmr_simulate(model, x_true, rng, n=n_obs).reshape(n_obs, M)
    return model, x_true, observed


def save_instance(path, model: QmrDtModel, x_true: BitVector, observed) -> None:
    """Write an instance as JSON; floats use repr so they round-trip exactly."""
    doc = {
        "format": "qmr-dt-instance/1",
        "L": model.L,
        "M": model.M,
        "leak": [repr(float(v)) for v in model.leak],
        "assoc": [[repr(float(v)) for v in row] for row in model.assoc],
        "prior_p": [repr(float(v)) for v in model.prior_p],
        "x_true": str(x_true),
        "observed": ["".join(map(str, row)) for row in np.asarray(observed, dtype=int)],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_instance(path):
    doc = json.loads(Path(path).read_text())
    model = QmrDtModel(
        np.array([float(v) for v in doc["leak"]]),
        np.array([[float(v) for v in row] for row in doc["assoc"]]),
        np.array([float(v) for v in doc["prior_p"]]),
    )
    x_true = BitVector.from_string(doc["x_true"])
    observed = np.array([[int(c) for c in row] for row in doc["observed"]], dtype=np.uint8)
    return model, x_true, observed


class QmrProblem:
    """QMR-DT instance usable both with its exact likelihood and as a simulator.

    The simulator draws as many finding vectors as were observed and the
    distance is the index-paired mean Hamming count.  ``error`` is the Hamming
    distance to the true disease vector.
    """

    def __init__(self, model: QmrDtModel, x_true: BitVector, observed):
        self.model = model
        self.x_true = x_true
        self.observed = _as_findings(observed, model.M).astype(np.uint8)
        self.n_obs = self.observed.shape[0]
        self._counts = self.observed.sum(axis=0)
        self._fire_cache: dict[int, np.ndarray] = {}
        self._log_q_total = float(model._log_q.sum())
        self._log_odds = model._log_p - model._log_q
        self._has_on = self._counts > 0
        self._has_off = self._counts < self.n_obs
        self._n_on = self._counts[self._has_on].astype(float)
        self._n_off = (self.n_obs - self._counts[self._has_off]).astype(float)

    @classmethod
    def sample(cls, L, M, rng, beta_a=0.15, beta_b=0.15, n_obs=10, prior_p=0.5) -> "QmrProblem":
        return cls(*qmr_sample_instance(L, M, beta_a, beta_b, rng, n_obs=n_obs, prior_p=prior_p))

    @property
    def dim(self) -> int:
        return self.model.L

    def sample_prior(self, rng: RngStream) -> BitVector:
        return BitVector.from_array((rng.uniforms(self.dim) < self.model.prior_p).astype(np.uint8))

    def _active(self, x: BitVector) -> list[int]:
        self.model._check(x)
        b = x.bits
        return [l for l in range(x.dim) if b >> l & 1]

    def _s(self, x: BitVector) -> np.ndarray:
        return self.model._leak_full + self.model._assoc_full[self._active(x)].sum(axis=0)

    def log_prior(self, x: BitVector) -> float:
        return self._log_q_total + float(self._log_odds[self._active(x)].sum())

    def log_likelihood(self, x: BitVector) -> float:
        s = self._s(x)
        with np.errstate(divide="ignore"):
            on = self._n_on @ np.log(-np.expm1(s[self._has_on]))
        return float(on + self._n_off @ s[self._has_off])

    def simulate(self, x: BitVector, rng: RngStream) -> np.ndarray:
        p = self._fire_cache.get(x.bits)
        if p is None:
            if len(self._fire_cache) >= 1 << 18:
                self._fire_cache.clear()
            p = self._fire_cache[x.bits] = -np.expm1(self._s(x))
        return rng.uniforms(self.n_obs * self.model.M).reshape(self.n_obs, -1) < p

    def distance(self, y, y_data) -> float:
        return np.count_nonzero(y != y_data) / self.n_obs

    def error(self, x: BitVector) -> float:
        return float(hamming(x, self.x_true))

    def neg_log_posterior(self, x: BitVector) -> float:
        """``-(log prior + log likelihood)``, the unnormalised negative log posterior."""
        return -(self.log_prior(x) + self.log_likelihood(x))
