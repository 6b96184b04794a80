"""Population Metropolis sweeps and Population-MCMC-ABC.

Chains are visited in index order and every proposal sees the population as
updated so far in the current sweep.  Randomness is consumed in a fixed order
per step -- proposal, simulation, tolerance, acceptance uniform -- so a run is
a deterministic function of its :class:`~discrete_abc.bitstate.RngStream`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Iterator, Optional, Protocol

from .bitstate import BitVector, RngStream
from .kernels import KernelSpec, Population, PopulationError, propose

__all__ = [
    "AbcTarget",
    "EpsilonSchedule",
    "LikelihoodTarget",
    "SimulatorError",
    "StepOutcome",
    "SweepStats",
    "abc_step",
    "epsilon_draw",
    "init_population",
    "metropolis_step",
    "run",
    "sweep",
]


class LikelihoodTarget(Protocol):
    def log_prior(self, x: BitVector) -> float: ...

    def log_likelihood(self, x: BitVector) -> float: ...


class AbcTarget(Protocol):
    def log_prior(self, x: BitVector) -> float: ...

    def simulate(self, x: BitVector, rng: RngStream) -> Any: ...

    def distance(self, y: Any, y_data: Any) -> float: ...


class SimulatorError(RuntimeError):
    """A simulator call failed; carries the chain and iteration it happened at."""

    def __init__(self, message: str, chain: int, iteration: Optional[int] = None):
        where = f"chain {chain}" if iteration is None else f"chain {chain}, iteration {iteration}"
        super().__init__(f"{message} ({where})")
        self.chain = chain
        self.iteration = iteration


@dataclass(frozen=True)
class EpsilonSchedule:
    """Tolerance policy: a fixed value, or a fresh exponential draw per proposal.

    ``value`` is the tolerance itself in fixed mode and the *mean* of the
    exponential in ``"exp"`` mode (use :meth:`exponential` with ``rate=`` to
    give a rate instead).
    """

    mode: str
    value: float

    def __post_init__(self):
        if self.mode not in ("fixed", "exp"):
            raise ValueError(f"unknown epsilon mode {self.mode!r}")
        value = float(self.value)
        if math.isnan(value) or value < 0 or (self.mode == "exp" and value == 0):
            raise ValueError(f"invalid epsilon parameter {self.value!r} for mode {self.mode!r}")
        object.__setattr__(self, "value", value)

    @classmethod
    def fixed(cls, eps: float) -> "EpsilonSchedule":
        return cls("fixed", eps)

    @classmethod
    def exponential(cls, mean: Optional[float] = None, *, rate: Optional[float] = None):
        if (mean is None) == (rate is None):
            raise ValueError("give exactly one of mean= or rate=")
        if rate is not None:
            if rate <= 0:
                raise ValueError(f"rate must be positive, got {rate}")
            mean = 1.0 / rate
        return cls("exp", mean)

    @property
    def mean(self) -> float:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "EpsilonSchedule":
        """Parse ``fixed:0.5``, ``exp:2`` (mean) or ``exp-rate:0.5``."""
        mode, _, arg = text.strip().partition(":")
        try:
            value = float(arg)
        except ValueError:
            raise ValueError(f"bad epsilon schedule {text!r}") from None
        if mode == "fixed":
            return cls.fixed(value)
        if mode == "exp":
            return cls.exponential(mean=value)
        if mode == "exp-rate":
            return cls.exponential(rate=value)
        raise ValueError(f"bad epsilon schedule {text!r}")

    def __str__(self) -> str:
        return f"{self.mode}:{self.value:g}"


def epsilon_draw(sched: EpsilonSchedule, rng: RngStream) -> float:
    if sched.mode == "fixed":
        return sched.value
    return rng.exponential(sched.value)


class StepOutcome(Enum):
    REJECTED_TOLERANCE = "rejected_tolerance"
    REJECTED_METROPOLIS = "rejected_metropolis"
    ACCEPTED = "accepted"


@dataclass
class SweepStats:
    """Counts for one sweep over all chains.

    In likelihood mode every proposal counts as within tolerance.
    """

    iteration: int
    proposals: int = 0
    within_tolerance: int = 0
    accepted: int = 0
    population: Optional[Population] = field(default=None, repr=False)
    errors: Optional[tuple] = None

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0


def _accept(log_ratio: float, rng: RngStream) -> bool:
    u = rng.uniform()
    if log_ratio >= 0.0:
        return True
    return u < math.exp(log_ratio)


def _warn_if_asymmetric(spec: KernelSpec) -> None:
    if not spec.symmetric:
        warnings.warn(
            f"kernel {spec.kind} is not symmetric; the acceptance ratio omits the "
            "proposal correction and the chain is biased",
            stacklevel=3,
        )


def metropolis_step(
    target: LikelihoodTarget,
    spec: KernelSpec,
    i: int,
    pop,
    rng: RngStream,
) -> tuple[BitVector, bool]:
    """One Metropolis update of chain ``i`` against an exact log target."""
    _warn_if_asymmetric(spec)
    x = pop[i]
    current = target.log_prior(x) + target.log_likelihood(x)
    if not math.isfinite(current):
        raise ValueError(f"log target at the current state of chain {i} is {current}")
    x_new = propose(spec, i, pop, rng)
    proposed = target.log_prior(x_new) + target.log_likelihood(x_new)
    if _accept(proposed - current, rng):
        return x_new, True
    return x, False


def abc_step(
    target: AbcTarget,
    spec: KernelSpec,
    sched: EpsilonSchedule,
    i: int,
    pop,
    y_data,
    rng: RngStream,
) -> tuple[BitVector, StepOutcome]:
    """One Population-MCMC-ABC update of chain ``i``.

    Propose, simulate once at the proposal, draw a tolerance, and only if the
    simulated data fall within it run the prior-ratio Metropolis test.
    """
    _warn_if_asymmetric(spec)
    x = pop[i]
    x_new = propose(spec, i, pop, rng)
    try:
        y = target.simulate(x_new, rng)
    except Exception as exc:
        raise SimulatorError(f"simulator failed: {exc}", chain=i) from exc
    eps = epsilon_draw(sched, rng)
    if not target.distance(y, y_data) <= eps:
        return x, StepOutcome.REJECTED_TOLERANCE
    if _accept(target.log_prior(x_new) - target.log_prior(x), rng):
        return x_new, StepOutcome.ACCEPTED
    return x, StepOutcome.REJECTED_METROPOLIS


class _Memo:
    """Per-run cache of a deterministic function of a bit vector."""

    def __init__(self, fn: Callable[[BitVector], float], limit: int = 1 << 20):
        self.fn = fn
        self.limit = limit
        self.cache: dict[int, float] = {}

    def __call__(self, x: BitVector) -> float:
        cache = self.cache
        v = cache.get(x.bits)
        if v is None:
            if len(cache) >= self.limit:
                cache.clear()
            v = cache[x.bits] = self.fn(x)
        return v


def _check_population(spec: KernelSpec, pop) -> None:
    if len(pop) < spec.min_population:
        raise PopulationError(
            f"{spec.kind} needs at least {spec.min_population} chains, got {len(pop)}"
        )


def sweep(
    mode: str,
    target,
    spec: KernelSpec,
    pop,
    rng: RngStream,
    *,
    sched: Optional[EpsilonSchedule] = None,
    y_data=None,
    iteration: int = 0,
    _log_target=None,
    _quiet: bool = False,
) -> tuple[Population, SweepStats]:
    """Update every chain once, in index order, against the partially updated population."""
    _check_population(spec, pop)
    if not _quiet:
        _warn_if_asymmetric(spec)
    chains = list(pop)
    stats = SweepStats(iteration=iteration)
    if mode == "likelihood":
        log_target = _log_target or (lambda x: target.log_prior(x) + target.log_likelihood(x))
        for i in range(len(chains)):
            x = chains[i]
            current = log_target(x)
            if not math.isfinite(current):
                raise ValueError(f"log target at the current state of chain {i} is {current}")
            x_new = propose(spec, i, chains, rng)
            stats.proposals += 1
            stats.within_tolerance += 1
            if _accept(log_target(x_new) - current, rng):
                chains[i] = x_new
                stats.accepted += 1
    elif mode == "abc":
        if sched is None:
            raise ValueError("abc mode needs an epsilon schedule")
        log_prior = _log_target or target.log_prior
        simulate, distance = target.simulate, target.distance
        fixed = sched.value if sched.mode == "fixed" else None
        for i in range(len(chains)):
            x = chains[i]
            x_new = propose(spec, i, chains, rng)
            stats.proposals += 1
            try:
                y = simulate(x_new, rng)
            except Exception as exc:
                raise SimulatorError(f"simulator failed: {exc}", i, iteration) from exc
            eps = fixed if fixed is not None else rng.exponential(sched.value)
            if not distance(y, y_data) <= eps:
                continue
            stats.within_tolerance += 1
            if _accept(log_prior(x_new) - log_prior(x), rng):
                chains[i] = x_new
                stats.accepted += 1
    else:
        raise ValueError(f"mode must be 'likelihood' or 'abc', got {mode!r}")
    new_pop = Population(chains)
    stats.population = new_pop
    return new_pop, stats


def init_population(sample_prior: Callable[[RngStream], BitVector], size: int, rng: RngStream) -> Population:
    """Draw each of ``size`` chains independently from the prior."""
    if size < 1:
        raise PopulationError(f"population size must be positive, got {size}")
    return Population(sample_prior(rng) for _ in range(size))


def run(
    problem,
    spec: KernelSpec,
    sched: Optional[EpsilonSchedule],
    budget: int,
    rng: RngStream,
    *,
    population=None,
    size: int = 24,
    mode: Optional[str] = None,
    callbacks: Iterable[Callable[[SweepStats], Any]] = (),
    track_errors: bool = True,
) -> Iterator[SweepStats]:
    """Run ``budget`` sweeps, yielding one :class:`SweepStats` per sweep.

    ``problem`` supplies ``log_prior``, ``sample_prior`` and either
    ``log_likelihood`` (``mode="likelihood"``) or ``simulate``/``distance``
    plus an ``observed`` attribute (``mode="abc"``, the default when a
    schedule is given).  When ``track_errors`` is set and the problem has an
    ``error`` method, each stats record carries the per-chain errors.  A
    callback returning a truthy value stops the run after that sweep.  The
    final population is ``stats.population`` of the last record.

    The initial population is drawn from ``rng.substream("init")`` unless
    given; chain dynamics use ``rng`` itself.
    """
    if budget < 0:
        raise ValueError(f"budget must be non-negative, got {budget}")
    if mode is None:
        mode = "likelihood" if sched is None else "abc"
    if population is None:
        population = init_population(problem.sample_prior, size, rng.substream("init"))
    else:
        population = Population(population)
    if budget == 0:
        return
    _check_population(spec, population)
    callbacks = list(callbacks)
    error_fn = getattr(problem, "error", None) if track_errors else None
    if error_fn is not None:
        error_fn = _Memo(error_fn)
    if mode == "likelihood":
        log_target = _Memo(lambda x: problem.log_prior(x) + problem.log_likelihood(x))
        y_data = None
    else:
        log_target = _Memo(problem.log_prior)
        y_data = problem.observed

    _warn_if_asymmetric(spec)
    for it in range(1, budget + 1):
        population, stats = sweep(
            mode, problem, spec, population, rng,
            sched=sched, y_data=y_data, iteration=it, _log_target=log_target, _quiet=True,
        )
        if error_fn is not None:
            stats.errors = tuple(error_fn(x) for x in population)
        yield stats
        if any([cb(stats) for cb in callbacks]):
            return
