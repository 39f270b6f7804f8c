"""One day of the seasonal model: spring activation, summer growth, winter sampling."""
from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import MAX_COUNT, InvariantError, ModelConfig, OffspringVector, WakeLaw

# numpy's conditional hypergeometric sampler refuses urns of this size or more
_NUMPY_URN_LIMIT = 10**9


@dataclass(frozen=True)
class GenerationRecord:
    """Everything that happened in one day.

    ``parent_of[j]`` is the 0-based index of the parent of the ``j``-th
    individual going to sleep at the end of the day.
    """

    wake_times: np.ndarray
    x_spring: OffspringVector
    x_total: OffspringVector
    parent_of: np.ndarray


def sample_wake_times(law: WakeLaw, n: int, stream: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. wake times from ``law``."""
    sigma = law.sample_sigma(n, stream)
    return np.clip(law.horizon - sigma, 0.0, law.horizon)


def neg_log1mexp(x) -> np.ndarray:
    """``-log(1 - exp(-x))``, accurate for both small and large ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x < math.log(2), -np.log(-np.expm1(-x)), -np.log1p(-np.exp(-x)))


def geometric_from_exponent(exponent, stream: np.random.Generator) -> np.ndarray:
    """Geometric variables on {1, 2, ...} with success probability ``exp(-exponent)``.

    Sampled by inverting an exponential clock in log space,
    ``1 + floor(E / -log(1 - exp(-exponent)))``, which stays exact when
    ``exp(-exponent)`` underflows.
    """
    exponent = np.asarray(exponent, dtype=float)
    if np.any(exponent < 0):
        raise ValueError("growth exponent must be >= 0")
    e = stream.standard_exponential(exponent.shape)
    with np.errstate(divide="ignore"):
        q = e / neg_log1mexp(exponent)
    if q.size and not np.all(q < MAX_COUNT):
        i = int(np.argmax(q))
        raise OverflowError(
            f"family {i} exceeds {MAX_COUNT} individuals (growth exponent {exponent.flat[i]:.4g})"
        )
    return 1 + np.floor(q).astype(np.int64)


def simulate_spring(config: ModelConfig, wake_times, stream: np.random.Generator) -> OffspringVector:
    """Family sizes at the end of spring given the wake times."""
    wake_times = np.asarray(wake_times, dtype=float)
    if wake_times.shape != (config.N,):
        raise ValueError(f"expected {config.N} wake times, got {wake_times.shape}")
    if np.any(wake_times > config.t_spring) or np.any(wake_times < 0):
        raise ValueError("wake times must lie in [0, t_spring]")
    x = geometric_from_exponent(config.lam * (config.t_spring - wake_times), stream)
    return OffspringVector(x)


def grow(x: np.ndarray, duration: float, lam: float, stream: np.random.Generator,
         method: str = "gamma-poisson") -> np.ndarray:
    """Yule growth of families of sizes ``x`` for ``duration`` at rate ``lam``.

    A family of size m becomes m plus a negative binomial(m, exp(-lam s))
    number of births. ``gamma-poisson`` draws it as a gamma-Poisson
    mixture (fast); ``inversion`` uses one uniform per family and the
    negative binomial quantile function, so that with a shared stream the
    result is nondecreasing in ``duration``.
    """
    x = np.asarray(x, dtype=np.int64)
    s = lam * duration
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if method not in ("gamma-poisson", "inversion"):
        raise ValueError(f"unknown method {method!r}")
    if x.size == 0:
        return x.copy()
    if method == "inversion":
        u = stream.random(x.size)
    if s == 0:
        return x.copy()
    scale = math.expm1(s) if s < 700 else math.inf
    mean = x * scale
    if not np.all(np.isfinite(mean)) or np.max(mean) >= MAX_COUNT / 4:
        i = int(np.argmax(mean))
        raise OverflowError(f"family {i} exceeds {MAX_COUNT} individuals during summer")
    if method == "inversion":
        births = stats.nbinom.ppf(u, x, math.exp(-s))
        return x + np.maximum(births, 0).astype(np.int64)
    g = stream.gamma(x.astype(float), scale)
    if np.max(g) >= MAX_COUNT / 2:
        i = int(np.argmax(g))
        raise OverflowError(f"family {i} exceeds {MAX_COUNT} individuals during summer")
    return x + stream.poisson(g)


def simulate_summer(x_spring: OffspringVector, duration: float, lam: float,
                    stream: np.random.Generator, method: str = "inversion") -> OffspringVector:
    """Summer growth of every family; see :func:`grow`."""
    return OffspringVector(grow(x_spring.x, duration, lam, stream, method))


def _uniform_below(bound: int, stream: np.random.Generator) -> int:
    """Exact uniform integer in ``[0, bound)`` for arbitrarily large ``bound``, by rejection."""
    nbytes = (bound.bit_length() + 7) // 8
    excess = 8 * nbytes - bound.bit_length()
    while True:
        v = int.from_bytes(stream.bytes(nbytes), "little") >> excess
        if v < bound:
            return v


def _survivor_counts(x: np.ndarray, n: int, stream: np.random.Generator) -> np.ndarray:
    total = int(x.sum(dtype=object))
    if total < _NUMPY_URN_LIMIT:
        return stream.multivariate_hypergeometric(x, n, method="marginals")
    # huge urns: a uniform n-subset of individual positions, each mapped to its
    # family through the cumulative sizes (exact Python integers throughout)
    picked: set[int] = set()
    while len(picked) < n:
        picked.add(_uniform_below(total, stream))
    edges = list(itertools.accumulate(int(v) for v in x))
    nu = np.zeros(len(x), dtype=np.int64)
    for pos in sorted(picked):
        nu[bisect.bisect_right(edges, pos)] += 1
    return nu


def sample_survivors(x: OffspringVector, stream: np.random.Generator):
    """Choose ``N`` of the ``S`` individuals uniformly without replacement.

    Returns the offspring vector with ``nu`` filled in and the shuffled
    parent index of every survivor.
    """
    N = x.N
    if x.total < N:
        raise InvariantError(f"population {x.total} smaller than N = {N}")
    nu = _survivor_counts(np.asarray(x.x), N, stream)
    out = OffspringVector(x.x, nu)
    parent_of = stream.permutation(np.repeat(np.arange(N), nu))
    return out, parent_of


def step_generation(config: ModelConfig, stream: np.random.Generator) -> GenerationRecord:
    """Simulate one full day: wake, grow through spring and summer, sample survivors."""
    wake = sample_wake_times(config.wake, config.N, stream)
    wake = wake + (config.t_spring - config.wake.horizon)
    x_spring = simulate_spring(config, wake, stream)
    x_total = simulate_summer(x_spring, config.summer, config.lam, stream)
    x_total, parent_of = sample_survivors(x_total, stream)
    return GenerationRecord(wake, x_spring, x_total, parent_of)


def family_sizes(config: ModelConfig, size, stream: np.random.Generator) -> np.ndarray:
    """End-of-day family sizes for an array of ``size`` independent individuals."""
    sigma = config.wake.sample_sigma(int(np.prod(size)), stream)
    x = geometric_from_exponent(config.spring_rate(sigma), stream)
    x = grow(x, config.summer, config.lam, stream)
    return x.reshape(size)


def trivial_split(config: ModelConfig):
    """Split individuals into those whose family is surely of size one and the rest.

    Returns ``(q, sampler)`` where ``q`` is the probability that an
    individual leaves exactly one descendant for sure (it wakes at the very
    end of spring and there is no summer) and ``sampler(n, rng)`` draws
    family sizes for the complementary case. ``q = 0`` when no such atom
    exists, in which case ``sampler`` draws unconditioned sizes.
    """
    if config.lam == 0:
        return 1.0, None
    offset = config.t_spring - config.wake.horizon
    q, cond = config.wake.split_zero()
    if config.summer > 0 or offset > 0 or q == 0:
        return 0.0, lambda n, rng: family_sizes(config, n, rng)
    if cond is None:
        return 1.0, None

    def nontrivial(n, rng):
        return geometric_from_exponent(config.spring_rate(cond(n, rng)), rng)

    return q, nontrivial
