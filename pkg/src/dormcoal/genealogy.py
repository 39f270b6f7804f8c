"""Backward ancestral partition chain and the coalescence probability c_N.

Three interchangeable engines drive :func:`run_ancestral_process`:

``full``
    Generate every day forward with :func:`forward.step_generation` and
    push the sampled lineages through ``parent_of``.
``urn``
    Only the family sizes of a day are drawn. The ``b`` current lineages
    are ``b`` distinct individuals of the end-of-day population, chosen
    uniformly; two lineages merge when they fall in the same family. This
    is the same law as the full engine because winter sampling is uniform.
``sparse``
    As ``urn``, but days on which every family is surely of size one (no
    merger possible) are skipped with a geometric gap, and only the
    nontrivial families are drawn.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from .core import InvariantError, ModelConfig, Partition, partition_merge
from .forward import _survivor_counts, family_sizes, step_generation, trivial_split

ENGINES = ("auto", "full", "urn", "sparse")


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass
class AncestralTrajectory:
    """Partition path of the sampled lineages, read backward in days.

    ``events`` holds ``(day, partition)`` after every day that changed the
    partition, starting with ``(0, singletons)``. ``merger_log`` holds
    ``(day, sizes)`` where ``sizes`` lists, largest first, how many blocks
    merged into each new block on that day.
    """

    n: int
    events: list = field(default_factory=list)
    merger_log: list = field(default_factory=list)
    days: int = 0
    absorbed: bool = False

    @property
    def final(self) -> Partition:
        return self.events[-1][1]

    def block_counts(self) -> list[int]:
        return [len(p) for _, p in self.events]


def ancestral_step(p: Partition, parents):
    """Merge the blocks of ``p`` whose representatives share a parent.

    Parameters
    ----------
    p : Partition
        Current partition.
    parents : sequence
        ``parents[i]`` is the parent label of the representative of block
        ``i`` (canonical block order).

    Returns
    -------
    (Partition, list)
        The coarsened partition and the parent label of each of its blocks,
        which becomes the block's new representative.
    """
    parents = list(parents)
    if len(parents) != len(p.blocks):
        raise ValueError(f"need one parent per block: {len(p.blocks)} blocks, {len(parents)} labels")
    if any(x is None for x in parents):
        raise ValueError("missing parent label")
    groups: dict = {}
    for i, a in enumerate(parents):
        groups.setdefault(a, []).append(i)
    merge = [g for g in groups.values() if len(g) > 1]
    q = partition_merge(p, merge) if merge else p
    owner = {x: parents[i] for i, b in enumerate(p.blocks) for x in b}
    return q, [owner[b[0]] for b in q.blocks]


def _group_sizes(labels) -> tuple[int, ...]:
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    return tuple(sorted((int(c) for c in counts if c > 1), reverse=True))


class DaySampler:
    """Draws batches of days as flat arrays of nontrivial family sizes.

    ``draw(B, rng)`` returns ``(gaps, sizes, counts, pool)``: the number of
    days each drawn day accounts for (skipped null days plus itself), the
    nontrivial family sizes of all days concatenated, how many of them
    belong to each day, and how many size-one families each day has on top.
    """

    def __init__(self, config: ModelConfig, sparse: bool):
        self.N = config.N
        q, cond = trivial_split(config)
        self.sparse = sparse and 0 < q < 1
        if q == 1:
            self.q, self.p_day, self.sampler = 1.0, 0.0, None
        elif self.sparse:
            self.q, self.sampler = q, cond
            self.p_day = -math.expm1(self.N * math.log(q))
        else:
            self.q, self.p_day = 0.0, 1.0
            self.sampler = lambda n, rng: family_sizes(config, n, rng)

    @property
    def never_merges(self) -> bool:
        return self.p_day == 0.0

    def draw(self, B: int, rng: np.random.Generator):
        N = self.N
        if not self.sparse:
            sizes = self.sampler(B * N, rng)
            return np.ones(B, np.int64), sizes, np.full(B, N, np.int64), np.zeros(B, np.int64)
        q = self.q
        gaps = rng.geometric(self.p_day, B) if self.p_day < 1 else np.ones(B, np.int64)
        # K >= 1 nontrivial families: the first one sits after J trivial ones,
        # J truncated geometric; the remaining N-1-J are Bernoulli(1-q) each
        u = rng.random(B)
        j = np.floor(np.log1p(-u * self.p_day) / math.log(q)) if q > 0 else np.zeros(B)
        j = np.clip(j, 0, N - 1).astype(np.int64)
        k = 1 + rng.binomial(N - 1 - j, 1.0 - q)
        sizes = self.sampler(int(k.sum()), rng)
        return gaps.astype(np.int64), sizes, k, N - k


def _distinct_balls(totals: np.ndarray, b: int, rng: np.random.Generator) -> np.ndarray:
    """For each row, ``b`` distinct uniform integers in ``[0, totals[row])``."""
    balls = rng.integers(0, totals[:, None], size=(totals.size, b))
    if b == 1:
        return balls
    while True:
        s = np.sort(balls, axis=1)
        bad = np.flatnonzero((np.diff(s, axis=1) == 0).any(axis=1))
        if bad.size == 0:
            return balls
        for r in bad:
            balls[r] = rng.choice(int(totals[r]), size=b, replace=False)


def _urn_first_merger(sampler: DaySampler, b: int, B: int, rng: np.random.Generator):
    """Draw ``B`` days; return the index of the first merger day and the family of each lineage.

    Returns ``(days_used, labels)`` with ``labels`` None if no day in the
    batch merges any lineages.
    """
    gaps, sizes, counts, pool = sampler.draw(B, rng)
    day_nontriv = np.add.reduceat(sizes, np.r_[0, np.cumsum(counts)[:-1]]) if sizes.size else np.zeros(B, np.int64)
    day_nontriv = np.where(counts > 0, day_nontriv, 0)
    totals = day_nontriv + pool
    balls = _distinct_balls(totals, b, rng)
    csum = np.cumsum(sizes)
    family_offset = np.r_[0, np.cumsum(counts)[:-1]]
    ball_offset = np.r_[0, csum][family_offset]
    in_fam = balls < day_nontriv[:, None]
    fam = np.searchsorted(csum, ball_offset[:, None] + balls, side="right")
    # balls in the pool of singleton families get unique negative labels
    labels = np.where(in_fam, fam, -1 - np.arange(b)[None, :])
    srt = np.sort(labels, axis=1)
    hit = (np.diff(srt, axis=1) == 0).any(axis=1) if b > 1 else np.zeros(B, bool)
    if not hit.any():
        return int(gaps.sum()), None
    d = int(np.argmax(hit))
    return int(gaps[: d + 1].sum()), labels[d]


def _choose_engine(config: ModelConfig, engine: str) -> str:
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")
    if engine != "auto":
        return engine
    q, _ = trivial_split(config)
    return "sparse" if q > 0 else "urn"


def run_ancestral_process(n: int, config: ModelConfig, horizon: int, stream: np.random.Generator,
                          engine: str = "auto", max_batch_entries: int = 2**21) -> AncestralTrajectory:
    """Trace ``n`` sampled lineages backward until they share one ancestor.

    Parameters
    ----------
    n : int
        Sample size, ``1 <= n <= N``.
    config : ModelConfig
    horizon : int
        Maximum number of days to go back. A trajectory that has not
        absorbed by then is returned with ``absorbed=False``.
    stream : numpy.random.Generator
    engine : {"auto", "full", "urn", "sparse"}
        ``auto`` uses ``sparse`` whenever the model has days on which no
        merger can happen, else ``urn``.
    """
    if not 1 <= n <= config.N:
        raise ValueError(f"need 1 <= n <= N, got n={n}, N={config.N}")
    engine = _choose_engine(config, engine)
    traj = AncestralTrajectory(n, events=[(0, Partition.singletons(n))])
    if n == 1:
        traj.absorbed = True
        return traj
    if engine == "full":
        return _run_full(traj, config, horizon, stream)
    return _run_urn(traj, config, horizon, stream, engine == "sparse", max_batch_entries)


def _record(traj: AncestralTrajectory, day: int, labels):
    p = traj.events[-1][1]
    q, reps = ancestral_step(p, labels)
    if len(q) < len(p):
        traj.events.append((day, q))
        traj.merger_log.append((day, _group_sizes(labels)))
    return q, reps


def _run_full(traj, config, horizon, stream):
    reps = np.arange(traj.n)
    day = 0
    while day < horizon:
        day += 1
        rec = step_generation(config, stream)
        p, reps = _record(traj, day, rec.parent_of[reps].tolist())
        reps = np.asarray(reps)
        if len(p) == 1:
            traj.absorbed = True
            break
    traj.days = day
    return traj


def _run_urn(traj, config, horizon, stream, sparse, max_entries):
    sampler = DaySampler(config, sparse)
    day = 0
    if sampler.never_merges:
        traj.days = int(horizon)
        return traj
    per_day = max(1.0, config.N * (1.0 if not sampler.sparse else max(1e-12, 1 - sampler.q)))
    cap = max(1, int(max_entries / per_day))
    B = min(cap, 4)
    while day < horizon:
        b = len(traj.events[-1][1])
        used, labels = _urn_first_merger(sampler, b, B, stream)
        if labels is None:
            day += used
            B = min(cap, 2 * B)
            continue
        if day + used > horizon:
            day = int(horizon)
            break
        day += used
        p, _ = _record(traj, day, labels.tolist())
        B = max(1, B // 2)
        if len(p) == 1:
            traj.absorbed = True
            break
    traj.days = min(day, int(horizon))
    return traj


# ---------------------------------------------------------------------------
# c_N
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CnEstimate:
    point: float
    stderr: float
    replicates: int
    method: str

    def __post_init__(self):
        if not (0.0 <= self.point <= 1.0) or self.stderr < 0:
            raise InvariantError(f"invalid c_N estimate {self.point} +- {self.stderr}")


def _per_day_values(sizes, counts, pool, N, method, rng):
    starts = np.r_[0, np.cumsum(counts)[:-1]]
    S = np.add.reduceat(sizes.astype(float), starts) + pool if sizes.size else pool.astype(float)
    day_of = np.repeat(np.arange(counts.size), counts)
    if method == "factorial-moment":
        x = sizes.astype(float)
        term = x * (x - 1) / (S[day_of] * (S[day_of] - 1))
        return np.bincount(day_of, weights=term, minlength=counts.size)
    out = np.zeros(counts.size)
    for d in range(counts.size):
        xs = sizes[starts[d]: starts[d] + counts[d]]
        nu = _survivor_counts(np.r_[xs, pool[d]], N, rng)[:-1]
        nu = nu.astype(float)
        out[d] = np.sum(nu * (nu - 1)) / (N * (N - 1))
    return out


def estimate_cN(config: ModelConfig, replicates: int, stream: np.random.Generator,
                method: str = "factorial-moment",
                offspring_sampler: Callable | None = None,
                chunk_entries: int = 2**21) -> CnEstimate:
    """Monte Carlo estimate of ``c_N``.

    ``factorial-moment`` averages ``sum_i X_i (X_i - 1) / (S (S - 1))`` over
    simulated days, ``pair-indicator`` averages
    ``sum_i nu_i (nu_i - 1) / (N (N - 1))`` after winter sampling. Both have
    mean ``c_N``. When some days surely produce no merger, replicates are
    drawn conditionally on the complementary event and the result is
    rescaled by its probability.

    ``offspring_sampler(N, R, rng)`` replaces the model by an arbitrary
    i.i.d. family-size law returning an ``(R, N)`` array.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if method not in ("factorial-moment", "pair-indicator"):
        raise ValueError(f"unknown method {method!r}")
    N = config.N
    if N == 1:
        return CnEstimate(0.0, 0.0, replicates, method)
    if offspring_sampler is not None:
        xs = np.asarray(offspring_sampler(N, replicates, stream), dtype=np.int64)
        vals = _per_day_values(xs.ravel(), np.full(replicates, N), np.zeros(replicates, np.int64), N, method, stream)
        weight = 1.0
    else:
        sampler = DaySampler(config, sparse=True)
        if sampler.never_merges:
            return CnEstimate(0.0, 0.0, replicates, method)
        weight = sampler.p_day
        per_day = N if not sampler.sparse else max(1.0, N * (1 - sampler.q))
        B = max(1, int(chunk_entries / per_day))
        vals = []
        done = 0
        while done < replicates:
            m = min(B, replicates - done)
            _, sizes, counts, pool = sampler.draw(m, stream)
            vals.append(_per_day_values(sizes, counts, pool, N, method, stream))
            done += m
        vals = np.concatenate(vals)
    point = weight * float(vals.mean())
    se = weight * float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return CnEstimate(min(max(point, 0.0), 1.0), se, replicates, method)


# ---------------------------------------------------------------------------
# Exact small-N enumeration
# ---------------------------------------------------------------------------

ENUMERATION_LIMIT = 2_000_000


def _pmf_items(pmf) -> list[tuple[int, object]]:
    if isinstance(pmf, Mapping):
        items = [(int(k), v) for k, v in pmf.items()]
    else:
        items = [(i + 1, v) for i, v in enumerate(pmf)]
    items = [(k, v) for k, v in items if v != 0]
    if any(k < 1 for k, _ in items):
        raise ValueError("offspring pmf must live on {1, 2, ...}")
    total = sum(v for _, v in items)
    if abs(float(total) - 1.0) > 1e-12:
        raise ValueError(f"pmf sums to {total}, not 1")
    return items


def _falling(x: int, k: int) -> int:
    out = 1
    for i in range(k):
        out *= x - i
    return out


def _check_size(m: int, N: int):
    size = m**N
    if size > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration needs {size:.3g} outcomes (limit {ENUMERATION_LIMIT})")


def exact_cN_small(offspring_pmf, N: int):
    """Exact ``N E[X_1 (X_1 - 1) / (S (S - 1))]`` by enumerating all family-size vectors.

    ``offspring_pmf`` maps family size to probability (a mapping, or a
    sequence for sizes 1, 2, ...). Fractions give an exact rational answer.
    """
    items = _pmf_items(offspring_pmf)
    _check_size(len(items), N)
    if N == 1:
        return Fraction(0) if all(isinstance(v, (int, Fraction)) for _, v in items) else 0.0
    return exact_factorial_moment(dict(items), N, (2,), side="family") * N


def exact_factorial_moment(offspring_pmf, N: int, ks, side: str = "sampled"):
    """Both sides of the factorial-moment identity by full enumeration.

    ``side="sampled"`` gives ``E[prod_i (nu_i)_{k_i}] / (N)_{|k|}`` with the
    winter sampling enumerated exactly; ``side="family"`` gives
    ``E[prod_i (X_i)_{k_i} / (S)_{|k|}]``.
    """
    items = _pmf_items(offspring_pmf)
    _check_size(len(items), N)
    ks = tuple(int(k) for k in ks)
    r, K = len(ks), sum(ks)
    if r > N or K > N:
        raise ValueError("need len(ks) <= N and sum(ks) <= N")
    exact = all(isinstance(v, (int, Fraction)) for _, v in items)
    zero = Fraction(0) if exact else 0.0
    total = zero
    for combo in itertools.product(items, repeat=N):
        x = [c[0] for c in combo]
        w = Fraction(1) if exact else 1.0
        for c in combo:
            w = w * c[1]
        S = sum(x)
        if side == "family":
            num = 1
            for i, k in enumerate(ks):
                num *= _falling(x[i], k)
            val = Fraction(num, _falling(S, K)) if exact else num / _falling(S, K)
        else:
            rest = S - sum(x[:r])
            acc = 0
            for nus in itertools.product(*[range(min(xi, N) + 1) for xi in x[:r]]):
                m = N - sum(nus)
                if m < 0 or m > rest:
                    continue
                ways = math.comb(rest, m)
                f = 1
                for xi, nu, k in zip(x, nus, ks):
                    ways *= math.comb(xi, nu)
                    f *= _falling(nu, k)
                acc += ways * f
            den = math.comb(S, N) * _falling(N, K)
            val = Fraction(acc, den) if exact else acc / den
        total = total + w * val
    return total
