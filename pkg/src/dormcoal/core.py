"""Shared domain types, partition algebra and seeded random streams."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

# Family sizes beyond this are treated as count overflow.
MAX_COUNT = 2**62


class InvariantError(RuntimeError):
    """A simulation produced a state violating a model invariant."""


# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    """A set partition of ``{1..n}`` in canonical form.

    Blocks are sorted tuples, ordered by their least element, so two
    partitions compare equal exactly when they describe the same set
    partition.
    """

    n: int
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"partition needs n >= 1, got {self.n}")
        canon = _canonical(self.blocks)
        seen = [x for b in canon for x in b]
        if len(seen) != len(set(seen)):
            raise ValueError("blocks are not disjoint")
        if sorted(seen) != list(range(1, self.n + 1)):
            raise ValueError(f"blocks do not cover 1..{self.n}")
        object.__setattr__(self, "blocks", canon)

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]]) -> "Partition":
        blocks = [tuple(b) for b in blocks]
        n = sum(len(b) for b in blocks)
        return cls(n, tuple(blocks))

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(n, tuple((i,) for i in range(1, n + 1)))

    def __len__(self):
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def is_coarsening_of(self, other: "Partition") -> bool:
        """True if every block of ``other`` lies inside a block of ``self``."""
        where = {x: i for i, b in enumerate(self.blocks) for x in b}
        return all(len({where[x] for x in b}) == 1 for b in other.blocks)


def _canonical(blocks) -> tuple[tuple[int, ...], ...]:
    out = []
    for b in blocks:
        b = tuple(sorted(int(x) for x in b))
        if not b:
            raise ValueError("empty block")
        out.append(b)
    out.sort(key=lambda b: b[0])
    return tuple(out)


def partition_merge(p: Partition, merge_sets: Sequence[Iterable[int]]) -> Partition:
    """Union the blocks named in each merge set (0-based block indices).

    Several merge sets apply simultaneously, which is how a generation with
    more than one family collecting lineages is represented.
    """
    used: set[int] = set()
    groups = []
    for ms in merge_sets:
        ms = sorted(set(int(i) for i in ms))
        for i in ms:
            if i < 0 or i >= len(p.blocks):
                raise ValueError(f"block index {i} out of range for {len(p.blocks)} blocks")
            if i in used:
                raise ValueError(f"block index {i} appears in more than one merge set")
            used.add(i)
        if ms:
            groups.append(ms)
    new_blocks = [p.blocks[i] for i in range(len(p.blocks)) if i not in used]
    for ms in groups:
        new_blocks.append(tuple(x for i in ms for x in p.blocks[i]))
    return Partition(p.n, tuple(new_blocks))


# ---------------------------------------------------------------------------
# Offspring vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OffspringVector:
    """Per-parent family sizes before (``x``) and optionally after (``nu``) winter."""

    x: np.ndarray
    nu: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.int64)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("x must be a nonempty 1-d array")
        if np.any(x < 1):
            raise InvariantError("family sizes must be >= 1")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if self.nu is not None:
            nu = np.asarray(self.nu, dtype=np.int64)
            if nu.shape != x.shape:
                raise ValueError("nu and x must have the same length")
            if np.any(nu < 0) or np.any(nu > x):
                raise InvariantError("need 0 <= nu_i <= x_i")
            if int(nu.sum()) != x.size:
                raise InvariantError(f"sum(nu) = {int(nu.sum())} != N = {x.size}")
            nu.setflags(write=False)
            object.__setattr__(self, "nu", nu)

    @property
    def N(self) -> int:
        return int(self.x.size)

    @property
    def total(self) -> int:
        # exact even when the int64 sum would overflow
        return int(self.x.sum(dtype=object))


# ---------------------------------------------------------------------------
# Wake-time laws
# ---------------------------------------------------------------------------
#
# Every law is described through the wake-back time sigma = horizon - tau,
# i.e. how long before the end of its horizon an individual wakes up.


@dataclass(frozen=True)
class TwoPoint:
    """Wake at time 0 with probability ``omega``, otherwise at ``late_time``."""

    omega: float
    late_time: float

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"omega must lie in [0, 1], got {self.omega}")
        if self.late_time < 0:
            raise ValueError("late_time must be >= 0")

    @property
    def horizon(self) -> float:
        return self.late_time

    def sample_sigma(self, n: int, rng: np.random.Generator) -> np.ndarray:
        early = rng.random(n) < self.omega
        return np.where(early, self.late_time, 0.0)

    def split_zero(self):
        """(P(sigma = 0), sampler of sigma conditioned on sigma > 0)."""
        if self.late_time == 0:
            return 1.0, None
        return 1.0 - self.omega, lambda n, rng: np.full(n, float(self.late_time))


@dataclass(frozen=True)
class ExponentialTail:
    """``sigma = min(zeta, truncate_at)`` with ``P(zeta > y) = min(1, c exp(-gamma y))``.

    For ``c > 1`` the survival function is floored at 1 below
    ``log(c) / gamma``; for ``c < 1`` the law keeps an atom of mass ``1 - c``
    at zero.
    """

    gamma: float
    c: float
    truncate_at: float

    def __post_init__(self):
        if self.gamma <= 0 or self.c <= 0:
            raise ValueError("gamma and c must be > 0")
        if self.truncate_at <= 0:
            raise ValueError("truncate_at must be > 0")

    @property
    def horizon(self) -> float:
        return self.truncate_at

    def survival(self, y):
        y = np.asarray(y, dtype=float)
        return np.minimum(1.0, self.c * np.exp(-self.gamma * y))

    def sample_zeta(self, n: int, rng: np.random.Generator) -> np.ndarray:
        e = rng.standard_exponential(n)
        return np.maximum(0.0, (math.log(self.c) + e) / self.gamma)

    def sample_sigma(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.minimum(self.sample_zeta(n, rng), self.truncate_at)

    def split_zero(self):
        if self.c >= 1:
            return 0.0, self.sample_sigma

        def positive(n, rng):
            # given zeta > 0 the tail is exactly exponential(gamma)
            return np.minimum(rng.standard_exponential(n) / self.gamma, self.truncate_at)

        return 1.0 - self.c, positive


@dataclass(frozen=True)
class Mixture:
    """Finite law of the wake-back time: atoms ``(sigma_j, w_j)`` before ``horizon``."""

    atoms: tuple[tuple[float, float], ...]
    horizon: float

    def __post_init__(self):
        atoms = tuple((float(s), float(w)) for s, w in self.atoms)
        if not atoms:
            raise ValueError("mixture needs at least one atom")
        ws = [w for _, w in atoms]
        if any(w < 0 for w in ws):
            raise ValueError("mixture weights must be >= 0")
        if abs(math.fsum(ws) - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {math.fsum(ws)!r}, not 1")
        if any(s < 0 or s > self.horizon for s, _ in atoms):
            raise ValueError("wake-back times must lie in [0, horizon]")
        object.__setattr__(self, "atoms", atoms)

    def sample_sigma(self, n: int, rng: np.random.Generator) -> np.ndarray:
        s = np.array([a for a, _ in self.atoms])
        w = np.array([b for _, b in self.atoms])
        idx = np.searchsorted(np.cumsum(w), rng.random(n) * w.sum(), side="right")
        return s[np.minimum(idx, len(s) - 1)]

    def split_zero(self):
        q = math.fsum(w for s, w in self.atoms if s == 0.0)
        s = np.array([a for a, w in self.atoms if a > 0.0 and w > 0.0])
        w = np.array([w for a, w in self.atoms if a > 0.0 and w > 0.0])
        if s.size == 0:
            return 1.0, None
        cw = np.cumsum(w)

        def positive(n, rng):
            idx = np.searchsorted(cw, rng.random(n) * cw[-1], side="right")
            return s[np.minimum(idx, s.size - 1)]

        return q, positive


@dataclass(frozen=True)
class Degenerate:
    """Everyone wakes at ``time``."""

    time: float

    @property
    def horizon(self) -> float:
        return self.time

    def sample_sigma(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(n)

    def split_zero(self):
        return 1.0, None


WakeLaw = TwoPoint | ExponentialTail | Mixture | Degenerate


@dataclass(frozen=True)
class ModelConfig:
    """One instance of the seasonal dormancy model.

    ``t_spring`` is the end of the activation phase, ``t_total`` the length
    of the whole day. Wake times are ``law.horizon - sigma`` and must fall in
    ``[0, t_spring]``.
    """

    N: int
    lam: float
    t_spring: float
    t_total: float
    wake: WakeLaw

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if self.lam < 0:
            raise ValueError("birth rate must be >= 0")
        if self.t_spring < 0 or self.t_total < self.t_spring:
            raise ValueError("need 0 <= t_spring <= t_total")
        if self.wake.horizon > self.t_spring * (1 + 1e-12):
            raise ValueError(
                f"wake law horizon {self.wake.horizon} exceeds t_spring {self.t_spring}"
            )

    @property
    def summer(self) -> float:
        return self.t_total - self.t_spring

    def spring_rate(self, sigma: np.ndarray) -> np.ndarray:
        """Growth exponent ``lam * (t_spring - tau)`` for wake-back times ``sigma``."""
        offset = self.t_spring - self.wake.horizon
        return self.lam * (np.asarray(sigma, dtype=float) + offset)


# ---------------------------------------------------------------------------
# Lambda measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BetaInterior:
    """Beta(2 - a, a) probability density on (0, 1)."""

    a: float

    def __post_init__(self):
        if not 0 < self.a < 2:
            raise ValueError("Beta interior needs 0 < a < 2")


@dataclass(frozen=True)
class Kappa:
    """The two-point beta = 1 limit measure.

    With ``normalized`` the measure is the probability measure
    ``y^2 P(Y_kappa in dy) / E[Y_kappa^2]``; otherwise the unnormalized
    ``y^2 P(Y_kappa in dy)`` with mass ``E[Y_kappa^2]``.
    """

    kappa: float
    normalized: bool = True

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")


@dataclass(frozen=True)
class EtaMixture:
    """Interior density ``h`` generated by a finite measure ``sum_j mass_j delta_{kappa_j}``."""

    eta: tuple[tuple[float, float], ...]

    def __post_init__(self):
        eta = tuple((float(k), float(m)) for k, m in self.eta)
        if any(k <= 0 or m < 0 for k, m in eta):
            raise ValueError("eta needs kappa > 0 and mass >= 0")
        object.__setattr__(self, "eta", eta)


@dataclass(frozen=True)
class ExplicitDensity:
    h: Callable[[float], float] = field(compare=False)


Interior = BetaInterior | Kappa | EtaMixture | ExplicitDensity | None


@dataclass(frozen=True)
class LambdaMeasure:
    """``a0 * delta_0 + a1 * delta_1 + interior`` on [0, 1]."""

    a0: float = 0.0
    a1: float = 0.0
    interior: Interior = None

    def __post_init__(self):
        if self.a0 < 0 or self.a1 < 0:
            raise ValueError("atom masses must be >= 0")

    @classmethod
    def kingman(cls) -> "LambdaMeasure":
        return cls(a0=1.0)

    @classmethod
    def star(cls) -> "LambdaMeasure":
        return cls(a1=1.0)

    @classmethod
    def beta(cls, a: float) -> "LambdaMeasure":
        return cls(interior=BetaInterior(a))

    @classmethod
    def kappa(cls, kappa: float, normalized: bool = True) -> "LambdaMeasure":
        return cls(interior=Kappa(kappa, normalized))


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replicate_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.replicate_index < 0:
            raise ValueError("replicate_index must be >= 0")


def derive_stream(spec: SeedSpec | int, replicate_index: int | None = None) -> np.random.Generator:
    """Return the Philox stream for ``(master_seed, replicate_index)``.

    The key is derived with ``SeedSequence(master_seed, spawn_key=(i,))``,
    so the stream depends on both values only and never on how replicates
    are scheduled.
    """
    if not isinstance(spec, SeedSpec):
        spec = SeedSpec(int(spec), 0 if replicate_index is None else int(replicate_index))
    ss = np.random.SeedSequence(spec.master_seed, spawn_key=(spec.replicate_index,))
    return np.random.Generator(np.random.Philox(ss))


def replicate_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Map ``fn`` over ``items`` in order, optionally across processes."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
