"""Merger rates of Lambda-coalescents and continuous-time trajectory simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .core import (BetaInterior, EtaMixture, ExplicitDensity, Kappa, LambdaMeasure,
                   Partition, partition_merge)

QUAD_TOL = 1e-12


def _quad(f, a, b, **kw):
    val, err = integrate.quad(f, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=500, **kw)
    return val, err


@lru_cache(maxsize=None)
def kappa_moment_integral(kappa: float, k: int, b: int) -> float:
    """``E[Y^k (1 - Y)^(b - k)]`` for ``Y = kappa W / (kappa W + 1)``, W exponential(1).

    With ``u = y / (1 - y)`` this is ``int_0^inf (kappa w)^k (1 + kappa w)^-b e^-w dw``.
    """
    def f(w):
        kw = kappa * w
        return math.exp(k * math.log(kw) - b * math.log1p(kw) - w) if w > 0 else (1.0 if k == 0 else 0.0)

    val, _ = _quad(f, 0, math.inf)
    return val


def second_moment_Y(kappa: float) -> float:
    return kappa_moment_integral(float(kappa), 2, 2)


def interior_mass(interior) -> float:
    """Total mass of an interior part."""
    if interior is None:
        return 0.0
    if isinstance(interior, BetaInterior):
        return 1.0
    if isinstance(interior, Kappa):
        return 1.0 if interior.normalized else second_moment_Y(interior.kappa)
    if isinstance(interior, EtaMixture):
        return math.fsum(m * second_moment_Y(k) for k, m in interior.eta)
    if isinstance(interior, ExplicitDensity):
        return _quad(interior.h, 0, 1)[0]
    raise TypeError(f"unsupported interior {interior!r}")


def total_mass(measure: LambdaMeasure) -> float:
    return measure.a0 + measure.a1 + interior_mass(measure.interior)


def _interior_rate(interior, b: int, k: int, method: str):
    """(rate, tag) for the interior part."""
    if interior is None:
        return 0.0, "closed-form"
    if isinstance(interior, BetaInterior):
        a = interior.a
        if method == "quadrature":
            norm, _ = _quad(lambda y: 1.0, 0, 1, weight="alg", wvar=(1 - a, a - 1))
            val, _ = _quad(lambda y: 1.0, 0, 1, weight="alg", wvar=(k - 1 - a, b - k + a - 1))
            return val / norm, f"quadrature{{abs_tol={QUAD_TOL:g}}}"
        return math.exp(special.betaln(k - a, b - k + a) - special.betaln(2 - a, a)), "closed-form"
    if isinstance(interior, Kappa):
        val = kappa_moment_integral(float(interior.kappa), k, b)
        if interior.normalized:
            val /= second_moment_Y(interior.kappa)
        return val, f"quadrature{{abs_tol={QUAD_TOL:g}}}"
    if isinstance(interior, EtaMixture):
        val = math.fsum(m * kappa_moment_integral(kap, k, b) for kap, m in interior.eta)
        return val, f"quadrature{{abs_tol={QUAD_TOL:g}}}"
    if isinstance(interior, ExplicitDensity):
        val, _ = _quad(lambda y: y ** (k - 2) * (1 - y) ** (b - k) * interior.h(y), 0, 1)
        return val, f"quadrature{{abs_tol={QUAD_TOL:g}}}"
    raise TypeError(f"unsupported interior {interior!r}")


def rate_lambda_bk(measure: LambdaMeasure, b: int, k: int, method: str = "auto") -> float:
    """Rate at which one given set of ``k`` out of ``b`` blocks merges.

    ``lambda_{b,k} = int_0^1 y^(k-2) (1-y)^(b-k) Lambda(dy)``. The atom at 0
    counts as a Kingman component (only ``k = 2``), the atom at 1 only for
    ``k = b``. ``method="quadrature"`` forces numerical integration for the
    Beta interior instead of the Beta-function closed form.
    """
    return rate_with_tag(measure, b, k, method)[0]


def rate_with_tag(measure: LambdaMeasure, b: int, k: int, method: str = "auto"):
    if not 2 <= k <= b:
        raise ValueError(f"need 2 <= k <= b, got b={b}, k={k}")
    val, tag = _interior_rate(measure.interior, b, k, method)
    if k == 2:
        val += measure.a0
    if k == b:
        val += measure.a1
    return val, tag


@dataclass(frozen=True)
class RatesTable:
    """``lambda_{b,k}`` for ``2 <= k <= b <= b_max`` with a provenance tag per entry."""

    measure: LambdaMeasure
    b_max: int
    rates: dict = field(repr=False)
    method: dict = field(repr=False)

    @classmethod
    def build(cls, measure: LambdaMeasure, b_max: int, method: str = "auto") -> "RatesTable":
        rates, tags = {}, {}
        for b in range(2, b_max + 1):
            for k in range(2, b + 1):
                rates[b, k], tags[b, k] = rate_with_tag(measure, b, k, method)
        return cls(measure, b_max, rates, tags)

    def __getitem__(self, bk):
        return self.rates[bk]

    def consistency_residuals(self) -> np.ndarray:
        """``lambda_{b,k} - lambda_{b+1,k} - lambda_{b+1,k+1}`` over the table."""
        out = [self.rates[b, k] - self.rates[b + 1, k] - self.rates[b + 1, k + 1]
               for b in range(2, self.b_max) for k in range(2, b + 1)]
        return np.array(out)


def total_merger_rates(measure: LambdaMeasure, b: int) -> np.ndarray:
    """Event rates ``C(b, k) lambda_{b,k}`` for ``k = 2..b``."""
    if b < 2:
        raise ValueError("need b >= 2")
    return np.array([math.comb(b, k) * rate_lambda_bk(measure, b, k) for k in range(2, b + 1)])


def first_merger_size_law(measure: LambdaMeasure, n: int) -> np.ndarray:
    """Probability that the next merger with ``n`` blocks involves ``k`` of them, ``k = 2..n``."""
    r = total_merger_rates(measure, n)
    tot = r.sum()
    if not tot > 0:
        raise ValueError("measure has zero total merger rate")
    return r / tot


@dataclass
class CoalescentTrajectory:
    """``events`` lists ``(time, partition)`` starting from ``(0, singletons)``."""

    n: int
    events: list
    absorbed: bool

    @property
    def merger_sizes(self) -> list[int]:
        out = []
        for (_, p), (_, q) in zip(self.events, self.events[1:]):
            out.append(len(p) - len(q) + 1)
        return out


def simulate_lambda_coalescent(measure: LambdaMeasure, n: int, stream: np.random.Generator,
                               rates: RatesTable | None = None) -> CoalescentTrajectory:
    """Embedded jump chain of the Lambda-coalescent started from ``n`` singletons."""
    if n < 1:
        raise ValueError("need n >= 1")
    p = Partition.singletons(n)
    t = 0.0
    events = [(t, p)]
    cache: dict[int, np.ndarray] = {}
    while len(p) > 1:
        b = len(p)
        if b not in cache:
            if rates is not None and b <= rates.b_max:
                cache[b] = np.array([math.comb(b, k) * rates[b, k] for k in range(2, b + 1)])
            else:
                cache[b] = total_merger_rates(measure, b)
        r = cache[b]
        tot = r.sum()
        if not tot > 0:
            return CoalescentTrajectory(n, events, False)
        t += stream.exponential(1.0 / tot)
        k = 2 + int(np.searchsorted(np.cumsum(r), stream.random() * tot, side="right"))
        k = min(k, b)
        blocks = stream.choice(b, size=k, replace=False)
        p = partition_merge(p, [blocks.tolist()])
        events.append((t, p))
    return CoalescentTrajectory(n, events, True)


def _paintbox_components(measure: LambdaMeasure):
    """Finite-rate pieces ``(rate, sampler of y)`` of the point process ``dt x y^-2 Lambda(dy)``."""
    from .analysis import sample_Y_kappa

    if measure.a0 > 0 or isinstance(measure.interior, (BetaInterior, ExplicitDensity)):
        raise ValueError("paintbox simulation needs a finite y^-2 Lambda(dy)")
    comps = []
    if measure.a1 > 0:
        comps.append((measure.a1, lambda rng: 1.0))
    it = measure.interior
    if isinstance(it, Kappa):
        rate = 1.0 / second_moment_Y(it.kappa) if it.normalized else 1.0
        comps.append((rate, lambda rng, kap=it.kappa: float(sample_Y_kappa(kap, rng))))
    elif isinstance(it, EtaMixture):
        for kap, m in it.eta:
            if m > 0:
                comps.append((m, lambda rng, kap=kap: float(sample_Y_kappa(kap, rng))))
    return comps


def simulate_paintbox(measure: LambdaMeasure, n: int, stream: np.random.Generator) -> CoalescentTrajectory:
    """Poissonian construction: at rate ``y^-2 Lambda(dy)`` each block flips a y-coin, heads merge."""
    comps = _paintbox_components(measure)
    rates = np.array([c[0] for c in comps])
    p = Partition.singletons(n)
    t = 0.0
    events = [(t, p)]
    if rates.size == 0 or rates.sum() == 0:
        return CoalescentTrajectory(n, events, n == 1)
    tot = rates.sum()
    cw = np.cumsum(rates)
    while len(p) > 1:
        t += stream.exponential(1.0 / tot)
        j = min(int(np.searchsorted(cw, stream.random() * tot, side="right")), rates.size - 1)
        y = comps[j][1](stream)
        hit = np.flatnonzero(stream.random(len(p)) < y)
        if hit.size >= 2:
            p = partition_merge(p, [hit.tolist()])
            events.append((t, p))
    return CoalescentTrajectory(n, events, True)
