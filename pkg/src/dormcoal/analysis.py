"""Formulas, asymptotics and Monte Carlo checks of the limit conditions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special, stats

from .coalescent import (first_merger_size_law, kappa_moment_integral, second_moment_Y,
                         total_mass)
from .core import (BetaInterior, EtaMixture, ExplicitDensity, ExponentialTail, Kappa,
                   LambdaMeasure, Mixture, ModelConfig, TwoPoint)
from .forward import family_sizes, neg_log1mexp, trivial_split


# ---------------------------------------------------------------------------
# Regimes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoPointRegime:
    """Wake early with probability ``omega_N = C N^-p`` (p > 1), growth ``lam T = beta log(kappa N)``."""

    beta: float
    kappa: float = 1.0
    omega_scale: float = 1.0
    omega_power: float = 2.0

    def __post_init__(self):
        if self.beta <= 0 or self.kappa <= 0 or self.omega_scale <= 0:
            raise ValueError("need beta > 0, kappa > 0 and omega_scale > 0")
        if self.omega_power <= 1:
            raise ValueError("omega_N = C N^-p needs p > 1 so that N omega_N -> 0")

    def omega(self, N: int) -> float:
        return min(1.0, self.omega_scale * float(N) ** -self.omega_power)

    def config(self, N: int, summer: float = 0.0) -> ModelConfig:
        if self.kappa * N <= 1:
            raise ValueError("need kappa N > 1")
        t = self.beta * math.log(self.kappa * N)
        return ModelConfig(int(N), 1.0, t, t + summer, TwoPoint(self.omega(N), t))

    def target(self) -> LambdaMeasure:
        if self.beta > 1:
            return LambdaMeasure.star()
        if self.beta == 1:
            return LambdaMeasure.kappa(self.kappa)
        return LambdaMeasure.kingman()


@dataclass(frozen=True)
class ExponentialRegime:
    """Exactly exponential wake-back tail with ``a = gamma / lam`` and ``T_N = (log N)^T_power``."""

    a: float
    c: float = 1.0
    lam: float = 1.0
    T_power: float = 2.0

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0 or self.lam <= 0:
            raise ValueError("need a, c, lam > 0")

    def T(self, N: int) -> float:
        return math.log(N) ** self.T_power

    def config(self, N: int, summer: float = 0.0) -> ModelConfig:
        T = self.T(N)
        law = ExponentialTail(self.a * self.lam, self.c, T)
        return ModelConfig(int(N), self.lam, T, T + summer, law)

    def target(self) -> LambdaMeasure:
        if self.a >= 2:
            return LambdaMeasure.kingman()
        if self.a >= 1:
            return LambdaMeasure.beta(self.a)
        raise ValueError("for a < 1 the limit has simultaneous multiple mergers, not a Lambda-coalescent")


@dataclass(frozen=True)
class MixtureRegime:
    """Target ``a1 delta_0 + a2 delta_1 + Lambda_eta`` built by :func:`construct_mixture_wake_law`."""

    eta: tuple = ()
    a1: float = 0.0
    a2: float = 0.0
    r: float = 0.25

    def config(self, N: int) -> ModelConfig:
        return construct_mixture_wake_law(self.eta, self.a1, self.a2, self.r, N)[1]

    def target(self) -> LambdaMeasure:
        return LambdaMeasure(self.a1, self.a2, EtaMixture(tuple(self.eta)) if self.eta else None)


RegimeSpec = TwoPointRegime | ExponentialRegime | MixtureRegime


# ---------------------------------------------------------------------------
# Two-point moments and c_N asymptotics
# ---------------------------------------------------------------------------


def moments_MN(n: int, N: int, beta: float, kappa: float, direct_terms: int = 10**6) -> float:
    """``E[(G / (G + N - 1))^n]`` with ``G`` geometric on {1, 2, ...}, parameter ``(kappa N)^-beta``.

    The first ``direct_terms`` terms of the series are summed exactly; the
    remainder is its integral plus the first Euler-Maclaurin corrections,
    which is accurate far below 1e-10 because the summand varies on a
    scale of at least ``direct_terms``.
    """
    if n < 1 or N < 2:
        raise ValueError("need n >= 1 and N >= 2")
    p = (kappa * N) ** -beta
    if p >= 1:
        return (1.0 / N) ** n
    logq = math.log1p(-p)
    g = np.arange(1, direct_terms, dtype=float)
    logf = math.log(p) + (g - 1) * logq + n * (np.log(g) - np.log(g + N - 1))
    head = float(np.sum(np.exp(logf)))
    G0 = float(direct_terms)
    log_f0 = math.log(p) + (G0 - 1) * logq + n * (math.log(G0) - math.log(G0 + N - 1))
    if log_f0 < -745:
        return head
    f0 = math.exp(log_f0)
    L = -logq

    def shape(w):
        t = G0 + w / L
        return math.exp(-w + n * (math.log(t) - math.log(t + N - 1)))

    tail_int = f0 / math.exp(n * (math.log(G0) - math.log(G0 + N - 1))) / L
    tail_int *= integrate.quad(shape, 0, math.inf, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    dlogf = logq + n * (N - 1) / (G0 * (G0 + N - 1))
    return head + tail_int + f0 / 2 - f0 * dlogf / 12


def moments_MN_integral(n: int, N: int, beta: float, kappa: float) -> float:
    """The same moment from ``int_0^1 P(G > (N-1) x^(1/n) / (1 - x^(1/n))) dx``.

    Plain adaptive quadrature of a step function; slow and only accurate
    to ~1e-6, kept as an independent check of :func:`moments_MN`.
    """
    p = (kappa * N) ** -beta
    logq = math.log1p(-p) if p < 1 else -math.inf

    def surv(x):
        if x <= 0:
            return 1.0
        s = x ** (1.0 / n)
        if s >= 1:
            return 0.0
        y = (N - 1) * s / (1 - s)
        return math.exp(math.floor(y) * logq) if p < 1 else 0.0

    return integrate.quad(surv, 0, 1, limit=5000, epsabs=1e-9)[0]


def moment_EYk(kappa: float, n: int) -> float:
    """``E[Y_kappa^n] = int_0^1 P(Y_kappa > x^(1/n)) dx`` with ``P(Y > y) = exp(-y / (kappa (1 - y)))``."""
    if kappa <= 0 or n < 0:
        raise ValueError("need kappa > 0 and n >= 0")
    if n == 0:
        return 1.0

    def surv(x):
        y = x ** (1.0 / n)
        if y >= 1:
            return 0.0
        return math.exp(-y / (kappa * (1 - y)))

    return integrate.quad(surv, 0, 1, epsabs=1e-13, epsrel=1e-12, limit=500)[0]


def sample_Y_kappa(kappa: float, stream: np.random.Generator, size=None):
    """Draws of ``kappa W / (kappa W + 1)`` with ``W`` exponential(1)."""
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    kw = kappa * stream.standard_exponential(size)
    return kw / (kw + 1.0)


def cN_asymptote(regime: TwoPointRegime, N: int) -> float:
    """Leading-order ``c_N`` of the two-point model."""
    if not isinstance(regime, TwoPointRegime):
        raise ValueError("c_N asymptotics are implemented for the two-point regime only")
    w = regime.omega(N)
    b, k = regime.beta, regime.kappa
    if b > 1:
        return N * w
    if b == 1:
        return N * w * second_moment_Y(k)
    return 2 * k ** (2 * b) * w * float(N) ** (2 * b - 1)


# ---------------------------------------------------------------------------
# Exponential tails
# ---------------------------------------------------------------------------


def tail_exact_exponential(a: float, k) -> np.ndarray | float:
    """``P(X > k) = a Gamma(k+1) Gamma(a) / Gamma(k+1+a)`` for the mixed geometric with exponential exponent."""
    if a <= 0:
        raise ValueError("need a > 0")
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ValueError("need k >= 0")
    out = np.exp(math.log(a) + special.betaln(k + 1, a))
    return float(out) if out.ndim == 0 else out


def tail_monte_carlo_exponential(a: float, ks, draws: int, stream: np.random.Generator,
                                 lam: float = 1.0, chunk: int = 2_000_000):
    """Monte Carlo ``P(X > k)`` where ``X`` is geometric(exp(-lam zeta)), ``zeta`` exponential(a lam).

    Returns ``(estimate, stderr)`` arrays over ``ks``. Sizes are handled as
    floats so no truncation is needed.
    """
    ks = np.asarray(ks, dtype=float)
    hits = np.zeros(ks.size)
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        zeta = stream.standard_exponential(m) / (a * lam)
        e = stream.standard_exponential(m)
        with np.errstate(divide="ignore"):
            x = 1.0 + np.floor(e / neg_log1mexp(lam * zeta))
        hits += (x[:, None] > ks[None, :]).sum(axis=0)
        done += m
    p = hits / draws
    return p, np.sqrt(p * (1 - p) / draws)


# ---------------------------------------------------------------------------
# Characterization: density h and the mixture construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerLawEta:
    """``eta(d kappa) = scale * kappa^(-1-a) d kappa`` on (0, inf), 0 < a < 2."""

    a: float
    scale: float = 1.0


def _eta_items(eta) -> tuple[tuple[float, float], ...]:
    if isinstance(eta, EtaMixture):
        return eta.eta
    return EtaMixture(tuple(eta)).eta


def density_h(y, eta, include_kappa_quadrature: bool = False):
    """Interior density ``h(y) = int (1/kappa) u^2 exp(-u/kappa) eta(d kappa)``, ``u = y/(1-y)``.

    ``eta`` is a finite list of ``(kappa, mass)`` pairs, an
    :class:`EtaMixture`, or a :class:`PowerLawEta`. For the power law the
    integral reduces to ``scale Gamma(1+a) u^(1-a)``; with
    ``include_kappa_quadrature`` the kappa-integral is done numerically
    instead.
    """
    y = np.asarray(y, dtype=float)
    if np.any((y <= 0) | (y >= 1)):
        raise ValueError("y must lie in (0, 1)")
    u = y / (1 - y)
    if isinstance(eta, PowerLawEta):
        a = eta.a
        if include_kappa_quadrature:
            def one(ui):
                f = lambda s: s ** a * math.exp(-s)
                return eta.scale * ui ** (1 - a) * integrate.quad(f, 0, math.inf, epsabs=1e-14, epsrel=1e-13)[0]
            out = np.vectorize(one)(u)
        else:
            out = eta.scale * math.gamma(1 + a) * u ** (1 - a)
    else:
        out = np.zeros_like(u)
        for kap, m in _eta_items(eta):
            out = out + m * u**2 * np.exp(-u / kap) / kap
    return float(out) if out.ndim == 0 else out


def _truncated_eta(eta, N: int, r: float):
    lo, hi = float(N) ** (-r / 2), float(N)
    kept = [(k, m) for k, m in _eta_items(eta) if lo <= k <= hi and m > 0]
    return kept, math.fsum(m for _, m in kept)


def _mixture_weights(eta, a1, a2, r, N):
    """Conditional wake-back law ``[(sigma, weight)]`` of an early waker."""
    T = math.log(float(N) ** 2)
    kept, alpha = _truncated_eta(eta, N, r)
    s = float(N) ** (-2 * r)
    if a1 > 0:
        atoms = [(min(math.log(k * N), T), 2 * s * m / a1) for k, m in kept]
        atoms.append((min((1 + r) * math.log(N), T), 2 * s * a2 / a1))
        rest_at = min((1 - r) * math.log(N), T)
    else:
        atoms = [(math.log(k * N), s * m) for k, m in kept]
        atoms.append(((1 + r) * math.log(N), s * a2))
        rest_at = 0.0
    if all(w <= 1 for _, w in atoms):
        atoms.append((rest_at, 1.0 - math.fsum(w for _, w in atoms)))
    else:
        atoms.append((rest_at, -math.inf))  # marks the input inadmissible
    return atoms, T


def _admissible(eta, a1, a2, r, N) -> bool:
    atoms, T = _mixture_weights(eta, a1, a2, r, N)
    return all(-1e-15 <= w <= 1 and 0 <= s <= T for s, w in atoms)


def minimal_admissible_N(eta, a1, a2, r, start: int = 2, limit: int = 2**62) -> int:
    """Smallest N (doubling then bisection) from which the construction yields valid weights."""
    N = max(2, start)
    while not _admissible(eta, a1, a2, r, N):
        N *= 2
        if N > limit:
            raise ValueError("no admissible N found")
    lo, hi = max(2, N // 2), N
    while lo < hi:
        mid = (lo + hi) // 2
        if _admissible(eta, a1, a2, r, mid):
            hi = mid
        else:
            lo = mid + 1
    return hi


def construct_mixture_wake_law(eta, a1: float, a2: float, r: float = 0.25, N: int = 10**4):
    """Cannings model whose genealogy approaches ``a1 delta_0 + a2 delta_1 + Lambda_eta``.

    Spring lasts ``T_N = log N^2``, ``lam = 1``, each individual wakes early
    with probability ``N^-2`` and then at wake-back time drawn from a finite
    mixture placed at ``log(kappa N)``, ``log N^(1+r)`` and either
    ``log N^(1-r)`` (``a1 > 0``) or 0 (``a1 = 0``). ``eta`` is truncated to
    ``[N^(-r/2), N]``. Returns ``(Mixture, ModelConfig)``.
    """
    if a1 < 0 or a2 < 0:
        raise ValueError("need a1, a2 >= 0")
    if not 0 < r < 0.5:
        raise ValueError("need 0 < r < 1/2")
    N = int(N)
    if not _admissible(eta, a1, a2, r, N):
        raise ValueError(
            f"N = {N} gives mixture weights outside [0, 1]; the smallest admissible N is "
            f"{minimal_admissible_N(eta, a1, a2, r)}"
        )
    atoms, T = _mixture_weights(eta, a1, a2, r, N)
    omega = float(N) ** -2
    flat: dict[float, float] = {}
    for s, w in atoms:
        if w > 0:
            flat[s] = flat.get(s, 0.0) + omega * max(w, 0.0)
    late = 1.0 - math.fsum(w for s, w in flat.items() if s != 0.0)
    flat[0.0] = late
    law = Mixture(tuple(sorted(flat.items())), T)
    return law, ModelConfig(N, 1.0, T, T, law)


# ---------------------------------------------------------------------------
# Limit-condition check
# ---------------------------------------------------------------------------


def tail_mass(measure: LambdaMeasure, x: float) -> float:
    """``int_x^1 y^-2 Lambda(dy)`` for ``0 < x < 1``."""
    if not 0 < x < 1:
        raise ValueError("x must lie in (0, 1)")
    out = measure.a1
    it = measure.interior
    if it is None:
        return out
    if isinstance(it, Kappa):
        v = math.exp(-x / (it.kappa * (1 - x)))
        return out + (v / second_moment_Y(it.kappa) if it.normalized else v)
    if isinstance(it, EtaMixture):
        return out + math.fsum(m * math.exp(-x / (k * (1 - x))) for k, m in it.eta)
    if isinstance(it, BetaInterior):
        a = it.a
        val = integrate.quad(lambda y: y ** (-1 - a), x, 1, weight="alg", wvar=(0, a - 1),
                             epsabs=1e-13, epsrel=1e-12)[0]
        return out + val / special.beta(2 - a, a)
    if isinstance(it, ExplicitDensity):
        return out + integrate.quad(lambda y: it.h(y) / y**2, x, 1, epsabs=1e-13, epsrel=1e-12)[0]
    raise TypeError(f"unsupported interior {it!r}")


@dataclass
class LimitCheckReport:
    """Estimates of ``(N / c_N) P(nu_1 > N x)`` against ``int_x^1 y^-2 Lambda(dy)``.

    ``lhs``, ``lhs_se``, ``z`` have shape ``(len(N_values), len(x_grid))``.
    ``cN`` and ``cN_se`` are per N; ``cond2`` estimates
    ``E[(nu_1)_2 (nu_2)_2] / (N^2 c_N)``. ``naive_replicates`` is how many
    plain indicator replicates would be needed for the same relative
    precision at the rarest grid point.
    """

    x_grid: np.ndarray
    N_values: list
    lhs: np.ndarray
    lhs_se: np.ndarray
    rhs: np.ndarray
    z: np.ndarray
    cN: np.ndarray
    cN_se: np.ndarray
    cond2: np.ndarray
    cond2_se: np.ndarray
    replicates: int
    naive_replicates: np.ndarray
    feasible: np.ndarray = field(default=None)

    def rows(self):
        """Long-format rows ``(N, x, statistic, value)``."""
        out = []
        for i, N in enumerate(self.N_values):
            out.append((N, "", "cN", self.cN[i]))
            out.append((N, "", "cN_se", self.cN_se[i]))
            out.append((N, "", "cond2", self.cond2[i]))
            out.append((N, "", "cond2_se", self.cond2_se[i]))
            out.append((N, "", "naive_replicates", self.naive_replicates[i]))
            out.append((N, "", "feasible", int(self.feasible[i])))
            for j, x in enumerate(self.x_grid):
                out.append((N, x, "lhs", self.lhs[i, j]))
                out.append((N, x, "lhs_se", self.lhs_se[i, j]))
                out.append((N, x, "rhs", self.rhs[j]))
                out.append((N, x, "z", self.z[i, j]))
        return out


def _conditioned_day(config: ModelConfig, R: int, forced: int, rng: np.random.Generator,
                     chunk_entries: int = 2**22):
    """Family sizes of ``forced`` tagged individuals conditioned to be nontrivial, and ``S``.

    Returns ``(X, S, w)`` with ``X`` of shape ``(R, forced)`` and ``w`` the
    probability that one individual is nontrivial.
    """
    N = config.N
    q, cond = trivial_split(config)
    if cond is None:
        raise ValueError("model never produces a family larger than one")
    w = 1.0 - q
    X = cond(R * forced, rng).reshape(R, forced).astype(float)
    S = X.sum(axis=1)
    others = N - forced
    if q > 0:
        k = rng.binomial(others, w, R)
        extra = cond(int(k.sum()), rng).astype(float)
        idx = np.repeat(np.arange(R), k)
        S += np.bincount(idx, weights=extra, minlength=R) + (others - k)
    else:
        step = max(1, chunk_entries // max(others, 1))
        for lo in range(0, R, step):
            hi = min(R, lo + step)
            S[lo:hi] += family_sizes(config, (hi - lo, others), rng).sum(axis=1)
    return X, S, w


def _ratio_se(a: np.ndarray, c: np.ndarray):
    """Ratio of means and its delta-method standard error."""
    n = a.size
    ma, mc = a.mean(), c.mean()
    if mc <= 0:
        return math.nan, math.nan
    r = ma / mc
    resid = a - r * c
    return r, float(np.sqrt(resid.var(ddof=1) / n) / mc)


def check_limit_condition(config, target: LambdaMeasure, x_grid: Sequence[float],
                          N_sweep: Sequence[int] | None, replicates: int,
                          stream: np.random.Generator, cond2_replicates: int | None = None,
                          max_work: float = 5e9) -> LimitCheckReport:
    """Estimate the tail condition of the Cannings-to-Lambda convergence criterion.

    Parameters
    ----------
    config : ModelConfig or callable
        Either a single model or a rule ``N -> ModelConfig`` evaluated at
        every N in ``N_sweep``.
    target : LambdaMeasure
        Limit measure; it is normalized to a probability measure, matching
        the time scale ``1 / c_N``.
    x_grid : sequence of float in (0, 1)
    N_sweep : sequence of int or None
        Ignored (may be None) when ``config`` is a single model.
    replicates : int
        Monte Carlo replicates per N.

    Notes
    -----
    Individual 1 contributes only when its family can exceed one, which
    has probability ``w``. Each replicate conditions on that event and
    averages exact conditional quantities given the family sizes:
    ``P(nu_1 > N x | X) = hypergeom.sf(floor(N x); S, X_1, N)`` and
    ``X_1 (X_1 - 1) / (S (S - 1))``. The factor ``w`` cancels in
    ``(N / c_N) P(nu_1 > N x)``, whose standard error comes from the
    delta method for a ratio of means.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    if np.any((x_grid <= 0) | (x_grid >= 1)):
        raise ValueError("x_grid must lie in (0, 1)")
    if callable(config) and not isinstance(config, ModelConfig):
        Ns = list(N_sweep)
        configs = [config(N) for N in Ns]
    else:
        configs = [config]
        Ns = [config.N]
    mass = total_mass(target)
    if not mass > 0:
        raise ValueError("target measure has zero mass")
    rhs = np.array([tail_mass(target, x) / mass for x in x_grid])
    R2 = cond2_replicates or replicates
    shape = (len(Ns), x_grid.size)
    lhs, lhs_se, z = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    cN, cN_se, c2, c2_se = (np.zeros(len(Ns)) for _ in range(4))
    naive, feasible = np.zeros(len(Ns)), np.zeros(len(Ns), bool)
    for i, (N, cfg) in enumerate(zip(Ns, configs)):
        q, _ = trivial_split(cfg)
        work = replicates * (1 + (N - 1) * (1 - q))
        if work > max_work:
            lhs[i] = lhs_se[i] = z[i] = math.nan
            cN[i] = cN_se[i] = c2[i] = c2_se[i] = naive[i] = math.nan
            continue
        X, S, w = _conditioned_day(cfg, replicates, 1, stream)
        X1 = X[:, 0]
        c = X1 * (X1 - 1) / (S * (S - 1))
        cN[i] = N * w * c.mean()
        cN_se[i] = N * w * c.std(ddof=1) / math.sqrt(replicates)
        worst = 0.0
        for j, x in enumerate(x_grid):
            a = stats.hypergeom.sf(math.floor(N * x), S, X1, N)
            lhs[i, j], lhs_se[i, j] = _ratio_se(a, c)
            z[i, j] = (lhs[i, j] - rhs[j]) / lhs_se[i, j] if lhs_se[i, j] > 0 else math.nan
            p = w * a.mean()
            rel = lhs_se[i, j] / lhs[i, j] if lhs[i, j] > 0 else math.nan
            if p > 0 and rel > 0:
                worst = max(worst, (1 - p) / (p * rel**2))
        naive[i] = worst
        X2, S2, _ = _conditioned_day(cfg, R2, 2, stream)
        d = X2[:, 0] * (X2[:, 0] - 1) * X2[:, 1] * (X2[:, 1] - 1) / (S2 * (S2 - 1) * (S2 - 2) * (S2 - 3))
        f4 = N * (N - 1) * (N - 2) * (N - 3)
        scale = f4 * w * w / (N**2 * cN[i]) if cN[i] > 0 else math.nan
        c2[i] = scale * d.mean()
        c2_se[i] = scale * d.std(ddof=1) / math.sqrt(R2)
        feasible[i] = bool(np.all(np.isfinite(lhs_se[i])) and np.all(lhs_se[i] > 0) or np.all(rhs == 0))
    return LimitCheckReport(x_grid, Ns, lhs, lhs_se, rhs, z, cN, cN_se, c2, c2_se,
                            replicates, naive, feasible)


# ---------------------------------------------------------------------------
# Polya urn
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolyaResult:
    estimate: float
    stderr: float
    bound: float
    exact: float

    @property
    def margin(self) -> float:
        """Bound minus estimate; negative means the estimate exceeds it."""
        return self.bound - self.estimate


def polya_same_color_exact(M: int, final_total: int) -> float:
    """Exact probability that two balls drawn from the final urn share a color."""
    if M < 1 or final_total < M:
        raise ValueError("need 1 <= M <= final_total")
    T = final_total
    if T < 2:
        return 0.0
    n = T - M
    mean = n / M
    var = n * (1 / M) * (1 - 1 / M) * (n + M) / (1 + M)
    return M * (var + mean**2 + mean) / (T * (T - 1))


def polya_same_color_prob(M: int, final_total: int, replicates: int,
                          stream: np.random.Generator, chunk_entries: int = 2**22) -> PolyaResult:
    """Grow a Polya urn from ``M`` distinct colors to ``final_total`` balls and draw two.

    The final composition is sampled directly (one plus a
    Dirichlet-multinomial count per color) and each replicate contributes
    the exact conditional same-color probability
    ``sum_i c_i (c_i - 1) / (T (T - 1))``.
    """
    if M < 1 or final_total < M:
        raise ValueError("need 1 <= M <= final_total")
    T = final_total
    bound = 2.0 / (M + 1)
    exact = polya_same_color_exact(M, T)
    if M == 1 or T == M:
        return PolyaResult(exact, 0.0, bound, exact)
    vals = []
    step = max(1, chunk_entries // M)
    for lo in range(0, replicates, step):
        m = min(step, replicates - lo)
        e = stream.standard_exponential((m, M))
        p = e / e.sum(axis=1, keepdims=True)
        counts = 1 + stream.multinomial(T - M, p)
        counts = counts.astype(float)
        vals.append((counts * (counts - 1)).sum(axis=1) / (T * (T - 1)))
    vals = np.concatenate(vals)
    return PolyaResult(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)), bound, exact)


def simulate_polya_urn(M: int, final_total: int, stream: np.random.Generator) -> np.ndarray:
    """Ball-by-ball urn: draw a ball, return it with a copy. Returns final color counts."""
    counts = np.ones(M, dtype=np.int64)
    for total in range(M, final_total):
        i = int(np.searchsorted(np.cumsum(counts), stream.integers(total), side="right"))
        counts[i] += 1
    return counts


# ---------------------------------------------------------------------------
# Coupling condition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingReport:
    N_values: tuple
    values: tuple
    log_values: tuple
    logN_over_T: tuple
    holds: bool
    log_ratio_to_zero: bool


def coupling_condition_holds(gamma: float, c: float, T_rule: Callable[[int], float], r: float,
                             N_sweep: Sequence[int]) -> CouplingReport:
    """Evaluate ``N^(r+2) P(zeta > T_N)`` and ``log N / T_N`` along ``N_sweep``.

    ``P(zeta > T) = min(1, c exp(-gamma T))``. The sequence is judged to
    go to zero when it is nonincreasing over the second half of the sweep
    and its last value is at most half its first; ``log N / T_N`` is judged
    the same way.
    """
    Ns = tuple(int(N) for N in N_sweep)
    if len(Ns) < 2:
        raise ValueError("need at least two N values")
    logs = []
    ratio = []
    for N in Ns:
        T = float(T_rule(N))
        logs.append((r + 2) * math.log(N) + min(0.0, math.log(c) - gamma * T))
        ratio.append(math.log(N) / T)
    vals = tuple(math.exp(v) if v < 700 else math.inf for v in logs)

    def to_zero(seq, logspace):
        tail = seq[len(seq) // 2:]
        mono = all(b <= a for a, b in zip(tail, tail[1:]))
        drop = (seq[-1] - seq[0] <= math.log(0.5)) if logspace else seq[-1] <= 0.5 * seq[0]
        return mono and drop

    return CouplingReport(Ns, vals, tuple(logs), tuple(ratio), to_zero(logs, True), to_zero(ratio, False))


# ---------------------------------------------------------------------------
# Merger statistics
# ---------------------------------------------------------------------------


def merger_events(traj):
    """``(blocks before, sizes)`` for every merger day of a trajectory."""
    out = []
    for (_, p), (day, sizes) in zip(traj.events[:-1], traj.merger_log):
        out.append((len(p), sizes))
    return out


def merger_size_histogram(trajectories, n: int) -> np.ndarray:
    """Counts of merging-group sizes ``k = 2..n`` over all events (index ``k - 2``)."""
    h = np.zeros(max(n - 1, 1), dtype=np.int64)
    for t in trajectories:
        for _, sizes in t.merger_log:
            for k in sizes:
                h[k - 2] += 1
    return h


def total_variation(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    df: int
    p_value: float
    events: int


def chi_square_merger_sizes(trajectories, measure: LambdaMeasure, min_expected: float = 5.0) -> ChiSquareResult:
    """Goodness of fit of merger sizes to the Lambda-coalescent jump law given the block count.

    Each event is classified by the number of blocks ``b`` before it and
    the size ``k`` of its largest merging group. Within each ``b``, cells
    are pooled from the largest ``k`` downward until every pooled cell has
    expected count at least ``min_expected``.
    """
    counts: dict[int, np.ndarray] = {}
    for t in trajectories:
        for b, sizes in merger_events(t):
            c = counts.setdefault(b, np.zeros(b - 1))
            c[max(sizes) - 2] += 1
    stat, df, events = 0.0, 0, 0
    for b, obs in sorted(counts.items()):
        n_b = obs.sum()
        events += int(n_b)
        exp = n_b * first_merger_size_law(measure, b)
        o_cells, e_cells = [], []
        o_acc = e_acc = 0.0
        for o, e in zip(obs[::-1], exp[::-1]):
            o_acc += o
            e_acc += e
            if e_acc >= min_expected:
                o_cells.append(o_acc)
                e_cells.append(e_acc)
                o_acc = e_acc = 0.0
        if o_acc or e_acc:
            if e_cells:
                o_cells[-1] += o_acc
                e_cells[-1] += e_acc
            else:
                o_cells.append(o_acc)
                e_cells.append(e_acc)
        o_cells, e_cells = np.array(o_cells), np.array(e_cells)
        if len(e_cells) < 2:
            continue
        stat += float(((o_cells - e_cells) ** 2 / e_cells).sum())
        df += len(e_cells) - 1
    p = float(stats.chi2.sf(stat, df)) if df > 0 else math.nan
    return ChiSquareResult(stat, df, p, events)
