import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dormcoal.core import Degenerate, ModelConfig, Partition, TwoPoint, derive_stream
from dormcoal.genealogy import (ancestral_step, estimate_cN, exact_cN_small, exact_factorial_moment,
                                run_ancestral_process)

TEST_PMFS = [
    {1: F(1, 2), 2: F(1, 2)},
    {1: F(1, 3), 2: F(1, 3), 3: F(1, 3)},
    {1: F(7, 10), 4: F(1, 5), 6: F(1, 10)},
]


def two_point(N, omega, t, summer=0.0):
    return ModelConfig(N, 1.0, t, t + summer, TwoPoint(omega, t))


class TestAncestralStep:
    def test_distinct_parents_identity(self):
        p = Partition.singletons(3)
        q, reps = ancestral_step(p, [4, 5, 6])
        assert q == p and reps == [4, 5, 6]

    def test_single_parent_star(self):
        q, reps = ancestral_step(Partition.singletons(4), [2, 2, 2, 2])
        assert q.blocks == ((1, 2, 3, 4),) and reps == [2]

    def test_pair(self):
        q, reps = ancestral_step(Partition.singletons(3), [7, 7, 9])
        assert q.blocks == ((1, 2), (3,)) and reps == [7, 9]

    def test_missing_label(self):
        with pytest.raises(ValueError):
            ancestral_step(Partition.singletons(3), [1, None, 2])
        with pytest.raises(ValueError):
            ancestral_step(Partition.singletons(3), [1, 2])


class TestTrajectories:
    def test_single_lineage(self):
        t = run_ancestral_process(1, two_point(10, 0.2, 2.0), 100, derive_stream(0))
        assert t.absorbed and t.merger_log == [] and len(t.events) == 1

    @pytest.mark.parametrize("engine", ["full", "urn", "sparse"])
    @given(seed=st.integers(0, 2**32), n=st.integers(2, 6))
    @settings(max_examples=15, deadline=None)
    def test_coarsening_and_absorption(self, engine, seed, n):
        t = run_ancestral_process(n, two_point(8, 0.3, 1.5), 10**6, derive_stream(seed), engine=engine)
        counts = t.block_counts()
        assert all(b <= a for a, b in zip(counts, counts[1:]))
        assert all(q.is_coarsening_of(p) for (_, p), (_, q) in zip(t.events, t.events[1:]))
        assert t.absorbed and len(t.final) == 1
        days = [d for d, _ in t.events]
        assert days == sorted(days)

    def test_horizon_not_absorbed(self):
        t = run_ancestral_process(5, two_point(1000, 1e-6, 3.0), 10, derive_stream(1))
        assert not t.absorbed and t.days == 10

    def test_never_merges(self):
        cfg = ModelConfig(5, 1.0, 2.0, 2.0, Degenerate(2.0))
        for engine in ("full", "sparse"):
            t = run_ancestral_process(3, cfg, 50, derive_stream(2), engine=engine)
            assert not t.absorbed and t.merger_log == []

    def test_bad_n(self):
        with pytest.raises(ValueError):
            run_ancestral_process(0, two_point(5, 0.1, 1.0), 10, derive_stream(0))
        with pytest.raises(ValueError):
            run_ancestral_process(6, two_point(5, 0.1, 1.0), 10, derive_stream(0))

    @pytest.mark.parametrize("summer", [0.0, 0.7])
    def test_engines_agree_in_law(self, summer):
        cfg = two_point(12, 0.1, 2.0, summer)
        stats = {}
        engines = ["full", "urn"] + (["sparse"] if summer == 0 else [])
        for engine in engines:
            trs = [run_ancestral_process(4, cfg, 10**6, derive_stream(3, i), engine=engine) for i in range(1500)]
            days = np.array([t.events[-1][0] for t in trs], dtype=float)
            first = np.array([t.merger_log[0][1][0] for t in trs])
            stats[engine] = (days.mean(), days.std() / math.sqrt(days.size), np.mean(first == 2))
        ref = stats["full"]
        for engine in engines[1:]:
            m, se, frac = stats[engine]
            assert abs(m - ref[0]) < 4 * math.hypot(se, ref[1])
            assert abs(frac - ref[2]) < 4 * math.sqrt(0.5 / 1500)


class TestCn:
    def test_degenerate_zero(self):
        cfg = ModelConfig(10, 3.0, 2.0, 2.0, Degenerate(2.0))
        est = estimate_cN(cfg, 100, derive_stream(0))
        assert est.point == 0.0 and est.stderr == 0.0

    def test_injected_two_point_pmf(self):
        sampler = lambda N, R, rng: rng.integers(1, 3, size=(R, N))
        est = estimate_cN(two_point(2, 0.1, 1.0), 200_000, derive_stream(1), offspring_sampler=sampler)
        assert abs(est.point - 0.25) < 3 * est.stderr
        pair = estimate_cN(two_point(2, 0.1, 1.0), 200_000, derive_stream(2), method="pair-indicator",
                           offspring_sampler=sampler)
        assert abs(pair.point - 0.25) < 3 * pair.stderr

    def test_methods_agree(self):
        cfg = two_point(20, 0.05, 2.5)
        a = estimate_cN(cfg, 100_000, derive_stream(3))
        b = estimate_cN(cfg, 100_000, derive_stream(4), method="pair-indicator")
        assert abs(a.point - b.point) < 3 * math.hypot(a.stderr, b.stderr)

    def test_methods_agree_with_summer(self):
        cfg = two_point(20, 0.05, 2.5, summer=0.5)
        a = estimate_cN(cfg, 30_000, derive_stream(5))
        b = estimate_cN(cfg, 30_000, derive_stream(6), method="pair-indicator")
        assert abs(a.point - b.point) < 3 * math.hypot(a.stderr, b.stderr)

    @staticmethod
    def _two_point_pmf(omega, p, kmax=60):
        # geometric family sizes lumped at kmax; the lumped mass is below 3e-4
        pmf = {1: 1 - omega + omega * p}
        for k in range(2, kmax):
            pmf[k] = omega * p * (1 - p) ** (k - 1)
        pmf[kmax] = 1 - sum(pmf.values())
        return pmf

    def test_matches_exact_small(self):
        # N = 3, omega = 0.1, lam t = log 10
        N, omega, t = 3, 0.1, math.log(10)
        exact = float(exact_cN_small(self._two_point_pmf(omega, 0.1), N))
        est = estimate_cN(two_point(N, omega, t), 10**6, derive_stream(7))
        assert abs(est.point - exact) < 3 * est.stderr

    def test_step_generation_matches_exact(self):
        from dormcoal.forward import step_generation
        N, omega, t = 3, 0.1, math.log(10)
        cfg = two_point(N, omega, t)
        rng = derive_stream(8)
        vals = np.empty(10**5)
        for i in range(vals.size):
            nu = step_generation(cfg, rng).x_total.nu
            vals[i] = float(np.sum(nu * (nu - 1))) / (N * (N - 1))
        exact = float(exact_cN_small(self._two_point_pmf(omega, 0.1), N))
        se = vals.std() / math.sqrt(vals.size)
        assert abs(vals.mean() - exact) < 3 * se

    def test_kappa_regime_ratio(self):
        N, omega = 10**4, 1e-8
        est = estimate_cN(two_point(N, omega, math.log(N)), 10**5, derive_stream(10))
        assert est.point / (N * omega) == pytest.approx(0.21095791, rel=0.05)


class TestExact:
    def test_delta_one(self):
        assert exact_cN_small({1: F(1)}, 4) == 0

    def test_two_point_quarter(self):
        assert exact_cN_small({1: F(1, 2), 2: F(1, 2)}, 2) == F(1, 4)

    @pytest.mark.parametrize("pmf", TEST_PMFS)
    @pytest.mark.parametrize("N,ks", [(N, ks) for N in (2, 3, 4) for ks in [(2,), (2, 2), (3,)] if sum(ks) <= N])
    def test_identity(self, pmf, N, ks):
        assert exact_factorial_moment(pmf, N, ks) == exact_factorial_moment(pmf, N, ks, side="family")

    @pytest.mark.parametrize("pmf", TEST_PMFS)
    @pytest.mark.parametrize("N", [2, 3, 4, 5])
    def test_lower_bound(self, pmf, N):
        p2 = sum(v for k, v in pmf.items() if k >= 2)
        assert exact_cN_small(pmf, N) >= p2**2 / (2 * N)

    def test_float_pmf(self):
        v = exact_cN_small([0.5, 0.5], 2)
        assert v == pytest.approx(0.25, abs=1e-15)

    def test_refuses_large(self):
        with pytest.raises(ValueError, match="outcomes"):
            exact_cN_small({k: F(1, 20) for k in range(1, 21)}, 6)

    def test_rejects_bad_pmf(self):
        with pytest.raises(ValueError):
            exact_cN_small({1: F(1, 2)}, 2)
        with pytest.raises(ValueError):
            exact_cN_small({0: F(1, 2), 1: F(1, 2)}, 2)
