import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dormcoal.core import (Degenerate, ExponentialTail, InvariantError, LambdaMeasure, Mixture,
                           ModelConfig, OffspringVector, Partition, SeedSpec, TwoPoint,
                           derive_stream, partition_merge, replicate_map)


@st.composite
def partitions(draw, max_n=12):
    n = draw(st.integers(1, max_n))
    labels = draw(st.lists(st.integers(0, n - 1), min_size=n, max_size=n))
    groups = {}
    for i, lab in enumerate(labels, start=1):
        groups.setdefault(lab, []).append(i)
    return Partition(n, tuple(tuple(g) for g in groups.values()))


class TestPartition:
    def test_canonical_order(self):
        p = Partition(4, ((3, 4), (2, 1)))
        assert p.blocks == ((1, 2), (3, 4))

    @given(partitions(), st.randoms())
    def test_canonical_is_order_insensitive(self, p, rnd):
        blocks = [list(b) for b in p.blocks]
        for b in blocks:
            rnd.shuffle(b)
        rnd.shuffle(blocks)
        q = Partition(p.n, tuple(tuple(b) for b in blocks))
        assert q == p
        assert Partition(q.n, q.blocks) == q

    @pytest.mark.parametrize("blocks", [((1, 2), (2, 3)), ((1,), (3,)), ((1, 2, 3, 4),)])
    def test_rejects_invalid(self, blocks):
        with pytest.raises(ValueError):
            Partition(3, blocks)

    def test_merge_examples(self):
        p = Partition.singletons(3)
        assert partition_merge(p, []) == p
        assert partition_merge(p, [{0, 1, 2}]) == Partition(3, ((1, 2, 3),))
        p4 = Partition.singletons(4)
        assert partition_merge(p4, [{0, 1}, {2, 3}]).blocks == ((1, 2), (3, 4))

    def test_merge_errors(self):
        p = Partition.singletons(3)
        with pytest.raises(ValueError):
            partition_merge(p, [{0, 1}, {1, 2}])
        with pytest.raises(ValueError):
            partition_merge(p, [{0, 5}])

    @given(partitions(), st.data())
    def test_merge_block_count(self, p, data):
        idx = list(range(len(p)))
        data.draw(st.randoms()).shuffle(idx)
        cuts = sorted(data.draw(st.lists(st.integers(0, len(idx)), max_size=4)))
        sets = [idx[a:b] for a, b in zip([0] + cuts, cuts + [len(idx)]) if b > a]
        q = partition_merge(p, sets)
        assert len(q) == len(p) - sum(len(s) - 1 for s in sets)
        assert q.is_coarsening_of(p)
        assert max(q.sizes) >= max(p.sizes)


class TestOffspringVector:
    def test_invariants(self):
        v = OffspringVector([1, 3, 2], [1, 2, 0])
        assert v.N == 3 and v.total == 6
        with pytest.raises(InvariantError):
            OffspringVector([1, 0])
        with pytest.raises(InvariantError):
            OffspringVector([1, 3], [2, 0])
        with pytest.raises(InvariantError):
            OffspringVector([1, 3], [1, 0])

    def test_immutable(self):
        v = OffspringVector([1, 2])
        with pytest.raises(ValueError):
            v.x[0] = 5


class TestWakeLaws:
    def test_two_point_degenerate(self):
        rng = derive_stream(1)
        assert np.all(TwoPoint(0.0, 5.0).sample_sigma(100, rng) == 0)
        assert np.all(TwoPoint(1.0, 5.0).sample_sigma(100, rng) == 5.0)

    def test_exponential_tail_survival(self):
        law = ExponentialTail(1.0, 1.0, 20.0)
        x = law.sample_sigma(10**6, derive_stream(2))
        p = np.mean(x > 5)
        se = math.sqrt(math.exp(-5) * (1 - math.exp(-5)) / 1e6)
        assert abs(p - math.exp(-5)) < 3 * se

    def test_exponential_tail_floor_and_atom(self):
        rng = derive_stream(3)
        above = ExponentialTail(1.0, 4.0, 50.0).sample_sigma(10**5, rng)
        assert above.min() >= math.log(4.0) - 1e-12
        law = ExponentialTail(2.0, 0.3, 50.0)
        assert np.mean(law.sample_sigma(10**5, rng) == 0) == pytest.approx(0.7, abs=0.005)
        q, cond = law.split_zero()
        assert q == pytest.approx(0.7)
        assert cond(10**5, rng).mean() == pytest.approx(0.5, rel=0.02)

    def test_survival_is_valid(self):
        law = ExponentialTail(0.7, 3.0, 10.0)
        y = np.linspace(0, 30, 301)
        s = law.survival(y)
        assert np.all(np.diff(s) <= 0) and s[0] == 1 and np.all(s > 0)

    def test_mixture_validation(self):
        with pytest.raises(ValueError):
            Mixture(((0.0, 0.5), (1.0, 0.4)), 2.0)
        with pytest.raises(ValueError):
            Mixture(((3.0, 1.0),), 2.0)
        m = Mixture(((0.0, 0.25), (1.0, 0.75)), 2.0)
        x = m.sample_sigma(10**5, derive_stream(4))
        assert np.mean(x == 1.0) == pytest.approx(0.75, abs=0.01)
        q, cond = m.split_zero()
        assert q == 0.25 and np.all(cond(10, derive_stream(5)) == 1.0)

    def test_degenerate(self):
        d = Degenerate(3.0)
        assert d.horizon == 3.0 and np.all(d.sample_sigma(5, derive_stream(0)) == 0)


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(10, 1.0, 2.0, 1.0, Degenerate(2.0))
    with pytest.raises(ValueError):
        ModelConfig(10, 1.0, 2.0, 3.0, TwoPoint(0.1, 5.0))
    cfg = ModelConfig(10, 1.0, 2.0, 3.5, TwoPoint(0.1, 1.0))
    assert cfg.summer == 1.5
    assert cfg.spring_rate(np.array([0.0, 1.0])).tolist() == [1.0, 2.0]


def test_lambda_measure_constructors():
    assert LambdaMeasure.kingman().a0 == 1.0
    assert LambdaMeasure.star().a1 == 1.0
    with pytest.raises(ValueError):
        LambdaMeasure.beta(2.0)
    with pytest.raises(ValueError):
        LambdaMeasure(a0=-1.0)


class TestStreams:
    def test_determinism(self):
        a = derive_stream(SeedSpec(42, 0)).random(100)
        b = derive_stream(SeedSpec(42, 0)).random(100)
        assert np.array_equal(a, b)

    def test_distinct(self):
        a = derive_stream(42, 0).random(100)
        assert not np.array_equal(a, derive_stream(42, 1).random(100))
        assert not np.array_equal(a, derive_stream(43, 0).random(100))

    def test_bad_seed(self):
        with pytest.raises(ValueError):
            SeedSpec(-1)
        with pytest.raises(ValueError):
            SeedSpec(1, -2)


def _draw(i):
    return float(derive_stream(7, i).random())


def test_replicate_map_independent_of_workers():
    assert replicate_map(_draw, list(range(6)), 1) == replicate_map(_draw, list(range(6)), 2)
