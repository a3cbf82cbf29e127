import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from closedqn.aggregate import (
    BALANCED_EXACT,
    ThroughputCharacteristic,
    aggregate_balanced,
    aggregate_delay,
    balanced_residence,
    fesc_to_station,
    is_balanced,
    replace_subnetwork,
)
from closedqn.errors import ModelError
from closedqn.exact import solve_convolution
from closedqn.model import ClosedModel, Station


class TestBalanced:
    def test_single_station_saturates(self):
        tc = aggregate_balanced(1, 0.5, 5)
        assert tc.T == pytest.approx((2.0,) * 5)

    def test_three_stations(self):
        assert aggregate_balanced(3, 1.0, 3).at(3) == pytest.approx(0.6)

    def test_one_job(self):
        assert aggregate_balanced(4, 0.5, 1).at(1) == pytest.approx(0.5)

    def test_held_beyond_kmax(self):
        tc = aggregate_balanced(2, 1.0, 3)
        assert tc.at(10) == tc.at(3)

    def test_matches_convolution(self):
        tc = aggregate_balanced(3, 0.7, 6)
        m = ClosedModel(tuple(Station.fixed(f"s{i}", 0.7) for i in range(3)), 6)
        np.testing.assert_allclose(tc.T, solve_convolution(m).throughput[1:], rtol=1e-13)


class TestResidence:
    def test_one_job(self):
        assert balanced_residence(3, 0.4, 1) == pytest.approx(0.4)

    def test_two_stations_three_jobs(self):
        R = balanced_residence(2, 1.0, 3)
        assert R == 2.0 and 3 / (2 * R) == pytest.approx(aggregate_balanced(2, 1.0, 3).at(3))

    def test_many_stations_limit(self):
        assert balanced_residence(10**9, 0.3, 5) == pytest.approx(0.3)


class TestDelay:
    def test_sum(self):
        assert aggregate_delay([Station.delay("a", 0.5), Station.delay("b", 1.5)]) == 2.0

    def test_rejects_queue(self):
        with pytest.raises(ModelError):
            aggregate_delay([Station.fixed("a", 1.0)])

    def test_equivalent_model(self):
        base = [Station.fixed("q", 0.3)]
        split = ClosedModel(tuple(base + [Station.delay("a", 0.5), Station.delay("b", 1.5)]), 5)
        merged = ClosedModel(tuple(base + [Station.delay("ab", 2.0)]), 5)
        np.testing.assert_allclose(
            solve_convolution(split).throughput, solve_convolution(merged).throughput, rtol=1e-12
        )


class TestFesc:
    def test_balanced_rates(self):
        s = fesc_to_station(aggregate_balanced(2, 1.0, 3))
        assert s.demand == pytest.approx(2.0)
        assert s.rates[1] == pytest.approx(4 / 3)

    def test_constant_characteristic_is_single_server(self):
        s = fesc_to_station(ThroughputCharacteristic((0.5, 0.5, 0.5)))
        assert s.rates == (1.0, 1.0, 1.0)

    def test_rejects_decreasing(self):
        with pytest.raises(ModelError, match="decreases"):
            ThroughputCharacteristic((1.0, 0.9))

    def test_rejects_nonpositive(self):
        with pytest.raises(ModelError):
            ThroughputCharacteristic((0.0, 1.0))

    def test_source_tag(self):
        assert aggregate_balanced(2, 1, 2).source == BALANCED_EXACT
        assert aggregate_balanced(2, 1, 2).is_exact

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(1, 4),
        st.floats(0.05, 2.0),
        st.lists(st.floats(0.05, 2.0), min_size=0, max_size=3),
        st.integers(1, 8),
        st.sampled_from([0.0, 1.0]),
    )
    def test_balanced_subnetwork_replacement(self, M, x, others, K, Z):
        sub = [Station.fixed(f"b{i}", x) for i in range(M)]
        rest = [Station.fixed(f"o{i}", y) for i, y in enumerate(others)]
        model = ClosedModel(tuple(sub + rest), K, Z)
        reduced = replace_subnetwork(model, [s.id for s in sub], aggregate_balanced(M, x, K))
        a = solve_convolution(model).system_throughput
        b = solve_convolution(reduced).system_throughput
        assert b == pytest.approx(a, rel=1e-10)


def test_is_balanced():
    assert is_balanced([0.2, 0.2, 0.2])
    assert not is_balanced([0.2, 0.21])


def test_replace_unknown_station():
    m = ClosedModel((Station.fixed("a", 1.0),), 1)
    with pytest.raises(ModelError, match="zz"):
        replace_subnetwork(m, ["zz"], aggregate_balanced(1, 1.0, 1))
