import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from closedqn.errors import ModelError, RoutingError, UnstableStationError
from closedqn.model import (
    ClosedModel,
    MultichainModel,
    RoutingSpec,
    Station,
    StationKind,
    analyze_open,
    erlang_c,
    loadings_from_routing,
    multiserver,
    require_valid,
    validate,
    visit_ratios,
)


def central_server(p=(0.2, 0.5, 0.3)):
    P = np.zeros((3, 3))
    P[0] = p
    P[1, 0] = P[2, 0] = 1.0
    return RoutingSpec(P, [0.05, 0.1, 0.2], ids=("cpu", "d1", "d2"))


class TestVisitRatios:
    def test_central_server_scaled_to_inverse_self_loop(self):
        v = visit_ratios(central_server(), 0, scale=1 / 0.2)
        np.testing.assert_allclose(v, [5.0, 2.5, 1.5], rtol=1e-12)

    def test_two_cycle(self):
        spec = RoutingSpec([[0, 1], [1, 0]], [1, 1])
        np.testing.assert_allclose(visit_ratios(spec), [1, 1])

    def test_unreachable_station_named(self):
        P = [[0, 1, 0], [1, 0, 0], [0, 0, 1]]
        spec = RoutingSpec(P, [1, 1, 1], ids=("a", "b", "lonely"))
        with pytest.raises(RoutingError, match="lonely"):
            visit_ratios(spec)

    def test_row_sum_diagnostic(self):
        with pytest.raises(RoutingError, match="sums to"):
            visit_ratios(RoutingSpec([[0, 0.5], [1, 0]], [1, 1]))

    def test_loadings(self):
        X = loadings_from_routing(central_server())
        np.testing.assert_allclose(X, [0.05, 0.5 * 0.1, 0.3 * 0.2])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**31 - 1))
    def test_solution_is_stationary(self, n, seed):
        rng = np.random.default_rng(seed)
        P = rng.uniform(0.05, 1, size=(n, n))
        P /= P.sum(axis=1, keepdims=True)
        v = visit_ratios(RoutingSpec(P, np.ones(n)), reference_station=n - 1)
        assert v[n - 1] == pytest.approx(1.0)
        np.testing.assert_allclose(v @ P, v, rtol=1e-10)


class TestOpen:
    def test_single_mm1(self):
        r = analyze_open(RoutingSpec([[0.0]], [0.5], external_rates=[1.0]))
        assert r.utilizations[0] == pytest.approx(0.5)
        assert r.residence_times[0] == pytest.approx(1.0)

    def test_unstable_station(self):
        with pytest.raises(UnstableStationError, match="S1"):
            analyze_open(RoutingSpec([[0.0]], [0.5], external_rates=[2.0]))

    def test_tandem(self):
        r = analyze_open(RoutingSpec([[0, 1], [0, 0]], [0.25, 0.5], external_rates=[1, 0]))
        np.testing.assert_allclose(r.arrival_rates, [1, 1])
        np.testing.assert_allclose(r.residence_times, [1 / 3, 1.0])

    def test_delay_station_residence_is_service_time(self):
        r = analyze_open(RoutingSpec([[0.0]], [3.0], external_rates=[5.0], servers=(math.inf,)))
        assert r.residence_times[0] == 3.0
        assert r.utilizations[0] == 15.0

    def test_erlang_c_two_servers(self):
        # M/M/2 with offered load 1: C = a^2/(2!(1-rho)) / (1 + a + a^2/(2!(1-rho))) = 1/3
        assert erlang_c(2, 1.0) == pytest.approx(1 / 3)

    def test_erlang_c_one_server_is_rho(self):
        assert erlang_c(1, 0.7) == pytest.approx(0.7)


class TestValidate:
    def model(self, *stations):
        return ClosedModel(stations, 3)

    def test_well_formed(self):
        st = [Station.fixed(f"s{i}", d) for i, d in enumerate([0.25, 0.23, 0.19, 0.18, 0.15])]
        assert validate(self.model(*st)) == []

    def test_negative_demand(self):
        diags = validate(self.model(Station.fixed("a", -1.0), Station.fixed("b", 1.0)))
        assert len(diags) == 1 and "demand" in diags[0]

    def test_bad_first_rate(self):
        diags = validate(self.model(Station.load_dependent("a", 1.0, [2.0, 3.0])))
        assert len(diags) == 1 and "a(1)" in diags[0]

    def test_all_zero_demands(self):
        assert validate(self.model(Station.fixed("a", 0.0)))

    def test_require_valid_raises(self):
        with pytest.raises(ModelError):
            require_valid(self.model(Station.fixed("a", 1.0), Station.fixed("a", 1.0)))

    def test_multichain_class_count(self):
        m = MultichainModel((Station("a", StationKind.FIXED, (1.0,)),), (1, 1))
        assert any("expected 2 demand" in d for d in validate(m))


def test_multiserver_rates():
    s = multiserver("m", 2.0, 3)
    assert [s.rate(j) for j in range(1, 6)] == [1, 2, 3, 3, 3]
    np.testing.assert_allclose(s.factors(3), [1, 2, 2, 8 / 6])


def test_delay_factors_use_factorial():
    np.testing.assert_allclose(Station.delay("z", 2.0).factors(4), [1, 2, 2, 4 / 3, 2 / 3])


def test_delay_demand_aggregates_think_time():
    m = ClosedModel((Station.fixed("a", 1), Station.delay("b", 0.5), Station.delay("c", 1.5)), 2, 1.0)
    assert m.delay_demand == 3.0
