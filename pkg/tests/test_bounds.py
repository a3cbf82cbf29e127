import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from closedqn.bounds import (
    AE,
    METHODS,
    BoundInterval,
    BoundModelView,
    _geometric_sum,
    aba,
    ae_bound,
    all_bounds,
    bjb,
    geometric_bounds,
    kriz,
    pbh,
    pbh_error_measure,
    pbh_interval,
    proportional_bounds,
)
from closedqn.errors import UnsupportedStationError
from closedqn.exact import solve_convolution
from closedqn.model import ClosedModel, RoutingSpec, Station, multiserver

FIVE_STATION = np.array([0.25, 0.23, 0.19, 0.18, 0.15])
FIVE_STATION_EXACT = (1.0, 1.6578249336870028, 2.1203152351961077, 2.460907064915522,
                2.7204111255706036, 2.9233240223259616)


def view(L, N, Z=0.0):
    return BoundModelView(np.asarray(L, dtype=float), Z, N)


def exact(L, N, Z=0.0):
    m = ClosedModel(tuple(Station.fixed(f"s{i}", x) for i, x in enumerate(L)), N, Z)
    return solve_convolution(m).system_throughput


@st.composite
def bound_cases(draw):
    M = draw(st.integers(1, 6))
    L = draw(st.lists(st.floats(0.05, 1.0), min_size=M, max_size=M))
    N = draw(st.integers(1, 15))
    Z = draw(st.sampled_from([0.0, 0.0, 0.3, 1.0, 4.0]))
    return L, N, Z


class TestInterval:
    def test_rejects_inverted(self):
        with pytest.raises(ValueError):
            BoundInterval(2.0, 1.0, "X")

    def test_rounding_tie_collapses(self):
        iv = BoundInterval(1.0 + 1e-15, 1.0, "X")
        assert iv.lower == iv.upper

    def test_label(self):
        assert BoundInterval(0, 1, "PBH", 2).label == "PBH(2)"


class TestView:
    def test_from_model_folds_delay(self):
        m = ClosedModel((Station.fixed("a", 0.5), Station.delay("d", 2.0)), 3, 1.0)
        v = BoundModelView.from_model(m)
        assert v.think_time == 3.0 and v.loadings.tolist() == [0.5]

    def test_rejects_load_dependent(self):
        m = ClosedModel((multiserver("m", 1.0, 2),), 3)
        with pytest.raises(UnsupportedStationError):
            BoundModelView.from_model(m)

    def test_from_routing(self):
        P = [[0.2, 0.5, 0.3], [1, 0, 0], [1, 0, 0]]
        v = BoundModelView.from_routing(RoutingSpec(P, [0.05, 0.1, 0.2]), 4)
        np.testing.assert_allclose(v.loadings, [0.05, 0.05, 0.06])

    def test_stats(self):
        v = view([0.3, 0.5, 0.5, 0.2], 3)
        assert v.l_max == 0.5 and v.m_max == 2 and v.l_avg == pytest.approx(0.375)
        assert list(v.bottleneck_set()) == [1, 2]

    @given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=8), st.floats(0.01, 100))
    def test_bottleneck_scale_invariant(self, L, c):
        a = view(L, 3)
        b = view(np.asarray(L) * c, 3)
        assert a.bottleneck == b.bottleneck


class TestAba:
    def test_five_station_saturation(self):
        assert view(FIVE_STATION, 6).x_max == pytest.approx(4.0)

    def test_single_job(self):
        iv = aba(view(FIVE_STATION, 1))
        assert iv.lower == pytest.approx(1.0) and iv.upper == pytest.approx(1.0)

    def test_balanced_clamp_kicks_in_at_M(self):
        for N in range(1, 8):
            iv = aba(view([0.5] * 4, N))
            assert (iv.upper < N / 2.0) == (N > 4)


class TestBjb:
    def test_five_station_k3(self):
        iv = bjb(view(FIVE_STATION, 3))
        assert iv.lower == pytest.approx(2.0)
        assert iv.upper == pytest.approx(15 / 7)
        assert iv.contains(FIVE_STATION_EXACT[2])
        assert pbh_error_measure(iv) == pytest.approx((15 / 7 - 2) / (15 / 7 + 2) * 100)

    @given(st.floats(0.05, 1.0), st.integers(1, 8), st.integers(1, 12))
    def test_balanced_exact(self, x, M, N):
        iv = bjb(view([x] * M, N))
        assert iv.lower == pytest.approx(iv.upper, rel=1e-12)
        assert iv.upper == pytest.approx(exact([x] * M, N), rel=1e-12)

    def test_single_job(self):
        iv = bjb(view(FIVE_STATION, 1))
        assert iv.lower == pytest.approx(1.0) and iv.upper == pytest.approx(1.0)

    def test_refinement_tightens(self):
        v = view(FIVE_STATION, 6, 1.0)
        a, b = bjb(v), bjb(v, refine=3)
        assert b.within(a)
        assert b.contains(exact(FIVE_STATION, 6, 1.0))


class TestPbh:
    S = float(np.sum((FIVE_STATION / FIVE_STATION.sum()) ** 2))

    def test_level2_optimistic_n2(self):
        x = pbh(view(FIVE_STATION / FIVE_STATION.sum(), 2), 2, "optimistic")
        assert x == pytest.approx(2 / (1 + self.S), rel=1e-12)
        assert round(x, 4) == 1.6578
        assert round(self.S, 4) == 0.2064

    @given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=6), st.integers(1, 12))
    def test_level2_optimistic_closed_form(self, L, N):
        L = np.asarray(L) / np.sum(L)
        S = float(np.sum(L**2))
        x = pbh(view(L, N), 2, "optimistic")
        assert x == pytest.approx(min(N / (1 + S * (N - 1)), 1 / L.max()), rel=1e-12)

    @given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=6), st.integers(2, 12))
    def test_level2_pessimistic_closed_form(self, L, N):
        L = np.asarray(L) / np.sum(L)
        S = float(np.sum(L**2))
        Lb = float(L.max())
        R = 1 + (N - 1) * (Lb**2 * (N - 2) + S) / (1 + Lb * (N - 2))
        assert pbh(view(L, N), 2, "pessimistic") == pytest.approx(N / R, rel=1e-12)

    def test_level1_pessimistic_is_bjb(self):
        for N in range(1, 8):
            assert pbh(view(FIVE_STATION, N), 1, "pessimistic") == pytest.approx(bjb(view(FIVE_STATION, N)).lower)

    def test_level0_is_aba(self):
        for Z in (0.0, 2.0):
            v = view(FIVE_STATION, 5, Z)
            a, p = aba(v), pbh_interval(v, 0)
            assert p.lower == pytest.approx(a.lower) and p.upper == pytest.approx(a.upper)

    @given(st.floats(0.05, 1.0), st.integers(1, 6), st.integers(1, 10), st.integers(1, 4))
    def test_balanced_exact_beyond_level0(self, x, M, N, level):
        iv = pbh_interval(view([x] * M, N), level)
        e = exact([x] * M, N)
        assert iv.lower == pytest.approx(e, rel=1e-12) and iv.upper == pytest.approx(e, rel=1e-12)

    def test_depth_guard(self):
        with pytest.raises(ValueError):
            pbh(view(FIVE_STATION, 3), 5, "optimistic")
        with pytest.raises(ValueError):
            pbh(view(FIVE_STATION, 3), 1, "sideways")


class TestKriz:
    def test_balanced_hand_value(self):
        iv = kriz(view([0.2] * 5, 2), 1)
        assert iv.upper == pytest.approx(2 / 1.2) and iv.lower == pytest.approx(2 / 1.2)

    def test_zero_think_time_flat_in_iterations(self):
        v = view(FIVE_STATION, 5)
        first = kriz(v, 1)
        for i in range(2, 6):
            assert kriz(v, i) == BoundInterval(first.lower, first.upper, "KRIZ", i, 5)

    def test_five_station_n4(self):
        assert kriz(view(FIVE_STATION, 4), 3).contains(2.4610)

    def test_needs_one_iteration(self):
        with pytest.raises(ValueError):
            kriz(view(FIVE_STATION, 3), 0)


class TestAe:
    def test_unique_bottleneck_is_aba(self):
        for N in range(1, 8):
            v = view(FIVE_STATION, N, 1.0)
            assert ae_bound(v).upper == aba(v).upper

    def test_two_bottleneck_cap(self):
        iv = ae_bound(view([1.0, 1.0], 2))
        assert iv.upper == pytest.approx(0.5)

    def test_below_aba_with_think_time(self):
        L = [1.0, 1.0, 0.3]
        for N in range(2, 25):
            v = view(L, N, 1.6)
            iv = ae_bound(v)
            assert iv.upper < aba(v).upper
            assert iv.upper >= exact(L, N, 1.6)

    def test_undercuts_exact_without_think_time(self):
        # two bare bottlenecks: the cap is asymptotic, not a bound at N = 2
        assert ae_bound(view([1.0, 1.0], 2)).upper < exact([1.0, 1.0], 2)


class TestGeometric:
    def test_geometric_sum(self):
        assert _geometric_sum(np.array([0.5]), 2)[0] == pytest.approx(0.75)
        assert _geometric_sum(np.array([1.0]), 4)[0] == 4.0

    def test_balanced_queue_lengths(self):
        g = geometric_bounds(view([0.3] * 4, 6))
        np.testing.assert_allclose(g.q_lower, 1.5)
        np.testing.assert_allclose(g.q_upper, 1.5)

    @settings(max_examples=80, deadline=None)
    @given(bound_cases())
    def test_queue_bounds_contain_exact(self, case):
        L, N, Z = case
        m = ClosedModel(tuple(Station.fixed(f"s{i}", x) for i, x in enumerate(L)), N, Z)
        q = solve_convolution(m).queue_length
        g = geometric_bounds(view(L, N, Z))
        assert np.all(g.q_lower <= q * (1 + 1e-9) + 1e-12)
        assert np.all(q <= g.q_upper * (1 + 1e-9) + 1e-12)

    @settings(max_examples=80, deadline=None)
    @given(bound_cases())
    def test_gsb_within_bjb(self, case):
        v = view(*case[:2], case[2])
        assert geometric_bounds(v).gsb.within(bjb(v))


class TestProportional:
    @given(st.floats(0.05, 1.0), st.integers(1, 6), st.integers(1, 10))
    def test_balanced_exact(self, x, M, N):
        iv = proportional_bounds(view([x] * M, N))
        e = exact([x] * M, N)
        assert iv.lower == pytest.approx(e, rel=1e-12) and iv.upper == pytest.approx(e, rel=1e-12)

    def test_five_station_n3(self):
        assert proportional_bounds(view(FIVE_STATION, 3)).contains(2.1203)

    def test_single_job(self):
        iv = proportional_bounds(view(FIVE_STATION, 1))
        assert iv.lower == pytest.approx(1.0) and iv.upper == pytest.approx(1.0)

    def test_large_population_no_overflow(self):
        iv = proportional_bounds(view([5.0, 3.0, 0.5], 2000))
        assert np.isfinite(iv.lower) and iv.lower > 0


class TestErrorMeasure:
    def test_values(self):
        assert pbh_error_measure(BoundInterval(2, 2, "X")) == 0
        assert pbh_error_measure(BoundInterval(1, 3, "X")) == pytest.approx(50.0)

    def test_undefined(self):
        with pytest.raises(ValueError):
            pbh_error_measure(BoundInterval(0, 0, "X"))


@settings(max_examples=150, deadline=None)
@given(bound_cases())
def test_sandwich_all_methods(case):
    L, N, Z = case
    v = view(L, N, Z)
    x = exact(L, N, Z)
    for iv in all_bounds(v, pbh_levels=4):
        if iv.method == AE and len(v.bottleneck_set()) > 1:
            continue  # asymptotic with tied bottlenecks; covered separately
        assert iv.contains(x), (iv, x)


@settings(max_examples=100, deadline=None)
@given(bound_cases())
def test_hierarchies_nest(case):
    v = view(*case[:2], case[2])
    levels = [pbh_interval(v, i) for i in range(5)]
    for a, b in zip(levels, levels[1:]):
        assert b.within(a)
    kz = [kriz(v, i) for i in range(1, 6)]
    for a, b in zip(kz, kz[1:]):
        assert b.within(a)


@settings(max_examples=100, deadline=None)
@given(bound_cases())
def test_dominance(case):
    v = view(*case[:2], case[2])
    assert bjb(v).within(aba(v))
    assert ae_bound(v).upper <= aba(v).upper


@settings(max_examples=60, deadline=None)
@given(bound_cases(), st.floats(0.1, 10.0))
def test_time_scale_invariance(case, c):
    L, N, Z = case
    a = all_bounds(view(L, N, Z))
    b = all_bounds(view(np.asarray(L) * c, N, Z * c))
    for p, q in zip(a, b):
        assert q.lower * c == pytest.approx(p.lower, rel=1e-9)
        assert q.upper * c == pytest.approx(p.upper, rel=1e-9)


def test_all_methods_listed():
    labels = {iv.method for iv in all_bounds(view(FIVE_STATION, 4))}
    assert labels == set(METHODS)
