import math

import pytest

from adaptsim.adaptation import (
    PR1,
    PR2,
    PR3,
    ActivationPolicy,
    Band,
    FactorRates,
    NodeProfile,
    ThresholdScale,
    activation_decision,
    adapt_link,
    apply_activation,
    bandwidth_percent,
    bandwidth_scale,
    energy_scale,
    factor_rates,
    global_rate,
    lookup_rate,
    memory_scale,
    negotiate,
    negotiate_link,
    priority_percent,
    priority_scale,
)
from adaptsim.arch_graph import DataKind, FlowEdge, build_abstract
from adaptsim.context import ContextSnapshot
from adaptsim.errors import InvalidParam, InvalidProfile, MissingContext, OutOfDomain
from adaptsim.refinement import deactivate_unused, refine

LINK = "A2.C->A1.C:D"


@pytest.fixture
def pair():
    g = refine(build_abstract([("A1", ""), ("A2", "")], [FlowEdge("A2", "A1", DataKind.D)]), "direct")
    return g, g.inter_links()[0]


def ctx(energy, memory, bw=90.0, **kw):
    return ContextSnapshot(0.0, energy, memory, {LINK: bw}, **kw)


class TestScales:
    @pytest.mark.parametrize("value, rate", [(90, PR1), (60, PR2), (10, PR3)])
    def test_energy_band_samples(self, value, rate):
        assert lookup_rate(energy_scale(), value) == rate

    @pytest.mark.parametrize("value, rate", [(0, PR3), (39.99, PR3), (40, PR2), (79.99, PR2), (80, PR1), (100, PR1)])
    def test_energy_boundaries(self, value, rate):
        assert lookup_rate(energy_scale(), value) == rate

    @pytest.mark.parametrize("value, rate", [(0, PR1), (19.9, PR1), (20, PR2), (59.9, PR2), (60, PR3), (100, PR3)])
    def test_memory_saturation(self, value, rate):
        assert lookup_rate(memory_scale(), value) == rate

    def test_bandwidth_mirrors_energy(self):
        assert bandwidth_scale() == energy_scale()

    def test_priority_always_top(self):
        assert {lookup_rate(priority_scale(), v) for v in (0, 49, 50, 100)} == {PR1}

    @pytest.mark.parametrize("value", [-0.01, 100.01, math.nan])
    def test_out_of_domain(self, value):
        with pytest.raises(OutOfDomain):
            lookup_rate(energy_scale(), value)

    def test_custom_scale(self):
        s = ThresholdScale.from_breaks([0, 50, 100], [0.2, 0.8])
        assert s.rates == (0.2, 0.8)
        assert lookup_rate(s, 50) == 0.8

    @pytest.mark.parametrize(
        "bands",
        [
            (),
            ((0, 50, 1.0), (60, 100, 1.0)),
            ((0, 50, 1.0), (50, 90, 1.0)),
            ((5, 100, 1.0),),
            ((0, 100, -1.0),),
            ((0, 0, 1.0), (0, 100, 1.0)),
        ],
    )
    def test_malformed(self, bands):
        with pytest.raises(InvalidParam):
            ThresholdScale(bands)

    def test_break_rate_mismatch(self):
        with pytest.raises(InvalidParam):
            ThresholdScale.from_breaks([0, 100], [1.0, 0.5])

    def test_bands_coerced(self):
        assert ThresholdScale(((0, 100, 1.0),)).bands == (Band(0, 100, 1.0),)


class TestGlobalRate:
    def test_constant_rates(self):
        assert global_rate(NodeProfile(3, 0.2, 7, 1), FactorRates(0.5, 0.5, 0.5, 0.5)) == 0.5

    def test_equal_weights(self):
        assert global_rate(NodeProfile(), FactorRates(1.0, 0.5, 0.5, 0.0)) == pytest.approx(0.5)

    def test_energy_weighted(self):
        # (2*1.0 + 0.5 + 0.5 + 0.1) / 5, by hand
        assert global_rate(NodeProfile(alpha=2), FactorRates(1.0, 0.5, 0.5, 0.1)) == pytest.approx(0.62, abs=1e-12)

    def test_zero_weights_rejected(self):
        with pytest.raises(InvalidProfile):
            NodeProfile(0, 0, 0, 0)

    @pytest.mark.parametrize("w", [(-1, 1, 1, 1), (math.inf, 1, 1, 1), (math.nan, 1, 1, 1)])
    def test_bad_weights_rejected(self, w):
        with pytest.raises(InvalidProfile):
            NodeProfile(*w)

    def test_single_factor(self):
        assert global_rate(NodeProfile(1, 0, 0, 0), FactorRates(0.1, 1, 1, 1)) == 0.1


class TestNegotiate:
    def test_min(self):
        assert negotiate(0.62, 0.5) == 0.5

    def test_idempotent(self):
        assert negotiate(0.3, 0.3) == 0.3

    def test_zero_absorbs(self):
        assert negotiate(0.0, 0.9) == 0.0 and negotiate(0.9, 0.0) == 0.0


class TestAdaptLink:
    def test_all_top_bands(self, pair):
        _, link = pair
        c = ctx({"A1": 90, "A2": 90}, {"A1": 10, "A2": 10}, bw=95)
        assert adapt_link(link, c, NodeProfile(), NodeProfile()).negotiated_rate == PR1

    def test_low_energy_end_pulls_rate_down(self, pair):
        _, link = pair
        c = ctx({"A1": 90, "A2": 10}, {"A1": 10, "A2": 10}, bw=95)
        gr_a, gr_b, rate = negotiate_link(link, c, NodeProfile(), NodeProfile())
        # link source is A2: (0.1 + 1 + 1 + 1) / 4
        assert gr_a == pytest.approx(0.775)
        assert gr_b == PR1
        assert rate == pytest.approx(0.775)

    def test_identical_context(self, pair):
        _, link = pair
        c = ctx({"A1": 50, "A2": 50}, {"A1": 30, "A2": 30}, bw=60)
        gr_a, gr_b, rate = negotiate_link(link, c, NodeProfile(), NodeProfile())
        # three middle-band factors plus the top-band priority factor
        assert gr_a == gr_b == rate == pytest.approx((3 * PR2 + PR1) / 4)

    def test_bandwidth_as_percent_of_capacity(self, pair):
        _, link = pair
        c = ctx({"A1": 90, "A2": 90}, {"A1": 0, "A2": 0}, bw=30, capacity={LINK: 40.0})
        # 75 % of capacity is in the middle band
        rates = factor_rates(NodeProfile(), 90, 0, bandwidth_percent(30, 40))
        assert rates.br == PR2
        assert negotiate_link(link, c, NodeProfile(), NodeProfile())[2] == pytest.approx(0.875)

    def test_missing_context(self, pair):
        _, link = pair
        with pytest.raises(MissingContext):
            negotiate_link(link, ContextSnapshot(0, {"A1": 90}, {"A1": 0}, {LINK: 90}), NodeProfile(), NodeProfile())
        with pytest.raises(MissingContext):
            negotiate_link(link, ContextSnapshot(0, {"A1": 90, "A2": 90}, {"A1": 0, "A2": 0}), NodeProfile(), NodeProfile())

    def test_priority_override_from_context(self, pair):
        _, link = pair
        high = NodeProfile(priority=ThresholdScale.from_breaks([0, 50, 100], [0.0, 1.0]), priority_full_scale=2)
        base = ctx({"A1": 90, "A2": 90}, {"A1": 0, "A2": 0}, bw=95)
        assert negotiate_link(link, base, high, high)[2] == pytest.approx(0.75)
        boosted = ctx({"A1": 90, "A2": 90}, {"A1": 0, "A2": 0}, bw=95, priority_degree={LINK: 1})
        assert negotiate_link(link, boosted, high, high)[2] == PR1


def test_priority_percent():
    assert priority_percent(0) == 0 and priority_percent(1) == 100
    assert priority_percent(1, 4) == 25 and priority_percent(9, 4) == 100
    with pytest.raises(InvalidParam):
        priority_percent(-1)


def test_bandwidth_percent_clamps():
    assert bandwidth_percent(150, 100) == 100 and bandwidth_percent(-1, 100) == 0
    assert bandwidth_percent(5, 0) == 0


class TestActivation:
    def test_hysteresis_sequence(self):
        policy = ActivationPolicy(20, 30)
        states, active = [], True
        for energy in (25, 15, 35):
            active = activation_decision(active, energy, policy)
            states.append(active)
        assert states == [True, False, True]

    def test_gap_keeps_state(self):
        policy = ActivationPolicy(20, 30)
        assert activation_decision(False, 25, policy) is False
        assert activation_decision(True, 25, policy) is True

    def test_policy_order(self):
        with pytest.raises(InvalidParam):
            ActivationPolicy(30, 20)

    def test_apply_on_graph(self, ema4):
        g = deactivate_unused(refine(ema4, "direct"))
        energy = {"A1": 15.0, "A2": 50.0, "A3": 100.0, "A4": 15.0}
        c = ContextSnapshot(0, energy, {n: 0 for n in energy})
        policy = ActivationPolicy(20, 30)
        assert apply_activation(g, "A1", c, policy) == {("A1.T_D", True), ("A1.T_P", False)}
        assert apply_activation(g, "A2", c, policy) == {("A2.T_D", True), ("A2.T_P", True)}
        assert apply_activation(g, "A3", c, policy) == {("A3.T_D", True), ("A3.T_P", True)}
        # unused T_D stays off, T_P follows the rule
        assert apply_activation(g, "A4", c, policy) == {("A4.T_D", False), ("A4.T_P", False)}

    def test_reactivation_at_full_energy(self, ema4):
        g = refine(ema4, "direct").with_activation([("A2.T_P", False)])
        c = ContextSnapshot(0, {"A2": 100.0}, {"A2": 0})
        assert ("A2.T_P", True) in apply_activation(g, "A2", c, ActivationPolicy())

    def test_missing_energy(self, ema4):
        with pytest.raises(MissingContext):
            apply_activation(refine(ema4, "direct"), "A2", ContextSnapshot(0, {}, {}), ActivationPolicy())
