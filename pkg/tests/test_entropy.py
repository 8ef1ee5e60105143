"""Distribution types, entropy values, and branch-point selection."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hndecode import (
    BranchConfig,
    BranchPoint,
    EntropyProfile,
    TokenDistribution,
    branch_degree,
    distribution_from_probs,
    entropy_profile,
    normalize_distribution,
    select_vulnerable_positions,
    shannon_entropy,
)
from hndecode.errors import ConfigError, EmptyDistribution, MassExceedsOne


def dist(*probs: float, tail: float = 0.0) -> TokenDistribution:
    entries = tuple((f"t{i}", p) for i, p in enumerate(probs))
    return TokenDistribution(entries, tail_mass=tail, truncated=tail > 0.0)


class TestTokenDistribution:
    def test_validate_accepts_simple(self):
        dist(0.5, 0.5).validate()

    def test_empty_rejected(self):
        with pytest.raises(EmptyDistribution):
            TokenDistribution(()).validate()

    def test_negative_prob_rejected(self):
        with pytest.raises(ValueError):
            dist(1.1, -0.1).validate()

    def test_mass_above_one_rejected(self):
        with pytest.raises(MassExceedsOne):
            dist(0.8, 0.3).validate()

    def test_tail_mass_counts_toward_total(self):
        with pytest.raises(MassExceedsOne):
            dist(0.8, tail=0.3).validate()

    def test_support_and_argmax(self):
        d = dist(0.6, 0.4)
        assert d.support_size == 2
        assert d.argmax_token == "t0"

    def test_outcome_probs_appends_tail(self):
        d = dist(0.5, 0.25, tail=0.25)
        assert list(d.outcome_probs()) == [0.5, 0.25, 0.25]
        assert dist(1.0).outcome_probs().size == 1

    def test_prob_of(self):
        d = dist(0.6, 0.4)
        assert d.prob_of("t1") == 0.4
        assert d.prob_of("absent") == 0.0


class TestNormalize:
    def test_exact_mass_keeps_entries(self):
        d = normalize_distribution([("a", math.log(0.5)), ("b", math.log(0.5))])
        assert d.tail_mass == pytest.approx(0.0)
        assert d.entries[0][1] == pytest.approx(0.5)

    def test_residual_becomes_tail(self):
        d = normalize_distribution([("a", math.log(0.5)), ("b", math.log(0.25))])
        assert d.tail_mass == pytest.approx(0.25)
        assert d.truncated

    def test_renormalize_drops_tail(self):
        d = normalize_distribution(
            [("a", math.log(0.5)), ("b", math.log(0.25))], tail_mode="renormalize"
        )
        assert d.tail_mass == 0.0
        assert d.entries[0][1] == pytest.approx(2 / 3)

    def test_duplicates_merged(self):
        d = normalize_distribution([("a", math.log(0.25)), ("a", math.log(0.25))])
        assert d.entries[0] == ("a", pytest.approx(0.5))

    def test_mass_excess_rejected(self):
        with pytest.raises(MassExceedsOne):
            normalize_distribution([("a", 0.1)])

    def test_float_noise_above_one_soaked(self):
        third = math.log(1 / 3)
        d = normalize_distribution([("a", third), ("b", third), ("c", third)])
        assert sum(p for _, p in d.entries) <= 1.0 + 1e-12
        assert d.tail_mass == 0.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyDistribution):
            normalize_distribution([])

    def test_sorted_by_probability(self):
        d = normalize_distribution([("a", math.log(0.2)), ("b", math.log(0.7))])
        assert [t for t, _ in d.entries] == ["b", "a"]


class TestShannonEntropy:
    def test_known_value(self):
        assert shannon_entropy(dist(0.5, 0.25, 0.25)) == pytest.approx(
            1.0397207708399179, abs=1e-12
        )

    def test_point_mass_is_zero(self):
        assert shannon_entropy(dist(1.0)) == 0.0

    def test_uniform_is_log_n(self):
        for n in (2, 3, 7, 64):
            d = dist(*([1.0 / n] * n))
            assert shannon_entropy(d) == pytest.approx(math.log(n), abs=1e-9)

    def test_tail_counts_as_one_outcome(self):
        assert shannon_entropy(dist(0.5, tail=0.5)) == pytest.approx(
            math.log(2), abs=1e-12
        )

    @given(
        st.lists(st.floats(min_value=1e-6, max_value=1.0), min_size=1, max_size=30)
    )
    @settings(max_examples=200, deadline=None)
    def test_bounds_and_permutation_invariance(self, weights):
        total = sum(weights)
        probs = [w / total for w in weights]
        h = shannon_entropy(dist(*probs))
        assert 0.0 <= h <= math.log(len(probs)) + 1e-9
        assert shannon_entropy(dist(*reversed(probs))) == pytest.approx(h, abs=1e-9)


class TestProfileAndSelection:
    def test_profile_positions(self):
        prof = entropy_profile([dist(1.0), dist(0.5, 0.5), dist(0.9, 0.1)])
        assert len(prof) == 3
        assert prof.entropy_at(0) == 0.0
        assert prof.entropy_at(1) == pytest.approx(math.log(2), abs=1e-12)
        with pytest.raises(KeyError):
            prof.entropy_at(9)

    def test_empty_profile(self):
        assert len(entropy_profile([])) == 0

    def _prof(self, *hs: float) -> EntropyProfile:
        return EntropyProfile(tuple(enumerate(hs)))

    def test_orders_by_entropy_desc(self):
        pts = select_vulnerable_positions(self._prof(0.1, 0.9, 0.5), k=3)
        assert [p.position for p in pts] == [1, 2, 0]
        assert [p.rank for p in pts] == [1, 2, 3]

    def test_ties_prefer_earlier_position(self):
        pts = select_vulnerable_positions(self._prof(0.5, 0.5, 0.5), k=2)
        assert [p.position for p in pts] == [0, 1]

    def test_region_is_half_open(self):
        pts = select_vulnerable_positions(self._prof(0.9, 0.8, 0.7), k=3, region=(1, 2))
        assert [p.position for p in pts] == [1]

    def test_excluded_positions_skipped(self):
        pts = select_vulnerable_positions(self._prof(0.9, 0.8), k=2, excluded={0})
        assert [p.position for p in pts] == [1]

    def test_floor_filters(self):
        pts = select_vulnerable_positions(self._prof(0.9, 0.2), k=2, entropy_floor=0.5)
        assert [p.position for p in pts] == [0]

    def test_zero_entropy_eligible_at_default_floor(self):
        pts = select_vulnerable_positions(self._prof(0.0, 0.0), k=2)
        assert [p.position for p in pts] == [0, 1]

    def test_k_zero_and_short_supply(self):
        assert select_vulnerable_positions(self._prof(0.5), k=0) == []
        assert len(select_vulnerable_positions(self._prof(0.5), k=10)) == 1

    def test_branch_point_fields(self):
        (pt,) = select_vulnerable_positions(self._prof(0.7), k=1)
        assert pt == BranchPoint(position=0, entropy=0.7, rank=1)


class TestBranchConfig:
    def test_default_degree_schedule(self):
        cfg = BranchConfig()
        assert [branch_degree(d, cfg) for d in (0, 1, 2)] == [3, 2, 2]

    def test_degree_clamps_to_bounds(self):
        cfg = BranchConfig(max_degree=5, min_degree=2, degree_depth_decay=0.1)
        assert branch_degree(0, cfg) == 5
        assert branch_degree(3, cfg) == 2

    def test_degree_half_up_rounding(self):
        cfg = BranchConfig(max_degree=5, min_degree=1, degree_depth_decay=0.5)
        # 5 * 0.5 = 2.5 rounds to 3, not banker's 2
        assert branch_degree(1, cfg) == 3

    def test_no_decay_keeps_max(self):
        cfg = BranchConfig(max_degree=4, min_degree=2, degree_depth_decay=1.0)
        assert branch_degree(5, cfg) == 4

    @pytest.mark.parametrize(
        "field,value",
        [
            ("max_degree", 0),
            ("min_degree", 0),
            ("min_degree", 9),
            ("degree_depth_decay", -0.5),
            ("degree_depth_decay", 1.5),
            ("max_mcts_depth", -1),
            ("max_num_create_jobs", 0),
            ("tau1", -1.0),
            ("tau2", -1.0),
            ("entropy_floor", -0.1),
            ("region", "everywhere"),
            ("pool_policy", "lifo"),
            ("tail_mode", "drop"),
        ],
    )
    def test_validate_rejects(self, field, value):
        cfg = BranchConfig(**{field: value})
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_validate_accepts_defaults(self):
        BranchConfig().validate()


def test_distribution_from_probs_sorts():
    d = distribution_from_probs([("a", 0.2), ("b", 0.8)])
    assert d.argmax_token == "b"
