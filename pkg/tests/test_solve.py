import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from epidtn.errors import NotAbsorbing, TruncationWarning
from epidtn.models import build_folded, build_monolithic
from epidtn.solve import (
    delivery_cdf,
    expected_transmissions,
    monte_carlo_ctmc,
    mtta,
    transient,
)
from epidtn.srn import Place, SrnModel, TimedTransition, expand_reachability


def series_chain(rates_):
    """Token walks through len(rates_) stages; the last place absorbs."""
    k = len(rates_)
    places = tuple(Place(i, f"p{i}", 1 if i == 0 else 0) for i in range(k + 1))
    timed = tuple(TimedTransition(f"t{i}", ((i, 1),), ((i + 1, 1),), r) for i, r in enumerate(rates_))
    return expand_reachability(SrnModel(
        places=places, timed=timed,
        rewards={"delivered": lambda m: m[:, k], "stage": lambda m: m @ np.arange(k + 1)},
        absorbing=lambda m: m[:, k] == 1, default_reward="delivered",
    ))


def test_exponential_mtta():
    assert mtta(series_chain([0.01])).mtta == pytest.approx(100.0, rel=1e-12)


@given(st.lists(st.floats(1e-3, 10.0), min_size=1, max_size=6))
def test_series_mtta_is_sum_of_means(rs):
    assert mtta(series_chain(rs)).mtta == pytest.approx(sum(1 / r for r in rs), rel=1e-9)


def test_transient_closed_form():
    c = series_chain([0.01])
    res = transient(c, 100.0, tol=1e-10)
    assert res.expected_reward == pytest.approx(1 - np.exp(-1), abs=1e-9)
    assert res.probabilities.sum() == pytest.approx(1.0, abs=1e-9)


def test_transient_at_zero_is_initial(cfg35, rates):
    c = expand_reachability(build_monolithic(cfg35, rates))
    res = transient(c, 0.0)
    assert np.array_equal(res.probabilities, c.initial)
    assert res.expected_reward == c.reward()[c.initial_state]


def test_transient_matches_matrix_exponential(cfg35, rates):
    c = expand_reachability(build_folded(cfg35, rates))
    q = c.generator().toarray()
    for t in (50.0, 700.0, 2500.0):
        oracle = c.initial @ scipy.linalg.expm(q * t)
        res = transient(c, t, tol=1e-12)
        assert np.max(np.abs(res.probabilities - oracle)) < 1e-9
        assert res.probabilities.sum() == pytest.approx(1.0, abs=1e-9)


def test_transient_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        transient(series_chain([1.0]), 1.0, tol=0.1)
    with pytest.raises(ValueError):
        transient(series_chain([1.0]), -1.0)


def test_not_absorbing():
    # two places swapping a token forever, plus an unreachable-from absorbing marker
    trap = expand_reachability(SrnModel(
        places=(Place(0, "a", 1), Place(1, "b"), Place(2, "sink")),
        timed=(
            TimedTransition("ab", ((0, 1),), ((1, 1),), 1.0),
            TimedTransition("ba", ((1, 1),), ((0, 1),), 1.0),
        ),
        absorbing=lambda m: m[:, 2] == 1,
    ))
    with pytest.raises(NotAbsorbing):
        mtta(trap)


def test_cdf_grid_zero(cfg35, rates):
    c = expand_reachability(build_monolithic(cfg35, rates))
    assert delivery_cdf(c, [0.0]) == [(0.0, 0.0)]


def test_cdf_monotone_and_area_equals_mtta(cfg35, rates):
    c = expand_reachability(build_monolithic(cfg35, rates))
    grid = np.arange(0.0, 20001.0, 10.0)
    cdf = delivery_cdf(c, grid, tol=1e-10)
    f = np.array([v for _, v in cdf])
    assert np.all(np.diff(f) >= 0) and f[0] == 0.0 and f[-1] >= 0.9999
    area = np.trapezoid(1 - f, grid)
    assert area == pytest.approx(mtta(c).mtta, rel=0.01)


def test_cdf_keeps_grid_order(cfg35, rates):
    c = expand_reachability(build_folded(cfg35, rates))
    out = delivery_cdf(c, [900.0, 100.0, 500.0])
    assert [t for t, _ in out] == [900.0, 100.0, 500.0]
    assert out[1][1] <= out[2][1] <= out[0][1]


def test_absorption_distribution_sums_to_one(cfg35, rates):
    res = mtta(expand_reachability(build_monolithic(cfg35, rates)))
    assert res.absorption.sum() == pytest.approx(1.0, abs=1e-9)


def test_expected_transmissions_two_nodes(rates):
    from epidtn.config import NetworkConfig

    for build in (build_monolithic, build_folded):
        c = expand_reachability(build(NetworkConfig.reference(3, 2), rates))
        res = expected_transmissions(c)
        assert res.exact == pytest.approx(1.0, abs=1e-12)


def test_expected_transmissions_time_value_agrees(cfg35, rates):
    c = expand_reachability(build_monolithic(cfg35, rates))
    with warnings.catch_warnings():
        warnings.simplefilter("error", TruncationWarning)
        res = expected_transmissions(c)
    assert res.at_t == pytest.approx(res.exact, rel=1e-3)
    assert res.value == res.exact


def test_truncation_warning_for_short_horizon(cfg35, rates):
    c = expand_reachability(build_monolithic(cfg35, rates))
    with pytest.warns(TruncationWarning):
        expected_transmissions(c, t_large=100.0)


def test_monte_carlo_exponential():
    s = monte_carlo_ctmc(series_chain([0.01]), 100_000, seed=3)
    assert s.mean_time == pytest.approx(100.0, abs=1.0)
    assert abs(s.mean_time - 100.0) < s.half_width_time * 1.5


def test_monte_carlo_is_deterministic(cfg35, rates):
    c = expand_reachability(build_folded(cfg35, rates))
    assert monte_carlo_ctmc(c, 2000, seed=9) == monte_carlo_ctmc(c, 2000, seed=9)


def test_monte_carlo_terminal_reward_matches_limit(cfg35, rates):
    c = expand_reachability(build_monolithic(cfg35, rates))
    res = mtta(c, "transmissions")
    s = monte_carlo_ctmc(c, 20_000, seed=4, reward="transmissions")
    assert abs(s.mean_reward - res.limit_reward) < 4 * s.half_width_reward


@pytest.mark.parametrize("runs", [1_000, 10_000, 100_000])
def test_monte_carlo_convergence_rate(cfg35, rates, runs):
    c = expand_reachability(build_folded(cfg35, rates))
    exact = mtta(c).mtta
    s = monte_carlo_ctmc(c, runs, seed=runs)
    # error shrinks like 1/sqrt(runs): stay within 4 standard errors
    assert abs(s.mean_time - exact) < 4 * np.sqrt(s.var_time / runs)
