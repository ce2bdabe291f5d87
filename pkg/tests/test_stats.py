import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epidtn.errors import TooFewSamples
from epidtn.stats import (
    EmpiricalCdf,
    chi_square_exponential,
    chi_square_uniform_discrete,
    histogram,
    mean_half_width,
    percent_error,
    write_reports,
)


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=200))
def test_ecdf_limits_and_monotone(xs):
    f = EmpiricalCdf(xs)
    assert f(min(xs) - 1e-3) == 0.0 and f(max(xs)) == 1.0
    grid = np.linspace(min(xs) - 1, max(xs) + 1, 50)
    v = f(grid)
    assert np.all(np.diff(v) >= 0) and v.min() >= 0 and v.max() <= 1


def test_ecdf_empty():
    with pytest.raises(TooFewSamples):
        EmpiricalCdf([])


def test_exponential_test_calibration():
    passes = sum(
        chi_square_exponential(np.random.default_rng(s).exponential(500.0, 10_000)).passed
        for s in range(100)
    )
    assert passes >= 95


def test_exponential_test_rejects_uniform():
    x = np.random.default_rng(1).uniform(0, 2 * 500.0, 10_000)
    assert not chi_square_exponential(x).passed


def test_exponential_report_conventions():
    r = chi_square_exponential(np.random.default_rng(2).exponential(1.0, 5000), bins=40)
    assert (r.dof, r.dof_unfitted) == (38, 39)
    assert r.critical_unfitted == pytest.approx(62.43, abs=0.01)
    assert r.passed == (r.statistic < r.critical_value)


def test_exponential_too_few():
    with pytest.raises(TooFewSamples):
        chi_square_exponential(np.ones(100), bins=40)


@given(st.lists(st.floats(0.01, 1e4), min_size=250, max_size=400), st.randoms())
def test_statistic_permutation_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    a = chi_square_exponential(xs, bins=10).statistic
    b = chi_square_exponential(ys, bins=10).statistic
    assert a == pytest.approx(b, rel=1e-12)


def test_uniform_discrete_cases():
    assert chi_square_uniform_discrete([100] * 14).statistic == 0.0
    assert chi_square_uniform_discrete([100] * 14).passed
    assert not chi_square_uniform_discrete([1000] + [0] * 13).passed
    assert chi_square_uniform_discrete([100] * 14).dof == 13
    with pytest.raises(TooFewSamples):
        chi_square_uniform_discrete([1, 1, 1])


def test_uniform_mean_converges_to_half_m():
    M = 15
    for runs in (1_000, 100_000):
        k = np.random.default_rng(runs).integers(1, M, runs)
        assert chi_square_uniform_discrete(histogram(k, M - 1)).passed
        m, hw = mean_half_width(k)
        assert abs(m - M / 2) < 2.5 * hw


def test_percent_error():
    assert percent_error(1272.72, 1253.50) == pytest.approx(1.53, abs=0.005)
    assert percent_error(570.16, 536.05) == pytest.approx(6.36, abs=0.005)
    assert percent_error(3.0, 3.0) == 0.0
    with pytest.raises(ZeroDivisionError):
        percent_error(1.0, 0.0)


def test_mean_half_width_single_value():
    m, hw = mean_half_width([3.0])
    assert m == 3.0 and np.isnan(hw)


def test_report_csv(tmp_path):
    r = chi_square_exponential(np.random.default_rng(3).exponential(1.0, 2000), bins=20)
    write_reports(tmp_path / "chi.csv", [r, chi_square_uniform_discrete([10] * 5)])
    lines = (tmp_path / "chi.csv").read_text().splitlines()
    assert lines[0] == "test,statistic,dof,critical,passed" and len(lines) == 4
