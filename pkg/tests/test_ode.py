import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given
from hypothesis import strategies as st

from epidtn.config import NetworkConfig
from epidtn.errors import NotSaturated, StepTooLarge
from epidtn.ode import (
    OdeState,
    Trajectory,
    average_delay_ode,
    integrate,
    integrate_until_saturated,
    ode_delay,
    ode_rhs,
    r_meet_hat_continuous,
)


@pytest.fixture(scope="module")
def cfg4():
    return NetworkConfig.reference(4, 20)


def test_initial_derivative(cfg4, rates):
    d = ode_rhs(OdeState.initial(4), cfg4, rates)
    expected = cfg4.beta * cfg4.P_l * np.array(cfg4.P_sel)
    assert np.allclose(d.I_l, expected, rtol=1e-14, atol=0)


def test_all_infected_has_no_infection_inflow(cfg4, rates):
    s = OdeState(np.array([5.0, 5.0, 5.0, 0.0]), np.zeros(4), 5.0)
    d = ode_rhs(s, cfg4, rates)
    assert np.all(d.S_l <= 0)
    assert d.I_r + d.I_l.sum() == pytest.approx(0.0, abs=1e-12)


@given(st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
def test_rhs_is_degree_one_in_rates(c, seed):
    cfg = NetworkConfig.reference(4, 20)
    from epidtn.config import MeetingRates

    r = MeetingRates(0.0228, 2.6e-4, 2.586e-4, 1.086e-3)
    rng = np.random.default_rng(seed)
    parts = rng.dirichlet(np.ones(9)) * 20
    s = OdeState(parts[:4], parts[4:8], parts[8])
    fast = replace(cfg, alpha=cfg.alpha * c, beta=cfg.beta * c)
    a = ode_rhs(s, cfg, r).as_vector()
    b = ode_rhs(s, fast, r.scaled(c)).as_vector()
    assert np.allclose(b, c * a, rtol=1e-10, atol=1e-18)


def test_step_function_endpoints(rates):
    M = 10
    assert r_meet_hat_continuous(0.0, rates, M) == pytest.approx(0.0, abs=1e-18)
    assert r_meet_hat_continuous(1.0, rates, M) == rates.gamma
    assert r_meet_hat_continuous(M - 1.0, rates, M) == pytest.approx(rates.eta)


def test_zero_horizon(cfg4, rates):
    traj = integrate(cfg4, rates, t_max=0.0)
    assert len(traj) == 1 and traj.I_r[0] == 1.0


@pytest.mark.parametrize("roaming_set", ["susceptible", "infected"])
def test_population_and_monotonicity(cfg4, rates, roaming_set):
    traj = integrate(cfg4, rates, t_max=3000.0, dt=0.5, roaming_set=roaming_set)
    assert np.all(traj.susceptible_roaming >= -1e-6)
    assert np.all(traj.y >= 0)
    assert np.all(np.diff(traj.total_infected) >= -1e-12)
    assert traj.total_infected[-1] <= cfg4.M + 1e-6


def test_saturates_and_step_halving(rates):
    cfg = NetworkConfig.reference(4, 100)
    a = integrate(cfg, rates, t_max=2000.0, dt=0.5)
    b = integrate(cfg, rates, t_max=2000.0, dt=0.25)
    assert a.total_infected[-1] > 99.0
    assert abs(a.total_infected[-1] - b.total_infected[-1]) < 1e-6 * cfg.M


def test_delay_identity(cfg4, rates):
    traj = integrate_until_saturated(cfg4, rates)
    f_hat = (traj.total_infected - 1.0) / (cfg4.M - 1)
    area = np.trapezoid(1.0 - f_hat, traj.t)
    assert average_delay_ode(traj) == pytest.approx(area, rel=0.01)


def test_instant_saturation_gives_zero_delay():
    M = 10
    t = np.linspace(0, 50, 11)
    y = np.zeros((11, 9))
    y[:, -1] = M
    assert average_delay_ode(Trajectory(t, y, M)) == pytest.approx(0.0, abs=1e-12)


def test_not_saturated(cfg4, rates):
    with pytest.raises(NotSaturated):
        average_delay_ode(integrate(cfg4, rates, t_max=10.0))
    with pytest.raises(NotSaturated):
        integrate_until_saturated(cfg4, rates, t_cap=50.0)


def test_step_too_large(cfg4, rates):
    with pytest.raises(StepTooLarge):
        integrate(cfg4, rates.scaled(100.0), t_max=1000.0, dt=50.0)


def test_ode_delay_converges(cfg4, rates):
    d = ode_delay(cfg4, rates)
    assert d == pytest.approx(ode_delay(cfg4, rates, dt=0.125, validate=False), rel=1e-4)


def test_trajectory_csv(tmp_path, rates):
    cfg = NetworkConfig.reference(3, 10)
    traj = integrate(cfg, rates, t_max=5.0, dt=1.0)
    traj.to_csv(tmp_path / "traj.csv")
    lines = (tmp_path / "traj.csv").read_text().splitlines()
    assert lines[0] == "t,I_r,I_l_1,I_l_2,I_l_3,S_l_1,S_l_2,S_l_3,total_infected"
    assert len(lines) == 7
