"""Mean-field (fluid) model with 2N+1 ordinary differential equations.

State: ``I_l[i]`` / ``S_l[i]``, the expected infected / susceptible local
nodes in community ``i``, and ``I_r``, the expected infected roaming
nodes; susceptible roaming nodes are ``M - I_r - sum(I_l + S_l)``.
Integration is classical fixed-step RK4.

The infection term of ``dI_r/dt`` sums the set-meeting rate over the
communities.  Read literally, its argument is the *susceptible* local
count ``S_l[i]``, although a susceptible roaming node can only be
infected by *infected* local nodes.  ``roaming_set="susceptible"``
(default) keeps the literal form; ``roaming_set="infected"`` uses
``I_l[i]``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .config import MeetingRates, NetworkConfig
from .csvio import write_csv
from .errors import NotSaturated, StepTooLarge

log = logging.getLogger(__name__)

DEFAULT_DT = 0.5
SATURATION_FRACTION = 1e-3
T_CAP = 1e6
_ROAMING_SETS = ("susceptible", "infected")


@dataclass(frozen=True)
class OdeState:
    I_l: np.ndarray
    S_l: np.ndarray
    I_r: float
    t: float = 0.0

    @property
    def total_infected(self) -> float:
        return float(self.I_r + np.sum(self.I_l))

    def susceptible_roaming(self, M: int) -> float:
        return float(M - self.I_r - np.sum(self.I_l) - np.sum(self.S_l))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.I_l, self.S_l, [self.I_r]]).astype(float)

    @classmethod
    def from_vector(cls, y: np.ndarray, t: float = 0.0) -> "OdeState":
        n = (len(y) - 1) // 2
        return cls(np.array(y[:n]), np.array(y[n:2 * n]), float(y[-1]), t)

    @classmethod
    def initial(cls, N: int) -> "OdeState":
        """No local nodes, the source as the single infected roaming node."""
        return cls(np.zeros(N), np.zeros(N), 1.0, 0.0)


def _theta(x):
    """Unit step with ``theta(0) = 1``."""
    return (np.asarray(x) >= 0).astype(float)


def r_meet_hat_continuous(n, rates: MeetingRates, M: int):
    """Unit-step form of the piecewise-linear set-meeting rate, for real ``n``.

    Equals ``n * gamma`` on ``[0, 1]`` and ``gamma + (n-1)(eta-gamma)/(M-2)``
    above 1.
    """
    n = np.asarray(n, dtype=float)
    g, e = rates.gamma, rates.eta
    slope = (e - g) / (M - 2) if M > 2 else 0.0
    return g + _theta(1.0 - n) * (n - 1.0) * g + _theta(n - 1.0) * (n - 1.0) * slope


class _Rhs:
    def __init__(self, cfg: NetworkConfig, rates: MeetingRates, roaming_set: str = "susceptible"):
        if roaming_set not in _ROAMING_SETS:
            raise ValueError(f"roaming_set must be one of {_ROAMING_SETS}")
        self.N, self.M = cfg.N, cfg.M
        self.cfg, self.rates = cfg, rates
        self.psel = np.asarray(cfg.P_sel, dtype=float)
        self.infected_set = roaming_set == "infected"

    def __call__(self, y: np.ndarray) -> np.ndarray:
        N, M, c, r = self.N, self.M, self.cfg, self.rates
        I_l, S_l, I_r = y[:N], y[N:2 * N], y[2 * N]
        S_r = M - I_r - I_l.sum() - S_l.sum()
        meet_sus = r_meet_hat_continuous(S_l, r, M)
        meet_roam = r_meet_hat_continuous(I_l if self.infected_set else S_l, r, M)
        local_inf = S_l * I_l * r.lam + I_r * meet_sus
        dI_l = -I_l * c.alpha * c.P_r + I_r * c.beta * c.P_l * self.psel + local_inf
        dS_l = S_r * c.beta * c.P_l * self.psel - S_l * c.alpha * c.P_r - local_inf
        dI_r = (-I_r * c.beta * c.P_l + I_l.sum() * c.alpha * c.P_r
                + S_r * (I_r * r.mu + meet_roam.sum()))
        return np.concatenate([dI_l, dS_l, [dI_r]])


def ode_rhs(state: OdeState, cfg: NetworkConfig, rates: MeetingRates,
            roaming_set: str = "susceptible") -> OdeState:
    """Time derivative of ``state`` (returned as an :class:`OdeState`)."""
    d = _Rhs(cfg, rates, roaming_set)(state.as_vector())
    return OdeState.from_vector(d, state.t)


@dataclass(frozen=True)
class Trajectory:
    """Sampled ODE solution; rows of ``y`` are ``[I_l..., S_l..., I_r]``."""

    t: np.ndarray
    y: np.ndarray
    M: int
    clamped: int = 0

    @property
    def N(self) -> int:
        return (self.y.shape[1] - 1) // 2

    @property
    def I_l(self) -> np.ndarray:
        return self.y[:, :self.N]

    @property
    def S_l(self) -> np.ndarray:
        return self.y[:, self.N:2 * self.N]

    @property
    def I_r(self) -> np.ndarray:
        return self.y[:, -1]

    @property
    def total_infected(self) -> np.ndarray:
        return self.I_r + self.I_l.sum(axis=1)

    @property
    def susceptible_roaming(self) -> np.ndarray:
        return self.M - self.I_r - self.I_l.sum(axis=1) - self.S_l.sum(axis=1)

    def __len__(self) -> int:
        return len(self.t)

    def states(self) -> Iterator[OdeState]:
        for t, row in zip(self.t, self.y):
            yield OdeState.from_vector(row, float(t))

    def is_saturated(self) -> bool:
        return bool(self.total_infected[-1] >= self.M - SATURATION_FRACTION * self.M)

    def to_csv(self, path) -> None:
        N = self.N
        header = ["t", "I_r", *(f"I_l_{i}" for i in range(1, N + 1)),
                  *(f"S_l_{i}" for i in range(1, N + 1)), "total_infected"]
        rows = (
            [t, row[-1], *row[:N], *row[N:2 * N], tot]
            for t, row, tot in zip(self.t, self.y, self.total_infected)
        )
        write_csv(path, header, rows)


def _rk4(f: _Rhs, y0: np.ndarray, t0: float, n_steps: int, dt: float, M: int,
         clamped: int) -> tuple[np.ndarray, np.ndarray, int]:
    ys = np.empty((n_steps + 1, len(y0)))
    ys[0] = y0
    y = y0.copy()
    limit = 0.1 * M
    for k in range(n_steps):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        step = dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if np.max(np.abs(step)) > limit:
            raise StepTooLarge(
                f"a component moved by {np.max(np.abs(step)):.3g} > 10% of M in one step "
                f"at t={t0 + k * dt:g}; reduce dt (currently {dt:g})"
            )
        y = y + step
        neg = y < 0
        if neg.any():
            clamped += int(neg.sum())
            y[neg] = 0.0
        ys[k + 1] = y
    t = t0 + dt * np.arange(n_steps + 1)
    return t, ys, clamped


def integrate(cfg: NetworkConfig, rates: MeetingRates, t_max: float, dt: float = DEFAULT_DT,
              roaming_set: str = "susceptible", initial: OdeState | None = None) -> Trajectory:
    """RK4 solution on ``[0, t_max]`` sampled every ``dt``.

    Negative components are clamped to zero after each step and counted
    in :attr:`Trajectory.clamped`.

    Raises
    ------
    StepTooLarge
        If any component changes by more than ``0.1 * M`` in one step.
    """
    if t_max < 0 or dt <= 0:
        raise ValueError("need t_max >= 0 and dt > 0")
    f = _Rhs(cfg, rates, roaming_set)
    y0 = (initial or OdeState.initial(cfg.N)).as_vector()
    n_steps = int(np.ceil(t_max / dt - 1e-9))
    t, ys, clamped = _rk4(f, y0, 0.0, n_steps, dt, cfg.M, 0)
    if clamped:
        log.debug("clamped %d negative components", clamped)
    return Trajectory(t, ys, cfg.M, clamped)


def integrate_until_saturated(cfg: NetworkConfig, rates: MeetingRates, dt: float = DEFAULT_DT,
                              roaming_set: str = "susceptible", t_cap: float = T_CAP,
                              chunk: float = 1000.0) -> Trajectory:
    """Integrate in chunks until ``total infected >= M - 0.001 M``.

    Raises
    ------
    NotSaturated
        If ``t_cap`` is reached first.
    """
    f = _Rhs(cfg, rates, roaming_set)
    y = OdeState.initial(cfg.N).as_vector()
    ts, ys, clamped, t0 = [np.zeros(1)], [y[None, :]], 0, 0.0
    threshold = cfg.M - SATURATION_FRACTION * cfg.M
    while True:
        span = min(chunk, t_cap - t0)
        n_steps = max(int(round(span / dt)), 1)
        t, seg, clamped = _rk4(f, y, t0, n_steps, dt, cfg.M, clamped)
        ts.append(t[1:])
        ys.append(seg[1:])
        y, t0 = seg[-1], float(t[-1])
        tot = seg[:, -1] + seg[:, :cfg.N].sum(axis=1)
        hit = np.flatnonzero(tot >= threshold)
        if len(hit):
            # keep the grid up to the first saturated sample
            all_t, all_y = np.concatenate(ts), np.concatenate(ys)
            end = len(all_t) - (len(seg) - 1) + hit[0]
            return Trajectory(all_t[:end], all_y[:end], cfg.M, clamped)
        if t0 >= t_cap:
            raise NotSaturated(
                f"total infected {tot[-1]:.6g} below {threshold:.6g} at the cap t={t_cap:g}"
            )
        chunk *= 2


def average_delay_ode(trajectory: Trajectory, M: int | None = None) -> float:
    """Average delivery delay from a saturated trajectory.

    ``E(D) = t_max - (1/(M-1)) * integral_0^t_max (I_total(t) - 1) dt``
    with trapezoidal quadrature on the trajectory grid.

    Raises
    ------
    NotSaturated
        If the final total infected is below ``M - 0.001 M``.
    """
    M = trajectory.M if M is None else M
    tot = trajectory.total_infected
    if tot[-1] < M - SATURATION_FRACTION * M:
        raise NotSaturated(f"trajectory ends with {tot[-1]:.6g} infected, need >= {M - 1e-3 * M:.6g}")
    t = trajectory.t
    t_max = float(t[-1])
    return t_max - float(np.trapezoid(tot - 1.0, t)) / (M - 1)


def ode_delay(cfg: NetworkConfig, rates: MeetingRates, dt: float = DEFAULT_DT,
              roaming_set: str = "susceptible", validate: bool = True,
              rel_tol: float = 1e-4, max_halvings: int = 4) -> float:
    """E(D) with automatic saturation and optional step-halving validation.

    When ``validate`` is set, ``dt`` is halved until two successive
    estimates agree to ``rel_tol`` (at most ``max_halvings`` times).
    """
    est = average_delay_ode(integrate_until_saturated(cfg, rates, dt, roaming_set))
    if not validate:
        return est
    for _ in range(max_halvings):
        dt /= 2
        finer = average_delay_ode(integrate_until_saturated(cfg, rates, dt, roaming_set))
        converged = abs(finer - est) <= rel_tol * abs(finer)
        est = finer
        if converged:
            break
    else:
        log.warning("ODE delay did not converge under step halving (dt=%g)", dt)
    return est
