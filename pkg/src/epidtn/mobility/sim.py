"""Mobility simulator: node movement, epidemic forwarding and meeting-rate
estimation.

Contact detection is time-stepped: a pair meets at the first step on
which its distance is ``<= R``.  While every relevant pair is farther
apart than ``R`` the step is enlarged to the largest value that cannot
skip a contact, ``(d_min - R) / (2 v_cap)``, and shrinks back to ``dt``
near contacts; movement itself is exact over any step.

Each replication draws its own seed from ``SeedSequence(seed)``, so
results are reproducible bit for bit and independent of the batch size.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.stats import norm

from ..config import MeetingRates, NetworkConfig
from ..csvio import write_csv
from ..errors import ConfigError
from . import kernels as _k

log = logging.getLogger(__name__)

DEFAULT_DT = 0.1
DEFAULT_TX_DELAY = 0.01  # 25 KB at 2.5 MB/s
MAX_TIME = 1e8
_MODES = ("roaming", "local", "transitional")


def _params(cfg: NetworkConfig, P_r: float | None = None, P_l: float | None = None) -> np.ndarray:
    return np.array([
        cfg.L, cfg.L_c, cfg.R, cfg.alpha, cfg.beta,
        cfg.P_r if P_r is None else P_r, cfg.P_l if P_l is None else P_l,
        cfg.v_min, cfg.v_max, cfg.v_trans,
    ], dtype=float)


def _centers(cfg: NetworkConfig) -> np.ndarray:
    return np.asarray(cfg.community_centers, dtype=float).reshape(-1, 2)


def _psel_cum(cfg: NetworkConfig) -> np.ndarray:
    return np.cumsum(np.asarray(cfg.P_sel, dtype=float))


def run_seeds(seed: int | None, runs: int) -> np.ndarray:
    """Per-replication seeds derived from a master seed."""
    return np.random.SeedSequence(seed).generate_state(runs, dtype=np.uint32).astype(np.int64)


def _check_cfg(cfg: NetworkConfig) -> None:
    issues = cfg.problems()
    if issues:
        raise ConfigError("; ".join(issues))


# ----------------------------------------------------------------------------
# single-node movement
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class NodeState:
    """State of one node.

    ``mode`` is ``"roaming"``, ``"local"`` or ``"transitional"``;
    ``community`` is the index of the current (local) or target
    (transitional) community.  ``travel_end`` is absolute time: the end of
    the current travel, or the arrival time for a transitional node.
    """

    position: tuple[float, float]
    mode: str = "roaming"
    community: int | None = None
    heading: float = 0.0
    speed: float = 0.0
    travel_end: float = math.inf
    target: tuple[float, float] | None = None
    infected: bool = False
    time: float = 0.0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.mode != "roaming" and self.community is None:
            raise ValueError(f"a {self.mode} node needs a community index")
        if self.mode == "transitional" and self.target is None:
            raise ValueError("a transitional node needs a target point")

    @property
    def velocity(self) -> tuple[float, float]:
        return self.speed * math.cos(self.heading), self.speed * math.sin(self.heading)

    def _vector(self) -> np.ndarray:
        vx, vy = self.velocity
        tx, ty = self.target if self.target is not None else (0.0, 0.0)
        return np.array([
            self.position[0], self.position[1], vx, vy, float(_MODES.index(self.mode)),
            float(self.community or 0), self.travel_end, tx, ty, self.time,
        ])

    def _from_vector(self, v: np.ndarray) -> "NodeState":
        mode = _MODES[int(v[4])]
        return replace(
            self,
            position=(float(v[0]), float(v[1])),
            mode=mode,
            community=None if mode == "roaming" else int(v[5]),
            heading=math.atan2(v[3], v[2]) % (2 * math.pi),
            speed=math.hypot(v[2], v[3]),
            travel_end=float(v[6]),
            target=(float(v[7]), float(v[8])) if mode == "transitional" else None,
            time=float(v[9]),
        )


def advance(node: NodeState, dt: float, rng: np.random.Generator, cfg: NetworkConfig) -> NodeState:
    """Move ``node`` for ``dt`` seconds, handling every travel end inside.

    Reflection is off the bounding box of the current mode's region (the
    common area for roaming nodes, the community square for local nodes).
    Randomness for new travels is drawn from a seed taken from ``rng``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    seed = int(rng.integers(0, 2**32))
    out = _k.advance_single(node._vector(), seed, float(dt), _params(cfg), _centers(cfg),
                            _psel_cum(cfg))
    return node._from_vector(out)


# ----------------------------------------------------------------------------
# epidemic forwarding
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SimOutcome:
    """Result of one replication.

    ``transmissions`` counts completed receptions up to and including the
    destination's; ``infection_times`` lists ``(time, node)`` for every
    node except the source in order of infection.
    """

    delivery_delay: float
    transmissions: int
    infection_times: tuple[tuple[float, int], ...]


def _outcome(delay: float, trans: int, times: np.ndarray) -> SimOutcome:
    nodes = np.flatnonzero(~np.isnan(times))
    nodes = nodes[nodes != 0]
    order = nodes[np.argsort(times[nodes], kind="stable")]
    return SimOutcome(float(delay), int(trans), tuple((float(times[i]), int(i)) for i in order))


def _check_step(cfg: NetworkConfig, dt: float) -> None:
    if not dt > 0:
        raise ValueError("dt must be positive")
    vcap = max(cfg.v_max, cfg.v_trans)
    if vcap * dt >= cfg.R / 4:
        raise ValueError(f"dt={dt:g} too large: max displacement {vcap * dt:g} m must stay below R/4")


def run_epidemic(cfg: NetworkConfig, tx_delay: float = DEFAULT_TX_DELAY, dt: float = DEFAULT_DT,
                 seed: int | None = None) -> SimOutcome:
    """One epidemic-forwarding replication (node 0 source, node 1 destination)."""
    return simulate(cfg, 1, tx_delay=tx_delay, dt=dt, seed=seed, _seeds=run_seeds(seed, 1))[0]


@dataclass(frozen=True)
class SimBatch:
    """Outcomes of a batch of replications."""

    delays: np.ndarray
    transmissions: np.ndarray
    infection_times: np.ndarray  # (runs, M), NaN where not infected

    def __len__(self) -> int:
        return len(self.delays)

    def __getitem__(self, r: int) -> SimOutcome:
        return _outcome(self.delays[r], self.transmissions[r], self.infection_times[r])

    def mean_delay(self) -> float:
        return float(np.mean(self.delays))

    def mean_transmissions(self) -> float:
        return float(np.mean(self.transmissions))

    def to_csv(self, path) -> None:
        write_csv(path, ("run", "delay", "transmissions"),
                  ((r, d, int(k)) for r, (d, k) in enumerate(zip(self.delays, self.transmissions))))


def simulate(cfg: NetworkConfig, runs: int, tx_delay: float = DEFAULT_TX_DELAY, dt: float = DEFAULT_DT,
             seed: int | None = None, _seeds: np.ndarray | None = None) -> SimBatch:
    """Run ``runs`` independent epidemic replications."""
    _check_cfg(cfg)
    _check_step(cfg, dt)
    if tx_delay < 0:
        raise ValueError("tx_delay must be non-negative")
    if cfg.M < 2:
        raise ConfigError("need at least a source and a destination (M >= 2)")
    seeds = run_seeds(seed, runs) if _seeds is None else _seeds
    delays, trans, times = _k.epidemic_batch(cfg.M, _params(cfg), _centers(cfg), _psel_cum(cfg),
                                             float(tx_delay), float(dt), seeds, MAX_TIME)
    if np.isnan(delays).any():
        raise RuntimeError(f"{int(np.isnan(delays).sum())} replications did not deliver by t={MAX_TIME:g}")
    return SimBatch(delays, trans, times)


# ----------------------------------------------------------------------------
# meeting-rate estimation
# ----------------------------------------------------------------------------

EXPERIMENTS = ("lambda", "mu", "gamma", "eta")


def _init_modes(kind: str, n: int) -> np.ndarray:
    R_, L_ = _k.ROAMING, _k.LOCAL
    if kind == "lambda":
        return np.array([L_, L_])
    if kind == "mu":
        return np.array([R_, R_])
    if kind in ("gamma", "eta"):
        if n < 1:
            raise ValueError("need at least one local node")
        return np.array([R_] + [L_] * n)
    raise ValueError(f"unknown experiment {kind!r}; expected one of {EXPERIMENTS}")


def first_meeting_times(cfg: NetworkConfig, kind: str, runs: int, dt: float = DEFAULT_DT,
                        seed: int | None = None, n: int = 1) -> np.ndarray:
    """Sample first-meeting times for one experiment.

    ``kind``: ``"lambda"`` (two local nodes), ``"mu"`` (two roaming
    nodes), ``"gamma"`` (one roaming node and one local node) or
    ``"eta"`` (one roaming node and ``n`` local nodes).  Local nodes live
    in the first community and never leave it; roaming nodes never enter
    a community.  Placement is redrawn until no pair involving node 0
    starts within range.
    """
    _check_cfg(cfg)
    _check_step(cfg, dt)
    modes = _init_modes(kind, 1 if kind == "gamma" else n)
    seeds = run_seeds(seed, runs)
    out = _k.first_meeting_batch(modes, _params(cfg, P_r=0.0, P_l=0.0), _centers(cfg), float(dt),
                                 seeds, MAX_TIME)
    if np.isnan(out).any():
        raise RuntimeError("a first-meeting replication exceeded the time cap")
    return out


def _rate(samples: np.ndarray) -> tuple[float, float]:
    """Rate ``1/mean`` and its 95% half-width (delta method)."""
    m = float(np.mean(samples))
    if len(samples) < 2:
        return 1.0 / m, math.inf
    hw_mean = norm.ppf(0.975) * float(np.std(samples, ddof=1)) / math.sqrt(len(samples))
    return 1.0 / m, float(hw_mean / m**2)


def estimate_rates(cfg: NetworkConfig, runs: int = 10_000, dt: float = DEFAULT_DT,
                   seed: int | None = None) -> MeetingRates:
    """Estimate ``lambda, mu, gamma, eta`` (``eta`` for ``M - 1`` local nodes)."""
    if runs < 1000:
        log.warning("estimate_rates with %d runs; at least 1000 are recommended", runs)
    subseeds = np.random.SeedSequence(seed).generate_state(4)
    rates, hws = [], []
    for kind, s in zip(EXPERIMENTS, subseeds):
        r, hw = _rate(first_meeting_times(cfg, kind, runs, dt, int(s), n=max(cfg.M - 1, 1)))
        rates.append(r)
        hws.append(hw)
    return MeetingRates(*rates, eta_n=cfg.M - 1, samples=(runs,) * 4, half_widths=tuple(hws))


def estimate_r_meet_curve(cfg: NetworkConfig, n_values: Sequence[int], runs: int = 10_000,
                          dt: float = DEFAULT_DT, seed: int | None = None,
                          with_half_widths: bool = False) -> list[tuple]:
    """Rate of first meeting between a roaming node and ``n`` local nodes.

    Returns ``[(n, rate), ...]`` (or ``(n, rate, half_width)`` triples).
    """
    for n in n_values:
        if not 1 <= n <= cfg.M - 1:
            raise ValueError(f"n={n} outside [1, M-1={cfg.M - 1}]")
    subseeds = np.random.SeedSequence(seed).generate_state(len(n_values))
    out = []
    for n, s in zip(n_values, subseeds):
        r, hw = _rate(first_meeting_times(cfg, "eta", runs, dt, int(s), n=int(n)))
        out.append((int(n), r, hw) if with_half_widths else (int(n), r))
    return out
