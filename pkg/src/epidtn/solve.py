"""Absorption and transient analysis of an absorbing :class:`~epidtn.srn.Ctmc`.

* :func:`mtta` — mean time to absorption, absorption distribution and
  expected terminal reward from the expected occupancy times ``y``, the
  solution of ``y (-Q_TT) = pi0`` over the transient states.  The system
  is solved block-triangularly along the strongly connected components
  of the chain, one topological level at a time.
* :func:`transient`, :func:`delivery_cdf` — uniformization.
* :func:`expected_transmissions` — the time-truncated reward together with
  its exact absorption limit.
* :func:`monte_carlo_ctmc` — exponential-race simulation, the oracle for
  the analytic solvers.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla
from scipy import stats

from .errors import NotAbsorbing, SingularSystem, TruncationWarning
from .srn.expand import Ctmc

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
UNIFORMIZATION_FACTOR = 1.001
DEFAULT_TOL = 1e-10
# Uniformization work budget, in (nonzeros x steps); beyond it the
# time-truncated transmissions value is skipped in favour of the exact limit.
DEFAULT_WORK_BUDGET = 5e9


# ----------------------------------------------------------------------------
# absorption
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class AbsorptionResult:
    """Outcome of :func:`mtta`.

    Attributes
    ----------
    mtta : float
        Mean time to absorption (s).
    absorbing_states : ndarray
        Indices of the absorbing states.
    absorption : ndarray
        Probability of ending in each of ``absorbing_states``.
    terminal_reward : float or None
        Expected reward of the last transient state visited, i.e.
        ``sum_i y_i * (rate from i into the absorbing set) * reward_i``.
    limit_reward : float or None
        Expected reward evaluated on the absorbing state reached.
    occupancy : ndarray
        Expected time spent in every state (zero on absorbing states).
    """

    mtta: float
    absorbing_states: np.ndarray
    absorption: np.ndarray
    terminal_reward: float | None
    limit_reward: float | None
    occupancy: np.ndarray


def _reachable_to_absorbing(ctmc: Ctmc) -> np.ndarray:
    """States from which the absorbing set is reachable (backward BFS)."""
    rev = ctmc.rates.T.tocsr()  # predecessors of each state
    seen = ctmc.absorbing.copy()
    frontier = np.flatnonzero(seen)
    while len(frontier):
        pred = rev.indices[_row_positions(rev.indptr, frontier)]
        pred = np.unique(pred[~seen[pred]])
        seen[pred] = True
        frontier = pred
    return seen


def _row_positions(indptr: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Positions in a CSR data array covered by ``rows``."""
    starts, counts = indptr[rows], indptr[rows + 1] - indptr[rows]
    offsets = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
    return offsets + np.arange(counts.sum())


def _topological_levels(rates: sp.csr_matrix, states: np.ndarray) -> list[np.ndarray]:
    """Group ``states`` into levels of the SCC condensation of ``rates``.

    Every transition between different components goes from a lower
    level to a higher one, so the levels can be solved in order.  The
    condensation is built on the whole chain (absorbing states are
    singleton components) to avoid copying the matrix.
    """
    ncomp, label = csgraph.connected_components(rates, directed=True, connection="strong")
    label = label.astype(np.int32)
    cu = np.repeat(label, np.diff(rates.indptr))
    cv = label[rates.indices]
    cross = cu != cv
    cond = sp.csr_matrix((np.ones(int(cross.sum()), dtype=np.int8), (cu[cross], cv[cross])),
                         shape=(ncomp, ncomp))
    del cu, cv, cross
    cond.sum_duplicates()
    indeg = np.bincount(cond.indices, minlength=ncomp)
    level = np.full(ncomp, -1, dtype=np.int64)
    frontier = np.flatnonzero(indeg == 0)
    depth = 0
    while len(frontier):
        level[frontier] = depth
        succ = cond.indices[_row_positions(cond.indptr, frontier)]
        np.subtract.at(indeg, succ, 1)
        frontier = np.unique(succ[indeg[succ] == 0])
        depth += 1
    state_level = level[label[states]]
    order = np.argsort(state_level, kind="stable")
    bounds = np.flatnonzero(np.diff(state_level[order])) + 1
    return [states[g] for g in np.split(order, bounds)]


DIRECT_LIMIT = 2_000


def _residual(a, x, b, scale) -> float:
    if not np.all(np.isfinite(x)):
        return math.inf
    return float(np.abs(a @ x - b).sum() / scale)


def _solve_block(a: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    """Solve ``a x = b`` for one level block to a relative L1 residual of 1e-10.

    Small blocks use a sparse LU factorization.  Larger ones use
    Jacobi-preconditioned BiCGSTAB, then restarted GMRES, both of which
    converge quickly because ``a`` is a diagonally dominant M-matrix.
    """
    if a.shape[0] == 1:
        return b / a[0, 0]
    scale = max(np.abs(b).sum(), np.finfo(float).tiny)
    attempts = []
    if a.shape[0] <= DIRECT_LIMIT:
        attempts.append("direct")
    attempts += ["bicgstab", "gmres"]
    if a.shape[0] > DIRECT_LIMIT:
        attempts.append("direct")
    d = a.diagonal()
    jacobi = spla.LinearOperator(a.shape, lambda v: v / d)
    best = math.inf
    for method in attempts:
        if method == "direct":
            x = spla.spsolve(a.tocsc(), b, permc_spec="MMD_AT_PLUS_A")
        elif method == "bicgstab":
            x, _ = spla.bicgstab(a, b, M=jacobi, rtol=1e-13, atol=0.0, maxiter=20_000)
        else:
            x, _ = spla.gmres(a, b, M=jacobi, rtol=1e-13, atol=0.0, restart=100, maxiter=2_000)
        res = _residual(a, x, b, scale)
        if res > RESIDUAL_TOL and np.isfinite(res):
            # one round of iterative refinement with the same method
            dx = spla.spsolve(a.tocsc(), a @ x - b) if method == "direct" else \
                spla.bicgstab(a, a @ x - b, M=jacobi, rtol=1e-13, atol=0.0, maxiter=20_000)[0]
            x = x - dx
            res = _residual(a, x, b, scale)
        if res <= RESIDUAL_TOL:
            return x
        best = min(best, res)
        log.debug("block solve via %s missed tolerance (residual %.3e)", method, res)
    raise SingularSystem(f"linear solve residual {best:.3e} exceeds {RESIDUAL_TOL:g}")


def mtta(ctmc: Ctmc, reward: str | np.ndarray | None = None) -> AbsorptionResult:
    """Mean time to absorption from the initial distribution.

    Parameters
    ----------
    ctmc : Ctmc
        An absorbing chain.
    reward : str or ndarray, optional
        Reward used for ``terminal_reward`` and ``limit_reward``; defaults
        to ``"transmissions"`` when the chain has it, else the chain's
        default reward, else none.

    Raises
    ------
    NotAbsorbing
        If some transient state cannot reach the absorbing set.
    SingularSystem
        If a block solve misses the residual tolerance.
    """
    n = ctmc.n_states
    if not ctmc.absorbing.any():
        raise NotAbsorbing("the chain has no absorbing state")
    ok = _reachable_to_absorbing(ctmc)
    if not ok.all():
        bad = np.flatnonzero(~ok)
        raise NotAbsorbing(f"{len(bad)} transient states cannot reach absorption (e.g. state {bad[0]})")

    transient_states = np.flatnonzero(~ctmc.absorbing)
    rates = ctmc.rates
    exit_rates = ctmc.exit_rates
    y = np.zeros(n)
    inflow = np.array(ctmc.initial, dtype=float)  # pi0 plus mass flowing in from solved levels
    if len(transient_states):
        for states in _topological_levels(rates, transient_states):
            b = inflow[states]
            if not b.any():
                continue
            block = rates[states][:, states]
            a = (sp.diags(exit_rates[states]) - block).T.tocsr()
            ys = _solve_block(a, b)
            ys = np.maximum(ys, 0.0)
            y[states] = ys
            inflow += rates[states].T @ ys
    absorbing_states = np.flatnonzero(ctmc.absorbing)
    absorption = inflow[absorbing_states]
    total = absorption.sum()
    if abs(total - 1.0) > 1e-9:
        log.warning("absorption probabilities sum to %.12g", total)

    rew = _pick_reward(ctmc, reward)
    terminal = limit = None
    if rew is not None:
        into_abs = rates @ ctmc.absorbing.astype(float)
        terminal = float(np.dot(y * into_abs, rew))
        limit = float(np.dot(absorption, rew[absorbing_states]))
    y.setflags(write=False)
    return AbsorptionResult(
        mtta=float(y.sum()),
        absorbing_states=absorbing_states,
        absorption=absorption,
        terminal_reward=terminal,
        limit_reward=limit,
        occupancy=y,
    )


def _pick_reward(ctmc: Ctmc, reward) -> np.ndarray | None:
    if reward is not None:
        return ctmc.reward(reward)
    if "transmissions" in ctmc.rewards:
        return ctmc.rewards["transmissions"]
    if ctmc.default_reward is not None:
        return ctmc.reward()
    return None


# ----------------------------------------------------------------------------
# transient analysis
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TransientResult:
    time: float
    probabilities: np.ndarray
    expected_reward: float | None


def _check_tol(tol: float) -> None:
    if not 0 < tol <= 1e-3:
        raise ValueError(f"tol must lie in (0, 1e-3], got {tol!r}")


def _poisson_window(q: float, tol: float) -> tuple[int, np.ndarray]:
    """Right truncation point and weights ``P(K = k), k = 0..right``."""
    if q == 0:
        return 0, np.ones(1)
    right = int(stats.poisson.isf(tol, q)) + 1
    k = np.arange(right + 1)
    return right, stats.poisson.pmf(k, q)


class _Uniformized:
    def __init__(self, ctmc: Ctmc):
        self.ctmc = ctmc
        self.rt = ctmc.rates.T.tocsr()
        self.exit = ctmc.exit_rates
        self.rate = UNIFORMIZATION_FACTOR * float(self.exit.max()) if self.exit.size else 0.0
        self.transient = ~ctmc.absorbing

    def step(self, v: np.ndarray) -> np.ndarray:
        return v + (self.rt @ v - v * self.exit) / self.rate

    def run(
        self,
        times: Sequence[float],
        reward: np.ndarray | None,
        tol: float,
        want_vector: bool = False,
        max_steps: int | None = None,
    ):
        """Expected reward (and optionally the distribution) at each time.

        Returns ``(values, vectors)``; ``values`` is ``None`` where the
        step budget ran out.
        """
        times = [float(t) for t in times]
        v = np.array(self.ctmc.initial, dtype=float)
        if self.rate == 0:
            vals = [None if reward is None else float(v @ reward) for _ in times]
            return vals, [v.copy() for _ in times] if want_vector else None
        windows = [_poisson_window(self.rate * t, tol) for t in times]
        right = max(w[0] for w in windows)
        if max_steps is not None and right > max_steps:
            right = max_steps
            exhausted = True
        else:
            exhausted = False
        acc = np.zeros(len(times))
        vecs = [np.zeros_like(v) for _ in times] if want_vector else None
        k = 0
        steady = False
        while True:
            val = float(v @ reward) if reward is not None else 0.0
            for g, (rg, w) in enumerate(windows):
                if k <= rg:
                    if steady:
                        tail = w[k:].sum()
                        acc[g] += tail * val
                        if want_vector:
                            vecs[g] += tail * v
                    else:
                        acc[g] += w[k] * val
                        if want_vector:
                            vecs[g] += w[k] * v
            if steady or k >= right:
                break
            v = self.step(v)
            k += 1
            if v[self.transient].sum() < tol * 1e-3:
                steady = True  # all further iterates coincide to within tolerance
        values: list[float | None] = []
        for g, (rg, w) in enumerate(windows):
            if exhausted and rg > k and not steady:
                values.append(None)
            else:
                values.append(float(acc[g]) if reward is not None else None)
        return values, vecs


def transient(ctmc: Ctmc, t: float, tol: float = DEFAULT_TOL,
              reward: str | np.ndarray | None = None) -> TransientResult:
    """State distribution and expected reward rate at time ``t``.

    Uses uniformization with rate ``1.001 * max exit rate``; the Poisson
    series is cut where its discarded tail drops below ``tol``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    _check_tol(tol)
    rew = ctmc.reward(reward) if (reward is not None or ctmc.default_reward) else None
    if t == 0:
        p = np.array(ctmc.initial, dtype=float)
        return TransientResult(0.0, p, None if rew is None else float(p @ rew))
    (val,), (p,) = _Uniformized(ctmc).run([t], rew, tol, want_vector=True)
    p = np.clip(p, 0.0, None)
    return TransientResult(float(t), p, val)


def _delivered(ctmc: Ctmc) -> np.ndarray:
    if "delivered" in ctmc.rewards:
        return ctmc.rewards["delivered"]
    return ctmc.reward()


def delivery_cdf(ctmc: Ctmc, grid: Sequence[float], tol: float = DEFAULT_TOL) -> list[tuple[float, float]]:
    """``(t, F(t))`` with ``F(t)`` the probability of delivery by ``t``.

    ``F`` is the expected ``delivered`` reward (``#inf_des``).
    """
    _check_tol(tol)
    grid = [float(t) for t in grid]
    if any(t < 0 for t in grid):
        raise ValueError("grid times must be non-negative")
    if not grid:
        return []
    vals, _ = _Uniformized(ctmc).run(grid, _delivered(ctmc), tol)
    out, prev = [], 0.0
    for t, f in sorted(zip(grid, vals)):
        f = min(max(f, 0.0), 1.0)
        # uniformization error is far below tol; enforce exact monotonicity
        prev = max(prev, f)
        out.append((t, prev))
    order = {t: i for i, t in enumerate(grid)}
    return sorted(out, key=lambda tf: order[tf[0]])


@dataclass(frozen=True)
class TransmissionsResult:
    """Expected number of transmissions.

    ``exact`` is the absorption limit and supersedes ``at_t``, the
    expected reward at ``t_large`` (``None`` if the step budget ran out).
    """

    exact: float
    at_t: float | None
    t_large: float

    @property
    def value(self) -> float:
        return self.exact


def expected_transmissions(
    ctmc: Ctmc,
    t_large: float | None = None,
    tol: float = DEFAULT_TOL,
    reward: str | np.ndarray | None = None,
    work_budget: float = DEFAULT_WORK_BUDGET,
) -> TransmissionsResult:
    """Expected transmissions: reward at ``t_large`` plus its exact limit.

    ``t_large`` defaults to ``20 * mtta``.  Emits
    :class:`~epidtn.errors.TruncationWarning` when the two differ by more
    than 1 % relative.
    """
    rew = ctmc.reward(reward if reward is not None else "transmissions")
    ab = mtta(ctmc, rew)
    exact = ab.limit_reward
    if t_large is None:
        t_large = 20.0 * ab.mtta
    un = _Uniformized(ctmc)
    max_steps = int(max(1000, work_budget / max(ctmc.n_transitions + ctmc.n_states, 1)))
    (at_t,), _ = un.run([t_large], rew, min(tol, 1e-3), max_steps=max_steps)
    if at_t is None:
        log.info("transient evaluation at t=%g skipped: beyond the work budget", t_large)
    elif abs(at_t - exact) > 0.01 * abs(exact):
        warnings.warn(
            f"reward at t={t_large:g} is {at_t:.6g} but the absorption limit is {exact:.6g}",
            TruncationWarning, stacklevel=2,
        )
    return TransmissionsResult(exact=float(exact), at_t=at_t, t_large=float(t_large))


# ----------------------------------------------------------------------------
# Monte-Carlo oracle
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloStats:
    runs: int
    mean_time: float
    var_time: float
    half_width_time: float
    mean_reward: float | None
    var_reward: float | None
    half_width_reward: float | None


@numba.njit(cache=True)
def _mc_kernel(indptr, indices, data, exit_rates, absorbing, init_cum, reward, runs, seed, max_jumps):
    np.random.seed(seed)
    times = np.empty(runs)
    rewards = np.empty(runs)
    for r in range(runs):
        u = np.random.random()
        s = np.searchsorted(init_cum, u * init_cum[-1], side="right")
        if s >= len(init_cum):
            s = len(init_cum) - 1
        t = 0.0
        last = s
        jumps = 0
        while not absorbing[s]:
            q = exit_rates[s]
            t += np.random.exponential(1.0 / q)
            target = np.random.random() * q
            acc = 0.0
            nxt = indices[indptr[s + 1] - 1]
            for k in range(indptr[s], indptr[s + 1]):
                acc += data[k]
                if acc > target:
                    nxt = indices[k]
                    break
            last = s
            s = nxt
            jumps += 1
            if jumps > max_jumps:
                t = np.nan
                break
        times[r] = t
        rewards[r] = reward[last]
    return times, rewards


def monte_carlo_ctmc(
    ctmc: Ctmc,
    runs: int,
    seed: int,
    reward: str | np.ndarray | None = None,
    max_jumps: int = 10_000_000,
) -> MonteCarloStats:
    """Simulate the chain by exponential races until absorption.

    Reports mean and variance of the absorption time and of the reward of
    the last transient state visited (the same quantity as
    :attr:`AbsorptionResult.terminal_reward`), with 95 % confidence
    half-widths.  Bit-reproducible for a fixed ``seed``.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    rew = _pick_reward(ctmc, reward)
    has_reward = rew is not None
    rew_arr = np.asarray(rew if has_reward else np.zeros(ctmc.n_states), dtype=float)
    state_seed = int(np.random.SeedSequence(seed).generate_state(1, dtype=np.uint32)[0])
    r = ctmc.rates
    times, rewards = _mc_kernel(
        r.indptr.astype(np.int64), r.indices.astype(np.int64), r.data.astype(float),
        np.asarray(ctmc.exit_rates, dtype=float), np.asarray(ctmc.absorbing, dtype=np.bool_),
        np.cumsum(ctmc.initial), rew_arr, int(runs), state_seed, int(max_jumps),
    )
    if np.isnan(times).any():
        raise NotAbsorbing("a simulated path exceeded the jump limit without absorbing")
    z = stats.norm.ppf(0.975)

    def summary(x):
        mean = float(x.mean())
        var = float(x.var(ddof=1)) if runs > 1 else math.nan
        return mean, var, float(z * math.sqrt(var / runs)) if runs > 1 else math.nan

    mt, vt, ht = summary(times)
    if has_reward:
        mr, vr, hr = summary(rewards)
    else:
        mr = vr = hr = None
    return MonteCarloStats(runs, mt, vt, ht, mr, vr, hr)
