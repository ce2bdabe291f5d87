"""Compiled kernels of the mobility simulator.

Nodes live in flat arrays (position ``x, y``, velocity ``vx, vy``, mode,
community, event time ``tend`` and transitional target ``tx, ty``).
Modes: 0 roaming, 1 local, 2 transitional.  For local and roaming nodes
``tend`` is the end of the current travel; for transitional nodes it is
the arrival time at the target.

Movement inside a square region with mirror reflection is computed in
closed form by folding the unreflected coordinate, so a node can be
advanced over any interval exactly, with travel ends handled at their
exact times.

The random number generator is numba's per-thread NumPy-compatible
generator, reseeded at the start of every replication.

Parameter vector ``par``: ``[L, L_c, R, alpha, beta, P_r, P_l, v_min,
v_max, v_trans]``.
"""
from __future__ import annotations

import math

import numba
import numpy as np

ROAMING, LOCAL, TRANSITIONAL = 0, 1, 2
_L, _LC, _R, _ALPHA, _BETA, _PR, _PL, _VMIN, _VMAX, _VTRANS = range(10)
_EPS = 1e-9


@numba.njit(cache=True)
def fold(p, v, tau, lo, w):
    """Position and velocity after moving ``tau`` seconds in ``[lo, lo + w]``."""
    s = p - lo + v * tau
    k = math.floor(s / w)
    r = s - k * w
    if r < 0.0:
        r = 0.0
    elif r > w:
        r = w
    if k - 2.0 * math.floor(k / 2.0) == 0.0:
        return lo + r, v
    return lo + w - r, -v


@numba.njit(cache=True)
def region(i, mode, comm, par, centers):
    """Lower-left corner and edge length of the region node ``i`` moves in."""
    if mode[i] == LOCAL:
        h = par[_LC] / 2.0
        return centers[comm[i], 0] - h, centers[comm[i], 1] - h, par[_LC]
    return 0.0, 0.0, par[_L]


@numba.njit(cache=True)
def inside_community(px, py, j, par, centers):
    h = par[_LC] / 2.0
    return (abs(px - centers[j, 0]) <= h) and (abs(py - centers[j, 1]) <= h)


@numba.njit(cache=True)
def new_travel(i, t, local, vx, vy, mode, tend, par):
    speed = par[_VMAX] - np.random.random() * (par[_VMAX] - par[_VMIN])  # (v_min, v_max]
    heading = 2.0 * math.pi * np.random.random()
    vx[i] = speed * math.cos(heading)
    vy[i] = speed * math.sin(heading)
    if local:
        mode[i] = LOCAL
        tend[i] = t + np.random.exponential(1.0 / par[_ALPHA])
    else:
        mode[i] = ROAMING
        tend[i] = t + np.random.exponential(1.0 / par[_BETA])


@numba.njit(cache=True)
def travel_end(i, t, x, y, vx, vy, mode, comm, tend, tx, ty, par, centers, psel_cum):
    """Mode decision of node ``i`` at the end of its travel (time ``t``)."""
    if mode[i] == LOCAL:
        if np.random.random() < par[_PR]:
            new_travel(i, t, False, vx, vy, mode, tend, par)
        else:
            new_travel(i, t, True, vx, vy, mode, tend, par)
    elif mode[i] == ROAMING:
        if np.random.random() < par[_PL]:
            u = np.random.random() * psel_cum[-1]
            j = 0
            while j < len(psel_cum) - 1 and psel_cum[j] <= u:
                j += 1
            comm[i] = j
            if inside_community(x[i], y[i], j, par, centers):
                new_travel(i, t, True, vx, vy, mode, tend, par)
            else:
                h = par[_LC] / 2.0
                tx[i] = centers[j, 0] - h + par[_LC] * np.random.random()
                ty[i] = centers[j, 1] - h + par[_LC] * np.random.random()
                dx, dy = tx[i] - x[i], ty[i] - y[i]
                dist = math.sqrt(dx * dx + dy * dy)
                mode[i] = TRANSITIONAL
                if dist > 0.0:
                    vx[i] = par[_VTRANS] * dx / dist
                    vy[i] = par[_VTRANS] * dy / dist
                else:
                    vx[i] = 0.0
                    vy[i] = 0.0
                tend[i] = t + dist / par[_VTRANS]
        else:
            new_travel(i, t, False, vx, vy, mode, tend, par)
    else:  # arrival of a transitional travel
        x[i] = tx[i]
        y[i] = ty[i]
        new_travel(i, t, True, vx, vy, mode, tend, par)


@numba.njit(cache=True)
def advance_node(i, t, h, x, y, vx, vy, mode, comm, tend, tx, ty, par, centers, psel_cum):
    """Move node ``i`` from ``t`` to ``t + h``, handling every event inside."""
    t_stop = t + h
    while True:
        ev = tend[i]
        stop = ev if ev < t_stop else t_stop
        tau = stop - t
        if tau > 0.0:
            if mode[i] == TRANSITIONAL:
                x[i] += vx[i] * tau
                y[i] += vy[i] * tau
            else:
                lo_x, lo_y, w = region(i, mode, comm, par, centers)
                x[i], vx[i] = fold(x[i], vx[i], tau, lo_x, w)
                y[i], vy[i] = fold(y[i], vy[i], tau, lo_y, w)
        t = stop
        if ev <= t_stop:
            travel_end(i, ev, x, y, vx, vy, mode, comm, tend, tx, ty, par, centers, psel_cum)
        else:
            break


@numba.njit(cache=True)
def advance_single(state, seed, h, par, centers, psel_cum):
    """Advance one node; ``state`` = [x, y, vx, vy, mode, comm, tend, tx, ty, t]."""
    np.random.seed(seed)
    x = np.array([state[0]])
    y = np.array([state[1]])
    vx = np.array([state[2]])
    vy = np.array([state[3]])
    mode = np.array([np.int64(state[4])])
    comm = np.array([np.int64(state[5])])
    tend = np.array([state[6]])
    tx = np.array([state[7]])
    ty = np.array([state[8]])
    advance_node(0, state[9], h, x, y, vx, vy, mode, comm, tend, tx, ty, par, centers, psel_cum)
    return np.array([x[0], y[0], vx[0], vy[0], float(mode[0]), float(comm[0]), tend[0],
                     tx[0], ty[0], state[9] + h])


# ----------------------------------------------------------------------------
# epidemic forwarding
# ----------------------------------------------------------------------------


@numba.njit(cache=True)
def epidemic_run(M, par, centers, psel_cum, tx_delay, dt, seed, max_time):
    """One replication; node 0 is the source, node 1 the destination.

    Returns ``(delay, transmissions, infection_time)``; ``infection_time``
    is NaN for nodes not infected when the destination completes reception.
    """
    np.random.seed(seed)
    L, R = par[_L], par[_R]
    vcap = max(par[_VMAX], par[_VTRANS])
    x = np.empty(M)
    y = np.empty(M)
    vx = np.empty(M)
    vy = np.empty(M)
    mode = np.zeros(M, dtype=np.int64)
    comm = np.zeros(M, dtype=np.int64)
    tend = np.empty(M)
    tx = np.zeros(M)
    ty = np.zeros(M)
    for i in range(M):
        x[i] = L * np.random.random()
        y[i] = L * np.random.random()
        new_travel(i, 0.0, False, vx, vy, mode, tend, par)
    infected = np.zeros(M, dtype=np.bool_)
    pending = np.full(M, np.inf)
    inf_time = np.full(M, np.nan)
    infected[0] = True
    inf_time[0] = 0.0
    completed = 0
    t = 0.0
    R2 = R * R
    while t <= max_time:
        # 1. deliver every transfer due now, in node-id order
        for j in range(M):
            if pending[j] <= t + _EPS:
                infected[j] = True
                inf_time[j] = pending[j]
                pending[j] = np.inf
                completed += 1
                if j == 1:
                    return inf_time[j], completed, inf_time
        # 2. new contacts between infected and idle susceptible nodes
        dmin2 = np.inf
        for i in range(M):
            if not infected[i]:
                continue
            for j in range(M):
                if infected[j] or pending[j] < np.inf:
                    continue
                dx = x[i] - x[j]
                dy = y[i] - y[j]
                d2 = dx * dx + dy * dy
                if d2 <= R2:
                    pending[j] = t + tx_delay
                elif d2 < dmin2:
                    dmin2 = d2
        # 3. step size: fine steps near contacts, safe jumps otherwise
        h = dt
        if dmin2 < np.inf:
            safe = (math.sqrt(dmin2) - R) / (2.0 * vcap)
            if safe > h:
                h = safe
        else:
            h = np.inf
        next_c = np.inf
        for j in range(M):
            if pending[j] < next_c:
                next_c = pending[j]
        exact = False
        if next_c - t <= h:
            h = next_c - t
            exact = True
        if h == np.inf:
            break  # nobody left to infect and nothing pending
        if h > 0.0:
            for i in range(M):
                advance_node(i, t, h, x, y, vx, vy, mode, comm, tend, tx, ty, par, centers, psel_cum)
        t = next_c if exact else t + h
    return np.nan, completed, inf_time


@numba.njit(cache=True)
def epidemic_batch(M, par, centers, psel_cum, tx_delay, dt, seeds, max_time):
    runs = len(seeds)
    delays = np.empty(runs)
    trans = np.empty(runs, dtype=np.int64)
    times = np.empty((runs, M))
    for r in range(runs):
        d, k, it = epidemic_run(M, par, centers, psel_cum, tx_delay, dt, seeds[r], max_time)
        delays[r] = d
        trans[r] = k
        times[r] = it
    return delays, trans, times


# ----------------------------------------------------------------------------
# first-meeting experiments
# ----------------------------------------------------------------------------


@numba.njit(cache=True)
def first_meeting_run(init_mode, par, centers, dt, seed, max_time):
    """Time until node 0 first comes within range of any other node.

    ``init_mode[i]`` is ROAMING (uniform start in the common area) or
    LOCAL (uniform start in community 0).  Placement is redrawn until node
    0 starts out of range of all others.  Modes never change: callers pass
    ``P_r = P_l = 0`` in ``par``.
    """
    np.random.seed(seed)
    K = len(init_mode)
    L, Lc, R = par[_L], par[_LC], par[_R]
    R2 = R * R
    x = np.empty(K)
    y = np.empty(K)
    vx = np.empty(K)
    vy = np.empty(K)
    mode = np.zeros(K, dtype=np.int64)
    comm = np.zeros(K, dtype=np.int64)
    tend = np.empty(K)
    tx = np.zeros(K)
    ty = np.zeros(K)
    psel_cum = np.ones(1)
    while True:
        for i in range(K):
            if init_mode[i] == LOCAL:
                x[i] = centers[0, 0] - Lc / 2.0 + Lc * np.random.random()
                y[i] = centers[0, 1] - Lc / 2.0 + Lc * np.random.random()
            else:
                x[i] = L * np.random.random()
                y[i] = L * np.random.random()
        ok = True
        for k in range(1, K):
            dx = x[0] - x[k]
            dy = y[0] - y[k]
            if dx * dx + dy * dy <= R2:
                ok = False
                break
        if ok:
            break
    for i in range(K):
        new_travel(i, 0.0, init_mode[i] == LOCAL, vx, vy, mode, tend, par)
    vcap = par[_VMAX]
    t = 0.0
    while t <= max_time:
        dmin2 = np.inf
        for k in range(1, K):
            dx = x[0] - x[k]
            dy = y[0] - y[k]
            d2 = dx * dx + dy * dy
            if d2 < dmin2:
                dmin2 = d2
        if dmin2 <= R2:
            return t
        h = (math.sqrt(dmin2) - R) / (2.0 * vcap)
        if h < dt:
            h = dt
        for i in range(K):
            advance_node(i, t, h, x, y, vx, vy, mode, comm, tend, tx, ty, par, centers, psel_cum)
        t += h
    return np.nan


@numba.njit(cache=True)
def first_meeting_batch(init_mode, par, centers, dt, seeds, max_time):
    out = np.empty(len(seeds))
    for r in range(len(seeds)):
        out[r] = first_meeting_run(init_mode, par, centers, dt, seeds[r], max_time)
    return out
