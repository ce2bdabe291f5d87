"""Pieces shared by the monolithic and folded builders."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..config import MeetingRates
from ..errors import InsufficientQueue
from ..srn.net import BatchFn, ImmediateTransition, Place, TimedTransition, Value

_ROUND_EPS = 1e-12
_MEASURE_DECIMALS = 12


def r_meet_hat(n, rates: MeetingRates, M: int):
    """Piecewise-linear first-meeting rate of one roaming node with ``n`` local nodes.

    Parameters
    ----------
    n : int or array of int
        Size of the local set, ``0 <= n <= M - 1``.
    rates : MeetingRates
        Supplies ``gamma`` (one node) and ``eta`` (``M - 1`` nodes).
    M : int
        Number of nodes in the network.

    Returns
    -------
    float or ndarray
        ``0`` for ``n = 0``, ``gamma`` for ``n = 1`` and the linear
        interpolation towards ``eta`` at ``n = M - 1`` beyond that.
    """
    arr = np.asarray(n)
    if np.any(arr < 0) or np.any(arr > M - 1):
        raise ValueError(f"r_meet_hat: n must lie in [0, {M - 1}], got {n!r}")
    slope = (rates.eta - rates.gamma) / (M - 2) if M > 2 else 0.0
    out = np.where(arr == 0, 0.0, rates.gamma + np.maximum(arr - 1, 0) * slope)
    return float(out) if out.ndim == 0 else out


def _nint(x: float) -> int:
    """Nearest integer, halves rounded away from zero."""
    return int(math.floor(abs(x) + 0.5 + _ROUND_EPS)) * (1 if x >= 0 else -1)


def approx_local_counts(
    tokens: int,
    P_sel: Sequence[float],
    source_community: int | None = None,
    variant: str = "susceptible",
) -> np.ndarray:
    """Distribute ``tokens`` folded local nodes over the communities.

    Each community first receives the nearest integer to
    ``P_sel[i] * tokens``; the surplus ``d`` of that rounding is then
    removed from (``d > 0``) or added to (``d < 0``) the communities whose
    indicator was rounded up (respectively down), largest rounding error
    first, ties by ascending index.  For ``variant="infected"`` the
    community hosting the source in local mode (``source_community``,
    0-based) gets one extra node.

    Raises
    ------
    InsufficientQueue
        If the surplus exceeds the number of eligible communities.
    """
    if tokens < 0:
        raise ValueError("tokens must be non-negative")
    if variant not in ("infected", "susceptible"):
        raise ValueError(f"unknown variant {variant!r}")
    p = [float(v) for v in P_sel]
    ind = [pi * tokens for pi in p]
    nhat = [_nint(x) for x in ind]
    d = sum(nhat) - tokens
    q_plus, q_minus = [], []
    for i, (x, nh) in enumerate(zip(ind, nhat)):
        (q_plus if x > nh else q_minus).append(i)
    key = lambda i: (-round(abs(ind[i] - nhat[i]), _MEASURE_DECIMALS), i)  # noqa: E731
    q_plus.sort(key=key)
    q_minus.sort(key=key)
    if d > len(q_minus) or -d > len(q_plus):
        raise InsufficientQueue(f"cannot absorb rounding surplus d={d} for tokens={tokens}, P_sel={p}")
    for k in q_minus[:max(d, 0)]:
        nhat[k] -= 1
    for k in q_plus[:max(-d, 0)]:
        nhat[k] += 1
    if variant == "infected" and source_community is not None:
        nhat[source_community] += 1
    return np.array(nhat, dtype=np.int64)


def local_count_tables(M: int, P_sel: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Memoized :func:`approx_local_counts` results for every token count up to ``M``.

    Returns ``(sus, inf)`` with ``sus[k]`` the susceptible estimate for
    ``k`` tokens (shape ``(M + 1, N)``) and ``inf[k, s]`` the infected
    estimate when the source is local in community ``s - 1`` (``s = 0``:
    source not local), shape ``(M + 1, N + 1, N)``.
    """
    N = len(P_sel)
    sus = np.stack([approx_local_counts(k, P_sel) for k in range(M + 1)])
    inf = np.empty((M + 1, N + 1, N), dtype=np.int64)
    for k in range(M + 1):
        inf[k, 0] = sus[k]
        for s in range(N):
            inf[k, s + 1] = approx_local_counts(k, P_sel, s, "infected")
    return sus, inf


@dataclass
class NetBuilder:
    """Small helper for assembling an :class:`SrnModel` by place name."""

    places: list[Place] = field(default_factory=list)
    timed: list[TimedTransition] = field(default_factory=list)
    immediate: list[ImmediateTransition] = field(default_factory=list)
    _ids: dict[str, int] = field(default_factory=dict)

    def place(self, name: str, tokens: int = 0) -> int:
        pid = len(self.places)
        self.places.append(Place(pid, name, tokens))
        self._ids[name] = pid
        return pid

    def __getitem__(self, name: str) -> int:
        return self._ids[name]

    def add_timed(self, name: str, src: str, dst: str, rate: Value, guard: BatchFn | None = None):
        self.timed.append(TimedTransition(name, ((self[src], 1),), ((self[dst], 1),), rate, guard))

    def add_immediate(self, name: str, src: str, dst: str, weight: Value):
        self.immediate.append(ImmediateTransition(name, ((self[src], 1),), ((self[dst], 1),), weight))


def count_rate(pid: int, coeff: float) -> BatchFn:
    """Rate ``#P * coeff``."""
    return lambda m: m[:, pid] * coeff


def not_delivered(des_pid: int) -> BatchFn:
    """The guard ``#P_inf_des == 0``."""
    return lambda m: m[:, des_pid] == 0
