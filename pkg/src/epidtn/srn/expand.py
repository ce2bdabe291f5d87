"""Tangible reachability expansion of an :class:`SrnModel` into a CTMC.

The expansion is a breadth-first search over batches of markings.  Each
BFS level evaluates every timed transition on the whole frontier at once,
pushes the successors through any chain of immediate firings (vanishing
markings are never stored), and deduplicates the resulting tangible
markings against the set seen so far.  Markings are stored as small
unsigned integers and compared through their raw bytes, which gives a
deterministic, order-preserving state numbering.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import InvalidModel, StateBudgetExceeded, VanishingLoop
from .net import SrnModel, evaluate, immediate_enabling, timed_enabling

log = logging.getLogger(__name__)

DEFAULT_MAX_STATES = 50_000_000
WEIGHT_TOL = 1e-9
_MAX_IMMEDIATE_DEPTH = 10_000
_CHUNK = 20_000
_IDX = np.int32  # state ids; the default budget stays far below 2**31


@dataclass(frozen=True, eq=False)
class Ctmc:
    """Absorbing CTMC produced by :func:`expand_reachability`.

    ``rates`` holds only the off-diagonal rates; the generator is
    ``rates - diag(exit_rates)`` and is built on demand by :meth:`generator`.
    """

    markings: np.ndarray
    rates: sp.csr_matrix
    initial: np.ndarray
    absorbing: np.ndarray
    rewards: Mapping[str, np.ndarray] = field(default_factory=dict)
    place_names: tuple[str, ...] = ()
    default_reward: str | None = None
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        exit_rates = np.asarray(self.rates.sum(axis=1)).ravel()
        object.__setattr__(self, "exit_rates", exit_rates)
        for arr in (self.markings, self.initial, self.absorbing, exit_rates, *self.rewards.values()):
            arr.setflags(write=False)

    @property
    def n_states(self) -> int:
        return self.rates.shape[0]

    @property
    def n_transitions(self) -> int:
        return self.rates.nnz

    def generator(self) -> sp.csr_matrix:
        return (self.rates - sp.diags(self.exit_rates)).tocsr()

    def reward(self, name: str | np.ndarray | None = None) -> np.ndarray:
        """Per-state reward vector, looked up by name or passed through."""
        if isinstance(name, np.ndarray):
            if name.shape != (self.n_states,):
                raise ValueError("reward vector has the wrong length")
            return name
        key = name if name is not None else self.default_reward
        if key is None:
            raise KeyError("no reward named and no default reward set")
        return self.rewards[key]

    @property
    def initial_state(self) -> int:
        nz = np.flatnonzero(self.initial)
        if len(nz) != 1:
            raise ValueError("initial distribution is not a point mass")
        return int(nz[0])


def _key_view(m: np.ndarray) -> np.ndarray:
    m = np.ascontiguousarray(m)
    return m.view(f"S{m.shape[1] * m.itemsize}").ravel()


class _StateStore:
    """Growing marking table with sorted byte keys for membership tests."""

    def __init__(self, n_places: int):
        self.n_places = n_places
        self.dtype = np.dtype(np.uint8)
        self.chunks: list[np.ndarray] = []
        self.count = 0
        self.skeys = np.empty(0, dtype=f"S{n_places}")
        self.sids = np.empty(0, dtype=np.int64)

    def _fit_dtype(self, m: np.ndarray) -> None:
        if m.size and m.max() > np.iinfo(self.dtype).max:
            if self.dtype == np.uint16 or m.max() > np.iinfo(np.uint16).max:
                raise InvalidModel("a place holds more than 65535 tokens")
            log.debug("widening marking storage to uint16")
            self.dtype = np.dtype(np.uint16)
            self.chunks = [c.astype(np.uint16) for c in self.chunks]
            allm = self.all()
            keys = _key_view(allm)
            order = np.argsort(keys, kind="stable")
            self.skeys = keys[order]
            self.sids = order.astype(np.int64)
        if m.size and m.min() < 0:
            raise InvalidModel("negative token count produced by a firing")

    def keys(self, m: np.ndarray) -> np.ndarray:
        return _key_view(m.astype(self.dtype, copy=False))

    def lookup_or_add(self, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map markings to state ids, adding unseen ones.

        Returns ``(ids, new_ids)`` where ``new_ids`` are the freshly added
        states in ascending order.
        """
        self._fit_dtype(m)
        keys = self.keys(m)
        uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        pos = np.searchsorted(self.skeys, uniq)
        found = np.zeros(len(uniq), dtype=bool)
        inside = pos < len(self.skeys)
        found[inside] = self.skeys[pos[inside]] == uniq[inside]
        uid = np.empty(len(uniq), dtype=np.int64)
        uid[found] = self.sids[pos[found]]
        fresh = np.flatnonzero(~found)
        # number fresh states in order of first appearance for a stable BFS order
        fresh = fresh[np.argsort(first[fresh], kind="stable")]
        new_ids = np.arange(self.count, self.count + len(fresh), dtype=np.int64)
        uid[fresh] = new_ids
        if len(fresh):
            self.chunks.append(m[first[fresh]].astype(self.dtype))
            self.count += len(fresh)
            order = np.argsort(uniq[fresh], kind="stable")
            ins = np.searchsorted(self.skeys, uniq[fresh][order])
            self.skeys = np.insert(self.skeys, ins, uniq[fresh][order])
            self.sids = np.insert(self.sids, ins, new_ids[order])
        return uid[inv.ravel()], new_ids

    def all(self) -> np.ndarray:
        if not self.chunks:
            return np.empty((0, self.n_places), dtype=self.dtype)
        if len(self.chunks) > 1:
            self.chunks = [np.concatenate(self.chunks)]
        return self.chunks[0]

    def rows(self, ids: np.ndarray) -> np.ndarray:
        return self.all()[ids]


def _resolve_vanishing(
    model: SrnModel,
    imm_deltas: Sequence[np.ndarray],
    origin: np.ndarray,
    markings: np.ndarray,
    prob: np.ndarray,
    weight_issues: list[str] | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Push markings through immediate firings until all are tangible.

    Returns the tangible markings with the index of the row they descend
    from and the accumulated path probability.
    """
    if not model.immediate:
        return origin, markings, prob
    out_o, out_m, out_p = [], [], []
    hist: list[np.ndarray] = []  # per-depth byte keys of the vanishing ancestors
    hist_rows: list[np.ndarray] = []
    depth = 0
    while len(markings):
        en = np.column_stack([immediate_enabling(t, markings) for t in model.immediate])
        van = en.any(axis=1)
        if not van.all():
            keep = ~van
            out_o.append(origin[keep])
            out_m.append(markings[keep])
            out_p.append(prob[keep])
        if not van.any():
            break
        sel = np.flatnonzero(van)
        markings, origin, prob, en = markings[sel], origin[sel], prob[sel], en[sel]
        hist_rows = [h[sel] for h in hist_rows]
        keys = _key_view(markings.astype(np.int64))
        for h, hr in zip(hist, hist_rows):
            if np.any(h[hr] == keys):
                raise VanishingLoop("immediate firings revisit a vanishing marking")
        depth += 1
        if depth > _MAX_IMMEDIATE_DEPTH:
            raise VanishingLoop("immediate firing chain exceeds the depth limit")

        w = np.zeros(en.shape)
        for i, t in enumerate(model.immediate):
            rows = en[:, i]
            if rows.any():
                w[rows, i] = evaluate(t.weight, markings[rows])
        if np.any(w < 0):
            raise InvalidModel("negative immediate weight")
        total = w.sum(axis=1)
        bad = np.abs(total - 1.0) > WEIGHT_TOL
        if bad.any():
            names = [model.immediate[i].name for i in np.flatnonzero(en[np.flatnonzero(bad)[0]])]
            msg = f"weights sum ≠ 1 (sum={total[bad][0]:.12g}) over immediate transitions {names}"
            if weight_issues is None:
                raise InvalidModel(msg)
            weight_issues.append(msg)
        if np.any(total <= 0):
            raise InvalidModel("vanishing marking with no positively weighted immediate transition")
        p = w / total[:, None]
        rows, cols = np.nonzero(p > 0)
        step = np.stack(imm_deltas)[cols]
        hist.append(keys)
        hist_rows = [hr[rows] for hr in hist_rows] + [rows]
        markings = markings[rows] + step
        origin = origin[rows]
        prob = prob[rows] * p[rows, cols]
        if markings.size and markings.min() < 0:
            raise InvalidModel("negative token count produced by an immediate firing")
    if not out_o:
        return (np.empty(0, dtype=np.int64), np.empty((0, model.n_places), dtype=np.int64),
                np.empty(0))
    return np.concatenate(out_o), np.concatenate(out_m), np.concatenate(out_p)


@dataclass
class _Exploration:
    markings: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    rate: np.ndarray
    initial: np.ndarray
    absorbing: np.ndarray
    complete: bool


def _explore(
    model: SrnModel,
    max_states: int | None = DEFAULT_MAX_STATES,
    weight_issues: list[str] | None = None,
    stop_at_limit: bool = False,
) -> _Exploration:
    n_places = model.n_places
    store = _StateStore(n_places)
    timed_deltas = [model.timed_delta(t) for t in model.timed]
    imm_deltas = [model.immediate_delta(t) for t in model.immediate]

    m0 = model.initial_marking[None, :]
    o0, mt0, p0 = _resolve_vanishing(model, imm_deltas, np.zeros(1, dtype=np.int64), m0,
                                     np.ones(1), weight_issues)
    ids0, frontier_ids = store.lookup_or_add(mt0)

    src_parts: list[np.ndarray] = []
    dst_parts: list[np.ndarray] = []
    rate_parts: list[np.ndarray] = []
    absorbing_parts: list[np.ndarray] = []
    absorbing_ids: list[np.ndarray] = []
    complete = True
    level = 0
    while len(frontier_ids):
        level += 1
        frontier = store.rows(frontier_ids).astype(np.int64)
        if model.absorbing is not None:
            absorb = np.asarray(model.absorbing(frontier), dtype=bool)
        else:
            absorb = np.zeros(len(frontier), dtype=bool)
        absorbing_ids.append(frontier_ids)
        absorbing_parts.append(absorb)
        active = np.flatnonzero(~absorb)
        new_frontier = []
        # bounded chunks keep the successor arrays of a wide level small
        for start in range(0, len(active), _CHUNK):
            sel = active[start:start + _CHUNK]
            fa = frontier[sel]
            fids = frontier_ids[sel]
            origin_parts, succ_parts, r_parts = [], [], []
            for t, delta in zip(model.timed, timed_deltas):
                en, rate = timed_enabling(t, fa)
                idx = np.flatnonzero(en)
                if len(idx):
                    origin_parts.append(fids[idx])
                    succ_parts.append(fa[idx] + delta)
                    r_parts.append(rate[idx])
            if not origin_parts:
                continue
            origin = np.concatenate(origin_parts)
            succ = np.concatenate(succ_parts)
            rates = np.concatenate(r_parts)
            del origin_parts, succ_parts, r_parts
            row = np.arange(len(origin))
            row, tang, prob = _resolve_vanishing(model, imm_deltas, row, succ, np.ones(len(row)),
                                                 weight_issues)
            del succ
            src = origin[row]
            rates = rates[row] * prob

            if stop_at_limit and max_states is not None and store.count >= max_states:
                complete = False
                break
            dst, fresh = store.lookup_or_add(tang)
            new_frontier.append(fresh)
            if max_states is not None and store.count > max_states:
                if stop_at_limit:
                    complete = False
                    break
                raise StateBudgetExceeded(
                    f"tangible state count exceeded the budget of {max_states:,} states"
                )
            keep = dst != src
            src_parts.append(src[keep].astype(_IDX))
            dst_parts.append(dst[keep].astype(_IDX))
            rate_parts.append(rates[keep])
        if not complete:
            break
        frontier_ids = (np.concatenate(new_frontier) if new_frontier
                        else np.empty(0, dtype=np.int64))
        if level % 50 == 0:
            log.debug("level %d: %d states, frontier %d", level, store.count, len(frontier_ids))

    n = store.count
    init = np.bincount(ids0, weights=p0, minlength=n)
    absorbing = np.zeros(n, dtype=bool)
    if absorbing_ids:
        absorbing[np.concatenate(absorbing_ids)] = np.concatenate(absorbing_parts)
    if n >= 2**31 - 1:
        raise StateBudgetExceeded("state ids exceed the 32-bit index range")

    def cat(parts, dt):
        out = np.concatenate(parts).astype(dt, copy=False) if parts else np.empty(0, dt)
        parts.clear()  # release the pieces before the next concatenation
        return out

    return _Exploration(
        markings=store.all(),
        src=cat(src_parts, _IDX),
        dst=cat(dst_parts, _IDX),
        rate=cat(rate_parts, np.float64),
        initial=init,
        absorbing=absorbing,
        complete=complete,
    )


def expand_reachability(model: SrnModel, max_states: int | None = DEFAULT_MAX_STATES) -> Ctmc:
    """Expand ``model`` into its tangible-marking CTMC.

    Parameters
    ----------
    model : SrnModel
        The net to expand.  Its absorbing predicate marks states that get
        no outgoing transitions.
    max_states : int or None
        Cap on the number of tangible markings; ``None`` disables it.

    Raises
    ------
    VanishingLoop
        If a chain of immediate firings revisits a vanishing marking.
    StateBudgetExceeded
        If the tangible state count passes ``max_states``.
    InvalidModel
        If immediate weights on a reachable decision do not sum to one.
    """
    ex = _explore(model, max_states=max_states)
    n = len(ex.markings)
    rates = sp.csr_matrix((ex.rate, (ex.src, ex.dst)), shape=(n, n))
    ex.rate = ex.src = ex.dst = None  # free the edge lists early
    rates.sum_duplicates()
    rates.eliminate_zeros()
    absorbing = ex.absorbing.copy()
    absorbing |= np.diff(rates.indptr) == 0

    rewards = {}
    for name, fn in model.rewards.items():
        vals = np.empty(n)
        for start in range(0, n, 1_000_000):
            chunk = ex.markings[start:start + 1_000_000].astype(np.int64)
            vals[start:start + len(chunk)] = evaluate(fn, chunk, default=0.0)
        rewards[name] = vals
    return Ctmc(
        markings=ex.markings,
        rates=rates,
        initial=ex.initial,
        absorbing=absorbing,
        rewards=rewards,
        place_names=tuple(p.name for p in model.places),
        default_reward=model.default_reward,
        meta=dict(model.meta),
    )


def conserve_tokens_check(ctmc: Ctmc, groups: Sequence[tuple[Sequence[int], int]]) -> bool:
    """True iff every marking holds exactly ``total`` tokens in each place group."""
    m = ctmc.markings
    for places, total in groups:
        idx = np.asarray(list(places), dtype=np.int64)
        for start in range(0, len(m), 1_000_000):
            sums = m[start:start + 1_000_000][:, idx].astype(np.int64).sum(axis=1)
            if np.any(sums != total):
                return False
    return True
