"""Stochastic reward net representation.

Guards, rates, weights, rewards and the absorbing predicate are all
*batch* functions: they receive an integer array of shape ``(K, P)``
holding ``K`` markings and return one value per marking.  Plain numbers
are accepted wherever a function is expected and act as constants.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

BatchFn = Callable[[np.ndarray], np.ndarray]
Value = Union[BatchFn, float, int]
Arc = tuple[int, int]


@dataclass(frozen=True)
class Place:
    id: int
    name: str
    initial_tokens: int = 0


@dataclass(frozen=True)
class TimedTransition:
    name: str
    inputs: tuple[Arc, ...]
    outputs: tuple[Arc, ...]
    rate: Value
    guard: BatchFn | None = None


@dataclass(frozen=True)
class ImmediateTransition:
    name: str
    inputs: tuple[Arc, ...]
    outputs: tuple[Arc, ...]
    weight: Value = 1.0
    guard: BatchFn | None = None


def evaluate(value: Value | None, markings: np.ndarray, default: float = 1.0) -> np.ndarray:
    """Evaluate a batch function (or constant) on ``markings``."""
    k = markings.shape[0]
    if value is None:
        return np.full(k, default)
    if callable(value):
        out = np.asarray(value(markings), dtype=float)
        if out.ndim == 0:
            out = np.full(k, float(out))
        return out
    return np.full(k, float(value))


@dataclass(frozen=True)
class SrnModel:
    """A stochastic reward net.

    ``rewards`` maps reward names to batch functions; ``default_reward``
    selects the one a solver uses when none is named.  ``meta`` carries
    builder-specific information (engine kind, N, M, conservation
    groups) and is never interpreted by the expansion engine.
    """

    places: tuple[Place, ...]
    timed: tuple[TimedTransition, ...]
    immediate: tuple[ImmediateTransition, ...] = ()
    rewards: Mapping[str, Value] = field(default_factory=dict)
    absorbing: BatchFn | None = None
    default_reward: str | None = None
    meta: Mapping[str, object] = field(default_factory=dict)

    @property
    def n_places(self) -> int:
        return len(self.places)

    @property
    def initial_marking(self) -> np.ndarray:
        return np.array([p.initial_tokens for p in self.places], dtype=np.int64)

    def place_index(self, name: str) -> int:
        for p in self.places:
            if p.name == name:
                return p.id
        raise KeyError(name)

    def _delta(self, arcs_in: Sequence[Arc], arcs_out: Sequence[Arc]) -> np.ndarray:
        d = np.zeros(self.n_places, dtype=np.int64)
        for pid, mult in arcs_in:
            d[pid] -= mult
        for pid, mult in arcs_out:
            d[pid] += mult
        return d

    def timed_delta(self, t: TimedTransition) -> np.ndarray:
        return self._delta(t.inputs, t.outputs)

    def immediate_delta(self, t: ImmediateTransition) -> np.ndarray:
        return self._delta(t.inputs, t.outputs)


def arcs_satisfied(arcs: Sequence[Arc], markings: np.ndarray) -> np.ndarray:
    ok = np.ones(markings.shape[0], dtype=bool)
    for pid, mult in arcs:
        ok &= markings[:, pid] >= mult
    return ok


def timed_enabling(t: TimedTransition, markings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(enabled, rate)``; a zero rate counts as disabled."""
    en = arcs_satisfied(t.inputs, markings)
    if t.guard is not None and en.any():
        en &= np.asarray(t.guard(markings), dtype=bool)
    rate = np.zeros(markings.shape[0])
    if en.any():
        rate[en] = evaluate(t.rate, markings[en])
        en &= rate > 0.0
    return en, rate


def immediate_enabling(t: ImmediateTransition, markings: np.ndarray) -> np.ndarray:
    en = arcs_satisfied(t.inputs, markings)
    if t.guard is not None and en.any():
        en &= np.asarray(t.guard(markings), dtype=bool)
    return en


def is_vanishing(model: SrnModel, markings: np.ndarray) -> np.ndarray:
    van = np.zeros(markings.shape[0], dtype=bool)
    for t in model.immediate:
        van |= immediate_enabling(t, markings)
    return van


def validate_model(model: SrnModel, explore_limit: int = 20_000) -> list[str]:
    """Return a list of human-readable problems; empty means the model is sound.

    Structural checks run first.  When those pass, up to ``explore_limit``
    tangible markings are explored and every vanishing marking met on the
    way is checked for weights summing to one.
    """
    diags: list[str] = []
    n = model.n_places
    for i, p in enumerate(model.places):
        if p.id != i:
            diags.append(f"place {p.name!r} has id {p.id}, expected {i}")
        if p.initial_tokens < 0:
            diags.append(f"place {p.name!r} has negative initial tokens")
    for kind, group in (("timed", model.timed), ("immediate", model.immediate)):
        for t in group:
            for pid, mult in (*t.inputs, *t.outputs):
                if not 0 <= pid < n:
                    diags.append(f"dangling arc: {kind} transition {t.name!r} references place {pid}")
                if mult <= 0:
                    diags.append(f"{kind} transition {t.name!r} has non-positive multiplicity {mult}")
    if diags:
        return diags

    m0 = model.initial_marking[None, :]
    if is_vanishing(model, m0)[0]:
        diags.append("initial marking is vanishing (an immediate transition is enabled)")

    from .expand import _explore  # local import: expand depends on this module

    weight_issues: list[str] = []
    _explore(model, max_states=explore_limit, weight_issues=weight_issues, stop_at_limit=True)
    diags.extend(dict.fromkeys(weight_issues))  # dedupe, keep order
    return diags
