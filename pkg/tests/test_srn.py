import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epidtn.errors import InvalidModel, StateBudgetExceeded, VanishingLoop
from epidtn.models import build_folded, build_monolithic
from epidtn.srn import (
    ImmediateTransition,
    Place,
    SrnModel,
    TimedTransition,
    conserve_tokens_check,
    expand_reachability,
    read_edge_list,
    validate_model,
    write_edge_list,
)


def two_place_net(rate=0.01):
    return SrnModel(
        places=(Place(0, "a", 1), Place(1, "b", 0)),
        timed=(TimedTransition("t", ((0, 1),), ((1, 1),), rate),),
        absorbing=lambda m: m[:, 1] == 1,
    )


def test_minimal_net_gives_two_state_chain():
    c = expand_reachability(two_place_net())
    assert c.n_states == 2
    assert c.absorbing.tolist() == [False, True]
    assert c.rates[0, 1] == pytest.approx(0.01)


def test_generator_rows_sum_to_zero(cfg35, rates):
    c = expand_reachability(build_monolithic(cfg35, rates))
    q = c.generator()
    assert np.max(np.abs(np.asarray(q.sum(axis=1)).ravel())) < 1e-12
    off = q - __import__("scipy").sparse.diags(q.diagonal())
    assert off.min() >= 0
    # no outgoing rate implies absorbing
    assert np.all(c.absorbing[c.exit_rates == 0])


def test_validate_reference_model_is_clean(cfg35, rates):
    assert validate_model(build_monolithic(cfg35, rates)) == []
    assert validate_model(build_folded(cfg35, rates)) == []


def test_validate_reports_unnormalized_weights():
    m = SrnModel(
        places=(Place(0, "a", 1), Place(1, "dec"), Place(2, "x"), Place(3, "y")),
        timed=(TimedTransition("t", ((0, 1),), ((1, 1),), 1.0),),
        immediate=(
            ImmediateTransition("i1", ((1, 1),), ((2, 1),), 0.3),
            ImmediateTransition("i2", ((1, 1),), ((3, 1),), 0.3),
        ),
    )
    diags = validate_model(m)
    assert any("weights sum ≠ 1" in d for d in diags)
    with pytest.raises(InvalidModel):
        expand_reachability(m)


def test_validate_reports_dangling_arc():
    m = SrnModel(places=(Place(0, "a", 1),), timed=(TimedTransition("t", ((0, 1),), ((1, 1),), 1.0),))
    assert any("dangling arc" in d for d in validate_model(m))


def test_validate_reports_vanishing_initial_marking():
    m = SrnModel(
        places=(Place(0, "a", 1), Place(1, "b")),
        timed=(TimedTransition("t", ((1, 1),), ((0, 1),), 1.0),),
        immediate=(ImmediateTransition("i", ((0, 1),), ((1, 1),), 1.0),),
    )
    assert any("vanishing" in d for d in validate_model(m))


def test_vanishing_loop_detected():
    m = SrnModel(
        places=(Place(0, "a", 1), Place(1, "b"), Place(2, "c")),
        timed=(TimedTransition("t", ((0, 1),), ((1, 1),), 1.0),),
        immediate=(
            ImmediateTransition("i1", ((1, 1),), ((2, 1),), 1.0),
            ImmediateTransition("i2", ((2, 1),), ((1, 1),), 1.0),
        ),
    )
    with pytest.raises(VanishingLoop):
        expand_reachability(m)


def test_state_budget():
    with pytest.raises(StateBudgetExceeded):
        expand_reachability(birth_death(20), max_states=5)


def test_immediate_paths_accumulate_probability():
    # a --(2.0)--> dec, dec splits 0.25 / 0.75 to x / y
    m = SrnModel(
        places=(Place(0, "a", 1), Place(1, "dec"), Place(2, "x"), Place(3, "y")),
        timed=(TimedTransition("t", ((0, 1),), ((1, 1),), 2.0),),
        immediate=(
            ImmediateTransition("i1", ((1, 1),), ((2, 1),), 0.25),
            ImmediateTransition("i2", ((1, 1),), ((3, 1),), 0.75),
        ),
    )
    c = expand_reachability(m)
    assert c.n_states == 3
    assert sorted(c.rates.data.tolist()) == pytest.approx([0.5, 1.5])


def test_zero_rate_disables_transition():
    m = SrnModel(
        places=(Place(0, "a", 1), Place(1, "b")),
        timed=(TimedTransition("t", ((0, 1),), ((1, 1),), lambda m: np.zeros(len(m))),),
    )
    c = expand_reachability(m)
    assert c.n_states == 1 and c.absorbing.all()


def birth_death(n, up=1.0, down=2.0):
    """Tokens move between two places; marking-dependent rates."""
    return SrnModel(
        places=(Place(0, "left", n), Place(1, "right", 0)),
        timed=(
            TimedTransition("r", ((0, 1),), ((1, 1),), lambda m: up * m[:, 0]),
            TimedTransition("l", ((1, 1),), ((0, 1),), lambda m: down * m[:, 1]),
        ),
    )


def enumerate_timed(model):
    """Independent oracle: plain dict-based BFS over timed firings."""
    m0 = tuple(p.initial_tokens for p in model.places)
    seen, queue, edges = {m0: 0}, [m0], {}
    while queue:
        m = queue.pop(0)
        arr = np.array([m])
        for t in model.timed:
            if any(m[p] < k for p, k in t.inputs):
                continue
            if t.guard is not None and not t.guard(arr)[0]:
                continue
            r = t.rate(arr)[0] if callable(t.rate) else t.rate
            if r <= 0:
                continue
            nxt = list(m)
            for p, k in t.inputs:
                nxt[p] -= k
            for p, k in t.outputs:
                nxt[p] += k
            nxt = tuple(nxt)
            if nxt not in seen:
                seen[nxt] = len(seen)
                queue.append(nxt)
            edges[(m, nxt)] = edges.get((m, nxt), 0.0) + r
    return seen, edges


@given(st.integers(1, 12), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_expansion_matches_direct_enumeration(n, up, down):
    model = birth_death(n, up, down)
    c = expand_reachability(model)
    seen, edges = enumerate_timed(model)
    assert c.n_states == len(seen)
    marks = [tuple(int(v) for v in row) for row in c.markings]
    assert set(marks) == set(seen)
    idx = {m: i for i, m in enumerate(marks)}
    for (a, b), r in edges.items():
        assert c.rates[idx[a], idx[b]] == pytest.approx(r)
    assert c.rates.nnz == len(edges)


def test_expansion_is_deterministic(cfg35, rates):
    a = expand_reachability(build_folded(cfg35, rates))
    b = expand_reachability(build_folded(cfg35, rates))
    assert np.array_equal(a.markings, b.markings)
    assert (a.rates != b.rates).nnz == 0


def test_conservation_detects_leak():
    leaky = SrnModel(
        places=(Place(0, "a", 2), Place(1, "b")),
        timed=(TimedTransition("drop", ((0, 1),), (), 1.0),),
    )
    c = expand_reachability(leaky)
    assert not conserve_tokens_check(c, [((0, 1), 2)])
    assert conserve_tokens_check(expand_reachability(birth_death(4)), [((0, 1), 4)])


def test_edge_list_round_trip(tmp_path, cfg35, rates):
    c = expand_reachability(build_monolithic(cfg35, rates))
    path = tmp_path / "chain.txt"
    write_edge_list(c, path, reward="transmissions")
    back = read_edge_list(path)
    assert back.n_states == c.n_states
    assert back.initial_state == c.initial_state
    assert np.array_equal(back.absorbing, c.absorbing)
    assert np.allclose(back.rates.toarray() if c.n_states < 2000 else 0,
                       c.rates.toarray() if c.n_states < 2000 else 0, rtol=1e-12)
