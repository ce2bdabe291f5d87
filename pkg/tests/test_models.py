import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epidtn.config import MeetingRates, NetworkConfig
from epidtn.errors import ConfigError
from epidtn.models import approx_local_counts, build_folded, build_monolithic, local_count_tables, r_meet_hat
from epidtn.solve import mtta
from epidtn.srn import conserve_tokens_check, expand_reachability


# -- local count redistribution -----------------------------------------------

def test_counts_hand_traces():
    assert approx_local_counts(5, [0.2, 0.4, 0.4]).tolist() == [1, 2, 2]
    assert approx_local_counts(0, [0.1, 0.2, 0.7]).tolist() == [0, 0, 0]
    assert approx_local_counts(5, [0.25] * 4).tolist() == [2, 1, 1, 1]


def test_counts_infected_variant_adds_source():
    assert approx_local_counts(5, [0.2, 0.4, 0.4], 0, "infected").tolist() == [2, 2, 2]
    assert approx_local_counts(5, [0.2, 0.4, 0.4], None, "infected").tolist() == [1, 2, 2]


def test_counts_single_community():
    for k in range(20):
        assert approx_local_counts(k, [1.0]).tolist() == [k]


def simplex(n, rng):
    p = rng.dirichlet(np.ones(n))
    p[-1] = 1.0 - p[:-1].sum()
    return p


@pytest.mark.parametrize("N", [1, 2, 3, 4, 5])
def test_counts_sum_exhaustive(N):
    grids = [v for v in itertools.product(np.arange(0, 11) / 10, repeat=N) if abs(sum(v) - 1) < 1e-9]
    for p in grids:
        for k in range(13):
            assert approx_local_counts(k, p).sum() == k
            for s in range(N):
                out = approx_local_counts(k, p, s, "infected")
                assert out.sum() == k + 1 and out.min() >= 0


@given(st.integers(2, 8), st.integers(0, 200), st.integers(0, 2**32 - 1))
def test_counts_sum_random(N, k, seed):
    p = simplex(N, np.random.default_rng(seed))
    out = approx_local_counts(k, p)
    assert out.sum() == k and out.min() >= 0
    # each count is within one of its proportional share
    assert np.all(np.abs(out - p * k) < 1.0 + 1e-9)


def test_count_tables_shape():
    sus, inf = local_count_tables(6, [0.2, 0.4, 0.4])
    assert sus.shape == (7, 3) and inf.shape == (7, 4, 3)
    assert np.array_equal(inf[:, 0], sus)
    assert np.all(inf[:, 1:].sum(axis=2) == np.arange(7)[:, None] + 1)


# -- set-meeting rate ---------------------------------------------------------

def test_r_meet_hat_cases(rates):
    M = 12
    assert r_meet_hat(0, rates, M) == 0.0
    assert r_meet_hat(1, rates, M) == rates.gamma
    assert r_meet_hat(M - 1, rates, M) == pytest.approx(rates.eta, rel=1e-14)
    with pytest.raises(ValueError):
        r_meet_hat(M, rates, M)


@given(st.integers(3, 60), st.floats(1e-5, 1e-3), st.floats(1.0, 10.0))
def test_r_meet_hat_nondecreasing(M, gamma, ratio):
    r = MeetingRates(1.0, 1.0, gamma, gamma * ratio)
    v = r_meet_hat(np.arange(M), r, M)
    assert np.all(np.diff(v) >= 0)


# -- builders -----------------------------------------------------------------

@pytest.mark.parametrize("N,M,mono,folded", [(3, 5, 1475, 400), (4, 5, 3870, 600), (3, 10, 56100, 3300)])
def test_state_counts(rates, N, M, mono, folded):
    cfg = NetworkConfig.reference(N, M)
    assert expand_reachability(build_monolithic(cfg, rates)).n_states == mono
    assert expand_reachability(build_folded(cfg, rates)).n_states == folded


@pytest.mark.parametrize("N,M", [(3, 5), (4, 5), (3, 8), (5, 4)])
@pytest.mark.parametrize("build", [build_monolithic, build_folded])
def test_token_conservation(rates, N, M, build):
    model = build(NetworkConfig.reference(N, M), rates)
    c = expand_reachability(model)
    assert conserve_tokens_check(c, model.meta["conservation"])


def test_source_never_susceptible(rates):
    model = build_monolithic(NetworkConfig.reference(3, 6), rates)
    c = expand_reachability(model)
    names = c.place_names
    inf = [i for i, n in enumerate(names) if n.startswith("inf_l_") or n.startswith("inf_r")]
    live = ~c.absorbing
    assert np.all(c.markings[live][:, inf].sum(axis=1) >= 1)


def test_initial_markings(rates, cfg35):
    mono = build_monolithic(cfg35, rates)
    m0 = dict(zip((p.name for p in mono.places), mono.initial_marking))
    assert m0["sus_r"] == 3 and m0["inf_r"] == 1 and m0["sus_r_des"] == 1
    assert sum(m0.values()) == 5
    folded = build_folded(cfg35, rates)
    f0 = dict(zip((p.name for p in folded.places), folded.initial_marking))
    assert f0["sus_r"] == 3 and f0["inf_r"] == 0 and f0["r_src"] == 1 and f0["sus_r_des"] == 1


def test_two_nodes_mono_equals_folded(rates):
    cfg = NetworkConfig.reference(3, 2)
    a = mtta(expand_reachability(build_monolithic(cfg, rates))).mtta
    b = mtta(expand_reachability(build_folded(cfg, rates))).mtta
    assert np.isfinite(a) and a == pytest.approx(b, rel=1e-9)


def test_more_nodes_deliver_faster(rates):
    d = [mtta(expand_reachability(build_monolithic(NetworkConfig.reference(3, M), rates))).mtta
         for M in (3, 5, 7)]
    assert d[0] > d[1] > d[2]


def test_invalid_config_rejected(rates):
    cfg = NetworkConfig.reference(3, 5)
    from dataclasses import replace

    with pytest.raises(ConfigError):
        build_monolithic(replace(cfg, P_sel=(0.5, 0.5, 0.5)), rates)
