"""Approximate folded SRN: all local submodels merged into one, with the
source and the destination tracked individually."""
from __future__ import annotations

import numpy as np

from ..config import MeetingRates, NetworkConfig
from ..srn.net import SrnModel
from .common import NetBuilder, count_rate, local_count_tables, not_delivered, r_meet_hat
from .monolithic import _add_destination


def build_folded(cfg: NetworkConfig, rates: MeetingRates) -> SrnModel:
    """Build the folded model for ``cfg`` and ``rates``.

    Places:

    * ``sus_l_f`` / ``inf_l_f`` — susceptible / infected local nodes of
      all communities together (source and destination excluded);
    * ``sus_r`` / ``inf_r`` — roaming nodes (source and destination
      excluded), plus four decision places;
    * ``r_src``, ``l_src_j`` and decision places — the source node;
    * destination places as in the monolithic model.

    Per-community local counts are recovered from the folded totals by
    :func:`~epidtn.models.common.approx_local_counts`, tabulated once per
    token count and source location.  The source starts roaming in
    ``r_src`` and ``inf_r`` starts empty, so infected roaming nodes are
    ``#inf_r + #r_src`` and the ``transmissions`` reward is
    ``#inf_l_f + #inf_r + 1``.
    """
    N, M = cfg.N, cfg.M
    lam, mu, gamma = rates.lam, rates.mu, rates.gamma
    alpha, beta, P_r, P_l = cfg.alpha, cfg.beta, cfg.P_r, cfg.P_l
    b = NetBuilder()
    for s in ("sus", "inf"):
        b.place(f"{s}_l_f")
        b.place(f"{s}_l_dec_f")
    b.place("sus_r", M - 2)
    b.place("inf_r", 0)
    b.place("sus_r_dec")
    b.place("inf_r_dec")
    b.place("r_src", 1)
    b.place("r_dec_src")
    for j in range(1, N + 1):
        b.place(f"l_src_{j}")
        b.place(f"l_dec_src_{j}")
    b.place("sus_r_des", 1)
    b.place("sus_r_dec_des")
    for j in range(1, N + 1):
        b.place(f"sus_l_des_{j}")
        b.place(f"sus_l_dec_des_{j}")
    b.place("inf_des")

    des = b["inf_des"]
    sus_lf, inf_lf, sus_r, inf_r, r_src = (b[n] for n in ("sus_l_f", "inf_l_f", "sus_r", "inf_r", "r_src"))
    l_src = np.array([b[f"l_src_{j}"] for j in range(1, N + 1)])
    g_w = not_delivered(des)
    sus_tab, inf_tab = local_count_tables(M, cfg.P_sel)
    # local counts never exceed M - 1, so the table covers every lookup
    rhat_tab = np.array([r_meet_hat(n, rates, M) if M > 2 else min(n, 1) * gamma for n in range(M)])

    def src_slot(m):
        return m[:, l_src] @ np.arange(1, N + 1)

    def n_sus(m):
        return sus_tab[m[:, sus_lf]]

    def n_inf(m):
        return inf_tab[m[:, inf_lf], src_slot(m)]

    def inf_roaming(m):
        return m[:, inf_r] + m[:, r_src]

    def g_l_inf_f(m):
        local_pairs = (n_sus(m) * n_inf(m)).sum(axis=1) > 0
        return (m[:, des] == 0) & (local_pairs | (inf_roaming(m) > 0))

    def r_l_inf_f(m):
        ns = n_sus(m)
        return ((ns * n_inf(m)).sum(axis=1) * lam
                + inf_roaming(m) * rhat_tab[ns].sum(axis=1))

    def roaming_pressure(m):
        return inf_roaming(m) * mu + rhat_tab[n_inf(m)].sum(axis=1)

    b.add_timed("T_l_inf_f", "sus_l_f", "inf_l_f", r_l_inf_f, g_l_inf_f)
    b.add_timed("T_r_inf", "sus_r", "inf_r", lambda m: m[:, sus_r] * roaming_pressure(m), g_w)
    for s in ("sus", "inf"):
        b.add_timed(f"T_{s}_l_end_f", f"{s}_l_f", f"{s}_l_dec_f", count_rate(b[f"{s}_l_f"], alpha), g_w)
        b.add_immediate(f"t_{s}_ll_f", f"{s}_l_dec_f", f"{s}_l_f", 1.0 - P_r)
        b.add_immediate(f"t_{s}_lr_f", f"{s}_l_dec_f", f"{s}_r", P_r)
        b.add_timed(f"T_{s}_r_end", f"{s}_r", f"{s}_r_dec", count_rate(b[f"{s}_r"], beta), g_w)
        b.add_immediate(f"t_{s}_rr", f"{s}_r_dec", f"{s}_r", 1.0 - P_l)
        b.add_immediate(f"t_{s}_rl_f", f"{s}_r_dec", f"{s}_l_f", P_l)

    for j in range(1, N + 1):
        k = j - 1
        b.add_timed(f"T_l_end_src_{j}", f"l_src_{j}", f"l_dec_src_{j}", alpha, g_w)
        b.add_immediate(f"t_ll_src_{j}", f"l_dec_src_{j}", f"l_src_{j}", 1.0 - P_r)
        b.add_immediate(f"t_lr_src_{j}", f"l_dec_src_{j}", "r_src", P_r)
        b.add_immediate(f"t_rl_src_{j}", "r_dec_src", f"l_src_{j}", P_l * cfg.P_sel[k])
    b.add_timed("T_r_end_src", "r_src", "r_dec_src", beta, g_w)
    b.add_immediate("t_rr_src", "r_dec_src", "r_src", 1.0 - P_l)

    def g_inf_des(k):
        return lambda m: (n_inf(m)[:, k] > 0) | (inf_roaming(m) > 0)

    def local_rate(k):
        return lambda m: inf_roaming(m) * gamma + n_inf(m)[:, k] * lam

    _add_destination(b, cfg, g_inf_des=g_inf_des, local_rate=local_rate, roaming_rate=roaming_pressure)

    sub_f = tuple(b[n] for n in ("sus_l_f", "inf_l_f", "sus_l_dec_f", "inf_l_dec_f",
                                 "sus_r", "inf_r", "sus_r_dec", "inf_r_dec"))
    src = tuple(p.id for p in b.places if "src" in p.name)
    dst = tuple(p.id for p in b.places if "des" in p.name)
    return SrnModel(
        places=tuple(b.places),
        timed=tuple(b.timed),
        immediate=tuple(b.immediate),
        rewards={
            "transmissions": lambda m: m[:, inf_lf] + m[:, inf_r] + 1,
            "delivered": lambda m: m[:, des],
        },
        absorbing=lambda m: m[:, des] == 1,
        default_reward="delivered",
        meta={
            "engine": "folded", "N": N, "M": M,
            "conservation": ((sub_f, M - 2), (src, 1), (dst, 1)),
        },
    )
