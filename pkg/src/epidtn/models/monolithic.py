"""Exact monolithic SRN: one local submodel per community, a roaming submodel
and a destination submodel."""
from __future__ import annotations

import numpy as np

from ..config import MeetingRates, NetworkConfig
from ..srn.net import SrnModel
from .common import NetBuilder, count_rate, not_delivered, r_meet_hat


def build_monolithic(cfg: NetworkConfig, rates: MeetingRates) -> SrnModel:
    """Build the exact monolithic model for ``cfg`` and ``rates``.

    Places (``j`` = 1..N):

    * ``sus_l_j`` / ``inf_l_j`` and their decision places ``*_dec_j`` —
      susceptible / infected nodes in local mode in community ``j``;
    * ``sus_r`` / ``inf_r`` and ``*_dec`` — nodes in roaming mode;
    * ``sus_r_des``, ``sus_l_des_j``, their decision places and ``inf_des``
      — the destination.

    The source starts as the single token of ``inf_r``.  Rewards:
    ``transmissions`` (infected nodes other than the destination, i.e. the
    number of transmissions once absorbed) and ``delivered``
    (``#inf_des``, whose expectation at ``t`` is the delay CDF).  States
    with ``#inf_des == 1`` are absorbing.
    """
    N, M = cfg.N, cfg.M
    lam, mu, gamma = rates.lam, rates.mu, rates.gamma
    alpha, beta, P_r, P_l = cfg.alpha, cfg.beta, cfg.P_r, cfg.P_l
    b = NetBuilder()
    for j in range(1, N + 1):
        for s in ("sus", "inf"):
            b.place(f"{s}_l_{j}")
            b.place(f"{s}_l_dec_{j}")
    b.place("sus_r", M - 2)
    b.place("inf_r", 1)
    b.place("sus_r_dec")
    b.place("inf_r_dec")
    b.place("sus_r_des", 1)
    b.place("sus_r_dec_des")
    for j in range(1, N + 1):
        b.place(f"sus_l_des_{j}")
        b.place(f"sus_l_dec_des_{j}")
    b.place("inf_des")

    des = b["inf_des"]
    inf_r, sus_r = b["inf_r"], b["sus_r"]
    sus_l = np.array([b[f"sus_l_{j}"] for j in range(1, N + 1)])
    inf_l = np.array([b[f"inf_l_{j}"] for j in range(1, N + 1)])
    g_w = not_delivered(des)
    rhat = lambda n: r_meet_hat(n, rates, M) if M > 2 else np.where(n == 0, 0.0, gamma)  # noqa: E731

    def g_inf(j: int):
        return lambda m: (m[:, des] == 0) & ((m[:, inf_l[j]] + m[:, inf_r]) > 0)

    def roaming_pressure(m):
        # infected roaming nodes meeting one target, plus infected local sets
        return m[:, inf_r] * mu + rhat(m[:, inf_l]).sum(axis=1)

    for j in range(1, N + 1):
        k = j - 1
        su, inf = sus_l[k], inf_l[k]
        b.add_timed(
            f"T_l_inf_{j}", f"sus_l_{j}", f"inf_l_{j}",
            lambda m, su=su, inf=inf: m[:, su] * m[:, inf] * lam + m[:, inf_r] * rhat(m[:, su]),
            g_inf(k),
        )
        for s in ("sus", "inf"):
            b.add_timed(f"T_{s}_l_end_{j}", f"{s}_l_{j}", f"{s}_l_dec_{j}",
                        count_rate(b[f"{s}_l_{j}"], alpha), g_w)
            b.add_immediate(f"t_{s}_ll_{j}", f"{s}_l_dec_{j}", f"{s}_l_{j}", 1.0 - P_r)
            b.add_immediate(f"t_{s}_lr_{j}", f"{s}_l_dec_{j}", f"{s}_r", P_r)
            b.add_immediate(f"t_{s}_rl_{j}", f"{s}_r_dec", f"{s}_l_{j}", P_l * cfg.P_sel[k])

    b.add_timed("T_r_inf", "sus_r", "inf_r", lambda m: m[:, sus_r] * roaming_pressure(m), g_w)
    for s in ("sus", "inf"):
        b.add_timed(f"T_{s}_r_end", f"{s}_r", f"{s}_r_dec", count_rate(b[f"{s}_r"], beta), g_w)
        b.add_immediate(f"t_{s}_rr", f"{s}_r_dec", f"{s}_r", 1.0 - P_l)

    _add_destination(b, cfg, g_inf_des=lambda k: g_inf(k),
                     local_rate=lambda k: (lambda m, inf=inf_l[k]: m[:, inf] * lam + m[:, inf_r] * gamma),
                     roaming_rate=roaming_pressure)

    node_places = [p.id for p in b.places]
    return SrnModel(
        places=tuple(b.places),
        timed=tuple(b.timed),
        immediate=tuple(b.immediate),
        rewards={
            "transmissions": lambda m: m[:, inf_l].sum(axis=1) + m[:, inf_r],
            "delivered": lambda m: m[:, des],
        },
        absorbing=lambda m: m[:, des] == 1,
        default_reward="delivered",
        meta={
            "engine": "mono", "N": N, "M": M,
            "conservation": ((tuple(node_places), M),),
        },
    )


def _add_destination(b: NetBuilder, cfg: NetworkConfig, g_inf_des, local_rate, roaming_rate) -> None:
    """Destination submodel shared by both builders.

    ``g_inf_des(k)`` and ``local_rate(k)`` give the guard and rate of the
    local-mode infection of the destination in community ``k`` (0-based);
    ``roaming_rate`` is the rate of its roaming-mode infection.
    """
    for j in range(1, cfg.N + 1):
        k = j - 1
        b.add_timed(f"T_l_inf_des_{j}", f"sus_l_des_{j}", "inf_des", local_rate(k), g_inf_des(k))
        b.add_timed(f"T_sus_l_end_des_{j}", f"sus_l_des_{j}", f"sus_l_dec_des_{j}", cfg.alpha)
        b.add_immediate(f"t_sus_ll_des_{j}", f"sus_l_dec_des_{j}", f"sus_l_des_{j}", 1.0 - cfg.P_r)
        b.add_immediate(f"t_sus_lr_des_{j}", f"sus_l_dec_des_{j}", "sus_r_des", cfg.P_r)
        b.add_immediate(f"t_sus_rl_des_{j}", "sus_r_dec_des", f"sus_l_des_{j}", cfg.P_l * cfg.P_sel[k])
    b.add_timed("T_r_inf_des", "sus_r_des", "inf_des", roaming_rate)
    b.add_timed("T_sus_r_end_des", "sus_r_des", "sus_r_dec_des", cfg.beta)
    b.add_immediate("t_sus_rr_des", "sus_r_dec_des", "sus_r_des", 1.0 - cfg.P_l)
