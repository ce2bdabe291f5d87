"""Plain-text edge-list serialization of a :class:`Ctmc`.

Format, one record per line::

    states <n>
    initial <index> <probability>
    absorbing <index>
    reward <index> <value>
    <src> <dst> <rate>

Header records come first; every remaining line is an edge.  Numbers are
written with 17 significant digits so that a round trip is exact.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .expand import Ctmc


def write_edge_list(ctmc: Ctmc, path: str | os.PathLike, reward: str | None = None) -> None:
    rew = ctmc.reward(reward) if (reward or ctmc.default_reward) else np.zeros(ctmc.n_states)
    coo = ctmc.rates.tocoo()
    tmp = Path(f"{path}.tmp")
    with open(tmp, "w") as fh:
        fh.write(f"states {ctmc.n_states}\n")
        for i in np.flatnonzero(ctmc.initial):
            fh.write(f"initial {i} {ctmc.initial[i]:.17g}\n")
        for i in np.flatnonzero(ctmc.absorbing):
            fh.write(f"absorbing {i}\n")
        for i, v in enumerate(rew):
            fh.write(f"reward {i} {v:.17g}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
    os.replace(tmp, path)


def read_edge_list(path: str | os.PathLike) -> Ctmc:
    n = None
    init, absorbing, reward = {}, [], {}
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            tag = parts[0]
            if tag == "states":
                n = int(parts[1])
            elif tag == "initial":
                init[int(parts[1])] = float(parts[2])
            elif tag == "absorbing":
                absorbing.append(int(parts[1]))
            elif tag == "reward":
                reward[int(parts[1])] = float(parts[2])
            else:
                rows.append(int(parts[0]))
                cols.append(int(parts[1]))
                vals.append(float(parts[2]))
    if n is None:
        raise ValueError(f"{path}: missing 'states' record")
    initial = np.zeros(n)
    for i, p in init.items():
        initial[i] = p
    ab = np.zeros(n, dtype=bool)
    ab[absorbing] = True
    rew = np.zeros(n)
    for i, v in reward.items():
        rew[i] = v
    rates = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return Ctmc(
        markings=np.zeros((n, 0), dtype=np.uint8),
        rates=rates,
        initial=initial,
        absorbing=ab,
        rewards={"reward": rew},
        default_reward="reward",
    )
