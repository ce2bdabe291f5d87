"""Network parameters, meeting rates and their file formats.

Configuration files are YAML with a versioned header::

    version: 1
    N: 3
    M: 5
    L: 1000.0
    L_c: 100.0
    R: 10.0
    alpha: 0.0125
    beta: 0.001923076923
    P_r: 0.2
    P_l: 0.8
    v_min: 5.0
    v_max: 15.0
    v_trans: 20.0
    communities:
      - center: [250, 250]
        P_sel: 0.2
      - ...

Unknown keys are rejected.
"""
from __future__ import annotations

import csv
import io
import math
import os
import warnings
from dataclasses import dataclass, replace

import yaml

from .csvio import atomic_write_text
from .errors import ConfigError

CONFIG_VERSION = 1

_SCALAR_FIELDS = ("N", "M", "L", "L_c", "R", "alpha", "beta", "P_r", "P_l", "v_min", "v_max", "v_trans")

# Reference community layouts, keyed by N.
REFERENCE_COMMUNITIES = {
    3: (((250.0, 250.0), 0.2), ((250.0, 750.0), 0.4), ((750.0, 250.0), 0.4)),
    4: (((250.0, 250.0), 0.2), ((250.0, 750.0), 0.4), ((750.0, 250.0), 0.1), ((750.0, 750.0), 0.3)),
    5: (((250.0, 250.0), 0.2), ((250.0, 750.0), 0.4), ((750.0, 250.0), 0.2), ((750.0, 750.0), 0.1),
        ((500.0, 500.0), 0.1)),
}


@dataclass(frozen=True)
class NetworkConfig:
    N: int
    M: int
    L: float
    L_c: float
    R: float
    alpha: float
    beta: float
    P_r: float
    P_l: float
    P_sel: tuple[float, ...]
    v_min: float
    v_max: float
    v_trans: float
    community_centers: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "P_sel", tuple(float(p) for p in self.P_sel))
        object.__setattr__(self, "community_centers",
                           tuple((float(x), float(y)) for x, y in self.community_centers))
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))
        if self.R > self.L_c / 5:
            warnings.warn(f"R={self.R} is not much smaller than L_c={self.L_c}", stacklevel=3)

    def problems(self) -> list[str]:
        out = []
        if self.N < 1:
            out.append("N must be positive")
        if self.M < 2:
            out.append("M must be at least 2")
        if len(self.P_sel) != self.N or len(self.community_centers) != self.N:
            out.append("P_sel and community_centers must have N entries")
        if any(p < 0 for p in self.P_sel) or abs(sum(self.P_sel) - 1.0) > 1e-12:
            out.append(f"P_sel must be a probability vector (sum={sum(self.P_sel)!r})")
        for name in ("P_r", "P_l"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                out.append(f"{name} must lie in [0, 1]")
        if not 0 < self.v_min < self.v_max:
            out.append("need 0 < v_min < v_max")
        if self.v_trans <= 0 or self.alpha <= 0 or self.beta <= 0:
            out.append("v_trans, alpha and beta must be positive")
        if not 0 < self.R < self.L_c <= self.L:
            out.append("need 0 < R < L_c <= L")
        boxes = self.community_boxes()
        for i, (x0, y0, x1, y1) in enumerate(boxes):
            if x0 < 0 or y0 < 0 or x1 > self.L or y1 > self.L:
                out.append(f"community {i + 1} extends outside the common area")
            for j in range(i):
                a = boxes[j]
                if x0 < a[2] and a[0] < x1 and y0 < a[3] and a[1] < y1:
                    out.append(f"communities {j + 1} and {i + 1} overlap")
        return out

    def community_boxes(self) -> list[tuple[float, float, float, float]]:
        h = self.L_c / 2.0
        return [(x - h, y - h, x + h, y + h) for x, y in self.community_centers]

    def with_nodes(self, M: int) -> "NetworkConfig":
        return replace(self, M=M)

    @classmethod
    def reference(cls, N: int = 4, M: int = 15) -> "NetworkConfig":
        """Reference scenario for ``N`` in {3, 4, 5}."""
        try:
            layout = REFERENCE_COMMUNITIES[N]
        except KeyError:
            raise ConfigError(f"no reference community layout for N={N}") from None
        return cls(
            N=N, M=M, L=1000.0, L_c=100.0, R=10.0,
            alpha=1 / 80, beta=1 / 520, P_r=0.2, P_l=0.8,
            P_sel=tuple(p for _, p in layout),
            v_min=5.0, v_max=15.0, v_trans=20.0,
            community_centers=tuple(c for c, _ in layout),
        )

    # -- file I/O ---------------------------------------------------------

    def to_dict(self) -> dict:
        d = {"version": CONFIG_VERSION}
        for k in _SCALAR_FIELDS:
            d[k] = getattr(self, k)
        d["communities"] = [
            {"center": [x, y], "P_sel": p} for (x, y), p in zip(self.community_centers, self.P_sel)
        ]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        allowed = {"version", "communities", *_SCALAR_FIELDS}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        if data.get("version") != CONFIG_VERSION:
            raise ConfigError(f"unsupported configuration version {data.get('version')!r}")
        missing = [k for k in (*_SCALAR_FIELDS, "communities") if k not in data]
        if missing:
            raise ConfigError(f"missing configuration keys: {', '.join(missing)}")
        comms = data["communities"]
        centers, psel = [], []
        for i, c in enumerate(comms):
            if not isinstance(c, dict) or set(c) != {"center", "P_sel"}:
                raise ConfigError(f"community {i + 1} must have exactly 'center' and 'P_sel'")
            if len(c["center"]) != 2:
                raise ConfigError(f"community {i + 1} center must be a coordinate pair")
            centers.append(tuple(float(v) for v in c["center"]))
            psel.append(float(c["P_sel"]))
        ints = {"N", "M"}
        kwargs = {k: (int(data[k]) if k in ints else float(data[k])) for k in _SCALAR_FIELDS}
        if kwargs["N"] != len(comms):
            raise ConfigError(f"N={kwargs['N']} but {len(comms)} communities listed")
        return cls(P_sel=tuple(psel), community_centers=tuple(centers), **kwargs)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "NetworkConfig":
        with open(path) as fh:
            try:
                data = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def dump(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, yaml.safe_dump(self.to_dict(), sort_keys=False))


@dataclass(frozen=True)
class MeetingRates:
    """First-meeting rates (1/s).

    ``lam``: two local nodes of one community; ``mu``: two roaming nodes;
    ``gamma``: a roaming node and one local node; ``eta``: a roaming node
    and the set of ``eta_n`` local nodes of one community.
    """

    lam: float
    mu: float
    gamma: float
    eta: float
    eta_n: int | None = None
    samples: tuple[int, int, int, int] | None = None
    half_widths: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        for name in ("lam", "mu", "gamma", "eta"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"meeting rate {name} must be positive, got {v!r}")
        if self.eta < self.gamma:
            warnings.warn("eta < gamma: meeting a set is slower than meeting one member",
                          stacklevel=3)

    def scaled(self, c: float) -> "MeetingRates":
        return replace(self, lam=self.lam * c, mu=self.mu * c, gamma=self.gamma * c,
                       eta=self.eta * c)

    def check_for(self, cfg: NetworkConfig) -> None:
        if self.eta_n is not None and self.eta_n != cfg.M - 1:
            raise ConfigError(
                f"rates were estimated for {self.eta_n + 1} nodes but the configuration has M={cfg.M}"
            )

    # -- rates file ---------------------------------------------------------

    _HEADER = ("lambda", "mu", "gamma", "eta", "eta_n",
               "n_lambda", "n_mu", "n_gamma", "n_eta",
               "hw_lambda", "hw_mu", "hw_gamma", "hw_eta")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self._HEADER)
        samples = self.samples or ("",) * 4
        hws = tuple(f"{h:.17g}" for h in self.half_widths) if self.half_widths else ("",) * 4
        w.writerow([f"{self.lam:.17g}", f"{self.mu:.17g}", f"{self.gamma:.17g}", f"{self.eta:.17g}",
                    "" if self.eta_n is None else self.eta_n, *samples, *hws])
        return buf.getvalue()

    def dump(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, self.to_csv())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "MeetingRates":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if len(rows) != 1:
            raise ConfigError(f"{path}: expected exactly one data row")
        r = rows[0]
        missing = [k for k in ("lambda", "mu", "gamma", "eta") if not r.get(k)]
        if missing:
            raise ConfigError(f"{path}: missing {', '.join(missing)}")
        opt = lambda k, f: f(r[k]) if r.get(k) else None  # noqa: E731
        samples = tuple(opt(k, int) for k in ("n_lambda", "n_mu", "n_gamma", "n_eta"))
        hws = tuple(opt(k, float) for k in ("hw_lambda", "hw_mu", "hw_gamma", "hw_eta"))
        return cls(
            lam=float(r["lambda"]), mu=float(r["mu"]), gamma=float(r["gamma"]), eta=float(r["eta"]),
            eta_n=opt("eta_n", int),
            samples=None if None in samples else samples,
            half_widths=None if None in hws else hws,
        )


__all__ = ["MeetingRates", "NetworkConfig", "REFERENCE_COMMUNITIES"]
