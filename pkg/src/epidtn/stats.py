"""Statistical validation utilities: empirical CDFs, chi-square tests,
confidence half-widths and percent errors."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import chi2, norm

from .csvio import write_csv
from .errors import TooFewSamples

MIN_EXPECTED = 5.0


class EmpiricalCdf:
    """Right-continuous empirical distribution function of ``samples``."""

    def __init__(self, samples: Iterable[float]):
        x = np.sort(np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples,
                               dtype=float))
        if x.size == 0:
            raise TooFewSamples("empirical CDF of an empty sample")
        if np.isnan(x).any():
            raise ValueError("samples contain NaN")
        self.samples = x

    def __len__(self) -> int:
        return self.samples.size

    def __call__(self, t):
        """Fraction of samples ``<= t`` (scalar or array)."""
        v = np.searchsorted(self.samples, np.asarray(t, dtype=float), side="right") / self.samples.size
        return float(v) if np.ndim(v) == 0 else v

    def curve(self, grid: Sequence[float]) -> list[tuple[float, float]]:
        return [(float(t), float(self(t))) for t in grid]


@dataclass(frozen=True)
class ChiSquareReport:
    """Outcome of a chi-square goodness-of-fit test.

    ``passed`` is ``statistic < critical_value`` at ``dof``.  For the
    exponential test, ``dof_unfitted`` / ``critical_unfitted`` give the
    same test under the ``bins - 1`` convention, for reference.
    """

    test: str
    statistic: float
    bins: int
    dof: int
    critical_value: float
    alpha_level: float
    dof_unfitted: int | None = None
    critical_unfitted: float | None = None

    @property
    def passed(self) -> bool:
        return self.statistic < self.critical_value

    @property
    def passed_unfitted(self) -> bool | None:
        return None if self.critical_unfitted is None else self.statistic < self.critical_unfitted

    def rows(self) -> list[tuple]:
        out = [(self.test, self.statistic, self.dof, self.critical_value, self.passed)]
        if self.dof_unfitted is not None:
            out.append((f"{self.test}[dof=bins-1]", self.statistic, self.dof_unfitted,
                        self.critical_unfitted, self.passed_unfitted))
        return out


REPORT_HEADER = ("test", "statistic", "dof", "critical", "passed")


def write_reports(path, reports: Iterable[ChiSquareReport]) -> None:
    write_csv(path, REPORT_HEADER, (row for r in reports for row in r.rows()))


def _statistic(observed: np.ndarray, expected: np.ndarray) -> float:
    return float(np.sum((observed - expected) ** 2 / expected))


def chi_square_exponential(samples: Sequence[float], bins: int = 40,
                           alpha_level: float = 0.01) -> ChiSquareReport:
    """Goodness of fit of an exponential with rate ``1 / mean(samples)``.

    Bins have equal probability under the fitted law; the statistic has
    ``bins - 2`` degrees of freedom (one fitted parameter).

    Raises
    ------
    TooFewSamples
        If an expected bin count is below 5.
    """
    x = np.asarray(samples, dtype=float)
    if bins < 3:
        raise ValueError("need at least 3 bins")
    n = x.size
    expected_count = n / bins
    if expected_count < MIN_EXPECTED:
        raise TooFewSamples(f"{n} samples give {expected_count:.3g} expected per bin (< {MIN_EXPECTED:g})")
    if np.any(x < 0):
        raise ValueError("exponential samples must be non-negative")
    rate = 1.0 / float(np.mean(x))
    # inner edges -ln(1 - k/bins)/rate, k = 1..bins-1
    edges = -np.log1p(-np.arange(1, bins) / bins) / rate
    observed = np.bincount(np.searchsorted(edges, x, side="right"), minlength=bins).astype(float)
    stat = _statistic(observed, np.full(bins, expected_count))
    return ChiSquareReport(
        "exponential", stat, bins, bins - 2, float(chi2.ppf(1 - alpha_level, bins - 2)), alpha_level,
        bins - 1, float(chi2.ppf(1 - alpha_level, bins - 1)),
    )


def chi_square_uniform_discrete(counts: Sequence[int], alpha_level: float = 0.01) -> ChiSquareReport:
    """Test a histogram over ``{1..K}`` against the discrete uniform law.

    Raises
    ------
    TooFewSamples
        If the total is below ``5 K``.
    """
    c = np.asarray(counts, dtype=float)
    K = c.size
    if K < 2:
        raise ValueError("need at least 2 cells")
    if np.any(c < 0):
        raise ValueError("counts must be non-negative")
    total = c.sum()
    if total < MIN_EXPECTED * K:
        raise TooFewSamples(f"{total:g} observations for {K} cells (need >= {MIN_EXPECTED * K:g})")
    stat = _statistic(c, np.full(K, total / K))
    return ChiSquareReport("uniform", stat, K, K - 1, float(chi2.ppf(1 - alpha_level, K - 1)), alpha_level)


def histogram(values: Sequence[int], K: int) -> np.ndarray:
    """Counts of ``values`` over ``{1..K}``."""
    v = np.asarray(values, dtype=np.int64)
    if v.size and (v.min() < 1 or v.max() > K):
        raise ValueError(f"values outside 1..{K}")
    return np.bincount(v, minlength=K + 1)[1:]


def mean_half_width(values: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Sample mean and normal-approximation confidence half-width.

    The half-width is NaN for fewer than two values.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise TooFewSamples("no values")
    if x.size < 2:
        return float(x[0]), math.nan
    z = norm.ppf(0.5 + level / 2)
    return float(x.mean()), float(z * x.std(ddof=1) / math.sqrt(x.size))


def percent_error(model_value: float, reference_value: float) -> float:
    """``100 |model - reference| / |reference|``.

    Raises
    ------
    ZeroDivisionError
        If ``reference_value`` is zero.
    """
    if reference_value == 0:
        raise ZeroDivisionError("percent error against a zero reference")
    return 100.0 * abs(model_value - reference_value) / abs(reference_value)
