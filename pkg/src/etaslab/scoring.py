"""Forecast evaluation: inter-event-time diagnostics, number test, CRPS.

Under a homogeneous Poisson process the inter-event times, normalized by
their mean, follow Exp(1); the distance of their eCDF from 1 - e^{-x}
measures clustering. Count forecasts are reduced to weekly bins and scored
by the quantile placement of the observation in the replicate ensemble
(delta1/delta2) and by the continuous ranked probability score of the
count eCDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .catalog import Catalog, inter_event_times
from .errors import InsufficientDataError, InvalidWindowError


def exp1_cdf(x):
    """Reference CDF of the unit exponential, 1 - e^{-x}."""
    x = np.asarray(x, dtype=float)
    out = -np.expm1(-x)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EcdfCurve:
    """Right-continuous empirical CDF of a sorted sample."""

    points: np.ndarray
    steps: np.ndarray

    @classmethod
    def from_samples(cls, samples) -> "EcdfCurve":
        samples = np.sort(np.asarray(samples, dtype=float))
        if samples.size == 0:
            raise InsufficientDataError("cannot build an eCDF from an empty sample")
        n = samples.size
        return cls(points=samples, steps=np.arange(1, n + 1) / n)

    def evaluate(self, x) -> np.ndarray:
        """eCDF value at x (fraction of sample points <= x)."""
        idx = np.searchsorted(self.points, np.asarray(x, dtype=float), side="right")
        out = idx / self.points.size
        return float(out) if np.ndim(x) == 0 else out


def normalized_iet_ecdf(cat: Catalog) -> EcdfCurve:
    """eCDF of inter-event times divided by their mean.

    The normalized sample has mean 1 by construction, making the curve
    directly comparable to Exp(1).
    """
    durations = inter_event_times(cat)
    mean = durations.mean()
    if mean <= 0:
        raise InsufficientDataError("all inter-event times are zero")
    return EcdfCurve.from_samples(durations / mean)


def ks_distance(curve: EcdfCurve, reference_cdf: Callable | None = None) -> float:
    """Supremum distance between the eCDF and a reference CDF (default Exp(1)).

    Both sides of every jump are checked, so the statistic is the true
    Kolmogorov-Smirnov sup over the whole line for a continuous reference.
    """
    reference_cdf = reference_cdf or exp1_cdf
    ref = np.asarray(reference_cdf(curve.points), dtype=float)
    upper = np.abs(curve.steps - ref)
    lower = np.abs(np.concatenate(([0.0], curve.steps[:-1])) - ref)
    return float(np.maximum(upper, lower).max())


def weekly_counts(cat: Catalog, start: float, n_periods: int,
                  period_length: float = 7.0) -> np.ndarray:
    """Event counts in the half-open periods [start + j*L, start + (j+1)*L)."""
    if start < cat.t1:
        raise InvalidWindowError(
            f"period start {start} precedes catalogue window start {cat.t1}"
        )
    if n_periods < 1 or period_length <= 0:
        raise ValueError("need n_periods >= 1 and period_length > 0")
    edges = start + period_length * np.arange(n_periods + 1)
    counts, _ = np.histogram(cat.times, bins=edges)
    # np.histogram closes the last bin on the right; undo that
    if np.any(cat.times == edges[-1]):
        counts[-1] -= int(np.sum(cat.times == edges[-1]))
    return counts.astype(int)


def n_test(samples, observed: int) -> tuple[float, float]:
    """Number-test quantile pair.

    delta1 is the fraction of replicate counts >= observed, delta2 the
    fraction <= observed. delta2 > 0.5 signals underprediction, < 0.5
    overprediction.
    """
    samples = np.asarray(samples)
    if samples.size < 1:
        raise InsufficientDataError("number test needs at least one replicate")
    delta1 = float(np.mean(samples >= observed))
    delta2 = float(np.mean(samples <= observed))
    return delta1, delta2


def crps(samples, observed: int) -> float:
    """CRPS of the replicate-count eCDF against an observed count.

    The defining sum over all k >= 0 of (F(k) - 1{observed <= k})^2 is
    truncated to k in [min(samples, observed), max(samples, observed));
    every omitted term is identically zero, including when the observation
    falls outside the replicate range.
    """
    samples = np.sort(np.asarray(samples))
    if samples.size < 1:
        raise InsufficientDataError("CRPS needs at least one replicate")
    lo = min(int(samples[0]), int(observed))
    hi = max(int(samples[-1]), int(observed))
    if hi == lo:
        return 0.0
    k = np.arange(lo, hi)
    forecast_cdf = np.searchsorted(samples, k, side="right") / samples.size
    indicator = (observed <= k).astype(float)
    return float(np.sum((forecast_cdf - indicator) ** 2))


@dataclass(frozen=True)
class ForecastEnsemble:
    """Per-replicate event counts over contiguous forecast periods."""

    counts: np.ndarray           # shape (n_replicates, n_periods)
    period_edges: np.ndarray     # shape (n_periods + 1,), days

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=int)
        edges = np.asarray(self.period_edges, dtype=float)
        if counts.ndim != 2:
            raise ValueError("counts must be a (replicate, period) matrix")
        if edges.ndim != 1 or edges.size != counts.shape[1] + 1:
            raise ValueError("period_edges must have one more entry than periods")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("period edges must be strictly increasing")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "period_edges", edges)

    @property
    def n_replicates(self) -> int:
        return self.counts.shape[0]

    @property
    def n_periods(self) -> int:
        return self.counts.shape[1]

    @classmethod
    def from_catalogs(cls, catalogs: Sequence[Catalog], start: float,
                      n_periods: int, period_length: float = 7.0) -> "ForecastEnsemble":
        counts = np.stack([
            weekly_counts(cat, start, n_periods, period_length) for cat in catalogs
        ])
        edges = start + period_length * np.arange(n_periods + 1)
        return cls(counts, edges)


@dataclass(frozen=True)
class PeriodScore:
    period: int
    start: float
    end: float
    observed: int
    median: float
    lo95: float
    hi95: float
    delta1: float
    delta2: float
    crps: float


@dataclass(frozen=True)
class ScoreReport:
    """Per-period forecast scores, CSV/JSON serializable."""

    periods: tuple[PeriodScore, ...]

    CSV_HEADER = "period,observed,median,lo95,hi95,delta1,delta2,crps"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for row in self.periods:
            lines.append(
                f"{row.period},{row.observed},{row.median!r},{row.lo95!r},"
                f"{row.hi95!r},{row.delta1!r},{row.delta2!r},{row.crps!r}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"periods": [vars(row) for row in self.periods]}


def score_forecast(ensemble: ForecastEnsemble, observed_cat: Catalog) -> ScoreReport:
    """Score each forecast period against the observed catalogue.

    Reports the number-test pair, CRPS, the predicted median, and the
    central 95% interval of the replicate counts.

    Raises:
        InvalidWindowError: if the forecast periods extend beyond the
            observed catalogue window.
    """
    edges = ensemble.period_edges
    if edges[0] < observed_cat.t1 or edges[-1] > observed_cat.t2:
        raise InvalidWindowError(
            f"forecast periods [{edges[0]}, {edges[-1]}] extend beyond the "
            f"observed window [{observed_cat.t1}, {observed_cat.t2}]"
        )
    period_length = float(edges[1] - edges[0])
    observed = weekly_counts(observed_cat, float(edges[0]), ensemble.n_periods, period_length)
    rows = []
    for j in range(ensemble.n_periods):
        column = ensemble.counts[:, j]
        delta1, delta2 = n_test(column, int(observed[j]))
        lo95, median, hi95 = np.quantile(column, [0.025, 0.5, 0.975])
        rows.append(PeriodScore(
            period=j + 1,
            start=float(edges[j]),
            end=float(edges[j + 1]),
            observed=int(observed[j]),
            median=float(median),
            lo95=float(lo95),
            hi95=float(hi95),
            delta1=delta1,
            delta2=delta2,
            crps=crps(column, int(observed[j])),
        ))
    return ScoreReport(tuple(rows))
