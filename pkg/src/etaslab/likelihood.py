"""Integrated intensity, binned log-likelihood, and its linearization.

The log-likelihood of a temporal point pattern over a window [t1, t2] is

    L = -Lambda(t1, t2) + sum_j log lambda(t_j | events before t_j)

where Lambda integrates the intensity. The triggering part of Lambda has a
closed-form antiderivative, evaluated here per parent either over the whole
window ("exact") or over a geometric bin partition ("binned"); the two agree
up to floating-point reassociation. The binned decomposition exists so that
the log of each small positive component can be linearized in the internal
parameter scale: the approximate log-likelihood re-assembles those truncated
Taylor expansions as -sum(exp(linear)) + sum(linear).

Component gradients are central finite differences in the internal scale
(default step 1e-5); analytic derivatives through the inverse-PIT links are
deliberately avoided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .catalog import Catalog, Event, as_events
from .errors import (
    DegenerateLikelihoodError,
    InvalidWindowError,
    LinearizationError,
)
from .model import EtasParameters
from .priors import ParameterTransform

_EXP_SATURATION = 700.0  # exp() argument cap; beyond this the term saturates


@dataclass(frozen=True)
class BinningConfig:
    """Geometric bin layout: first bin length, growth rate, and step cap."""

    delta: float = 0.1
    ratio: float = 1.0
    n_max: int = 12

    def __post_init__(self):
        if self.delta <= 0 or self.ratio <= 0 or self.n_max < 0:
            raise ValueError(f"invalid binning config {self}")


@dataclass(frozen=True)
class BinPartition:
    """Bin endpoints for one parent: t_i, t_i + delta*(1+ratio)^k, ..., t2."""

    parent_time: float
    endpoints: tuple[float, ...]
    delta: float
    ratio: float
    n_max: int


def make_bins(t_i: float, delta: float, ratio: float, n_max: int, t2: float) -> BinPartition:
    """Geometric bin partition of [t_i, t2].

    Interior points follow t_i + delta*(1+ratio)^k for k = 0..n_max; points
    at or beyond t2 are dropped and t2 is appended as the final endpoint.

    Raises:
        InvalidWindowError: if ``t_i >= t2`` (empty partition).
    """
    if delta <= 0 or ratio <= 0:
        raise ValueError(f"delta and ratio must be > 0, got {delta}, {ratio}")
    if t_i >= t2:
        raise InvalidWindowError(f"empty partition: parent time {t_i} >= window end {t2}")
    offsets = delta * (1.0 + ratio) ** np.arange(n_max + 1)
    interior = t_i + offsets
    kept = interior[interior < t2]
    endpoints = (t_i, *kept.tolist(), t2)
    return BinPartition(t_i, endpoints, delta, ratio, n_max)


def integrated_background(mu: float, t1: float, t2: float) -> float:
    """Expected background count over [t1, t2]: mu * (t2 - t1)."""
    if t1 >= t2:
        raise InvalidWindowError(f"invalid interval [{t1}, {t2}]")
    return mu * (t2 - t1)


def integrated_triggering(params: EtasParameters, parent: Event, a: float, b: float) -> float:
    """Expected offspring count of ``parent`` over the interval [a, b].

    Uses the antiderivative of the Omori kernel; the lower limit is clipped
    to the parent time, and the result is 0 when the interval ends before
    the parent. Evaluated in log1p/expm1 form so that p close to 1 does not
    lose precision to cancellation.
    """
    if a >= b:
        raise InvalidWindowError(f"invalid interval [{a}, {b}]")
    if b <= parent.time:
        return 0.0
    rel_lo = max(a, parent.time) - parent.time
    rel_hi = b - parent.time
    q = 1.0 - params.p
    l1 = math.log1p(rel_lo / params.c)
    l2 = math.log1p(rel_hi / params.c)
    boost = math.exp(params.alpha * (parent.magnitude - params.m0))
    bracket = math.exp(q * l1) * (-math.expm1(q * (l2 - l1)))
    return params.k * boost * (params.c / (params.p - 1.0)) * bracket


# ---------------------------------------------------------------------------
# linearized form


@dataclass(frozen=True)
class LinearizedTerm:
    """One likelihood component linearized at ``center``.

    ``exponentiated`` marks integrated-intensity components, which enter the
    assembled approximation as -exp(linear form); log-intensity components
    enter directly.
    """

    value_at_center: float
    gradient: np.ndarray
    center: np.ndarray
    exponentiated: bool

    def linear_value(self, theta) -> float:
        delta = np.asarray(theta, dtype=float) - self.center
        return self.value_at_center + float(self.gradient @ delta)


@dataclass(frozen=True)
class LinearizedLikelihood:
    """All likelihood components linearized at a common expansion point.

    Stored as stacked arrays: ``exp_values``/``exp_gradients`` cover the
    integrated-intensity terms (background plus one term per parent bin),
    ``linear_values``/``linear_gradients`` the per-event log intensities.
    """

    center: np.ndarray
    exp_values: np.ndarray
    exp_gradients: np.ndarray
    linear_values: np.ndarray
    linear_gradients: np.ndarray

    def __len__(self) -> int:
        return self.exp_values.size + self.linear_values.size

    def _exponents(self, theta) -> np.ndarray:
        delta = np.asarray(theta, dtype=float) - self.center
        return self.exp_values + self.exp_gradients @ delta

    def value(self, theta) -> float:
        """Assembled approximate log-likelihood at ``theta``.

        Exponents are saturated at 700 to avoid overflow; callers can detect
        saturation via :meth:`saturates`.
        """
        delta = np.asarray(theta, dtype=float) - self.center
        expo = np.minimum(self._exponents(theta), _EXP_SATURATION)
        linear = self.linear_values.sum() + self.linear_gradients.sum(axis=0) @ delta
        return float(-np.exp(expo).sum() + linear)

    def gradient(self, theta) -> np.ndarray:
        expo = np.minimum(self._exponents(theta), _EXP_SATURATION)
        return -(np.exp(expo) @ self.exp_gradients) + self.linear_gradients.sum(axis=0)

    def value_and_gradient(self, theta) -> tuple[float, np.ndarray]:
        delta = np.asarray(theta, dtype=float) - self.center
        expo = np.minimum(self.exp_values + self.exp_gradients @ delta, _EXP_SATURATION)
        weights = np.exp(expo)
        value = -weights.sum() + self.linear_values.sum() + self.linear_gradients.sum(axis=0) @ delta
        grad = -(weights @ self.exp_gradients) + self.linear_gradients.sum(axis=0)
        return float(value), grad

    def saturates(self, theta) -> bool:
        return bool(np.any(self._exponents(theta) > _EXP_SATURATION))

    def iter_terms(self) -> Iterator[LinearizedTerm]:
        for value, grad in zip(self.exp_values, self.exp_gradients):
            yield LinearizedTerm(float(value), grad.copy(), self.center, True)
        for value, grad in zip(self.linear_values, self.linear_gradients):
            yield LinearizedTerm(float(value), grad.copy(), self.center, False)


def approximate_log_likelihood(theta, terms: LinearizedLikelihood) -> float:
    """Evaluate the assembled linearized log-likelihood at ``theta``."""
    return terms.value(theta)


# ---------------------------------------------------------------------------
# evaluation workspace


class LikelihoodWorkspace:
    """Precomputed geometry for repeated log-likelihood evaluation.

    Builds, once per (catalogue, history, binning):

    * flattened (parent, bin) intervals relative to each parent, clipped to
      the observation window;
    * flattened (event, parent) pairs for the intensity sum at observed
      events, restricted to parents strictly earlier in time;
    * whole-window integration bounds per parent for the unbinned form.

    History events act as parents only; they contribute integrated terms and
    excite observed events but never appear in the log-intensity sum.
    """

    def __init__(self, catalog: Catalog, history=None,
                 binning: BinningConfig | None = None):
        self.catalog = catalog
        self.history = history
        self.binning = binning or BinningConfig()
        self.t1 = catalog.t1
        self.t2 = catalog.t2
        self.m0 = catalog.m0

        obs_times = catalog.times
        obs_mags = catalog.magnitudes
        history_events = as_events(history)
        if history_events:
            par_times = np.concatenate(
                [[ev.time for ev in history_events], obs_times])
            par_mags = np.concatenate(
                [[ev.magnitude for ev in history_events], obs_mags])
        else:
            par_times = obs_times.copy()
            par_mags = obs_mags.copy()
        order = np.argsort(par_times, kind="stable")
        self.parent_times = par_times[order]
        self.parent_mags = par_mags[order]
        self.obs_times = obs_times
        self.n_obs = len(catalog)
        self.n_parents = self.parent_times.size

        self._build_pairs()
        self._build_bins()
        self._build_exact_bounds()

    def _build_pairs(self):
        counts = np.searchsorted(self.parent_times, self.obs_times, side="left")
        total = int(counts.sum())
        starts = np.cumsum(counts) - counts
        self.pair_obs = np.repeat(np.arange(self.n_obs, dtype=np.int64), counts)
        self.pair_parent = (np.arange(total, dtype=np.int64)
                            - np.repeat(starts, counts))
        self.pair_dt = self.obs_times[self.pair_obs] - self.parent_times[self.pair_parent]

    def _build_bins(self):
        cfg = self.binning
        offsets = cfg.delta * (1.0 + cfg.ratio) ** np.arange(cfg.n_max + 1)
        rel_lo, rel_hi, bin_parent = [], [], []
        for i in range(self.n_parents):
            t_i = self.parent_times[i]
            if t_i >= self.t2:
                continue
            interior = t_i + offsets
            edges = np.concatenate(([t_i], interior[interior < self.t2], [self.t2]))
            lo = np.maximum(edges[:-1], self.t1)
            hi = edges[1:]
            keep = hi - lo > 1e-12 * np.maximum(1.0, np.abs(hi))
            if keep.any():
                rel_lo.append(lo[keep] - t_i)
                rel_hi.append(hi[keep] - t_i)
                bin_parent.append(np.full(int(keep.sum()), i, dtype=np.int64))
        if rel_lo:
            self.bin_rel_lo = np.concatenate(rel_lo)
            self.bin_rel_hi = np.concatenate(rel_hi)
            self.bin_parent = np.concatenate(bin_parent)
        else:
            self.bin_rel_lo = np.empty(0)
            self.bin_rel_hi = np.empty(0)
            self.bin_parent = np.empty(0, dtype=np.int64)

    def _build_exact_bounds(self):
        mask = self.parent_times < self.t2
        self.exact_parent = np.flatnonzero(mask)
        t_par = self.parent_times[self.exact_parent]
        self.exact_rel_lo = np.maximum(t_par, self.t1) - t_par
        self.exact_rel_hi = self.t2 - t_par

    # -- model-scale evaluation ------------------------------------------

    def _log_intensities(self, params: EtasParameters) -> np.ndarray:
        dm_par = self.parent_mags - params.m0
        weights = np.exp(params.alpha * dm_par)
        decay = np.exp(-params.p * np.log1p(self.pair_dt / params.c))
        contrib = weights[self.pair_parent] * decay
        excitation = np.bincount(self.pair_obs, weights=contrib, minlength=self.n_obs)
        lam = params.mu + params.k * excitation
        if np.any(lam <= 0.0) or not np.all(np.isfinite(lam)):
            bad = int(np.argmin(lam))
            raise DegenerateLikelihoodError(
                f"non-positive intensity at event index {bad} (t={self.obs_times[bad]})"
            )
        return np.log(lam)

    def _log_bin_integrals(self, params: EtasParameters) -> np.ndarray:
        q = 1.0 - params.p
        l1 = np.log1p(self.bin_rel_lo / params.c)
        l2 = np.log1p(self.bin_rel_hi / params.c)
        dm = self.parent_mags[self.bin_parent] - params.m0
        with np.errstate(divide="ignore"):
            return (
                math.log(params.k) if params.k > 0 else -math.inf
            ) + params.alpha * dm + math.log(params.c) - math.log(params.p - 1.0) \
                + q * l1 + np.log(-np.expm1(q * (l2 - l1)))

    def log_components(self, params: EtasParameters) -> tuple[np.ndarray, np.ndarray]:
        """Log of each integrated term, and each log-intensity term.

        The first integrated entry is the background; the rest are the
        per-parent bin integrals.
        """
        log_lam0 = math.log(params.mu * (self.t2 - self.t1))
        exp_logs = np.concatenate(([log_lam0], self._log_bin_integrals(params)))
        return exp_logs, self._log_intensities(params)

    def loglik_binned(self, params: EtasParameters) -> float:
        exp_logs, log_lams = self.log_components(params)
        return float(-np.exp(exp_logs).sum() + log_lams.sum())

    def loglik_exact(self, params: EtasParameters) -> float:
        q = 1.0 - params.p
        l1 = np.log1p(self.exact_rel_lo / params.c)
        l2 = np.log1p(self.exact_rel_hi / params.c)
        dm = self.parent_mags[self.exact_parent] - params.m0
        boost = np.exp(params.alpha * dm)
        bracket = np.exp(q * l1) * (-np.expm1(q * (l2 - l1)))
        triggering = params.k * (params.c / (params.p - 1.0)) * (boost * bracket).sum()
        lam_integral = params.mu * (self.t2 - self.t1) + triggering
        return float(-lam_integral + self._log_intensities(params).sum())

    # -- internal-scale evaluation ---------------------------------------

    def loglik_internal(self, theta, transform: ParameterTransform) -> float:
        return self.loglik_binned(transform.to_params(theta, self.m0))

    def linearize(self, center, transform: ParameterTransform,
                  fd_step: float = 1e-5) -> LinearizedLikelihood:
        """Linearize every log component at ``center`` (internal scale)."""
        center = np.asarray(center, dtype=float)
        if not np.all(np.isfinite(center)):
            raise LinearizationError(f"non-finite expansion point {center}")

        def components(theta):
            return self.log_components(transform.to_params(theta, self.m0))

        exp0, lin0 = components(center)
        if not np.all(np.isfinite(exp0)):
            bad = int(np.flatnonzero(~np.isfinite(exp0))[0])
            name = "background integral" if bad == 0 else f"triggering bin {bad - 1}"
            raise LinearizationError(f"non-finite log of {name} at expansion point")
        if not np.all(np.isfinite(lin0)):
            bad = int(np.flatnonzero(~np.isfinite(lin0))[0])
            raise LinearizationError(
                f"non-finite log-intensity for event {bad} at expansion point"
            )

        d = center.size
        exp_grad = np.empty((exp0.size, d))
        lin_grad = np.empty((lin0.size, d))
        for j in range(d):
            shift = np.zeros(d)
            shift[j] = fd_step
            exp_plus, lin_plus = components(center + shift)
            exp_minus, lin_minus = components(center - shift)
            exp_grad[:, j] = (exp_plus - exp_minus) / (2.0 * fd_step)
            lin_grad[:, j] = (lin_plus - lin_minus) / (2.0 * fd_step)
        return LinearizedLikelihood(
            center=center.copy(),
            exp_values=exp0,
            exp_gradients=exp_grad,
            linear_values=lin0,
            linear_gradients=lin_grad,
        )


# ---------------------------------------------------------------------------
# public one-shot entry points


def log_likelihood_exact(params: EtasParameters, cat: Catalog,
                         history: Catalog | None = None) -> float:
    """Log-likelihood with whole-window closed-form integrated intensity."""
    return LikelihoodWorkspace(cat, history).loglik_exact(params)


def log_likelihood_binned(params: EtasParameters, cat: Catalog,
                          history: Catalog | None = None,
                          binning: BinningConfig | None = None) -> float:
    """Log-likelihood with the integrated intensity summed over bin integrals."""
    return LikelihoodWorkspace(cat, history, binning).loglik_binned(params)


def linearize_log_terms(center, cat: Catalog, history: Catalog | None,
                        transform: ParameterTransform,
                        binning: BinningConfig | None = None,
                        fd_step: float = 1e-5) -> LinearizedLikelihood:
    """Linearize all log components of the binned likelihood at ``center``."""
    return LikelihoodWorkspace(cat, history, binning).linearize(center, transform, fd_step)
