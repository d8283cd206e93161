"""ETAS kernel, conditional intensity, and the exponential magnitude law.

The ground-process intensity at time t given history H is

    lambda(t | H) = mu + sum_{t_h < t} k * exp(alpha * (m_h - m0)) * ((t - t_h)/c + 1)^(-p)

Magnitudes are modelled separately: ``m - m0`` is exponential with rate
``beta``, and ``beta`` is estimated directly from magnitude data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .catalog import Catalog, Event
from .errors import DegenerateMagnitudesError, InsufficientDataError

PARAMETER_NAMES = ("mu", "k", "alpha", "c", "p")


@dataclass(frozen=True)
class EtasParameters:
    """The temporal ETAS parameter set.

    Attributes:
        mu: background rate (events/day), > 0.
        k: productivity, >= 0.
        alpha: magnitude scaling (1/magnitude), >= 0.
        c: Omori time offset (days), > 0.
        p: Omori decay exponent, > 1.
        m0: completeness magnitude.
    """

    mu: float
    k: float
    alpha: float
    c: float
    p: float
    m0: float

    def __post_init__(self):
        values = (self.mu, self.k, self.alpha, self.c, self.p, self.m0)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"parameters must be finite, got {values}")
        if self.mu <= 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.c <= 0:
            raise ValueError(f"c must be > 0, got {self.c}")
        if self.p <= 1:
            raise ValueError(f"p must be > 1, got {self.p}")

    def as_array(self) -> np.ndarray:
        """The five rate parameters in canonical order (m0 excluded)."""
        return np.array([self.mu, self.k, self.alpha, self.c, self.p])

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "K": self.k,
            "alpha": self.alpha,
            "c": self.c,
            "p": self.p,
            "m0": self.m0,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EtasParameters":
        d = {key.lower(): float(value) for key, value in data.items()}
        return cls(mu=d["mu"], k=d["k"], alpha=d["alpha"], c=d["c"], p=d["p"], m0=d["m0"])

    def with_values(self, **kwargs) -> "EtasParameters":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class MagnitudeLaw:
    """Shifted exponential magnitude distribution: m - m0 ~ Exp(beta)."""

    beta: float
    m0: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be finite and > 0, got {self.beta}")


def triggering_rate(params: EtasParameters, t, parent: Event):
    """Aftershock rate contributed by ``parent`` at time ``t``.

    ``t`` may be a scalar or array; every entry must be >= the parent time
    (callers filter history rather than relying on an implicit zero).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < parent.time):
        raise ValueError(
            f"evaluation time before parent time {parent.time}; filter history first"
        )
    boost = math.exp(params.alpha * (parent.magnitude - params.m0))
    decay = np.exp(-params.p * np.log1p((t - parent.time) / params.c))
    out = params.k * boost * decay
    return float(out) if out.ndim == 0 else out


def conditional_intensity(params: EtasParameters, t: float, history: Catalog) -> float:
    """Ground-process intensity mu + sum of triggering rates at time ``t``.

    Only history events strictly before ``t`` contribute.
    """
    times = history.times
    mask = times < t
    if not mask.any():
        return params.mu
    dt = t - times[mask]
    dm = history.magnitudes[mask] - params.m0
    contrib = np.exp(params.alpha * dm - params.p * np.log1p(dt / params.c))
    return params.mu + params.k * float(contrib.sum())


def sample_magnitude(law: MagnitudeLaw, u):
    """Inverse-CDF magnitude draw: m0 - ln(1 - u)/beta for u in (0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("u must lie strictly inside (0, 1)")
    out = law.m0 - np.log1p(-u) / law.beta
    return float(out) if out.ndim == 0 else out


def estimate_beta(cat: Catalog) -> MagnitudeLaw:
    """Maximum-likelihood magnitude law: beta_hat = 1 / mean(m - m0).

    Raises:
        InsufficientDataError: for an empty catalogue.
        DegenerateMagnitudesError: when every magnitude equals m0.
    """
    if len(cat) == 0:
        raise InsufficientDataError("cannot estimate beta from an empty catalogue")
    excess = float(np.mean(cat.magnitudes - cat.m0))
    if excess <= 0.0:
        raise DegenerateMagnitudesError(
            f"all magnitudes equal the completeness threshold {cat.m0}"
        )
    return MagnitudeLaw(beta=1.0 / excess, m0=cat.m0)
