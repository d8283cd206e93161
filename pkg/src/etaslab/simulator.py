"""Branching (cluster) simulation of synthetic ETAS catalogues.

Generation 0 is a homogeneous Poisson background plus the direct offspring
of any imposed history events; generation g+1 collects the offspring of
generation g. Offspring counts are Poisson with mean equal to the
integrated kernel over the remaining window, and offspring times follow the
inverse CDF of the window-truncated kernel, so the construction is exact
for this model (no thinning).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .catalog import Catalog, Event, as_events
from .errors import CatalogOverflowWarning, SupercriticalError
from .likelihood import integrated_triggering
from .model import EtasParameters, MagnitudeLaw, sample_magnitude

__all__ = [
    "SimulationConfig",
    "branching_ratio",
    "sample_background",
    "sample_offspring",
    "offspring_time_cdf",
    "offspring_time_quantile",
    "simulate_catalog",
    "simulate_ensemble",
    "replicate_seed",
]


@dataclass(frozen=True)
class SimulationConfig:
    """Inputs of one synthetic catalogue.

    ``history`` events act as extra parents (their offspring are generated
    only inside the window and the history events themselves never appear in
    the output). ``seed`` may be an int or a tuple of ints; tuples are how
    ensembles derive per-replicate streams.
    """

    params: EtasParameters
    magnitude_law: MagnitudeLaw
    t1: float
    t2: float
    history: Catalog | tuple[Event, ...] | None = None
    max_events: int = 1_000_000
    seed: int | tuple[int, ...] = 0
    allow_supercritical: bool = False

    def __post_init__(self):
        if self.t1 >= self.t2:
            raise ValueError(f"need t1 < t2, got [{self.t1}, {self.t2}]")
        if self.max_events <= 0:
            raise ValueError("max_events must be > 0")
        if self.magnitude_law.m0 != self.params.m0:
            raise ValueError(
                f"magnitude law m0={self.magnitude_law.m0} does not match "
                f"parameter m0={self.params.m0}"
            )


def branching_ratio(params: EtasParameters, law: MagnitudeLaw) -> float:
    """Expected direct offspring per event, k * E[e^(alpha dm)] * c/(p-1).

    Returns inf when beta <= alpha (the magnitude-boost expectation
    diverges).
    """
    if law.beta <= params.alpha:
        return math.inf
    boost = law.beta / (law.beta - params.alpha)
    return params.k * boost * params.c / (params.p - 1.0)


def _uniform_open(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform draws on the open interval (0, 1)."""
    u = rng.random(n)
    while True:
        zero = u == 0.0
        if not zero.any():
            return u
        u[zero] = rng.random(int(zero.sum()))


def sample_background(mu: float, t1: float, t2: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Sorted homogeneous-Poisson event times on [t1, t2)."""
    count = rng.poisson(mu * (t2 - t1))
    return np.sort(rng.uniform(t1, t2, count))


def offspring_time_cdf(params: EtasParameters, parent_time: float, t2: float, t):
    """CDF of the offspring time on (parent_time, t2] (normalized kernel)."""
    q = 1.0 - params.p
    total = -math.expm1(q * math.log1p((t2 - parent_time) / params.c))
    t = np.asarray(t, dtype=float)
    out = -np.expm1(q * np.log1p((t - parent_time) / params.c)) / total
    return float(out) if out.ndim == 0 else out


def offspring_time_quantile(params: EtasParameters, parent_time: float, t2: float, u):
    """Inverse CDF of the window-truncated offspring time distribution."""
    q = 1.0 - params.p
    total = -math.expm1(q * math.log1p((t2 - parent_time) / params.c))
    u = np.asarray(u, dtype=float)
    out = parent_time + params.c * np.expm1(np.log1p(-u * total) / q)
    return float(out) if out.ndim == 0 else out


def sample_offspring(params: EtasParameters, parent: Event, t2: float,
                     law: MagnitudeLaw, rng: np.random.Generator) -> list[Event]:
    """Direct offspring of ``parent`` on (parent.time, t2).

    The count is Poisson with mean ``integrated_triggering`` over the
    remaining window; times are inverse-CDF draws from the truncated
    kernel; magnitudes come from the magnitude law.
    """
    if parent.time >= t2:
        raise ValueError(f"parent at t={parent.time} is not before window end {t2}")
    mean = integrated_triggering(params, parent, parent.time, t2)
    count = int(rng.poisson(mean))
    if count == 0:
        return []
    times = offspring_time_quantile(params, parent.time, t2, _uniform_open(rng, count))
    mags = sample_magnitude(law, _uniform_open(rng, count))
    return [Event(float(t), float(m)) for t, m in zip(np.atleast_1d(times), np.atleast_1d(mags))
            if t < t2]


def _generation_sorted(events: list[Event]) -> list[Event]:
    return sorted(events, key=lambda ev: (ev.time, -ev.magnitude))


def simulate_catalog(cfg: SimulationConfig) -> Catalog:
    """Simulate one catalogue; deterministic for a given (config, seed).

    Imposed history events sire offspring only inside [t1, t2); descendants
    of any offspring falling before t1 are not propagated (the pre-window
    period is fully described by the history). If the event cap is reached,
    the catalogue is truncated and a :class:`CatalogOverflowWarning` is
    issued.

    Raises:
        SupercriticalError: when the branching ratio is >= 1 (or undefined
            because beta <= alpha) and ``allow_supercritical`` is not set.
    """
    params, law = cfg.params, cfg.magnitude_law
    ratio = branching_ratio(params, law)
    if not cfg.allow_supercritical and not ratio < 1.0:
        raise SupercriticalError(
            f"supercritical branching ratio {ratio:.6g} (expected offspring per "
            f"event must be < 1); set allow_supercritical to override", ratio,
        )
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))

    generation: list[Event] = []
    bg_times = sample_background(params.mu, cfg.t1, cfg.t2, rng)
    if bg_times.size:
        bg_mags = np.atleast_1d(sample_magnitude(law, _uniform_open(rng, bg_times.size)))
        generation.extend(Event(float(t), float(m)) for t, m in zip(bg_times, bg_mags))
    for parent in as_events(cfg.history):
        if parent.time < cfg.t2:
            children = sample_offspring(params, parent, cfg.t2, law, rng)
            generation.extend(ev for ev in children if ev.time >= cfg.t1)

    collected: list[Event] = []
    overflow = False
    while generation:
        generation = _generation_sorted(generation)
        room = cfg.max_events - len(collected)
        if len(generation) >= room:
            collected.extend(generation[:room])
            overflow = True
            break
        collected.extend(generation)
        offspring: list[Event] = []
        for parent in generation:
            if parent.time < cfg.t2:
                offspring.extend(sample_offspring(params, parent, cfg.t2, law, rng))
        generation = offspring

    if overflow:
        warnings.warn(
            f"simulation hit the {cfg.max_events}-event cap; catalogue truncated",
            CatalogOverflowWarning,
        )
    return Catalog(tuple(collected), cfg.t1, cfg.t2, params.m0)


def replicate_seed(base_seed: int | tuple[int, ...], index: int) -> tuple[int, ...]:
    """Counter-based per-replicate seed derived from the base seed."""
    if isinstance(base_seed, tuple):
        return base_seed + (index,)
    return (int(base_seed), index)


def simulate_ensemble(cfg: SimulationConfig, n_replicates: int,
                      parameter_draws: np.ndarray | None = None) -> list[Catalog]:
    """Independent replicate catalogues with counter-derived seeds.

    When ``parameter_draws`` (one row of (mu, k, alpha, c, p) per replicate,
    e.g. posterior draws) is given, replicate r runs with row r substituted
    for ``cfg.params``; m0 and the magnitude law stay fixed.
    """
    if n_replicates < 1:
        raise ValueError(f"need n_replicates >= 1, got {n_replicates}")
    if parameter_draws is not None:
        parameter_draws = np.asarray(parameter_draws, dtype=float)
        if parameter_draws.shape != (n_replicates, 5):
            raise ValueError(
                f"parameter_draws must have shape ({n_replicates}, 5), "
                f"got {parameter_draws.shape}"
            )
    catalogs = []
    for r in range(n_replicates):
        cfg_r = replace(cfg, seed=replicate_seed(cfg.seed, r))
        if parameter_draws is not None:
            mu, k, alpha, c, p = parameter_draws[r]
            cfg_r = replace(cfg_r, params=EtasParameters(
                mu=mu, k=k, alpha=alpha, c=c, p=p, m0=cfg.params.m0))
        catalogs.append(simulate_catalog(cfg_r))
    return catalogs
