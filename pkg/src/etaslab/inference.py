"""Iterative posterior fitting and the Gaussian posterior approximation.

Each iteration linearizes the binned log-likelihood at the current point,
maximizes the resulting approximate log-posterior with a quasi-Newton step,
then blends old and new points by a grid line search on the exact
log-posterior. Iteration stops when every internal coordinate moves by less
than the relative tolerance (default 1%).

The posterior is summarized as a Gaussian at the converged mode with
covariance equal to the inverse negative finite-difference Hessian of the
exact log-posterior. This Gaussian stands in for a nested Laplace
integration engine; it is the one intentional methodological simplification
in the package and is recorded on the result object.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import scipy.linalg
import scipy.optimize

from .catalog import Catalog
from .errors import HessianNotPositiveDefiniteError
from .likelihood import BinningConfig, LikelihoodWorkspace
from .model import PARAMETER_NAMES
from .priors import (
    ParameterTransform,
    PriorSpec,
    default_initial_values,
    default_priors,
    log_prior_internal,
)

CONVERGENCE_FLOOR = 1e-8  # relative-change denominator floor


@dataclass(frozen=True)
class FitConfig:
    """Tunables of the fitting loop.

    ``initial_values`` entries override the reference starting point
    (mu=0.5, k=0.1, alpha=1, c=0.1, p=1.1). ``convergence_tol`` applies to
    the maximum per-coordinate relative change of the internal-scale
    parameter vector.
    """

    initial_values: Mapping[str, float] | None = None
    binning: BinningConfig = field(default_factory=BinningConfig)
    max_iterations: int = 50
    convergence_tol: float = 0.01
    line_search_points: int = 21
    fd_step: float = 1e-5
    hessian_step: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be > 0")
        if self.max_iterations < 1 or self.line_search_points < 2:
            raise ValueError("need max_iterations >= 1 and line_search_points >= 2")

    def resolved_initial_values(self) -> dict[str, float]:
        values = default_initial_values()
        if self.initial_values:
            unknown = set(k.lower() for k in self.initial_values) - set(PARAMETER_NAMES)
            if unknown:
                raise ValueError(f"unknown initial-value parameters {sorted(unknown)}")
            values.update({k.lower(): float(v) for k, v in self.initial_values.items()})
        return values


@dataclass(frozen=True)
class IterationRecord:
    theta: tuple[float, ...]
    objective: float
    blend_weight: float
    saturated: bool


@dataclass(frozen=True)
class PosteriorApproximation:
    """Gaussian posterior approximation on the internal scale.

    ``mode`` and ``covariance`` cover the free coordinates only (in
    canonical parameter order); fixed parameters are carried by the
    transform and re-appear as constants in model-scale output.
    """

    mode: np.ndarray
    covariance: np.ndarray
    transform: ParameterTransform
    m0: float
    iterations_used: int
    converged: bool
    wall_time: float
    trace: tuple[IterationRecord, ...] = ()

    @property
    def free_names(self) -> tuple[str, ...]:
        return self.transform.free_names

    def mode_model(self) -> dict[str, float]:
        values = self.transform.to_model_array(self.mode)
        return dict(zip(PARAMETER_NAMES, values.tolist()))

    def sample(self, n: int, seed: int | None = None) -> np.ndarray:
        return sample_posterior(self, n, seed)

    def summary(self, n: int = 10_000, seed: int | None = None) -> dict[str, dict[str, float]]:
        return posterior_summary(self, n, seed)


def _validate_initials(priors: Mapping[str, PriorSpec], fixed: Mapping[str, float],
                       values: Mapping[str, float]) -> None:
    for name in PARAMETER_NAMES:
        if name in fixed:
            continue
        spec = priors[name]
        v = values[name]
        if spec.kind == "uniform":
            low, high = spec.args
            if not (low < v < high):
                raise ValueError(
                    f"initial {name}={v} outside prior support ({low}, {high})"
                )
        elif v <= 0:
            raise ValueError(f"initial {name}={v} outside gamma support (0, inf)")


def _finite_difference_hessian(fun, x: np.ndarray, step: float) -> np.ndarray:
    d = x.size
    hess = np.empty((d, d))
    f0 = fun(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = step
        hess[i, i] = (fun(x + ei) - 2.0 * f0 + fun(x - ei)) / step**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = step
            hess[i, j] = hess[j, i] = (
                fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej) + fun(x - ei - ej)
            ) / (4.0 * step**2)
    return hess


def fit(
    catalog: Catalog,
    history: Catalog | None = None,
    priors: Mapping[str, PriorSpec] | None = None,
    config: FitConfig | None = None,
    fixed: Mapping[str, float] | None = None,
) -> PosteriorApproximation:
    """Fit the ETAS model on ``catalog`` and return the Gaussian posterior.

    Args:
        catalog: observed events; its window and m0 define the likelihood.
        history: optional imposed parents (e.g. earlier mainshocks) that
            excite the window but are not themselves modelled.
        priors: per-parameter prior specs; defaults to the reference set.
        config: loop tunables; defaults to :class:`FitConfig`.
        fixed: parameters excluded from optimization and pinned to the
            given model-scale values (the efficient alternative to a
            near-degenerate prior).

    Returns:
        :class:`PosteriorApproximation` with the iteration trace attached.
        Non-convergence within ``max_iterations`` is reported via the
        ``converged`` flag, not an exception.

    Raises:
        HessianNotPositiveDefiniteError: if the negative Hessian at the
            mode admits non-positive eigen-directions.
    """
    if len(catalog) == 0:
        raise ValueError("cannot fit on an empty catalogue")
    priors = dict(priors) if priors else default_priors()
    config = config or FitConfig()
    fixed = dict(fixed or {})
    transform = ParameterTransform.from_priors(priors, fixed)
    if transform.n_free == 0:
        raise ValueError("all parameters fixed; nothing to fit")

    initials = config.resolved_initial_values()
    _validate_initials(priors, fixed, initials)

    start = time.perf_counter()
    workspace = LikelihoodWorkspace(catalog, history, config.binning)

    def exact_log_posterior(theta: np.ndarray) -> float:
        return workspace.loglik_internal(theta, transform) + log_prior_internal(theta)

    theta0 = transform.to_internal(initials)
    weights = np.linspace(0.0, 1.0, config.line_search_points)
    trace: list[IterationRecord] = []
    converged = False

    for _ in range(config.max_iterations):
        terms = workspace.linearize(theta0, transform, config.fd_step)
        exact_at_center = workspace.loglik_internal(theta0, transform)
        approx_at_center = terms.value(theta0)
        assert abs(approx_at_center - exact_at_center) <= 1e-9 * max(1.0, abs(exact_at_center)), \
            "linearization must reproduce the binned log-likelihood at its center"

        def negative_objective(theta):
            value, grad = terms.value_and_gradient(theta)
            value += log_prior_internal(theta)
            grad = grad - theta
            return -value, -grad

        result = scipy.optimize.minimize(
            negative_objective, theta0, jac=True, method="BFGS",
            options={"gtol": 1e-8, "maxiter": 500},
        )
        theta_inner = result.x

        candidates = weights[:, None] * theta0[None, :] + (1.0 - weights[:, None]) * theta_inner[None, :]
        values = np.array([exact_log_posterior(c) for c in candidates])
        best = int(np.argmax(values))
        theta_star = candidates[best]

        trace.append(IterationRecord(
            theta=tuple(theta_star.tolist()),
            objective=float(values[best]),
            blend_weight=float(weights[best]),
            saturated=terms.saturates(theta_inner),
        ))
        rel_change = np.max(np.abs(theta_star - theta0) / (np.abs(theta0) + CONVERGENCE_FLOOR))
        theta0 = theta_star
        if rel_change < config.convergence_tol:
            converged = True
            break

    hessian = _finite_difference_hessian(exact_log_posterior, theta0, config.hessian_step)
    neg_hessian = -0.5 * (hessian + hessian.T)
    try:
        chol = np.linalg.cholesky(neg_hessian)
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh(neg_hessian)
        bad = [(float(v), eigvecs[:, i].tolist()) for i, v in enumerate(eigvals) if v <= 0]
        raise HessianNotPositiveDefiniteError(
            f"negative Hessian at mode has {len(bad)} non-positive eigenvalues "
            f"({[v for v, _ in bad]})",
            directions=bad,
        ) from None
    covariance = scipy.linalg.cho_solve((chol, True), np.eye(theta0.size))
    covariance = 0.5 * (covariance + covariance.T)

    return PosteriorApproximation(
        mode=theta0,
        covariance=covariance,
        transform=transform,
        m0=catalog.m0,
        iterations_used=len(trace),
        converged=converged,
        wall_time=time.perf_counter() - start,
        trace=tuple(trace),
    )


def sample_posterior(post: PosteriorApproximation, n: int,
                     seed: int | None = None) -> np.ndarray:
    """Model-scale posterior draws, shape (n, 5) in canonical order.

    Draws internal-scale Gaussians at (mode, covariance), then maps each
    coordinate through its inverse-PIT link; fixed parameters come back as
    constants. Deterministic for a given seed.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 draws, got {n}")
    rng = np.random.default_rng(0 if seed is None else seed)
    chol = np.linalg.cholesky(post.covariance)
    z = rng.standard_normal((n, post.mode.size))
    theta = post.mode[None, :] + z @ chol.T
    return post.transform.map_draws(theta)


def posterior_summary(post: PosteriorApproximation, n: int = 10_000,
                      seed: int | None = None) -> dict[str, dict[str, float]]:
    """Monte Carlo posterior summaries per parameter on model scale.

    Reports mean, sd, and the 2.5/50/97.5 percent quantiles (type-7
    interpolation) from ``n`` posterior draws.
    """
    if n < 1000:
        raise ValueError(f"summaries need n >= 1000 draws, got {n}")
    draws = sample_posterior(post, n, seed)
    out = {}
    for i, name in enumerate(PARAMETER_NAMES):
        column = draws[:, i]
        q025, median, q975 = np.quantile(column, [0.025, 0.5, 0.975])
        out[name] = {
            "mean": float(column.mean()),
            "sd": float(column.std(ddof=1)),
            "q025": float(q025),
            "median": float(median),
            "q975": float(q975),
        }
    return out
