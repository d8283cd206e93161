"""Scikit-learn style estimator wrapping the fitting pipeline.

``EtasModel`` follows the sklearn estimator contract: constructor arguments
are stored verbatim, all work happens in ``fit``, fitted state lives in
trailing-underscore attributes, and ``get_params``/``set_params``/``clone``
compose with the wider ecosystem.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import inference
from .catalog import Catalog, CatalogSplit
from .likelihood import BinningConfig, LikelihoodWorkspace
from .model import PARAMETER_NAMES, EtasParameters, MagnitudeLaw, estimate_beta
from .priors import default_priors, make_fixed_prior, DEFAULT_FIX_EPSILON
from .scoring import ForecastEnsemble
from .simulator import SimulationConfig, simulate_ensemble


def check_catalog(value, *, non_empty: bool = False, name: str = "catalog") -> Catalog:
    """Validate a Catalog argument (sklearn-style input check)."""
    if not isinstance(value, Catalog):
        raise TypeError(f"{name} must be a Catalog, got {type(value).__name__}")
    if non_empty and len(value) == 0:
        raise ValueError(f"{name} must contain at least one event")
    return value


class EtasModel(BaseEstimator):
    """Temporal ETAS model with approximate Bayesian fitting.

    Parameters
    ----------
    priors : mapping of parameter name to PriorSpec, optional
        Defaults to the reference priors (mu ~ Gamma(0.3, 0.6); k, alpha,
        c ~ U(0, 10); p ~ U(1, 10)).
    fix : mapping, optional
        Parameters to pin, as {"alpha": 2.0} or
        {"alpha": {"value": 2.0, "epsilon": 1e-4}}.
    fix_mode : {"prior", "exclude"}
        How pinning works: "prior" swaps in a near-degenerate prior of the
        same family (the faithful form); "exclude" removes the coordinate
        from optimization entirely (the fast form).
    initial_values : mapping, optional
        Model-scale starting values; pinned parameters start at their
        pinned value automatically.
    delta, ratio, n_max
        Geometric binning of integrated-intensity terms.
    max_iter, tol, line_search_points, fd_step, hessian_step
        Fitting-loop controls; ``tol`` is the per-coordinate relative
        convergence threshold on the internal scale.
    seed : int
        Default seed for posterior sampling and simulation.

    Attributes
    ----------
    posterior_ : PosteriorApproximation
    mode_ : dict of parameter name to model-scale mode value
    covariance_ : ndarray, internal-scale covariance over free coordinates
    converged_ : bool
    n_iter_ : int
    fit_time_ : float, seconds spent in the fitting loop
    magnitude_law_ : MagnitudeLaw estimated from the training magnitudes
    """

    def __init__(self, priors=None, fix=None, fix_mode="prior", initial_values=None,
                 delta=0.1, ratio=1.0, n_max=12, max_iter=50, tol=0.01,
                 line_search_points=21, fd_step=1e-5, hessian_step=1e-4, seed=0):
        self.priors = priors
        self.fix = fix
        self.fix_mode = fix_mode
        self.initial_values = initial_values
        self.delta = delta
        self.ratio = ratio
        self.n_max = n_max
        self.max_iter = max_iter
        self.tol = tol
        self.line_search_points = line_search_points
        self.fd_step = fd_step
        self.hessian_step = hessian_step
        self.seed = seed

    def _check_is_fitted(self):
        if not hasattr(self, "posterior_"):
            raise NotFittedError(
                "This EtasModel instance is not fitted yet; call fit first."
            )

    def _resolve_fix(self) -> dict[str, tuple[float, float]]:
        out = {}
        for raw_name, body in (self.fix or {}).items():
            name = raw_name.lower()
            if name not in PARAMETER_NAMES:
                raise ValueError(f"unknown parameter {raw_name!r} in fix")
            if isinstance(body, Mapping):
                value = float(body["value"])
                epsilon = float(body.get("epsilon", DEFAULT_FIX_EPSILON[name]))
            else:
                value = float(body)
                epsilon = DEFAULT_FIX_EPSILON[name]
            out[name] = (value, epsilon)
        return out

    def fit(self, catalog: Catalog, history: Catalog | None = None) -> "EtasModel":
        """Fit the posterior approximation on a training catalogue.

        ``history`` events act as imposed parents (they excite the window
        but are not modelled as observations).
        """
        check_catalog(catalog, non_empty=True)
        if history is not None:
            check_catalog(history, name="history")
        if self.fix_mode not in ("prior", "exclude"):
            raise ValueError(f"fix_mode must be 'prior' or 'exclude', got {self.fix_mode!r}")

        priors = dict(self.priors) if self.priors else default_priors()
        fix = self._resolve_fix()
        initial_values = dict(self.initial_values or {})
        fixed = None
        if fix:
            if self.fix_mode == "prior":
                for name, (value, epsilon) in fix.items():
                    priors[name] = make_fixed_prior(name, value, epsilon)
                    initial_values[name] = value
            else:
                fixed = {name: value for name, (value, _) in fix.items()}

        config = inference.FitConfig(
            initial_values=initial_values,
            binning=BinningConfig(self.delta, self.ratio, self.n_max),
            max_iterations=self.max_iter,
            convergence_tol=self.tol,
            line_search_points=self.line_search_points,
            fd_step=self.fd_step,
            hessian_step=self.hessian_step,
            seed=self.seed,
        )
        posterior = inference.fit(catalog, history, priors, config, fixed)
        self.posterior_ = posterior
        self.mode_ = posterior.mode_model()
        self.mode_internal_ = posterior.mode.copy()
        self.covariance_ = posterior.covariance.copy()
        self.converged_ = posterior.converged
        self.n_iter_ = posterior.iterations_used
        self.fit_time_ = posterior.wall_time
        self.magnitude_law_ = estimate_beta(catalog)
        return self

    def mode_parameters(self) -> EtasParameters:
        """Posterior-mode parameters as an :class:`EtasParameters`."""
        self._check_is_fitted()
        return EtasParameters(**self.mode_, m0=self.posterior_.m0)

    def sample(self, n: int = 10_000, seed: int | None = None) -> np.ndarray:
        """Model-scale posterior draws, shape (n, 5) in canonical order."""
        self._check_is_fitted()
        return self.posterior_.sample(n, self.seed if seed is None else seed)

    def summary(self, n: int = 10_000, seed: int | None = None) -> dict:
        self._check_is_fitted()
        return self.posterior_.summary(n, self.seed if seed is None else seed)

    def simulate(self, window: tuple[float, float], history: Catalog | None = None,
                 n_replicates: int = 1, posterior_predictive: bool = False,
                 seed: int | None = None, max_events: int = 1_000_000,
                 magnitude_law: MagnitudeLaw | None = None) -> list[Catalog]:
        """Simulate catalogues from the fitted model over ``window``.

        With ``posterior_predictive`` each replicate runs under its own
        posterior draw (supercritical draws are tolerated and capped by
        ``max_events``); otherwise all replicates use the posterior mode.
        """
        self._check_is_fitted()
        seed = self.seed if seed is None else seed
        cfg = SimulationConfig(
            params=self.mode_parameters(),
            magnitude_law=magnitude_law or self.magnitude_law_,
            t1=float(window[0]),
            t2=float(window[1]),
            history=history,
            max_events=max_events,
            seed=seed,
            allow_supercritical=posterior_predictive,
        )
        draws = self.sample(n_replicates, seed) if posterior_predictive else None
        return simulate_ensemble(cfg, n_replicates, draws)

    def forecast(self, split: CatalogSplit, n_weeks: int = 10,
                 n_replicates: int = 1000, seed: int | None = None,
                 period_length: float = 7.0,
                 max_events: int = 1_000_000) -> ForecastEnsemble:
        """Posterior-predictive weekly count forecast after a mainshock.

        Simulates ``n_replicates`` catalogues over the forecast horizon
        conditioned on the split's history (training events plus the
        mainshock) and reduces them to per-period counts.
        """
        self._check_is_fitted()
        start = split.forecast_window[0]
        horizon = start + n_weeks * period_length
        catalogs = self.simulate(
            window=(start, horizon),
            history=split.history,
            n_replicates=n_replicates,
            posterior_predictive=True,
            seed=seed,
            max_events=max_events,
        )
        return ForecastEnsemble.from_catalogs(catalogs, start, n_weeks, period_length)

    def score(self, catalog: Catalog, history: Catalog | None = None) -> float:
        """Mean log-likelihood per event at the posterior mode (higher is better)."""
        self._check_is_fitted()
        check_catalog(catalog, non_empty=True)
        workspace = LikelihoodWorkspace(
            catalog, history, BinningConfig(self.delta, self.ratio, self.n_max)
        )
        return workspace.loglik_binned(self.mode_parameters()) / len(catalog)
