"""Prior specifications and the standard-normal internal scale.

Model parameters are optimized on an unconstrained internal scale where each
coordinate carries a standard-normal prior. The link to model scale is the
inverse probability integral transform theta -> F_Y^{-1}(Phi(theta)), where
F_Y is the CDF of the target prior. Supported prior families are gamma
(shape/rate) and uniform.

The regularized incomplete gamma function is evaluated in-house (power
series for x < shape + 1, Lentz continued fraction above, Gauss-Legendre
quadrature for shape >= 100) and inverted by safeguarded bracketed Newton
iteration; scipy serves only as a test oracle for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import erfc, ndtri

from .model import PARAMETER_NAMES, EtasParameters

# probability clamp keeping quantiles finite during optimizer excursions
TAIL_CLAMP = 1e-15

_GAMMA_EPS = 1e-15
_GAMMA_MAX_ITER = 600
_QUAD_SHAPE_SWITCH = 100.0

# 18-point Gauss-Legendre rule mapped onto [0, 1]
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(18)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS

# natural parameter supports: name -> (lower bound, bound included)
_SUPPORTS = {
    "mu": (0.0, False),
    "k": (0.0, True),
    "alpha": (0.0, True),
    "c": (0.0, False),
    "p": (1.0, False),
}

# family used by the near-degenerate "fixed parameter" priors
_FIX_FAMILY = {"mu": "gamma", "k": "uniform", "alpha": "uniform", "c": "uniform", "p": "uniform"}

DEFAULT_FIX_EPSILON = {"mu": 1e6, "k": 1e-4, "alpha": 1e-4, "c": 1e-4, "p": 1e-4}


def std_normal_cdf(theta):
    """Standard normal CDF via the complementary error function."""
    theta = np.asarray(theta, dtype=float)
    out = 0.5 * erfc(-theta / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def std_normal_quantile(u):
    """Inverse standard normal CDF (scipy's ndtri)."""
    out = ndtri(u)
    return float(out) if np.ndim(out) == 0 else out


def log_prior_internal(theta) -> float:
    """Log-density of the standard-normal internal prior, summed over coords."""
    theta = np.asarray(theta, dtype=float)
    d = theta.size
    return float(-0.5 * np.dot(theta, theta) - 0.5 * d * math.log(2.0 * math.pi))


# ---------------------------------------------------------------------------
# regularized incomplete gamma: P(a, x), Q(a, x) = 1 - P(a, x)


def _gamma_pq_series(x: np.ndarray, shape: float) -> np.ndarray:
    """Lower regularized P(a, x) by power series; valid for x < a + 1."""
    p = np.zeros_like(x)
    active = x > 0.0
    ap = np.full_like(x, shape)
    total = np.where(active, 1.0 / shape, 0.0)
    term = total.copy()
    for _ in range(_GAMMA_MAX_ITER):
        if not active.any():
            break
        ap[active] += 1.0
        term[active] *= x[active] / ap[active]
        total[active] += term[active]
        active = active & (np.abs(term) >= np.abs(total) * _GAMMA_EPS)
    pos = x > 0.0
    log_front = -x[pos] + shape * np.log(x[pos]) - math.lgamma(shape)
    p[pos] = total[pos] * np.exp(log_front)
    return p


def _gamma_q_contfrac(x: np.ndarray, shape: float) -> np.ndarray:
    """Upper regularized Q(a, x) by Lentz continued fraction; for x >= a + 1."""
    fpmin = 1e-300
    b = x + 1.0 - shape
    c = np.full_like(x, 1.0 / fpmin)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for i in range(1, _GAMMA_MAX_ITER + 1):
        if not active.any():
            break
        an = -i * (i - shape)
        b[active] += 2.0
        d[active] = an * d[active] + b[active]
        np.copyto(d, np.where(np.abs(d) < fpmin, fpmin, d), where=active)
        c[active] = b[active] + an / c[active]
        np.copyto(c, np.where(np.abs(c) < fpmin, fpmin, c), where=active)
        d[active] = 1.0 / d[active]
        delta = d[active] * c[active]
        h[active] *= delta
        still = np.abs(delta - 1.0) >= _GAMMA_EPS
        idx = np.flatnonzero(active)
        active[idx[~still]] = False
    log_front = -x + shape * np.log(x) - math.lgamma(shape)
    return np.exp(log_front) * h


def _gamma_pq_quadrature(x: np.ndarray, shape: float) -> tuple[np.ndarray, np.ndarray]:
    """P and Q by localized Gauss-Legendre quadrature; for shape >= 100."""
    a1 = shape - 1.0
    lna1 = math.log(a1)
    sqrta1 = math.sqrt(a1)
    upper = x > a1
    xu = np.where(
        upper,
        np.maximum(a1 + 11.5 * sqrta1, x + 6.0 * sqrta1),
        np.maximum(0.0, np.minimum(a1 - 7.5 * sqrta1, x - 5.0 * sqrta1)),
    )
    t = x[:, None] + (xu - x)[:, None] * _GL_NODES[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.exp(-(t - a1) + a1 * (np.log(t) - lna1))
    integrand = np.nan_to_num(integrand, nan=0.0, posinf=0.0)
    total = integrand @ _GL_WEIGHTS
    ans = total * (xu - x) * math.exp(a1 * (lna1 - 1.0) - math.lgamma(shape))
    p = np.where(upper, 1.0 - ans, -ans)
    p = np.clip(p, 0.0, 1.0)
    return p, 1.0 - p


def gamma_regularized_pq(x, shape: float) -> tuple[np.ndarray, np.ndarray]:
    """Regularized incomplete gamma pair (P, Q) with unit rate.

    Each side is computed on the branch where it retains relative accuracy:
    P from the series below x = shape + 1, Q from the continued fraction
    above, and both from quadrature once the shape exceeds 100.
    """
    if not (math.isfinite(shape) and shape > 0):
        raise ValueError(f"shape must be finite and > 0, got {shape}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = np.zeros_like(x)
    q = np.ones_like(x)
    pos = x > 0.0
    if shape >= _QUAD_SHAPE_SWITCH:
        if pos.any():
            p[pos], q[pos] = _gamma_pq_quadrature(x[pos], shape)
        return p, q
    lower = pos & (x < shape + 1.0)
    if lower.any():
        p[lower] = _gamma_pq_series(x[lower], shape)
        q[lower] = 1.0 - p[lower]
    upper = pos & ~lower
    if upper.any():
        q[upper] = _gamma_q_contfrac(x[upper], shape)
        p[upper] = 1.0 - q[upper]
    return p, q


def gamma_regularized_lower(x, shape: float):
    """Regularized lower incomplete gamma P(shape, x)."""
    p, _ = gamma_regularized_pq(x, shape)
    return float(p[0]) if np.ndim(x) == 0 else p


def gamma_quantile_regularized(u, shape: float):
    """Inverse of P(shape, .) by bracketed, pdf-accelerated Newton iteration.

    Roots are found on the numerically dominant side (P for u <= 1/2, Q
    above), so tail quantiles keep relative accuracy. Accuracy target is
    1e-12 relative in x.
    """
    scalar = np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("quantile argument must lie strictly inside (0, 1)")
    lgam = math.lgamma(shape)
    z = ndtri(u)

    # initial guess (Wilson-Hilferty for shape > 1, small-x series otherwise)
    if shape > 1.0:
        x = shape * (1.0 - 1.0 / (9.0 * shape) + z / (3.0 * math.sqrt(shape))) ** 3
        x = np.maximum(x, 1e-3)
    else:
        t = 1.0 - shape * (0.253 + shape * 0.12)
        small = u < t
        x = np.empty_like(u)
        x[small] = (u[small] / t) ** (1.0 / shape)
        x[~small] = 1.0 - np.log1p(-(u[~small] - t) / (1.0 - t))
        x = np.maximum(x, 1e-300)

    lo = np.zeros_like(x)
    hi = np.maximum(2.0 * x, shape + 10.0 * math.sqrt(shape) + 10.0)
    for _ in range(80):  # expand until the bracket encloses every root
        _, q_hi = gamma_regularized_pq(hi, shape)
        short = q_hi > (1.0 - u)
        if not short.any():
            break
        hi[short] *= 2.0
    x = np.clip(x, lo + 1e-300, hi)

    solve_upper = u > 0.5  # root-find on Q for upper-tail probabilities
    target = np.where(solve_upper, 1.0 - u, u)
    active = np.ones(x.shape, dtype=bool)
    for _ in range(200):
        if not active.any():
            break
        xa = x[active]
        p_a, q_a = gamma_regularized_pq(xa, shape)
        err = np.where(solve_upper[active], target[active] - q_a, p_a - target[active])
        above = err > 0.0
        hi[active] = np.where(above, xa, hi[active])
        lo[active] = np.where(above, lo[active], xa)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            log_pdf = (shape - 1.0) * np.log(xa) - xa - lgam
            pdf = np.exp(log_pdf)
            step = err / pdf
        newton = xa - step
        ok = np.isfinite(newton) & (newton > lo[active]) & (newton < hi[active])
        nxt = np.where(ok, newton, 0.5 * (lo[active] + hi[active]))
        done = (np.abs(nxt - xa) <= 1e-13 * np.abs(nxt)) | (
            np.abs(err) <= 1e-15 * np.maximum(target[active], 1e-300)
        )
        x[active] = nxt
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return float(x[0]) if scalar else x


# ---------------------------------------------------------------------------
# prior specifications and links


@dataclass(frozen=True)
class PriorSpec:
    """A prior for one ETAS parameter: gamma(shape, rate) or uniform(low, high)."""

    parameter: str
    kind: str
    args: tuple[float, float]

    def __post_init__(self):
        if self.parameter not in PARAMETER_NAMES:
            raise ValueError(f"unknown parameter {self.parameter!r}")
        a, b = self.args
        if self.kind == "gamma":
            if not (a > 0 and b > 0):
                raise ValueError(f"gamma shape and rate must be > 0, got {self.args}")
        elif self.kind == "uniform":
            if not a < b:
                raise ValueError(f"uniform bounds must satisfy low < high, got {self.args}")
        else:
            raise ValueError(f"unknown prior kind {self.kind!r}")

    @classmethod
    def gamma(cls, parameter: str, shape: float, rate: float) -> "PriorSpec":
        return cls(parameter, "gamma", (float(shape), float(rate)))

    @classmethod
    def uniform(cls, parameter: str, low: float, high: float) -> "PriorSpec":
        return cls(parameter, "uniform", (float(low), float(high)))


def quantile(spec: PriorSpec, u):
    """Prior quantile function F^{-1}(u) for u strictly inside (0, 1)."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0.0) or np.any(u_arr >= 1.0):
        raise ValueError("quantile argument must lie strictly inside (0, 1)")
    if spec.kind == "uniform":
        low, high = spec.args
        out = low + u_arr * (high - low)
        return float(out) if out.ndim == 0 else out
    shape, rate = spec.args
    return gamma_quantile_regularized(u, shape) / rate


def cdf(spec: PriorSpec, x):
    """Prior CDF F(x); used to invert links and in goodness-of-fit tests."""
    x_arr = np.asarray(x, dtype=float)
    if spec.kind == "uniform":
        low, high = spec.args
        out = np.clip((x_arr - low) / (high - low), 0.0, 1.0)
        return float(out) if out.ndim == 0 else out
    shape, rate = spec.args
    return gamma_regularized_lower(rate * x_arr, shape)


@dataclass(frozen=True)
class LinkedPrior:
    """A prior plus the inverse-PIT link from the internal normal scale.

    ``to_model`` maps internal theta to the prior's support via
    F^{-1}(Phi(theta)); the Phi value is clamped to
    [TAIL_CLAMP, 1 - TAIL_CLAMP] so extreme optimizer proposals still map to
    finite values.
    """

    spec: PriorSpec
    is_fixed = False

    @property
    def parameter(self) -> str:
        return self.spec.parameter

    def to_model(self, theta):
        u = np.clip(std_normal_cdf(theta), TAIL_CLAMP, 1.0 - TAIL_CLAMP)
        return quantile(self.spec, u)

    def to_internal(self, value):
        u = np.clip(cdf(self.spec, value), TAIL_CLAMP, 1.0 - TAIL_CLAMP)
        return std_normal_quantile(u)


@dataclass(frozen=True)
class FixedParameter:
    """A parameter pinned to a constant and excluded from optimization."""

    parameter: str
    value: float
    is_fixed = True

    def to_model(self, theta=None):
        return self.value


def link_to_model_scale(lp: LinkedPrior, theta):
    """Internal-to-model map for one parameter (see :class:`LinkedPrior`)."""
    return lp.to_model(theta)


def make_fixed_prior(parameter: str, value: float, epsilon: float) -> PriorSpec:
    """Near-degenerate prior concentrating ``parameter`` at ``value``.

    Gamma-type parameters get Gamma(value * epsilon, epsilon) (mean = value,
    variance = value / epsilon); uniform-type parameters get
    U(value - epsilon, value + epsilon) truncated below at the natural
    support bound.
    """
    if parameter not in PARAMETER_NAMES:
        raise ValueError(f"unknown parameter {parameter!r}")
    if not (math.isfinite(value) and math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"need finite value and epsilon > 0, got {value}, {epsilon}")
    bound, closed = _SUPPORTS[parameter]
    inside = value >= bound if closed else value > bound
    if not inside:
        cmp = ">=" if closed else ">"
        raise ValueError(f"{parameter} must be {cmp} {bound}, got {value}")
    if _FIX_FAMILY[parameter] == "gamma":
        return PriorSpec.gamma(parameter, value * epsilon, epsilon)
    low = max(bound, value - epsilon)
    return PriorSpec.uniform(parameter, low, value + epsilon)


def default_priors() -> dict[str, PriorSpec]:
    """Reference priors: mu ~ Gamma(0.3, 0.6); k, alpha, c ~ U(0,10); p ~ U(1,10)."""
    return {
        "mu": PriorSpec.gamma("mu", 0.3, 0.6),
        "k": PriorSpec.uniform("k", 0.0, 10.0),
        "alpha": PriorSpec.uniform("alpha", 0.0, 10.0),
        "c": PriorSpec.uniform("c", 0.0, 10.0),
        "p": PriorSpec.uniform("p", 1.0, 10.0),
    }


def default_initial_values() -> dict[str, float]:
    return {"mu": 0.5, "k": 0.1, "alpha": 1.0, "c": 0.1, "p": 1.1}


# ---------------------------------------------------------------------------
# the joint transform over all five parameters


@dataclass(frozen=True)
class ParameterTransform:
    """Per-parameter links in canonical order (mu, k, alpha, c, p).

    Entries are :class:`LinkedPrior` for free coordinates or
    :class:`FixedParameter` for pinned ones; the internal vector covers free
    coordinates only.
    """

    links: tuple

    def __post_init__(self):
        names = tuple(link.parameter for link in self.links)
        if names != PARAMETER_NAMES:
            raise ValueError(f"links must cover {PARAMETER_NAMES} in order, got {names}")

    @classmethod
    def from_priors(
        cls,
        priors: Mapping[str, PriorSpec],
        fixed: Mapping[str, float] | None = None,
    ) -> "ParameterTransform":
        fixed = dict(fixed or {})
        links = []
        for name in PARAMETER_NAMES:
            if name in fixed:
                links.append(FixedParameter(name, float(fixed[name])))
            else:
                if name not in priors:
                    raise ValueError(f"missing prior for parameter {name!r}")
                links.append(LinkedPrior(priors[name]))
        return cls(tuple(links))

    @property
    def n_free(self) -> int:
        return sum(not link.is_fixed for link in self.links)

    @property
    def free_names(self) -> tuple[str, ...]:
        return tuple(link.parameter for link in self.links if not link.is_fixed)

    def to_model_array(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_free,):
            raise ValueError(f"expected theta of shape ({self.n_free},), got {theta.shape}")
        out = np.empty(len(self.links))
        j = 0
        for i, link in enumerate(self.links):
            if link.is_fixed:
                out[i] = link.value
            else:
                out[i] = link.to_model(theta[j])
                j += 1
        return out

    def to_params(self, theta, m0: float) -> EtasParameters:
        mu, k, alpha, c, p = self.to_model_array(theta)
        return EtasParameters(mu=mu, k=k, alpha=alpha, c=c, p=p, m0=m0)

    def to_internal(self, values: Mapping[str, float]) -> np.ndarray:
        out = []
        for link in self.links:
            if link.is_fixed:
                continue
            if link.parameter not in values:
                raise ValueError(f"missing initial value for {link.parameter!r}")
            out.append(link.to_internal(float(values[link.parameter])))
        return np.array(out)

    def map_draws(self, theta_matrix: np.ndarray) -> np.ndarray:
        """Map internal draws (n, n_free) to model-scale draws (n, 5)."""
        theta_matrix = np.asarray(theta_matrix, dtype=float)
        n = theta_matrix.shape[0]
        out = np.empty((n, len(self.links)))
        j = 0
        for i, link in enumerate(self.links):
            if link.is_fixed:
                out[:, i] = link.value
            else:
                out[:, i] = link.to_model(theta_matrix[:, j])
                j += 1
        return out


# ---------------------------------------------------------------------------
# JSON configuration block


def priors_from_config(config: Mapping) -> dict[str, PriorSpec]:
    """Parse the prior configuration block, e.g. {"mu": {"gamma": [0.3, 0.6]}}."""
    priors = default_priors()
    for raw_name, body in config.items():
        name = raw_name.lower()
        if name not in PARAMETER_NAMES:
            raise ValueError(f"unknown parameter {raw_name!r} in prior config")
        if not isinstance(body, Mapping) or len(body) != 1:
            raise ValueError(f"prior for {raw_name!r} must be one family: args pair")
        kind, args = next(iter(body.items()))
        if kind == "gamma":
            priors[name] = PriorSpec.gamma(name, *args)
        elif kind == "uniform":
            priors[name] = PriorSpec.uniform(name, *args)
        else:
            raise ValueError(f"unknown prior family {kind!r} for {raw_name!r}")
    return priors


def priors_to_config(priors: Mapping[str, PriorSpec]) -> dict:
    out = {}
    for name in PARAMETER_NAMES:
        spec = priors[name]
        key = "K" if name == "k" else name
        out[key] = {spec.kind: list(spec.args)}
    return out


def fixes_from_config(config: Mapping) -> dict[str, tuple[float, float]]:
    """Parse the "fix" block into name -> (value, epsilon)."""
    out = {}
    for raw_name, body in config.items():
        name = raw_name.lower()
        if name not in PARAMETER_NAMES:
            raise ValueError(f"unknown parameter {raw_name!r} in fix config")
        if isinstance(body, Mapping):
            value = float(body["value"])
            epsilon = float(body.get("epsilon", DEFAULT_FIX_EPSILON[name]))
        else:
            value = float(body)
            epsilon = DEFAULT_FIX_EPSILON[name]
        out[name] = (value, epsilon)
    return out
