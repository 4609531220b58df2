"""
Scalar Gaussian and Gaussian-mixture algebra.

Two parameterizations are used throughout:

    moment form    (mu, tau)   UN(x | mu, tau) = exp(-(x - mu)^2 / (2 tau))
    natural form   (nu, xi)    UM(x | nu, xi)  = exp(-xi x^2 / 2 + nu x - nu^2 / (2 xi))

with nu = mu / tau and xi = 1 / tau.  Natural form is the canonical internal
representation because it stays finite as tau -> +inf.  For xi = 0 the
constant -nu^2 / (2 xi) is dropped, so UM(x | nu, 0) = exp(nu x).  Every
``log_scale`` returned here is relative to that convention.

All mixture weights are handled in the log domain.
"""

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import (
    CapExceeded,
    DegenerateProduct,
    EssentialDiscontinuity,
    InvalidFactor,
    NonIntegrableBelief,
)

DEFAULT_COMPONENT_CAP = 2 ** 24

_WEIGHT_EXACT_TOL = 1e-12
_WEIGHT_RENORM_TOL = 1e-6


class IntegrabilityStatus(enum.Enum):
    INTEGRABLE = "integrable"
    BOUNDARY = "boundary"
    NON_INTEGRABLE = "non_integrable"


@dataclass(frozen=True)
class GaussianMoment:
    """Mean and variance; tau may be negative or +inf but never zero."""

    mu: float
    tau: float

    def __post_init__(self):
        if self.tau == 0:
            raise EssentialDiscontinuity("tau = 0 is an essential discontinuity")
        if math.isnan(self.tau) or math.isnan(self.mu):
            raise ValueError("NaN parameter")


@dataclass(frozen=True)
class GaussianNat:
    """Linear coefficient ``nu`` and precision ``xi`` (any real values)."""

    nu: float
    xi: float

    def __add__(self, other):
        return GaussianNat(self.nu + other.nu, self.xi + other.xi)

    def __sub__(self, other):
        return GaussianNat(self.nu - other.nu, self.xi - other.xi)

    @property
    def mean(self):
        return self.nu / self.xi

    @property
    def variance(self):
        return 1.0 / self.xi


def nat_from_moment(g):
    if g.tau == 0:
        raise EssentialDiscontinuity("tau = 0 is an essential discontinuity")
    return GaussianNat(g.mu / g.tau, 1.0 / g.tau)


def moment_from_nat(g):
    if g.xi == 0:
        raise EssentialDiscontinuity("xi = 0 has no mean-variance form")
    return GaussianMoment(g.nu / g.xi, 1.0 / g.xi)


def _const(nu, xi):
    return 0.0 if xi == 0 else nu * nu / (2.0 * xi)


class Reproduction(NamedTuple):
    log_scale: float
    product: GaussianNat
    status: IntegrabilityStatus


def integrability_of_precision(xi):
    if xi > 0:
        return IntegrabilityStatus.INTEGRABLE
    if xi == 0:
        return IntegrabilityStatus.BOUNDARY
    return IntegrabilityStatus.NON_INTEGRABLE


def reproduce_nat(a, b):
    """Product of two unnormalized natural-form Gaussians.

    Returns ``(log_scale, product, status)`` with
    ``UM(x|a) * UM(x|b) = exp(log_scale) * UM(x|product)``.  A product whose
    precision is zero while its linear term is not is reported through
    ``status`` rather than raised; callers decide what to do with it.
    """
    xa, xb = a.xi, b.xi
    xs = xa + xb
    product = GaussianNat(a.nu + b.nu, xs)
    if xa == 0 and xb == 0:
        log_scale = 0.0
    elif xs == 0:
        log_scale = -_const(a.nu, xa) - _const(b.nu, xb)
    elif xa == 0:
        log_scale = (a.nu * a.nu + 2.0 * a.nu * b.nu) / (2.0 * xb)
    elif xb == 0:
        log_scale = (b.nu * b.nu + 2.0 * a.nu * b.nu) / (2.0 * xa)
    else:
        d = xb * a.nu - xa * b.nu
        # sequential division keeps tiny precisions from underflowing the denominator
        log_scale = -0.5 * (d / xa) * (d / xb) / xs
    return Reproduction(log_scale, product, integrability_of_precision(xs))


class Gmm1D:
    """One-dimensional Gaussian mixture ``sum_s w_s N(x | mu_s, tau_s)``.

    Weights within 1e-6 of summing to one are renormalized; anything further
    off is rejected.  Arrays are read-only after construction.
    """

    __slots__ = (
        "weights", "means", "variances", "nat_means", "nat_precisions", "log_weights",
        "_log_weights", "_nat_means", "_nat_precisions",
    )

    def __init__(self, weights, means, variances):
        w = np.array(weights, dtype=float).reshape(-1)
        m = np.array(means, dtype=float).reshape(-1)
        v = np.array(variances, dtype=float).reshape(-1)
        if not (w.size == m.size == v.size):
            raise InvalidFactor("weights, means and variances must have equal length")
        if w.size < 1:
            raise InvalidFactor("a mixture needs at least one component")
        if not np.all(np.isfinite(m)):
            raise InvalidFactor("means must be finite")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise InvalidFactor("variances must be positive and finite")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidFactor("weights must be positive")
        total = float(np.sum(w))
        if abs(total - 1.0) > _WEIGHT_RENORM_TOL:
            raise InvalidFactor(f"weights sum to {total}, not 1")
        if abs(total - 1.0) > _WEIGHT_EXACT_TOL:
            w = w / total
        for name, arr in (("weights", w), ("means", m), ("variances", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        nat_p = 1.0 / v
        nat_m = m / v
        logw = np.log(w)
        for arr in (nat_p, nat_m, logw):
            arr.setflags(write=False)
        object.__setattr__(self, "nat_precisions", nat_p)
        object.__setattr__(self, "nat_means", nat_m)
        object.__setattr__(self, "log_weights", logw)
        # plain-float copies for the scalar hot loops
        object.__setattr__(self, "_log_weights", tuple(logw.tolist()))
        object.__setattr__(self, "_nat_means", tuple(nat_m.tolist()))
        object.__setattr__(self, "_nat_precisions", tuple(nat_p.tolist()))

    def __setattr__(self, name, value):
        raise AttributeError("Gmm1D is immutable")

    @property
    def n_components(self):
        return self.weights.size

    @property
    def min_precision(self):
        return min(self._nat_precisions)

    def __len__(self):
        return self.n_components

    def __eq__(self, other):
        if not isinstance(other, Gmm1D):
            return NotImplemented
        return (
            np.array_equal(self.weights, other.weights)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.variances, other.variances)
        )

    def __hash__(self):
        return hash((self.weights.tobytes(), self.means.tobytes(), self.variances.tobytes()))

    def __repr__(self):
        return (
            f"Gmm1D(weights={self.weights.tolist()}, means={self.means.tolist()}, "
            f"variances={self.variances.tolist()})"
        )

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["weights"], d["means"], d["variances"])
        except (KeyError, TypeError) as exc:
            raise InvalidFactor(f"malformed mixture: {exc}") from exc

    @classmethod
    def gaussian(cls, mu, tau):
        return cls([1.0], [mu], [tau])


class PosteriorMoments(NamedTuple):
    mean: float
    variance: float
    log_scale: float


def gmm_moments(f):
    """Mean and variance of a mixture by the law of total variance."""
    mean = float(np.dot(f.weights, f.means))
    var = float(np.dot(f.weights, f.variances + (f.means - mean) ** 2))
    return mean, var


def check_integrability(f, cavity):
    """Sign test on the smallest combined component precision.

    ``f(x) * UM(x | cavity)`` has a finite integral iff every component keeps
    a positive precision after absorbing the cavity.
    """
    return integrability_of_precision(f.min_precision + cavity.xi)


def mixture_posterior(log_p, nu_s, xi_s, nu_c, xi_c):
    """Vectorized moments of ``sum_s p_s N(x|nu_s, xi_s) * exp(-xi_c x^2/2 + nu_c x)``.

    Component arrays have shape ``(..., K)``; cavity arrays broadcast against
    ``(...)``.  Padding components may carry ``log_p = -inf``.  The caller is
    responsible for checking that every live component has a positive combined
    precision.

    Returns ``(weights, mean, variance, log_evidence)`` where ``log_evidence``
    omits the cavity's own constant.
    """
    nu_c = np.asarray(nu_c, dtype=float)[..., None]
    xi_c = np.asarray(xi_c, dtype=float)[..., None]
    xi_t = xi_s + xi_c
    nu_t = nu_s + nu_c
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        logw = (
            log_p
            + 0.5 * (np.log(xi_s) - np.log(xi_t))
            + nu_t * nu_t / (2.0 * xi_t)
            - nu_s * nu_s / (2.0 * xi_s)
        )
        logw = np.where(np.isneginf(log_p), -np.inf, logw)
        top = np.max(logw, axis=-1, keepdims=True)
        e = np.exp(logw - top)
        z = np.sum(e, axis=-1, keepdims=True)
        w = e / z
        log_z = top + np.log(z)
        cm = nu_t / xi_t
        cv = 1.0 / xi_t
        cm = np.where(w > 0, cm, 0.0)
        cv = np.where(w > 0, cv, 0.0)
    mean = np.sum(w * cm, axis=-1)
    var = np.sum(w * (cv + (cm - mean[..., None]) ** 2), axis=-1)
    return w, mean, var, log_z[..., 0]


class MixturePosterior(NamedTuple):
    weights: np.ndarray
    components: list
    moments: PosteriorMoments


def gmm_times_gaussian(f, cavity):
    """Moment-match ``f(x) * UM(x | cavity)``.

    Returns the normalized component responsibilities, the per-component
    posterior natural parameters and the mixture mean/variance.  ``log_scale``
    is the log integral of the product.

    Written as a plain loop: the sequential solvers call this once per factor
    visit with two or three components, where array overhead dominates.
    """
    nu_c, xi_c = float(cavity.nu), float(cavity.xi)
    logw, cm, cv, comps = [], [], [], []
    for s, (lp, nu, xi) in enumerate(zip(f._log_weights, f._nat_means, f._nat_precisions)):
        t = xi + xi_c
        if not t > 0:
            raise NonIntegrableBelief(f"component {s} has combined precision {t!r}", component=s)
        nt = nu + nu_c
        logw.append(lp + 0.5 * (math.log(xi) - math.log(t)) + nt * nt / (2.0 * t) - nu * nu / (2.0 * xi))
        cm.append(nt / t)
        cv.append(1.0 / t)
        comps.append(GaussianNat(nt, t))
    top = max(logw)
    e = [math.exp(v - top) for v in logw]
    z = math.fsum(e)
    w = [v / z for v in e]
    mean = math.fsum(wi * m for wi, m in zip(w, cm))
    var = math.fsum(wi * (v + (m - mean) ** 2) for wi, m, v in zip(w, cm, cv))
    log_scale = top + math.log(z) - _const(nu_c, xi_c)
    return MixturePosterior(np.array(w), comps, PosteriorMoments(mean, var, log_scale))


def exact_product_moments(factors, cap=DEFAULT_COMPONENT_CAP):
    """Brute-force moments of ``prod_n f_n`` by full mixture expansion.

    Components are carried as normalized Gaussians with log weights; each new
    factor multiplies every accumulated component by every factor component
    via the Gaussian product rule.  ``log_scale`` is the log integral of the
    product of the (normalized) factors.
    """
    factors = list(factors)
    if not factors:
        raise InvalidFactor("need at least one factor")
    total = 1
    for f in factors:
        total *= f.n_components
        if total > cap:
            raise CapExceeded(f"expansion exceeds {cap} components")

    first = factors[0]
    logw = first.log_weights.copy()
    mu = first.means.copy()
    tau = first.variances.copy()
    for f in factors[1:]:
        s = tau[:, None] + f.variances[None, :]
        d = mu[:, None] - f.means[None, :]
        log_z = -0.5 * (np.log(2.0 * np.pi * s) + d * d / s)
        new_tau = tau[:, None] * f.variances[None, :] / s
        new_mu = (f.variances[None, :] * mu[:, None] + tau[:, None] * f.means[None, :]) / s
        logw = (logw[:, None] + f.log_weights[None, :] + log_z).reshape(-1)
        mu = new_mu.reshape(-1)
        tau = new_tau.reshape(-1)

    log_ev = float(logsumexp(logw))
    if not np.isfinite(log_ev):
        raise DegenerateProduct("every product component underflowed")
    w = np.exp(logw - log_ev)
    mean = float(np.dot(w, mu))
    var = float(np.dot(w, tau + (mu - mean) ** 2))
    return PosteriorMoments(mean, var, log_ev)


def product_component_count(factors):
    return math.prod(f.n_components for f in factors)
