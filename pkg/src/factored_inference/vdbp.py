"""
Variable duplication with Gaussian belief propagation (VDBP).

The scalar variable is copied once per factor and the copies are tied
together by a noiseless linear measurement ``A x = 0`` where ``A 1 = 0`` and
``rank(A) = N - 1``.  Gaussian BP on the resulting bipartite graph only needs
the first two moments of each variable-to-check message, which for mixture
factors come from a mixture-times-Gaussian moment match.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .ep_common import Estimate, SolverConfig, Status, failed
from .errors import ConstructionFailed, InvalidFactor, UnsupportedSize
from .gaussian_core import mixture_posterior

_MAX_DRAWS = 16
_RANK_RTOL = 1e-8


class MatrixKind(enum.Enum):
    TRIMMED_HADAMARD = "hadamard"
    RANDOM_PROJECTED = "random"


@dataclass(frozen=True)
class MixingMatrix:
    a: np.ndarray
    kind: MatrixKind

    @property
    def shape(self):
        return self.a.shape

    @property
    def n(self):
        return self.a.shape[1]


def _is_power_of_two(n):
    return n >= 1 and n & (n - 1) == 0


def build_mixing_matrix(n, kind=MatrixKind.TRIMMED_HADAMARD, seed=0):
    """Build an ``(n-1) x n`` matrix whose rows are orthogonal to the all-ones vector."""
    kind = MatrixKind(kind)
    if n < 2:
        raise UnsupportedSize("need at least two factors")
    if kind is MatrixKind.TRIMMED_HADAMARD:
        if not _is_power_of_two(n):
            raise UnsupportedSize(f"Sylvester Hadamard needs a power of two, got {n}")
        a = scipy.linalg.hadamard(n).astype(float)[1:]
        a.setflags(write=False)
        return MixingMatrix(a, kind)

    rng = np.random.default_rng(seed)
    for _ in range(_MAX_DRAWS):
        b = rng.standard_normal((n - 1, n))
        a = b - (b.sum(axis=1, keepdims=True) / n) * np.ones((1, n))
        sv = np.linalg.svd(a, compute_uv=False)
        if sv[-1] > _RANK_RTOL * sv[0]:
            a.setflags(write=False)
            return MixingMatrix(a, kind)
    raise ConstructionFailed(f"no full-rank draw in {_MAX_DRAWS} attempts")


@dataclass(frozen=True)
class ValidationReport:
    max_row_sum: float
    singular_value_ratio: float
    max_identity_deviation: float

    def ok(self, tol=1e-8):
        return (
            self.max_row_sum <= tol
            and self.singular_value_ratio > _RANK_RTOL
            and self.max_identity_deviation <= tol
        )

    def to_dict(self, tol=1e-8):
        return {
            "max_row_sum": self.max_row_sum,
            "singular_value_ratio": self.singular_value_ratio,
            "max_identity_deviation": self.max_identity_deviation,
            "rank_ok": self.singular_value_ratio > _RANK_RTOL,
            "ok": self.ok(tol),
        }


def validate_mixing_matrix(m):
    """Check ``A 1 = 0``, full row rank, and ``inv(A without col n) @ a_n = -1`` for every n."""
    a = np.asarray(m.a if isinstance(m, MixingMatrix) else m, dtype=float)
    rows, cols = a.shape
    scale = np.maximum(np.abs(a).max(axis=1), np.finfo(float).tiny)
    max_row_sum = float(np.max(np.abs(a.sum(axis=1)) / scale)) if rows else 0.0
    sv = np.linalg.svd(a, compute_uv=False)
    ratio = float(sv[-1] / sv[0]) if sv.size and sv[0] > 0 else 0.0
    if rows != cols - 1:
        ratio = 0.0
    worst = 0.0
    for n in range(cols):
        a_bar = np.delete(a, n, axis=1)
        try:
            x = np.linalg.solve(a_bar, a[:, n])
        except np.linalg.LinAlgError:
            worst = math.inf
            break
        worst = max(worst, float(np.max(np.abs(x + 1.0))))
    if not math.isfinite(ratio) or ratio <= _RANK_RTOL:
        worst = max(worst, math.inf if ratio == 0 else worst)
    return ValidationReport(max_row_sum, ratio, worst)


@dataclass
class VdbpState:
    """Per-edge and per-node quantities of one VDBP iteration (arrays are M x N or length M/N)."""

    mu_theta: np.ndarray
    tau_theta: np.ndarray
    mu_p: np.ndarray = None
    tau_p: np.ndarray = None
    mu_p_edge: np.ndarray = None
    tau_p_edge: np.ndarray = None
    mu_r: np.ndarray = None
    tau_r: np.ndarray = None
    nu_r_edge: np.ndarray = None
    xi_r_edge: np.ndarray = None
    epsilon: np.ndarray = None

    @property
    def mu_r_edge(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.nu_r_edge / self.xi_r_edge

    @property
    def tau_r_edge(self):
        with np.errstate(divide="ignore"):
            return 1.0 / self.xi_r_edge


def _pad_factors(factors):
    k = max(f.n_components for f in factors)
    shape = (len(factors), k)
    log_p = np.full(shape, -np.inf)
    nu = np.zeros(shape)
    xi = np.ones(shape)
    for i, f in enumerate(factors):
        c = f.n_components
        log_p[i, :c] = f.log_weights
        nu[i, :c] = f.nat_means
        xi[i, :c] = f.nat_precisions
    return log_p, nu, xi


def vdbp_step(a, state, padded, y=None):
    """One pass of the message schedule; fills ``state`` and returns new (mu_theta, tau_theta).

    Returns ``None`` in place of the update if an edge cavity is unusable.
    """
    log_p, nu_s, xi_s = padded
    m, n = a.shape
    a2 = a * a
    eps = state.epsilon[:, None]
    y = np.zeros(m) if y is None else y

    state.mu_p = np.sum(a * state.mu_theta, axis=1)
    state.tau_p = np.sum(a2 * state.tau_theta, axis=1)
    state.mu_p_edge = state.mu_p[:, None] - a * state.mu_theta
    state.tau_p_edge = state.tau_p[:, None] - a2 * state.tau_theta

    denom = state.tau_p_edge + eps
    if np.any(~(denom > 0)):
        return None
    w = a2 / denom
    h = a * (y[:, None] - state.mu_p_edge) / denom
    xi_r = w.sum(axis=0)
    nu_r = h.sum(axis=0)
    state.tau_r = 1.0 / xi_r
    state.mu_r = nu_r / xi_r
    # leave-one-out by subtraction; exactly zero precision when M = 1
    state.xi_r_edge = xi_r[None, :] - w
    state.nu_r_edge = nu_r[None, :] - h
    if np.any(~(state.xi_r_edge >= 0)) or np.any(~np.isfinite(state.nu_r_edge)):
        return None

    # (M, N, K) broadcast of every factor against every edge cavity
    _, mu_t, tau_t, _ = mixture_posterior(
        log_p[None, :, :], nu_s[None, :, :], xi_s[None, :, :], state.nu_r_edge, state.xi_r_edge
    )
    return mu_t, tau_t


def copy_beliefs(state, padded):
    log_p, nu_s, xi_s = padded
    _, mu, tau, _ = mixture_posterior(log_p, nu_s, xi_s, state.mu_r / state.tau_r, 1.0 / state.tau_r)
    return mu, tau


def combine_copies(mu, tau):
    prec = 1.0 / tau
    return float(np.sum(mu * prec) / np.sum(prec)), float(np.min(tau))


def run_vdbp(factors, matrix, config=SolverConfig(), snapshots=None):
    """Run VDBP until the combined (mean, variance) settles.

    If ``snapshots`` is a list, a copy of the state after every iteration is
    appended to it.
    """
    factors = list(factors)
    a = np.asarray(matrix.a if isinstance(matrix, MixingMatrix) else matrix, dtype=float)
    m, n = a.shape
    if n != len(factors):
        raise InvalidFactor(f"matrix has {n} columns for {len(factors)} factors")
    if n < 2 or m != n - 1:
        raise InvalidFactor("matrix must be (N-1) x N with N >= 2")
    padded = _pad_factors(factors)
    state = VdbpState(np.zeros((m, n)), np.ones((m, n)), epsilon=np.full(m, float(config.epsilon)))

    prev = None
    est = None
    for it in range(1, config.vdbp_max_iter + 1):
        upd = vdbp_step(a, state, padded)
        if upd is None:
            bad = np.argwhere(
                ~(state.tau_p_edge + state.epsilon[:, None] > 0)
                if state.xi_r_edge is None
                else ~(state.xi_r_edge >= 0)
            )
            where = tuple(int(i) for i in bad[0]) if bad.size else ()
            return failed(it, f"numerical breakdown at iteration {it}, edge {where}")
        mu_t, tau_t = upd
        if config.damping != 1.0:
            d = config.damping
            mu_t = d * mu_t + (1 - d) * state.mu_theta
            tau_t = d * tau_t + (1 - d) * state.tau_theta
        if not (np.all(np.isfinite(mu_t)) and np.all(tau_t > 0) and np.all(np.isfinite(tau_t))):
            return failed(it, f"non-finite edge moments at iteration {it}")
        state.mu_theta, state.tau_theta = mu_t, tau_t

        mu_c, tau_c = copy_beliefs(state, padded)
        if not (np.all(np.isfinite(mu_c)) and np.all(np.isfinite(tau_c)) and np.all(tau_c > 0)):
            return failed(it, f"non-finite copy beliefs at iteration {it}")
        mean, var = combine_copies(mu_c, tau_c)
        est = Estimate(mean, var, it, Status.MAX_ITER, per_copy_means=mu_c, per_copy_variances=tau_c)
        if snapshots is not None:
            snapshots.append(
                VdbpState(**{k: (None if v is None else np.copy(v)) for k, v in vars(state).items()})
            )
        if prev is not None and abs(mean - prev[0]) + abs(var - prev[1]) < config.vdbp_tol:
            est.status = Status.CONVERGED
            break
        prev = (mean, var)
    return est
