"""
Analytic Continuation EP.

Each factor update is a KL projection restricted to message precisions that
keep the *next* factor's belief integrable.  Component responsibilities are
computed as ratios against a reference component, in the log domain, so that
a cavity sitting exactly on a component's integrability boundary can be
handled by its limit (that component drops out).
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .ep_common import (
    EpState,
    Mode,
    SolverConfig,
    cavity,
    damp,
    failed,
    finish,
    sweep_change,
)
from .errors import BadInit, DegenerateBelief, FactoredInferenceError, NonIntegrableBelief, NumericalBreakdown
from .gaussian_core import GaussianNat, check_integrability

# combined precisions this close to zero (relative) are treated as exactly zero
BOUNDARY_RTOL = 1e-12


@dataclass(frozen=True)
class AcepFactorUpdate:
    ref_component: int
    log_rho: np.ndarray
    rho_bar: np.ndarray
    mu_bf: float
    tau_bf: float
    xi_thres: float
    xi_out: float
    nu_out: float
    clipped_to_threshold: bool

    @property
    def message(self):
        return GaussianNat(self.nu_out, self.xi_out)


def combined_precisions(f, cav):
    """``xi_s + xi_cav`` with near-zero values snapped to exactly zero."""
    out = []
    for xi in f._nat_precisions:
        t = xi + cav.xi
        out.append(0.0 if abs(t) <= BOUNDARY_RTOL * (abs(xi) + abs(cav.xi)) else t)
    return out


def log_rho(f, cav, ref):
    """Log ratio of each component's belief weight to that of component ``ref``.

    Components whose combined precision is exactly zero get ``-inf``: as the
    cavity approaches that boundary from the admissible side the component is
    taken out of the belief.
    """
    t = combined_precisions(f, cav)
    if t[ref] <= 0:
        raise DegenerateBelief(f"reference component {ref} sits on the boundary")
    xi_s, nu_s, log_p = f._nat_precisions, f._nat_means, f._log_weights
    nu_c, xi_c = cav.nu, cav.xi

    def expo(s):
        return (xi_c * nu_s[s] ** 2 / xi_s[s] - 2.0 * nu_s[s] * nu_c - nu_c * nu_c) / t[s]

    e_ref = expo(ref)
    base = log_p[ref] + 0.5 * (math.log(xi_s[ref]) - math.log(t[ref]))
    out = []
    for s in range(len(t)):
        if t[s] <= 0:
            out.append(-math.inf)
            continue
        out.append(
            log_p[s] + 0.5 * (math.log(xi_s[s]) - math.log(t[s])) - base - 0.5 * (expo(s) - e_ref)
        )
    return out


def update_factor_acep(f_n, cav, f_next, msg_next, mode=Mode.STRICT):
    """Constrained projection for factor ``n``; ``f_next``/``msg_next`` belong to the following factor."""
    mode = Mode(mode)
    t = combined_precisions(f_n, cav)
    worst = min(range(len(t)), key=t.__getitem__)
    if t[worst] < 0:
        raise NonIntegrableBelief(f"component {worst} has combined precision {t[worst]!r}", component=worst)
    if max(t) <= 0:
        raise DegenerateBelief("every component sits on the integrability boundary")
    # widest-precision component: never on the boundary unless all are
    ref = max(range(len(t)), key=f_n._nat_precisions.__getitem__)
    lr = log_rho(f_n, cav, ref)
    top = max(lr)
    e = [math.exp(v - top) for v in lr]
    z = math.fsum(e)
    rho_bar = [v / z for v in e]
    cm = [(nu + cav.nu) / ts if ts > 0 else 0.0 for nu, ts in zip(f_n._nat_means, t)]
    cv = [1.0 / ts if ts > 0 else 0.0 for ts in t]
    mu = math.fsum(r * m for r, m in zip(rho_bar, cm))
    tau = math.fsum(r * (v + (m - mu) ** 2) for r, m, v in zip(rho_bar, cm, cv))
    if not (math.isfinite(mu) and math.isfinite(tau)) or tau <= 0:
        raise NumericalBreakdown(f"factor belief moments ({mu!r}, {tau!r}) unusable")

    if mode is Mode.STRICT:
        thres = -f_next.min_precision - cav.xi + msg_next.xi
    else:
        thres = 0.0
    xi_free = 1.0 / tau - cav.xi
    if xi_free > thres:
        xi_out, clipped = xi_free, False
    else:
        xi_out, clipped = thres, True
    nu_out = (xi_out + cav.xi) * mu - cav.nu
    return AcepFactorUpdate(
        ref, np.array(lr), np.array(rho_bar), mu, tau, thres, xi_out, nu_out, clipped
    )


class AcepStep(NamedTuple):
    factor: int
    clipped: bool
    belief_nu: float
    belief_xi: float
    next_status: object


def _next_cavity_xi(state, n, k, xi_out, wrap):
    # mirrors the arithmetic of EpState.install / resync followed by cavity()
    if wrap:
        xs = state.xi.copy()
        xs[n] = xi_out
        return math.fsum(xs) - xs[k]
    return (state.belief_xi + (xi_out - state.xi[n])) - state.xi[k]


def _enforce_next(state, n, k, xi_out, floor, wrap):
    """Raise ``xi_out`` by a few ulps if rounding would leave factor ``k`` non-integrable."""
    for _ in range(64):
        if floor + _next_cavity_xi(state, n, k, xi_out, wrap) >= 0:
            return xi_out
        xi_out = np.nextafter(xi_out, np.inf)
    step = abs(floor + _next_cavity_xi(state, n, k, xi_out, wrap))
    return xi_out + 2 * step


def run_acep(factors, config=SolverConfig()):
    """Returns ``(estimate, trace)``; one AcepStep per factor visit."""
    factors = list(factors)
    n_f = len(factors)
    state = EpState.initial(n_f, config)
    if not state.belief_xi > 0:
        raise BadInit(f"initial belief precision {state.belief_xi!r} is not positive")
    strict = config.mode is Mode.STRICT
    trace = []
    converged = False
    sweeps = 0
    for sweeps in range(1, config.max_sweeps + 1):
        before = (state.belief_nu, state.belief_xi)
        for n in range(n_f):
            k = (n + 1) % n_f
            wrap = n == n_f - 1
            cav = cavity(state, n)
            try:
                upd = update_factor_acep(factors[n], cav, factors[k], state.message(k), config.mode)
            except FactoredInferenceError as exc:
                return failed(sweeps, f"factor {n}: {exc}"), trace
            msg = damp(state.message(n), upd.message, config.damping)
            xi_out = max(msg.xi, upd.xi_thres)
            if strict:
                xi_out = _enforce_next(state, n, k, xi_out, factors[k].min_precision, wrap)
            if xi_out != msg.xi:
                msg = GaussianNat((xi_out + cav.xi) * upd.mu_bf - cav.nu, xi_out)
            state.install(n, msg)
            if wrap:
                state.resync()
            status = check_integrability(factors[k], cavity(state, k))
            trace.append(AcepStep(n, upd.clipped_to_threshold, state.belief_nu, state.belief_xi, status))
            if not (math.isfinite(state.belief_nu) and math.isfinite(state.belief_xi)):
                return failed(sweeps, f"non-finite state at factor {n}"), trace
        if sweep_change(before, state) < config.tol:
            converged = True
            break
    return finish(state, sweeps, converged), trace
