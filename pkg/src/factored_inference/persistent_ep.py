"""Persistent EP: skip any factor update whose factor-level belief is non-integrable."""

import math
from typing import NamedTuple

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
from .errors import BadInit
from .gaussian_core import GaussianNat, IntegrabilityStatus, check_integrability, gmm_times_gaussian


class PepStep(NamedTuple):
    factor: int
    passed: bool
    belief_nu: float
    belief_xi: float


def passes_check(f, cav, mode):
    """Strict: ``f * cavity`` integrable.  Relaxed: the cavity alone integrable."""
    if mode is Mode.STRICT:
        return check_integrability(f, cav) is IntegrabilityStatus.INTEGRABLE
    return cav.xi > 0


def pep_message(f, cav):
    mom = gmm_times_gaussian(f, cav).moments
    if not mom.variance > 0:
        return None
    xi_b = 1.0 / mom.variance
    return GaussianNat(mom.mean * xi_b - cav.nu, xi_b - cav.xi)


def run_persistent_ep(factors, config=SolverConfig()):
    """Returns ``(estimate, trace)`` where ``trace`` holds one PepStep per factor visit."""
    factors = list(factors)
    state = EpState.initial(len(factors), config)
    if not state.belief_xi > 0:
        raise BadInit(f"initial belief precision {state.belief_xi!r} is not positive")
    trace = []
    converged = False
    sweeps = 0
    for sweeps in range(1, config.max_sweeps + 1):
        before = (state.belief_nu, state.belief_xi)
        for n, f in enumerate(factors):
            cav = cavity(state, n)
            passed = passes_check(f, cav, config.mode)
            if passed:
                msg = pep_message(f, cav)
                if msg is None:
                    trace.append(PepStep(n, passed, state.belief_nu, state.belief_xi))
                    return failed(sweeps, f"zero belief variance at factor {n}"), trace
                state.install(n, damp(state.message(n), msg, config.damping))
            trace.append(PepStep(n, passed, state.belief_nu, state.belief_xi))
            if not (math.isfinite(state.belief_nu) and math.isfinite(state.belief_xi)):
                return failed(sweeps, f"non-finite state at factor {n}"), trace
        state.resync()
        if sweep_change(before, state) < config.tol:
            converged = True
            break
    return finish(state, sweeps, converged), trace
