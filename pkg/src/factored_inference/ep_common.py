"""
Sequential EP on a single scalar variable connected to N mixture factors.

Messages and the variable belief are stored in natural form so that zero and
negative message precisions are representable.  This module also carries the
clipping baseline, which keeps every message precision positive.
"""

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NonIntegrableBelief
from .gaussian_core import GaussianNat, IntegrabilityStatus, check_integrability, gmm_times_gaussian


class Status(enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    FAILED = "failed"


class Mode(enum.Enum):
    STRICT = "strict"
    RELAXED = "relaxed"


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by every solver.

    ``tol``/``max_sweeps`` govern the EP family, ``vdbp_tol``/``vdbp_max_iter``
    govern VDBP.  ``clip_xi`` is only read by the clipping baseline and
    ``epsilon`` (measurement noise variance) only by VDBP.
    """

    tol: float = 1e-10
    max_sweeps: int = 100
    mode: Mode = Mode.STRICT
    damping: float = 1.0
    init_nu: float = 0.0
    init_xi: float = 1.0
    clip_xi: float = 1e-8
    vdbp_tol: float = 1e-8
    vdbp_max_iter: int = 200
    epsilon: float = 0.0

    def __post_init__(self):
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", Mode(self.mode))
        if not self.tol > 0 or not self.vdbp_tol > 0:
            raise ValueError("tolerances must be positive")
        if self.max_sweeps < 1 or self.vdbp_max_iter < 1:
            raise ValueError("iteration caps must be at least 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not self.clip_xi > 0:
            raise ValueError("clip_xi must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")


@dataclass
class Estimate:
    mean: float
    variance: float
    iterations: int
    status: Status
    reason: Optional[str] = None
    per_copy_means: Optional[np.ndarray] = None
    per_copy_variances: Optional[np.ndarray] = None

    @property
    def converged(self):
        return self.status is Status.CONVERGED

    def to_dict(self):
        return {
            "mean": self.mean,
            "variance": self.variance,
            "iterations": self.iterations,
            "status": self.status.value,
        }


def failed(iterations, reason):
    return Estimate(math.nan, math.nan, iterations, Status.FAILED, reason=reason)


@dataclass
class EpState:
    """Factor-to-variable messages plus their running sum (the belief)."""

    nu: np.ndarray
    xi: np.ndarray
    belief_nu: float = field(init=False)
    belief_xi: float = field(init=False)

    def __post_init__(self):
        self.nu = np.array(self.nu, dtype=float)
        self.xi = np.array(self.xi, dtype=float)
        self.resync()

    @classmethod
    def initial(cls, n, config):
        return cls(np.full(n, float(config.init_nu)), np.full(n, float(config.init_xi)))

    @property
    def n(self):
        return self.nu.size

    @property
    def belief(self):
        return GaussianNat(self.belief_nu, self.belief_xi)

    def message(self, n):
        return GaussianNat(float(self.nu[n]), float(self.xi[n]))

    def resync(self):
        self.belief_nu = math.fsum(self.nu)
        self.belief_xi = math.fsum(self.xi)

    def install(self, n, msg):
        """Replace message ``n`` and update the belief in O(1)."""
        self.belief_nu += msg.nu - self.nu[n]
        self.belief_xi += msg.xi - self.xi[n]
        self.nu[n] = msg.nu
        self.xi[n] = msg.xi


def cavity(state, n):
    return GaussianNat(state.belief_nu - state.nu[n], state.belief_xi - state.xi[n])


def belief_estimate(state, iterations=0, status=Status.CONVERGED):
    if not state.belief_xi > 0:
        raise NonIntegrableBelief(f"belief precision {state.belief_xi!r} is not positive")
    return Estimate(state.belief_nu / state.belief_xi, 1.0 / state.belief_xi, iterations, status)


def damp(old, new, damping):
    if damping == 1.0:
        return new
    return GaussianNat(
        damping * new.nu + (1 - damping) * old.nu,
        damping * new.xi + (1 - damping) * old.xi,
    )


def sweep_change(before, state):
    return max(abs(state.belief_nu - before[0]), abs(state.belief_xi - before[1]))


def finish(state, sweeps, converged):
    """Turn the final state into an Estimate, failing on a non-finite belief."""
    if not (math.isfinite(state.belief_nu) and math.isfinite(state.belief_xi)):
        return failed(sweeps, "non-finite belief")
    if not state.belief_xi > 0:
        return failed(sweeps, f"belief precision {state.belief_xi!r} is not positive")
    return belief_estimate(state, sweeps, Status.CONVERGED if converged else Status.MAX_ITER)


class ClipEvent(enum.Enum):
    NONE = "none"
    CAVITY_PROJECTED = "cavity_projected"
    MESSAGE_CLIPPED = "message_clipped"


def clipping_update(f, cav, clip_xi):
    """One clipping-EP factor update; returns ``(message, event)``."""
    event = ClipEvent.NONE
    if check_integrability(f, cav) is not IntegrabilityStatus.INTEGRABLE:
        cav = GaussianNat(cav.nu, -f.min_precision + clip_xi)
        event = ClipEvent.CAVITY_PROJECTED
    mom = gmm_times_gaussian(f, cav).moments
    xi = 1.0 / mom.variance - cav.xi
    if xi <= 0:
        # precision pushed toward zero while the mean stays finite
        return GaussianNat(clip_xi * mom.mean, clip_xi), ClipEvent.MESSAGE_CLIPPED
    return GaussianNat(mom.mean / mom.variance - cav.nu, xi), event


def run_clipping_ep(factors, config=SolverConfig(), trace=None):
    """Sequential EP that clips non-positive message precisions to ``clip_xi``.

    If ``trace`` is a list, one ``(n, event, belief_nu, belief_xi)`` tuple is
    appended per factor visit.
    """
    factors = list(factors)
    state = EpState.initial(len(factors), config)
    converged = False
    sweeps = 0
    for sweeps in range(1, config.max_sweeps + 1):
        before = (state.belief_nu, state.belief_xi)
        for n, f in enumerate(factors):
            cav = cavity(state, n)
            msg, event = clipping_update(f, cav, config.clip_xi)
            msg = damp(state.message(n), msg, config.damping)
            state.install(n, msg)
            if trace is not None:
                trace.append((n, event, state.belief_nu, state.belief_xi))
            if not (math.isfinite(state.belief_nu) and math.isfinite(state.belief_xi)):
                return failed(sweeps, f"non-finite state at factor {n}")
        state.resync()
        if sweep_change(before, state) < config.tol:
            converged = True
            break
    return finish(state, sweeps, converged)
