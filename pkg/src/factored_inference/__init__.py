"""Mean/variance approximation of products of 1-D Gaussian mixtures by message passing."""

from .acep import AcepFactorUpdate, run_acep, update_factor_acep
from .bench import InstanceSpec, generate_instance, nse, run_suite
from .ep_common import EpState, Estimate, Mode, SolverConfig, Status, belief_estimate, cavity, run_clipping_ep
from .gaussian_core import (
    GaussianMoment,
    GaussianNat,
    Gmm1D,
    IntegrabilityStatus,
    PosteriorMoments,
    check_integrability,
    exact_product_moments,
    gmm_moments,
    gmm_times_gaussian,
    moment_from_nat,
    nat_from_moment,
    reproduce_nat,
)
from .persistent_ep import run_persistent_ep
from .vdbp import MatrixKind, MixingMatrix, build_mixing_matrix, run_vdbp, validate_mixing_matrix

__version__ = "0.1.0"
