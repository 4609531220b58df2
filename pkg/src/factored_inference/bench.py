"""
Monte-Carlo accuracy benchmark against the brute-force product oracle.

Every realization draws a fresh set of mixture factors from its own seed
(``base_seed + index``), so results do not depend on how realizations are
scheduled across workers.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .acep import run_acep
from .ep_common import Mode, SolverConfig, Status, run_clipping_ep
from .errors import FactoredInferenceError
from .gaussian_core import Gmm1D, exact_product_moments
from .persistent_ep import run_persistent_ep
from .vdbp import MatrixKind, build_mixing_matrix, run_vdbp

ALGORITHMS = ("vdbp", "pep-strict", "pep-relaxed", "acep-strict", "acep-relaxed", "clip")
METRICS = ("nse_mu", "nse_tau")
NEAR_ZERO_MEAN = 1e-12
THREADS_ENV = "FACTORED_INFERENCE_THREADS"


@dataclass(frozen=True)
class UniformLaw:
    low: float
    high: float

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)


@dataclass(frozen=True)
class DirichletLaw:
    alpha: float = 1.0

    def sample(self, rng, size):
        return rng.dirichlet(np.full(size, self.alpha))


@dataclass(frozen=True)
class InstanceSpec:
    """Random-instance recipe.  Default laws are a declared choice, not taken from any source."""

    n_factors: int = 8
    components: int = 2
    seed: int = 0
    weight_law: DirichletLaw = field(default_factory=DirichletLaw)
    mean_law: UniformLaw = field(default_factory=lambda: UniformLaw(-3.0, 3.0))
    var_law: UniformLaw = field(default_factory=lambda: UniformLaw(0.1, 2.0))

    def __post_init__(self):
        if self.n_factors < 2:
            raise ValueError("n_factors must be at least 2")
        if self.components < 1:
            raise ValueError("components must be at least 1")
        if not self.var_law.low > 0 or self.var_law.high < self.var_law.low:
            raise ValueError("variance law must have strictly positive support")

    def with_seed(self, seed):
        return InstanceSpec(
            self.n_factors, self.components, seed, self.weight_law, self.mean_law, self.var_law
        )


def generate_instance(spec):
    rng = np.random.default_rng(spec.seed)
    out = []
    for _ in range(spec.n_factors):
        w = spec.weight_law.sample(rng, spec.components)
        # Dirichlet draws can underflow to exactly zero for tiny alpha
        w = np.maximum(w, np.finfo(float).tiny)
        out.append(
            Gmm1D(
                w / w.sum(),
                spec.mean_law.sample(rng, spec.components),
                spec.var_law.sample(rng, spec.components),
            )
        )
    return out


@dataclass(frozen=True)
class Nse:
    nse_mu: float
    nse_tau: float
    raw_se_mu: float
    mu_unstable: bool


def nse(est_mean, est_var, exact):
    """Normalized squared errors of (mean, variance) against exact moments."""
    se_mu = (est_mean - exact.mean) ** 2
    se_tau = (est_var - exact.variance) ** 2
    unstable = abs(exact.mean) < NEAR_ZERO_MEAN
    nse_mu = se_mu / exact.mean ** 2 if exact.mean != 0 else math.inf
    return Nse(nse_mu, se_tau / exact.variance ** 2, se_mu, unstable)


@dataclass(frozen=True)
class BenchRecord:
    seed: int
    algorithm: str
    mode: str
    mean: float
    var: float
    exact_mean: float
    exact_var: float
    nse_mu: float
    nse_tau: float
    iterations: int
    status: str
    raw_se_mu: float = math.nan
    mu_unstable: bool = False


CSV_COLUMNS = (
    "seed", "algorithm", "mode", "mean", "var", "exact_mean", "exact_var",
    "nse_mu", "nse_tau", "iterations", "status",
)


def _split(name):
    base, _, mode = name.partition("-")
    return base, mode


def solve(name, factors, config, matrix_seed=0):
    """Run one named algorithm variant and return its Estimate."""
    base, mode = _split(name)
    if base == "vdbp":
        n = len(factors)
        kind = MatrixKind.TRIMMED_HADAMARD if n & (n - 1) == 0 else MatrixKind.RANDOM_PROJECTED
        return run_vdbp(factors, build_mixing_matrix(n, kind, matrix_seed), config)
    if base == "clip":
        return run_clipping_ep(factors, config)
    cfg = SolverConfig(**{**asdict(config), "mode": Mode(mode)})
    if base == "pep":
        return run_persistent_ep(factors, cfg)[0]
    if base == "acep":
        return run_acep(factors, cfg)[0]
    raise ValueError(f"unknown algorithm {name!r}")


def run_realization(spec, algorithms, config=SolverConfig()):
    factors = generate_instance(spec)
    exact = exact_product_moments(factors)
    records = []
    for name in algorithms:
        base, mode = _split(name)
        try:
            est = solve(name, factors, config, matrix_seed=spec.seed)
            mean, var, iters, status = est.mean, est.variance, est.iterations, est.status.value
        except FactoredInferenceError as exc:
            mean, var, iters, status = math.nan, math.nan, 0, f"{Status.FAILED.value}: {exc}"
        if math.isfinite(mean) and math.isfinite(var):
            e = nse(mean, var, exact)
        else:
            e = Nse(math.nan, math.nan, math.nan, abs(exact.mean) < NEAR_ZERO_MEAN)
        records.append(
            BenchRecord(
                spec.seed, base, mode, mean, var, exact.mean, exact.variance,
                e.nse_mu, e.nse_tau, iters, status, e.raw_se_mu, e.mu_unstable,
            )
        )
    return records


def _realization_job(args):
    return run_realization(*args)


def worker_count(requested=None):
    """Explicit request, else the environment cap (0 = all CPUs), else 1."""
    if requested is None:
        env = os.environ.get(THREADS_ENV)
        requested = int(env) if env not in (None, "") else 1
    if requested <= 0:
        requested = os.cpu_count() or 1
    return requested


def empirical_cdf(values):
    """Sorted values with cdf = rank / count; non-finite values sort last as +inf."""
    v = np.asarray(values, dtype=float)
    v = np.where(np.isfinite(v), v, np.inf)
    v = np.sort(v)
    return v, np.arange(1, v.size + 1) / v.size


@dataclass
class SuiteResult:
    records: list
    cdfs: dict
    spec: InstanceSpec
    realizations: int
    algorithms: tuple

    def curve(self, algorithm, metric):
        return self.cdfs[(algorithm, metric)]

    def values(self, algorithm, metric):
        base, mode = _split(algorithm)
        return np.array(
            [getattr(r, metric) for r in self.records if r.algorithm == base and r.mode == mode]
        )


def run_suite(spec=InstanceSpec(), realizations=10_000, algorithms=ALGORITHMS,
              config=SolverConfig(), workers: Optional[int] = None):
    if realizations < 1:
        raise ValueError("realizations must be at least 1")
    algorithms = tuple(algorithms)
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {a!r}")
    jobs = [(spec.with_seed(spec.seed + i), algorithms, config) for i in range(realizations)]
    workers = worker_count(workers)
    if workers == 1:
        per = [_realization_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per = list(pool.map(_realization_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    records = [r for batch in per for r in batch]
    result = SuiteResult(records, {}, spec, realizations, algorithms)
    for a in algorithms:
        for m in METRICS:
            result.cdfs[(a, m)] = empirical_cdf(result.values(a, m))
    return result


def sup_distance(x, y):
    """Kolmogorov distance between the empirical CDFs of two samples."""
    x = np.sort(np.where(np.isfinite(x), x, np.inf))
    y = np.sort(np.where(np.isfinite(y), y, np.inf))
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def percentile(values, q):
    v = np.where(np.isfinite(values), values, np.inf)
    return float(np.quantile(v, q, method="inverted_cdf"))


def metadata(result):
    spec = result.spec
    return {
        "n_factors": spec.n_factors,
        "components": spec.components,
        "base_seed": spec.seed,
        "realizations": result.realizations,
        "weight_law": {"dirichlet_alpha": spec.weight_law.alpha},
        "mean_law": {"uniform": [spec.mean_law.low, spec.mean_law.high]},
        "var_law": {"uniform": [spec.var_law.low, spec.var_law.high]},
        "algorithms": list(result.algorithms),
    }
