"""Exact conditional risk of the interpolating estimator, given the design.

Conditionally on X, the excess prediction risk of the minimum-norm fit splits
into a bias term that depends only on how theta projects onto the row space
and a variance term that depends only on the design spectrum.  Both are
computed here in closed form from the dual decomposition, never through d x d
matrices.  ``mc_risk_check`` re-estimates the same quantity by brute-force
simulation of fresh noise and fresh test points, giving an independent check
that the closed forms are right.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .mnls import DualDecomposition, dual_decompose, project_rowspace
from .model import CovarianceModel, SpikeFamily, SpikeSpec, _as_vector, make_theta, null_risk
from .sampler import GAUSSIAN, Dataset, sample_design
from .util import ROLE_NEWX, ROLE_NOISE, nearest_rank, philox_stream, pmap_indexed, replicate_seed, uniforms

__all__ = [
    "RiskReport",
    "ThetaPolicy",
    "ReplicateAggregate",
    "bias_sq",
    "variance",
    "conditional_risk",
    "mc_risk_check",
    "replicate_risk",
]

# Monte Carlo below this many draws is too noisy to certify a 3-sigma check.
MIN_MC_DRAWS = 1000


@dataclass(frozen=True)
class RiskReport:
    """Conditional risk of one fitted instance, split into its two parts.

    ``normalized`` is risk over null risk and is NaN whenever the null risk
    is zero; ``normalized_defined`` records which case occurred so that
    downstream aggregation never has to re-derive it from the NaN.
    """

    bias_sq: float
    variance: float
    total: float
    null_risk: float
    normalized: float
    normalized_defined: bool
    n: int
    d: int
    seed: int | None
    elapsed_ms: float


def _check_dims(model: CovarianceModel, dd: DualDecomposition) -> None:
    if model.d != dd.d:
        raise ValueError(f"model dimension {model.d} does not match design dimension {dd.d}")


def _theta_vector(theta, d: int) -> np.ndarray:
    vec = _as_vector(theta)
    if vec.shape != (d,):
        raise ValueError(f"theta has shape {vec.shape}, expected ({d},)")
    return vec


def bias_sq(model: CovarianceModel, dd: DualDecomposition, theta) -> float:
    """Squared conditional bias: the Sigma-energy of theta outside the row space.

    Only the row-space complement of theta enters, so any two parameter
    vectors with the same orthogonal part give bit-identical output.
    """
    _check_dims(model, dd)
    theta = _theta_vector(theta, model.d)
    _, ortho = project_rowspace(dd, theta)
    return float(model.quad_form(ortho))


def variance(model: CovarianceModel, dd: DualDecomposition, sigma: float) -> float:
    """Conditional variance term (sigma^2 / n) * tr(pinv(Sigma_hat) Sigma).

    Evaluated through the dual eigenpairs: each retained direction u_j
    contributes (u_j' Sigma u_j) / lambda_hat_j.  Takes no theta and no
    labels; the value is a function of the design and sigma alone.
    """
    _check_dims(model, dd)
    sigma = float(sigma)
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0.0 or dd.rank == 0:
        return 0.0
    u_hat = dd.sample_vectors()  # (d, rank)
    coords = model.to_coords(u_hat)
    energies = model.eigenvalues @ (coords * coords)  # u_j' Sigma u_j per column
    return float(sigma * sigma / dd.n * np.sum(energies / dd.lambda_hat[: dd.rank]))


def conditional_risk(
    model: CovarianceModel,
    dd: DualDecomposition,
    theta,
    sigma: float,
    seed: int | None = None,
) -> RiskReport:
    """Assemble the exact bias/variance split for one design."""
    start = time.perf_counter()
    theta = _theta_vector(theta, model.d)
    b2 = bias_sq(model, dd, theta)
    var = variance(model, dd, sigma)
    null = null_risk(model, theta)
    defined = null > 0.0
    normalized = (b2 + var) / null if defined else math.nan
    return RiskReport(
        bias_sq=b2,
        variance=var,
        total=b2 + var,
        null_risk=null,
        normalized=normalized,
        normalized_defined=defined,
        n=dd.n,
        d=dd.d,
        seed=seed,
        elapsed_ms=(time.perf_counter() - start) * 1e3,
    )


def mc_risk_check(
    dataset: Dataset,
    dd: DualDecomposition,
    r_noise: int,
    r_new: int,
    seed: int,
) -> tuple[float, float]:
    """Estimate the conditional risk by simulation; returns (estimate, se).

    For each of ``r_noise`` fresh noise vectors the estimator is refitted on
    the fixed design, then its prediction error is averaged over ``r_new``
    fresh test points drawn from the model.  The standard error is computed
    across the per-noise-draw means, which are iid, so the 3-sigma band
    around the estimate is honest even though test points are shared within
    a draw.
    """
    if r_noise < MIN_MC_DRAWS or r_new < MIN_MC_DRAWS:
        raise ValueError(
            f"need at least {MIN_MC_DRAWS} draws on each axis, got r_noise={r_noise}, r_new={r_new}"
        )
    if dd.n != dataset.n or dd.d != dataset.d:
        raise ValueError("decomposition does not match the dataset's design")
    model = dataset.model
    theta = _as_vector(dataset.theta)
    sigma = dataset.sigma
    x = dataset.X
    n, d = x.shape
    r = dd.rank
    vecs = dd.dual_vectors[:, :r]
    lam_hat = dd.lambda_hat[:r]
    sqrt_lam = np.sqrt(model.eigenvalues)
    noise_law = dataset.noise_law
    new_law = dataset.law

    # Fixed-design part of every refit: V_r' X theta, reused across draws.
    signal = x @ theta
    base_coeff = (vecs.T @ signal) / (n * lam_hat) if r > 0 else np.zeros(0)

    means = np.empty(r_noise)
    for b in range(r_noise):
        if sigma > 0.0:
            gen = philox_stream(seed, b, ROLE_NOISE)
            xi = noise_law.ppf(uniforms(gen, n))
            if r > 0:
                coeff = base_coeff + (vecs.T @ xi) * (sigma / (n * lam_hat))
            else:
                coeff = base_coeff
        else:
            coeff = base_coeff
        theta_hat = x.T @ (vecs @ coeff) if r > 0 else np.zeros(d)
        # Error direction in eigencoordinates: a fresh point x_new = U L^{1/2} z
        # predicts with error z' g, so squared errors are (Z g)^2.
        g = sqrt_lam * model.to_coords(theta - theta_hat)
        gen_new = philox_stream(seed, b, ROLE_NEWX)
        z = new_law.ppf(uniforms(gen_new, (r_new, d)))
        errs = z @ g
        means[b] = np.mean(errs * errs)

    estimate = float(np.mean(means))
    se = float(np.std(means, ddof=1) / math.sqrt(r_noise))
    return estimate, se


@dataclass(frozen=True)
class ThetaPolicy:
    """How to build the target vector at each replicate.

    delta is the fraction of squared norm placed uniformly at random in the
    bulk; the rest sits on the spikes with the given weights (equal split
    when omitted).  The bulk direction is redrawn per replicate from the
    replicate's own seed.
    """

    delta: float = 0.0
    norm: float = 1.0
    spike_weights: tuple | None = None

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        if self.norm <= 0:
            raise ValueError(f"norm must be positive, got {self.norm}")
        if self.spike_weights is not None:
            object.__setattr__(self, "spike_weights", tuple(float(w) for w in self.spike_weights))

    def build(self, model: CovarianceModel, seed: int) -> np.ndarray:
        return make_theta(model, self.delta, self.norm, spike_weights=self.spike_weights, bulk_seed=seed)


@dataclass(frozen=True)
class ReplicateAggregate:
    """Replicate-level reports plus summary statistics, in replicate order."""

    reports: tuple
    summary: dict
    n: int
    d: int
    replicates: int


_SUMMARY_FIELDS = ("bias_sq", "variance", "total", "null_risk", "normalized")


def _summarize(reports) -> dict:
    out = {}
    for field in _SUMMARY_FIELDS:
        values = np.array([getattr(rep, field) for rep in reports])
        if field == "normalized":
            values = values[np.isfinite(values)]
        if values.size == 0:
            out[field] = {"mean": math.nan, "median": math.nan, "q05": math.nan, "q95": math.nan}
            continue
        out[field] = {
            "mean": float(np.mean(values)),
            "median": nearest_rank(values, 0.5),
            "q05": nearest_rank(values, 0.05),
            "q95": nearest_rank(values, 0.95),
        }
    return out


def _one_replicate(args) -> RiskReport:
    family, n, policy, sigma, law, seed = args
    model = family.realize_at(n)
    theta = policy.build(model, seed)
    x = sample_design(model, n, law, seed)
    dd = dual_decompose(x)
    return conditional_risk(model, dd, theta, sigma, seed=seed)


def replicate_risk(
    family,
    n: int,
    theta_policy: ThetaPolicy,
    sigma: float,
    law=GAUSSIAN,
    replicates: int = 50,
    base_seed: int = 0,
    threads: int = 1,
) -> ReplicateAggregate:
    """Run ``replicates`` independent draws at sample size n and aggregate.

    ``family`` may be a SpikeSpec (wrapped with the identity basis) or any
    object with ``realize_at``.  Replicate i uses a seed derived from
    (base_seed, i, n), so enlarging the grid or rerunning a single n
    reproduces the same per-replicate values.  Reduction is in replicate
    order regardless of thread count.
    """
    if isinstance(family, SpikeSpec):
        family = SpikeFamily(family)
    if replicates < 1:
        raise ValueError(f"replicates must be positive, got {replicates}")
    seeds = [replicate_seed(base_seed, i, n) for i in range(replicates)]
    jobs = [(family, n, theta_policy, sigma, law, s) for s in seeds]
    reports = tuple(pmap_indexed(_one_replicate, jobs, threads))
    return ReplicateAggregate(
        reports=reports,
        summary=_summarize(reports),
        n=n,
        d=family.dim_at(n),
        replicates=replicates,
    )
