"""Spectral diagnostics: measured counterparts of the eigenvalue, eigenvector,
and dual-matrix claims that drive the risk bounds.

Everything here is deterministic given (X, model).  Quantities that need the
standardized coordinate stream behind a design (the dual split) regenerate it
from the sampler's (law, seed) provenance; they refuse to guess it for an
external design matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mnls import DualDecomposition, dual_decompose
from .model import CovarianceModel
from .sampler import GAUSSIAN, Dataset, sample_entries
from .util import ROLE_BAIYIN, ROLE_PROBE, philox_stream, replicate_seed, uniforms

__all__ = [
    "PowerIterationError",
    "SpectralDiagnostics",
    "DualSplit",
    "BaiYinReport",
    "eig_ratio",
    "smallest_eig_ratio",
    "projector_dist",
    "op_norm_diff",
    "dual_split",
    "bai_yin_check",
    "spectral_diagnostics",
]


class PowerIterationError(RuntimeError):
    """Raised when the operator-norm iteration fails to settle.

    Carries the last Rayleigh estimate and the iteration count so callers can
    decide whether the partial value is still usable.
    """

    def __init__(self, last_value: float, iterations: int):
        super().__init__(
            f"power iteration did not converge after {iterations} iterations; last value {last_value:.6e}"
        )
        self.last_value = last_value
        self.iterations = iterations


def eig_ratio(dd: DualDecomposition, model: CovarianceModel, m: int, t: float = 0.0):
    """Relative spike eigenvalue errors and the two comparison pieces.

    Returns (max ratio, per-k ratios for k <= m, (d l_{mbar+1} / (n l_m),
    sqrt(max(mbar, t))/sqrt(n))).  The pieces are reported constant-free; t
    defaults to 0 so the second piece is sqrt(mbar/n) unless a confidence
    level is supplied.
    """
    m_bar = model.spike_count
    if not 1 <= m <= m_bar:
        raise ValueError(f"m must lie in 1..{m_bar} (the spike count), got {m}")
    if m_bar > dd.rank:
        raise ValueError(f"design rank {dd.rank} is below the spike count {m_bar}")
    lam = model.eigenvalues
    lam_hat = dd.lambda_hat[:m]
    ratios = np.abs(lam_hat - lam[:m]) / lam[:m]
    piece_spectral = model.d * lam[m_bar] / (dd.n * lam[m - 1])
    piece_sampling = math.sqrt(max(m_bar, t)) / math.sqrt(dd.n)
    return float(np.max(ratios)), ratios, (float(piece_spectral), piece_sampling)


def smallest_eig_ratio(dd: DualDecomposition, model: CovarianceModel) -> float:
    """n lambda_hat_n / (d lambda_d); exactly 0 when the design is rank-deficient."""
    lam_n = dd.lambda_hat[dd.n - 1]
    return float(dd.n * lam_n / (model.d * model.eigenvalues[-1]))


def projector_dist(dd: DualDecomposition, model: CovarianceModel, j: int) -> float:
    """Operator-norm distance between the j-th sample and population projectors.

    Both projectors are rank one, so the distance is the sine of the angle
    between the eigenvectors.  Only identifiable directions are allowed: a j
    whose population eigenvalue ties a neighbor has no well-defined
    projector, and that is an error, not a number.
    """
    if not 1 <= j <= dd.rank:
        raise ValueError(f"j must lie in 1..{dd.rank} (the design rank), got {j}")
    lam = model.eigenvalues
    tied_above = j >= 2 and lam[j - 2] == lam[j - 1]
    tied_below = j <= model.d - 1 and lam[j - 1] == lam[j]
    if tied_above or tied_below:
        raise ValueError(f"population eigenvalue {j} lies in a tied block; projector not identifiable")
    u_hat = dd.sample_vectors()[:, j - 1]
    u = model.eigenvector(j)
    dot = float(u_hat @ u)
    return math.sqrt(max(0.0, 1.0 - dot * dot))


def op_norm_diff(
    X: np.ndarray,
    model: CovarianceModel,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> float:
    """Operator norm of Sigma_hat - Sigma without forming either matrix.

    Power iteration on the square of the symmetric operator
    v -> X^T(Xv)/n - Sigma v, so the indefinite sign structure cannot stall
    the iteration.  The probe vector is a fixed pseudorandom draw, making
    repeated calls bit-identical.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    n, d = X.shape
    if d != model.d:
        raise ValueError(f"design has {d} columns but the model dimension is {model.d}")

    def apply(v):
        return X.T @ (X @ v) / n - model.apply_sigma(v)

    gen = philox_stream(0, 0, ROLE_PROBE)
    v = GAUSSIAN.ppf(uniforms(gen, d))
    v /= np.linalg.norm(v)
    last = math.inf
    for _ in range(max_iter):
        w = apply(v)
        current = float(np.linalg.norm(w))  # = |M v| for unit v, climbs to |M|
        if current == 0.0:
            return 0.0
        u = apply(w)
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            return current
        v = u / norm_u
        if abs(current - last) <= tol * current:
            return current
        last = current
    raise PowerIterationError(last if math.isfinite(last) else 0.0, max_iter)


@dataclass(frozen=True)
class DualSplit:
    """Spiked/non-spiked split of the dual matrix and its normalized extremes."""

    m_bar: int
    sigma_s: np.ndarray
    sigma_ns: np.ndarray
    ratio_max: float
    ratio_min: float


def dual_split(
    X: np.ndarray,
    model: CovarianceModel,
    m_bar: int,
    law=None,
    seed: int | None = None,
) -> DualSplit:
    """Split the dual matrix into its spike part and the rest.

    The spike part n^{-1} sum_{j<=m_bar} l_j z_j z_j^T needs the standardized
    coordinates z_j that generated X; they are regenerated from (law, seed)
    thanks to the sampler's column-prefix stability.  Ratios follow the
    normalizations n sigma_max / (d l_{m_bar+1}) and n sigma_min / (d l_d).
    """
    n, d = X.shape
    if d != model.d:
        raise ValueError(f"design has {d} columns but the model dimension is {model.d}")
    if not 0 <= m_bar <= min(n, d - 1):
        raise ValueError(f"m_bar must lie in 0..{min(n, d - 1)}, got {m_bar}")
    dual = X @ X.T / n
    if m_bar > 0:
        if law is None or seed is None:
            raise ValueError(
                "the standardized coordinate stream is unavailable for an external design; pass law and seed"
            )
        z = sample_entries(n, m_bar, law, seed)
        spikes = (z * model.eigenvalues[:m_bar]) @ z.T / n
        sigma_s = np.linalg.svd(spikes, compute_uv=False)[:m_bar]
        rest = dual - spikes
    else:
        sigma_s = np.zeros(0)
        rest = dual
    rest = (rest + rest.T) / 2.0
    sigma_ns = np.linalg.svd(rest, compute_uv=False)
    lam = model.eigenvalues
    return DualSplit(
        m_bar=m_bar,
        sigma_s=sigma_s,
        sigma_ns=sigma_ns,
        ratio_max=float(n * sigma_ns[0] / (d * lam[m_bar])),
        ratio_min=float(n * sigma_ns[-1] / (d * lam[-1])),
    )


@dataclass(frozen=True)
class BaiYinReport:
    """Empirical extreme singular values of a standardized n x p matrix."""

    n: int
    p: int
    y: float
    reps: int
    sigma_max: np.ndarray
    sigma_min: np.ndarray
    sigma_max_mean: float
    sigma_min_mean: float
    dev_max: float
    dev_min: float


def bai_yin_check(n: int, p: int, law=GAUSSIAN, seed: int = 0, reps: int = 20) -> BaiYinReport:
    """Extreme singular values of W/sqrt(n) over independent replicates.

    The limits are 1 +- sqrt(y) with y = p/n; the report carries the mean
    deviations from them so a caller can threshold however it likes.
    """
    if not n > p >= 1:
        raise ValueError(f"need n > p >= 1, got n={n}, p={p}")
    if reps < 1:
        raise ValueError(f"reps must be positive, got {reps}")
    smax = np.empty(reps)
    smin = np.empty(reps)
    for rep in range(reps):
        w = sample_entries(n, p, law, replicate_seed(seed, rep, n), role=ROLE_BAIYIN)
        s = np.linalg.svd(w / math.sqrt(n), compute_uv=False)
        smax[rep] = s[0]
        smin[rep] = s[-1]
    y = p / n
    mean_max = float(np.mean(smax))
    mean_min = float(np.mean(smin))
    return BaiYinReport(
        n=n,
        p=p,
        y=y,
        reps=reps,
        sigma_max=smax,
        sigma_min=smin,
        sigma_max_mean=mean_max,
        sigma_min_mean=mean_min,
        dev_max=abs(mean_max - (1.0 + math.sqrt(y))),
        dev_min=abs(mean_min - (1.0 - math.sqrt(y))),
    )


@dataclass(frozen=True)
class SpectralDiagnostics:
    """One draw's worth of spectral measurements, ready for CSV flattening."""

    eig_ratio_max: float
    eig_ratios: tuple
    lemma2_pieces: tuple
    smallest_ratio: float
    projector_dists: tuple
    opnorm_diff: float
    split_ratio_max: float
    split_ratio_min: float


def spectral_diagnostics(
    dataset: Dataset,
    dd: DualDecomposition | None = None,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> SpectralDiagnostics:
    """Assemble every per-draw diagnostic for a sampled dataset.

    Models without spikes report NaN for the spike-indexed quantities rather
    than inventing an index to measure.
    """
    model = dataset.model
    if dd is None:
        dd = dual_decompose(dataset.X)
    m_bar = model.spike_count
    if m_bar >= 1 and dd.rank >= m_bar:
        ratio_max, ratios, pieces = eig_ratio(dd, model, m_bar)
        dists = tuple(projector_dist(dd, model, j) for j in range(1, m_bar + 1))
    else:
        ratio_max, ratios, pieces = math.nan, np.zeros(0), (math.nan, math.nan)
        dists = ()
    split = dual_split(dataset.X, model, m_bar, law=dataset.law, seed=dataset.seed)
    return SpectralDiagnostics(
        eig_ratio_max=ratio_max,
        eig_ratios=tuple(float(r) for r in ratios),
        lemma2_pieces=pieces,
        smallest_ratio=smallest_eig_ratio(dd, model),
        projector_dists=dists,
        opnorm_diff=op_norm_diff(dataset.X, model, tol=tol, max_iter=max_iter),
        split_ratio_max=split.ratio_max,
        split_ratio_min=split.ratio_min,
    )
