"""Every bound formula the laboratory evaluates: spectral-gap functionals,
the per-draw deterministic bias/variance bounds, the high-probability bounds
with their explicit constants, asymptotic rate shapes, the operator-norm
comparison bound, and the minimax proxy.

Unknown universal constants are explicit parameters defaulting to 1, and the
confidence parameter t defaults to ln(20), a 95% nominal level.  Values
produced with those defaults describe the shape of a bound, not a certified
inequality; the deterministic bounds, by contrast, hold per draw with no
constants at all and are asserted as such in the tests.

Degenerate spectral gaps (tied eigenvalues) yield +inf functionals rather
than errors: flat bulks are legitimate models and the bounds simply carry
no information there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import op_norm_diff, projector_dist
from .mnls import DualDecomposition
from .model import CovarianceModel, ParameterVector, _as_vector

__all__ = [
    "DEFAULT_T",
    "GapProfile",
    "BoundReport",
    "Thm1Rates",
    "gap_profile",
    "rho_n",
    "bias_bound_det",
    "variance_bound_det",
    "theta_profile",
    "thm2_bias_term",
    "bias_bound_thm2",
    "thm2_variance_term",
    "variance_bound_thm2",
    "thm1_rates",
    "blt_bias_bound",
    "minimax_proxy",
    "kl_projector_bound",
    "build_bound_report",
]

DEFAULT_T = math.log(20.0)


@dataclass(frozen=True)
class GapProfile:
    """Spectral gaps of a spectrum and the functionals built from them.

    gaps[j-1] is G_j = l_j - l_{j+1}; min_adjacent[j-1] is the smaller of the
    two gaps around l_j (the single available gap at both ends).
    degenerate_at is the first 1-based index whose min-gap vanishes, 0 when
    none does; functionals at or past it are +inf.
    """

    eigenvalues: np.ndarray
    gaps: np.ndarray
    min_adjacent: np.ndarray
    table: dict
    degenerate_at: int
    _prefix: dict = field(repr=False, compare=False, default_factory=dict)

    def gee(self, m: int, alpha: float) -> float:
        """The gap functional: sum over j <= m of l_j^alpha / min-gap_j."""
        if not 1 <= m <= self.min_adjacent.shape[0]:
            raise ValueError(f"m must lie in 1..{self.min_adjacent.shape[0]}, got {m}")
        if self.degenerate_at and m >= self.degenerate_at:
            return math.inf
        cached = self._prefix.get(alpha)
        if cached is not None and m <= cached.shape[0]:
            return float(cached[m - 1])
        lam = self.eigenvalues[:m]
        return float(np.sum(lam**alpha / self.min_adjacent[:m]))


def gap_profile(lam, m_max: int | None = None, alphas=(0.0, 0.5, 1.0)) -> GapProfile:
    """Compute gaps, min-gaps, and the requested functional values.

    Zero gaps are flagged, not rejected: the corresponding functional values
    are +inf and degenerate_at records where that starts.
    """
    lam = np.asarray(lam, dtype=float)
    d = lam.shape[0]
    if d < 2:
        raise ValueError("need at least two eigenvalues to form a gap")
    if np.any(lam[:-1] < lam[1:]) or lam[-1] <= 0:
        raise ValueError("eigenvalues must be non-increasing and positive")
    if m_max is None:
        m_max = d - 1
    if not 1 <= m_max <= d - 1:
        raise ValueError(f"m_max must lie in 1..{d - 1}, got {m_max}")
    gaps = lam[:-1] - lam[1:]
    bar = np.empty(d)
    bar[0] = gaps[0]
    bar[-1] = gaps[-1]
    if d > 2:
        bar[1:-1] = np.minimum(gaps[:-1], gaps[1:])
    zero = np.flatnonzero(bar == 0.0)
    degenerate_at = int(zero[0]) + 1 if zero.size else 0

    prefix = {}
    with np.errstate(divide="ignore"):
        for alpha in alphas:
            prefix[float(alpha)] = np.cumsum(lam[:m_max] ** float(alpha) / bar[:m_max])
    table = {(m, alpha): float(prefix[float(alpha)][m - 1]) for m in range(1, m_max + 1) for alpha in alphas}
    return GapProfile(
        eigenvalues=lam,
        gaps=gaps,
        min_adjacent=bar,
        table=table,
        degenerate_at=degenerate_at,
        _prefix=prefix,
    )


def rho_n(lam, n: int, d: int, m: int) -> float:
    """n times the larger of the (m+1)-th spectral ratio and its square root."""
    lam = np.asarray(lam, dtype=float)
    if not 0 <= m < lam.shape[0]:
        raise ValueError(f"m must lie in 0..{lam.shape[0] - 1}, got {m}")
    ratio = d * float(lam[m]) / (n * float(lam[0]))
    return n * max(math.sqrt(ratio), ratio)


def _projector_sum_norm(u_hat: np.ndarray, u_pop: np.ndarray, coeffs: np.ndarray) -> float:
    """Operator norm of sum_j c_j (uhat_j uhat_j^T - u_j u_j^T), exactly.

    The sum acts inside span{uhat_j, u_j}, at most 2m dimensions, so an
    orthonormal basis of that span turns the norm into a small dense
    symmetric eigenproblem.  Never materializes anything d x d.
    """
    block = np.concatenate([u_hat, u_pop], axis=1)
    q, _ = np.linalg.qr(block)
    a = q.T @ u_hat
    b = q.T @ u_pop
    s = (a * coeffs) @ a.T - (b * coeffs) @ b.T
    s = (s + s.T) / 2.0
    return float(np.max(np.abs(np.linalg.eigvalsh(s))))


def _population_block(model: CovarianceModel, m: int) -> np.ndarray:
    eye = np.zeros((model.d, m))
    eye[np.arange(m), np.arange(m)] = 1.0
    return model.from_coords(eye)


def bias_bound_det(model: CovarianceModel, dd: DualDecomposition, theta, m: int) -> float:
    """Per-draw bias bound: no probability, no unknown constant.

    2 |theta|^2 (l_{m+1} + |sum sqrt(l_j)(Phat_j - P_j)|^2)
               x (|sum (Phat_j - P_j)|^2 + tail mass fraction past m).
    Valid for m up to the design rank; m at most the spike count is the
    regime the bound was built for.
    """
    upper = min(dd.rank, model.d - 1)
    if not 1 <= m <= upper:
        raise ValueError(f"m must lie in 1..{upper}, got {m}")
    vec = _as_vector(theta)
    norm_sq = float(vec @ vec)
    if norm_sq == 0.0:
        return 0.0
    lam = model.eigenvalues
    u_hat = dd.sample_vectors()[:, :m]
    u_pop = _population_block(model, m)
    weighted = _projector_sum_norm(u_hat, u_pop, np.sqrt(lam[:m]))
    plain = _projector_sum_norm(u_hat, u_pop, np.ones(m))
    coords = model.to_coords(vec)
    tail = float(np.sum(coords[m:] ** 2))
    return 2.0 * norm_sq * (lam[m] + weighted**2) * (plain**2 + tail / norm_sq)


def variance_bound_det(model: CovarianceModel, dd: DualDecomposition, m: int, sigma: float) -> float:
    """Per-draw variance bound; +inf whenever the design is rank-deficient.

    Four terms: the eigenvalue-ratio main term, the projector-perturbation
    cross term, the weighted projector-sum term, and the non-spiked floor
    l_{m+1} / lambda_hat_n.
    """
    sigma = float(sigma)
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0.0:
        return 0.0
    if dd.rank < dd.n:
        return math.inf
    upper = min(dd.rank, model.d - 1)
    if not 1 <= m <= upper:
        raise ValueError(f"m must lie in 1..{upper}, got {m}")
    lam = model.eigenvalues
    lam_hat = dd.lambda_hat
    n = dd.n
    ratio_max = float(np.max(lam[:m] / lam_hat[:m]))
    dists = np.array([projector_dist(dd, model, j) for j in range(1, m + 1)])
    u_hat = dd.sample_vectors()[:, :m]
    u_pop = _population_block(model, m)
    weighted = _projector_sum_norm(u_hat, u_pop, lam[:m])
    lam_hat_n = lam_hat[n - 1]
    s2 = sigma * sigma
    return (
        s2 * m / n * (1.0 + lam[m] / lam[m - 1]) * ratio_max
        + s2 / n * ratio_max * float(np.sum(dists / lam[:m])) * float(np.sum(lam[:m]))
        + 2.0 * s2 * m / (n * lam_hat_n) * weighted
        + s2 * lam[m] / lam_hat_n
    )


def theta_profile(model: CovarianceModel, theta):
    """(norm, tail function) pair describing how theta spreads over the basis.

    The tail function maps m to the squared mass on eigendirections past m;
    suffix sums are accumulated from the small end so no cancellation occurs.
    """
    vec = _as_vector(theta)
    coords_sq = model.to_coords(vec) ** 2
    suffix = np.zeros(model.d + 1)
    suffix[: model.d] = np.cumsum(coords_sq[::-1])[::-1]
    norm = float(np.linalg.norm(vec))
    return norm, lambda m: float(suffix[m])


def _bias_term(profile: GapProfile, n: int, d: int, m: int, tail_frac: float, c: float, t: float) -> float:
    lam = profile.eigenvalues
    k = max(m, rho_n(lam, n, d, m) ** 2, t)
    half = profile.gee(m, 0.5)
    zero = profile.gee(m, 0.0)
    lam1 = float(lam[0])
    left = float(lam[m]) / lam1 + c * lam1 * half * half * k / n
    right = c * lam1 * lam1 * zero * zero * k / n + tail_frac
    return left * right


def thm2_bias_term(model: CovarianceModel, n: int, m: int, tail_frac: float, t: float = DEFAULT_T, c: float = 1.0) -> float:
    """One grid point of the high-probability bias bound's bracketed product."""
    profile = gap_profile(model.eigenvalues, m_max=min(m, model.d - 1))
    return _bias_term(profile, n, model.d, m, tail_frac, c, t)


def bias_bound_thm2(
    model: CovarianceModel,
    theta_prof,
    n: int,
    t: float = DEFAULT_T,
    c: float = 1.0,
    m_cap: int = 0,
):
    """High-probability bias bound: (value, argmin m).

    theta_prof is either the (norm, tail function) pair from theta_profile
    or a raw parameter vector, which is converted on the spot.  The scan
    runs m = 1..min(n, d-1), optionally capped.  When every m hits a
    degenerate gap the value is +inf and the argmin is reported as 0.
    """
    if t <= 0 or c <= 0:
        raise ValueError("t and C must be positive")
    if isinstance(theta_prof, (np.ndarray, list, ParameterVector)):
        theta_prof = theta_profile(model, theta_prof)
    norm, tail_fn = theta_prof
    if norm == 0.0:
        return 0.0, 0
    norm_sq = norm * norm
    d = model.d
    m_hi = min(n, d - 1)
    if m_cap:
        m_hi = min(m_hi, m_cap)
    profile = gap_profile(model.eigenvalues, m_max=m_hi)
    best, best_m = math.inf, 0
    for m in range(1, m_hi + 1):
        value = _bias_term(profile, n, d, m, tail_fn(m) / norm_sq, c, t)
        if value < best:
            best, best_m = value, m
    return 2.0 * float(model.eigenvalues[0]) * norm_sq * best, best_m


def _variance_term(
    profile: GapProfile, n: int, d: int, sigma: float, m_bar: int, m: int, c: float, t: float
) -> float:
    lam = profile.eigenvalues
    lam1 = float(lam[0])
    alpha = c * math.sqrt(max(n, t) / d)
    beta = c * math.sqrt(max(m_bar, t) / n)
    delta = max(c * math.sqrt(max(m, t) / n), rho_n(lam, n, d, m))
    g1 = profile.gee(m, 1.0)
    s2 = sigma * sigma
    term1 = s2 / n * (1.0 + d * float(lam[m_bar]) / (n * float(lam[m - 1])) * (1.0 + alpha) + beta) * (
        2.0 * m + lam1 * g1 * delta
    )
    if alpha >= 1.0:
        return math.inf
    term2 = s2 / (1.0 - alpha) * (2.0 * delta * m * g1 + n * float(lam[m]) / lam1) * (lam1 / (d * float(lam[-1])))
    return term1 + term2


def thm2_variance_term(
    model: CovarianceModel,
    n: int,
    sigma: float,
    m_bar: int,
    m: int,
    t: float = DEFAULT_T,
    c: float = 1.0,
) -> float:
    """One (m_bar, m) grid point of the high-probability variance bound.

    Exposed so directional checks can pin the grid point instead of letting
    the argmin drift between configurations.
    """
    if not 1 <= m <= m_bar <= min(n, model.d - 1):
        raise ValueError(f"need 1 <= m <= m_bar <= {min(n, model.d - 1)}, got m={m}, m_bar={m_bar}")
    profile = gap_profile(model.eigenvalues, m_max=min(m, model.d - 1))
    return _variance_term(profile, n, model.d, sigma, m_bar, m, c, t)


def variance_bound_thm2(
    model: CovarianceModel,
    n: int,
    sigma: float,
    t: float = DEFAULT_T,
    c: float = 1.0,
    m_cap: int = 0,
):
    """High-probability variance bound: (value, argmin (m_bar, m)).

    Exhaustive scan over 1 <= m <= m_bar <= min(n, d-1); the alpha >= 1
    regime (d too small for the concentration step) sends the second term to
    +inf, and if that kills every grid point the result is flagged with
    argmin (0, 0).
    """
    if t <= 0 or c <= 0:
        raise ValueError("t and C must be positive")
    sigma = float(sigma)
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0.0:
        return 0.0, (0, 0)
    d = model.d
    hi = min(n, d - 1)
    if m_cap:
        hi = min(hi, m_cap)
    profile = gap_profile(model.eigenvalues, m_max=hi)
    best, best_pair = math.inf, (0, 0)
    for m_bar in range(1, hi + 1):
        for m in range(1, m_bar + 1):
            value = _variance_term(profile, n, d, sigma, m_bar, m, c, t)
            if value < best:
                best, best_pair = value, (m_bar, m)
    return best, best_pair


@dataclass(frozen=True)
class Thm1Rates:
    """Raw rate quantities for trend plots; constants are unknown, shapes only."""

    bias_rate: float
    variance_rate: float
    variance_tail_rate: float


def thm1_rates(model: CovarianceModel, n: int) -> Thm1Rates:
    """Asymptotic rate shapes: max(1/n, d/(n l_1)), sqrt((n l_1/d)(1 v l_1/d)), n/d."""
    d = model.d
    lam1 = float(model.eigenvalues[0])
    return Thm1Rates(
        bias_rate=max(1.0 / n, d / (n * lam1)),
        variance_rate=math.sqrt(n * lam1 / d * max(1.0, lam1 / d)),
        variance_tail_rate=n / d,
    )


def blt_bias_bound(
    model: CovarianceModel,
    X: np.ndarray,
    theta_norm_sq: float,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> float:
    """Operator-norm comparison bound: |theta|^2 |Sigma - X^T X / n|."""
    if theta_norm_sq < 0:
        raise ValueError(f"theta_norm_sq must be nonnegative, got {theta_norm_sq}")
    return theta_norm_sq * op_norm_diff(X, model, tol=tol, max_iter=max_iter)


def minimax_proxy(X: np.ndarray, sigma: float, d: int) -> float:
    """d^2 sigma^2 over the squared Frobenius norm of the design; +inf for X = 0."""
    fro_sq = float(np.sum(X * X))
    if fro_sq == 0.0:
        return math.inf
    return d * d * sigma * sigma / fro_sq


def kl_projector_bound(lam, opnorm_diff_value: float, j: int) -> float:
    """Projector perturbation bound 4 |Sigma_hat - Sigma| / min-gap_j."""
    lam = np.asarray(lam, dtype=float)
    d = lam.shape[0]
    if not 1 <= j <= d - 1:
        raise ValueError(f"j must lie in 1..{d - 1}, got {j}")
    if opnorm_diff_value < 0:
        raise ValueError("the operator norm argument must be nonnegative")
    if j == 1:
        bar = lam[0] - lam[1]
    else:
        bar = min(lam[j - 2] - lam[j - 1], lam[j - 1] - lam[j])
    if bar == 0.0:
        return math.inf
    return 4.0 * opnorm_diff_value / float(bar)


@dataclass(frozen=True)
class BoundReport:
    """Every bound evaluated on one draw, keyed by formula name.

    values holds nonnegative reals or +inf; minimizers records the chosen m
    (and m_bar) for the minimized formulas, 0 meaning no finite grid point.
    """

    values: dict
    minimizers: dict
    kl_projector: tuple
    c: float
    t: float


def build_bound_report(
    model: CovarianceModel,
    dd: DualDecomposition,
    theta,
    sigma: float,
    c: float = 1.0,
    t: float = DEFAULT_T,
    m_cap: int = 0,
    opnorm: float | None = None,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> BoundReport:
    """Assemble all bound values for one fitted draw.

    The deterministic lemma bounds are minimized over m = 1..spike count
    (capped by rank), the regime they are designed for.  The operator norm
    of the covariance error can be passed in when a diagnostics pass already
    measured it; otherwise it is computed here.
    """
    vec = _as_vector(theta)
    n, d = dd.n, model.d
    m_bar = model.spike_count
    lam = model.eigenvalues
    if opnorm is None:
        opnorm = op_norm_diff(dd.X, model, tol=tol, max_iter=max_iter)

    m_adm = min(m_bar, dd.rank, d - 1)
    lemma1, lemma1_m = math.inf, 0
    lemma4, lemma4_m = math.inf, 0
    for m in range(1, m_adm + 1):
        b = bias_bound_det(model, dd, vec, m)
        if b < lemma1:
            lemma1, lemma1_m = b, m
        v = variance_bound_det(model, dd, m, sigma)
        if v < lemma4:
            lemma4, lemma4_m = v, m
    if sigma == 0.0:
        lemma4, lemma4_m = 0.0, 0

    thm2_bias, thm2_bias_m = bias_bound_thm2(model, vec, n, t=t, c=c, m_cap=m_cap)
    thm2_var, (thm2_mbar, thm2_m) = variance_bound_thm2(model, n, sigma, t=t, c=c, m_cap=m_cap)
    rates = thm1_rates(model, n)
    norm_sq = float(vec @ vec)
    values = {
        "lemma1_bias": lemma1,
        "lemma4_variance": lemma4,
        "thm2_bias": thm2_bias,
        "thm2_variance": thm2_var,
        "thm1_bias_rate": rates.bias_rate,
        "thm1_variance_rate": rates.variance_rate,
        "thm1_variance_tail_rate": rates.variance_tail_rate,
        "blt_bias": norm_sq * opnorm,
        "minimax_proxy": minimax_proxy(dd.X, sigma, d),
        "rho_n": rho_n(lam, n, d, m_bar),
        "opnorm_diff": opnorm,
    }
    minimizers = {
        "lemma1_m": lemma1_m,
        "lemma4_m": lemma4_m,
        "thm2_bias_m": thm2_bias_m,
        "thm2_variance_m_bar": thm2_mbar,
        "thm2_variance_m": thm2_m,
    }
    kl = tuple(kl_projector_bound(lam, opnorm, j) for j in range(1, m_bar + 1))
    return BoundReport(values=values, minimizers=minimizers, kl_projector=kl, c=c, t=t)
