"""Population side of the spiked covariance laboratory.

Covariance matrices are held in factored form: an eigenvalue vector plus an
implicit orthogonal basis applied as matrix-vector products. Nothing here ever
allocates a d x d array for large d; dense reconstructions exist only as a
small-dimension cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .util import ROLE_BASIS, ROLE_THETA, philox_stream, uniforms

__all__ = [
    "IdentityBasis",
    "HouseholderBasis",
    "householder_basis",
    "equicorr_basis",
    "CovarianceModel",
    "SpikeSpec",
    "ParameterVector",
    "HdlssReport",
    "realize",
    "equicorrelated",
    "validate_hdlss",
    "null_risk",
    "make_theta",
    "effective_rank",
]

MAX_DENSE_DIM = 4096


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


class IdentityBasis:
    """Trivial basis U = I; apply and transpose-apply are no-ops."""

    def apply(self, w):
        return np.asarray(w, dtype=float)

    def apply_t(self, w):
        return np.asarray(w, dtype=float)

    def __repr__(self):
        return "IdentityBasis()"


@dataclass(frozen=True)
class HouseholderBasis:
    """Orthogonal operator U = H_1 H_2 ... H_k, a product of reflections.

    Each row of `vectors` is a unit vector v defining H = I - 2 v v^T. The
    product is applied reflection by reflection, so cost is O(k d) per
    matrix-vector product and the d x d operator is never formed.
    """

    vectors: np.ndarray

    def __post_init__(self):
        vecs = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        norms = np.linalg.norm(vecs, axis=1)
        if not np.allclose(norms, 1.0, rtol=0, atol=1e-12):
            raise ValueError("reflection vectors must have unit norm")
        object.__setattr__(self, "vectors", _readonly(vecs))

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def apply(self, w):
        out = np.asarray(w, dtype=float)
        for v in self.vectors[::-1]:
            out = out - np.multiply.outer(v, 2.0 * (v @ out))
        return out

    def apply_t(self, w):
        out = np.asarray(w, dtype=float)
        for v in self.vectors:
            out = out - np.multiply.outer(v, 2.0 * (v @ out))
        return out


def householder_basis(d: int, k: int, seed: int) -> HouseholderBasis:
    """Pseudorandom product of k Householder reflections in dimension d."""
    if d < 1 or k < 1:
        raise ValueError("d and k must be positive")
    gen = philox_stream(seed, 0, ROLE_BASIS)
    vecs = ndtri(uniforms(gen, (k, d)))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return HouseholderBasis(vecs)


def equicorr_basis(d: int) -> HouseholderBasis:
    """Single reflection mapping e_1 to the constant unit vector d^{-1/2} 1."""
    v = -np.full(d, d ** -0.5)
    v[0] += 1.0
    v /= np.linalg.norm(v)
    return HouseholderBasis(v[None, :])


@dataclass(frozen=True)
class CovarianceModel:
    """A realized covariance at fixed dimension: Sigma = U diag(lambda) U^T.

    Parameters
    ----------
    eigenvalues : array
        Non-increasing, strictly positive, length d.
    basis : IdentityBasis or HouseholderBasis
        The implicit orthogonal operator U; column j of U is the j-th
        population eigenvector.
    spike_count : int
        Number of leading eigenvalues treated as spikes (m-bar).
    """

    eigenvalues: np.ndarray
    basis: object = field(default_factory=IdentityBasis)
    spike_count: int = 0

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("eigenvalues must be a nonempty vector")
        if not np.all(lam > 0):
            raise ValueError("eigenvalues must be strictly positive")
        if np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be non-increasing")
        if not 0 <= self.spike_count <= lam.size:
            raise ValueError("spike_count outside [0, d]")
        object.__setattr__(self, "eigenvalues", _readonly(lam))

    @property
    def d(self) -> int:
        return int(self.eigenvalues.size)

    def to_coords(self, w):
        """Coordinates of w in the eigenbasis: U^T w. Accepts (d,) or (d, m)."""
        return self.basis.apply_t(w)

    def from_coords(self, c):
        """Inverse of to_coords: U c."""
        return self.basis.apply(c)

    def apply_sigma(self, w):
        """Sigma w without forming Sigma."""
        c = self.to_coords(w)
        lam = self.eigenvalues if c.ndim == 1 else self.eigenvalues[:, None]
        return self.from_coords(lam * c)

    def quad_form(self, w):
        """w^T Sigma w (columnwise for a (d, m) argument)."""
        c = self.to_coords(w)
        lam = self.eigenvalues if c.ndim == 1 else self.eigenvalues[:, None]
        return np.sum(lam * c * c, axis=0)

    def eigenvector(self, j: int) -> np.ndarray:
        """Population eigenvector u_j, 1-based (j=1 is the leading one)."""
        if not 1 <= j <= self.d:
            raise ValueError(f"eigenvector index {j} outside 1..{self.d}")
        e = np.zeros(self.d)
        e[j - 1] = 1.0
        return self.from_coords(e)

    def densify(self) -> np.ndarray:
        """Dense Sigma for small-dimension cross-checks only."""
        if self.d > MAX_DENSE_DIM:
            raise ValueError(f"refusing to densify at d={self.d}")
        u = self.from_coords(np.eye(self.d))
        return (u * self.eigenvalues) @ u.T


@dataclass(frozen=True)
class SpikeSpec:
    """Symbolic growth rules for a family of spiked covariances indexed by n.

    spike_rules holds one (a, beta, gamma) triple per spike, giving the
    eigenvalue a * d(n)^beta * n^gamma. The bulk interpolates linearly from
    bulk[0] at index m-bar + 1 down to bulk[1] at index d. The dimension rule
    is d(n) = ceil(kappa * n^p).
    """

    spike_rules: tuple
    bulk: tuple = (1.0, 1.0)
    dim_rule: tuple = (1.0, 2.0)

    def __post_init__(self):
        rules = tuple((float(a), float(b), float(g)) for a, b, g in self.spike_rules)
        if not rules:
            raise ValueError("at least one spike rule is required")
        for i, (a, b, g) in enumerate(rules, start=1):
            if a <= 0 or b < 0 or g < 0:
                raise ValueError(f"spike rule {i} needs a>0, beta>=0, gamma>=0")
        c1, c2 = (float(x) for x in self.bulk)
        if not c1 >= c2 > 0:
            raise ValueError("bulk profile needs c1 >= c2 > 0")
        kappa, p = (float(x) for x in self.dim_rule)
        # p <= 1 is constructible on purpose; validate_hdlss reports it as a
        # failed growth condition rather than refusing the spec outright.
        if kappa <= 0 or p <= 0:
            raise ValueError("dimension rule needs kappa > 0 and p > 0")
        object.__setattr__(self, "spike_rules", rules)
        object.__setattr__(self, "bulk", (c1, c2))
        object.__setattr__(self, "dim_rule", (kappa, p))

    @property
    def spike_count(self) -> int:
        return len(self.spike_rules)

    def dim_at(self, n: int) -> int:
        kappa, p = self.dim_rule
        return int(math.ceil(kappa * float(n) ** p))

    def spike_values(self, n: int) -> np.ndarray:
        d = self.dim_at(n)
        return np.array(
            [a * float(d) ** b * float(n) ** g for a, b, g in self.spike_rules]
        )


@dataclass(frozen=True)
class ParameterVector:
    """A regression parameter with its alignment profile.

    delta is the fraction of squared norm lying outside the spiked span and
    norm is the Euclidean length L.
    """

    theta: np.ndarray
    delta: float
    norm: float

    def __post_init__(self):
        vec = np.asarray(self.theta, dtype=float)
        if vec.ndim != 1:
            raise ValueError("theta must be a vector")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.norm <= 0:
            raise ValueError("norm must be positive")
        actual = np.linalg.norm(vec)
        if abs(actual - self.norm) > 1e-12 * max(1.0, self.norm):
            raise ValueError(
                f"theta has norm {actual!r}, declared {self.norm!r}"
            )
        object.__setattr__(self, "theta", _readonly(vec))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "norm", float(self.norm))


def _as_vector(theta) -> np.ndarray:
    return theta.theta if isinstance(theta, ParameterVector) else np.asarray(theta, dtype=float)


def _build_basis(d: int, basis) -> object:
    if basis is None or basis == "identity":
        return IdentityBasis()
    if isinstance(basis, (IdentityBasis, HouseholderBasis)):
        return basis
    if isinstance(basis, tuple) and len(basis) == 3 and basis[0] == "householder":
        _, seed, k = basis
        return householder_basis(d, int(k), int(seed))
    raise ValueError(f"unrecognized basis descriptor {basis!r}")


def realize(spec: SpikeSpec, n: int, basis="identity") -> CovarianceModel:
    """Instantiate the spec at sample size n.

    Parameters
    ----------
    spec : SpikeSpec
    n : int
        Sample size, at least 2; fixes d = ceil(kappa * n^p).
    basis : "identity", ("householder", seed, k), or a basis instance

    Returns
    -------
    CovarianceModel

    Raises
    ------
    ValueError
        If a spike value collides with a neighbour or falls to the bulk top,
        naming the offending spike index.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    d = spec.dim_at(n)
    m_bar = spec.spike_count
    if d <= m_bar:
        raise ValueError(f"dimension {d} too small for {m_bar} spikes")
    spikes = spec.spike_values(n)
    c1, c2 = spec.bulk
    for j in range(m_bar - 1):
        if spikes[j] <= spikes[j + 1]:
            raise ValueError(
                f"spike {j + 1} (value {spikes[j]}) not strictly above "
                f"spike {j + 2} (value {spikes[j + 1]}) at n={n}"
            )
    if spikes[-1] <= c1:
        raise ValueError(
            f"spike {m_bar} (value {spikes[-1]}) does not exceed the bulk "
            f"top c1={c1} at n={n}"
        )
    lam = np.concatenate([spikes, np.linspace(c1, c2, d - m_bar)])
    return CovarianceModel(lam, _build_basis(d, basis), m_bar)


def equicorrelated(d: int, a: float) -> CovarianceModel:
    """Equicorrelated covariance: unit diagonal, constant off-diagonal a.

    The spectrum is (1 + (d-1)a, 1-a, ..., 1-a) and the leading eigenvector
    is the constant vector d^{-1/2} 1, realized here by a single Householder
    reflection so that no dense matrix is ever formed.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    if not 0.0 < a < 1.0:
        raise ValueError(f"a must lie strictly inside (0, 1), got {a}")
    lam = np.full(d, 1.0 - a)
    lam[0] = 1.0 + (d - 1) * a
    return CovarianceModel(lam, equicorr_basis(d), 1)


@dataclass(frozen=True)
class HdlssReport:
    """Verdicts of the growth-condition checks on a finite grid of n values."""

    checks: tuple
    note: str = (
        "finite-grid check only; the limiting conditions cannot be verified "
        "from finitely many n"
    )

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def __str__(self):
        lines = [f"[{'ok' if ok else 'FAIL'}] {name}: {detail}" for name, ok, detail in self.checks]
        lines.append(f"note: {self.note}")
        return "\n".join(lines)


def validate_hdlss(spec: SpikeSpec, n_grid) -> HdlssReport:
    """Check the growth conditions of the regime d/n -> infinity on a grid.

    Every condition is evaluated at the grid points only; the report never
    raises on a failed condition, it records it.
    """
    grid = [int(n) for n in n_grid]
    if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("n_grid must be strictly increasing with length >= 3")

    checks = []
    models = {}
    try:
        for n in grid:
            models[n] = realize(spec, n)
    except ValueError as exc:
        checks.append(("spike_ordering", False, str(exc)))
        return HdlssReport(tuple(checks))
    checks.append(("spike_ordering", True, "strict order at every grid point"))

    dims = {n: models[n].d for n in grid}
    ok = all(dims[n] > n for n in grid)
    checks.append(
        ("d_exceeds_n", ok, ", ".join(f"d({n})={dims[n]}" for n in grid))
    )

    ratios = [dims[n] / n for n in grid]
    ok = all(b > a for a, b in zip(ratios, ratios[1:]))
    checks.append(
        ("d_over_n_increasing", ok, "d/n = " + ", ".join(f"{r:.4g}" for r in ratios))
    )

    m_bar = spec.spike_count
    signal = [n * models[n].eigenvalues[m_bar - 1] / dims[n] for n in grid]
    ok = all(b > a for a, b in zip(signal, signal[1:]))
    checks.append(
        (
            "signal_ratio_increasing",
            ok,
            "n*lambda_mbar/d = " + ", ".join(f"{s:.4g}" for s in signal),
        )
    )

    # Successive spike ratios are reported, not thresholded: strict ordering
    # already makes them > 1, and no finite grid can pin the limit.
    worst = min(
        float(models[n].eigenvalues[j] / models[n].eigenvalues[j + 1])
        for n in grid
        for j in range(m_bar)
    )
    checks.append(
        ("spike_ratio_bounded", worst > 0, f"min lambda_j/lambda_j+1 = {worst:.4g}")
    )

    c1, c2 = spec.bulk
    ok = all(
        models[n].eigenvalues[m_bar:].max() <= c1 + 1e-12
        and models[n].eigenvalues[m_bar:].min() >= c2 - 1e-12
        for n in grid
    )
    checks.append(("bulk_in_range", ok, f"bulk within [{c2}, {c1}]"))

    return HdlssReport(tuple(checks))


def null_risk(model: CovarianceModel, theta) -> float:
    """Risk of the constant-zero predictor: Var(x^T theta) = theta^T Sigma theta."""
    vec = _as_vector(theta)
    if vec.shape != (model.d,):
        raise ValueError(f"theta has shape {vec.shape}, expected ({model.d},)")
    return float(model.quad_form(vec))


def make_theta(
    model: CovarianceModel,
    delta: float,
    L: float,
    spike_weights=None,
    bulk_seed: int = 0,
) -> ParameterVector:
    """Build a parameter with prescribed spiked/bulk energy split.

    The result is sqrt(1-delta)*L times a unit vector in the spiked span
    (combination given by spike_weights) plus sqrt(delta)*L times a
    pseudorandom unit vector in the bulk span, so both ParameterVector
    invariants hold with equality.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if L <= 0:
        raise ValueError("L must be positive")
    m_bar = model.spike_count
    if spike_weights is None:
        spike_weights = np.ones(m_bar)
    weights = np.asarray(spike_weights, dtype=float)
    if weights.shape != (m_bar,):
        raise ValueError(f"spike_weights must have length {m_bar}")

    coords = np.zeros(model.d)
    if delta < 1.0:
        wnorm = np.linalg.norm(weights)
        if wnorm == 0 or m_bar == 0:
            raise ValueError("delta < 1 requires a nonzero spiked component")
        coords[:m_bar] = math.sqrt(1.0 - delta) * L * weights / wnorm
    if delta > 0.0:
        gen = philox_stream(bulk_seed, 0, ROLE_THETA)
        g = ndtri(uniforms(gen, model.d - m_bar))
        coords[m_bar:] = math.sqrt(delta) * L * g / np.linalg.norm(g)
    return ParameterVector(model.from_coords(coords), delta, L)


def effective_rank(model: CovarianceModel) -> float:
    """Sum of eigenvalues over the largest one; 1 for rank-one-like spectra."""
    lam = model.eigenvalues
    return float(np.sum(lam) / lam[0])


@dataclass(frozen=True)
class SpikeFamily:
    """A SpikeSpec plus basis choice, realizable at any sample size."""

    spec: SpikeSpec
    basis: object = "identity"

    @property
    def spike_count(self) -> int:
        return self.spec.spike_count

    def dim_at(self, n: int) -> int:
        return self.spec.dim_at(n)

    def realize_at(self, n: int) -> CovarianceModel:
        return realize(self.spec, n, self.basis)


@dataclass(frozen=True)
class EquicorrFamily:
    """Equicorrelated covariance with the dimension tied to n by d = ceil(kappa n^p)."""

    a: float
    dim_rule: tuple = (1.0, 2.0)

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise ValueError(f"a must lie strictly inside (0, 1), got {self.a}")
        kappa, p = (float(x) for x in self.dim_rule)
        if kappa <= 0 or p <= 0:
            raise ValueError("dimension rule needs kappa > 0 and p > 0")
        object.__setattr__(self, "dim_rule", (kappa, p))

    @property
    def spike_count(self) -> int:
        return 1

    def dim_at(self, n: int) -> int:
        kappa, p = self.dim_rule
        return int(math.ceil(kappa * float(n) ** p))

    def realize_at(self, n: int) -> CovarianceModel:
        return equicorrelated(self.dim_at(n), self.a)
