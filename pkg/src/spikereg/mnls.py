"""Minimum-norm least squares through the n x n dual Gram matrix.

The estimator is theta_hat = X^T (X X^T)^+ Y. All spectral objects flow
through the dual matrix X X^T / n, so nothing d x d is ever formed; a dense
SVD path exists purely as a small-scale reference.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DualDecomposition",
    "NonInterpolatingWarning",
    "dual_decompose",
    "fit_mnls",
    "fit_direct",
    "project_rowspace",
]

INTERPOLATION_RTOL = 1e-8
DIRECT_SIZE_GUARD = 10 ** 6


class NonInterpolatingWarning(RuntimeWarning):
    """The dual matrix is rank deficient and Y lies outside the column space;
    the returned vector is the least-squares solution of minimum norm."""


@dataclass
class DualDecomposition:
    """Eigensystem of X X^T / n and the implied sample spectrum of X^T X / n.

    lambda_hat is non-increasing with entries beyond `rank` set to exactly
    zero; dual_vectors holds the eigenvectors as columns, each oriented so
    its largest-magnitude coordinate is positive. Immutable after
    construction apart from the lazily cached sample eigenvectors.
    """

    lambda_hat: np.ndarray
    dual_vectors: np.ndarray
    rank: int
    X: np.ndarray
    _sample_vecs: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    def sample_vectors(self) -> np.ndarray:
        """Sample eigenvectors u_hat_j = X^T v_j / sqrt(n lambda_hat_j), as a
        (d, rank) column stack. Cached after the first call."""
        if self._sample_vecs is None:
            r = self.rank
            scale = np.sqrt(self.n * self.lambda_hat[:r])
            self._sample_vecs = self.X.T @ (self.dual_vectors[:, :r] / scale)
        return self._sample_vecs


def dual_decompose(X: np.ndarray) -> DualDecomposition:
    """Symmetric eigendecomposition of the dual matrix X X^T / n.

    Rank counts eigenvalues above max(n, d) * machine-epsilon * lambda_hat_1,
    the standard pseudo-inverse cutoff; everything below is declared zero.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a matrix")
    if not np.isfinite(X).all():
        raise ValueError("design contains non-finite entries")
    n, d = X.shape
    dual = X @ X.T / n
    w, v = np.linalg.eigh(dual)
    lam = np.maximum(w[::-1], 0.0)
    v = v[:, ::-1]
    # deterministic orientation: flip each eigenvector so its largest
    # magnitude coordinate is positive
    peak = np.argmax(np.abs(v), axis=0)
    flip = v[peak, np.arange(n)] < 0
    v[:, flip] = -v[:, flip]
    tau = max(n, d) * np.finfo(float).eps * (lam[0] if lam.size else 0.0)
    rank = int(np.sum(lam > tau))
    lam[rank:] = 0.0
    return DualDecomposition(lam, v, rank, X)


def fit_mnls(X: np.ndarray, Y: np.ndarray, dd: DualDecomposition | None = None) -> np.ndarray:
    """MNLS estimate via the dual path.

    Parameters
    ----------
    X : (n, d) array
    Y : (n,) array
    dd : DualDecomposition, optional
        Reuse an existing decomposition of X (the caller guarantees it
        belongs to this design).

    Returns
    -------
    (d,) array
        Interpolates Y whenever Y lies in the column space of X; otherwise a
        NonInterpolatingWarning is issued and the minimum-norm least-squares
        solution is returned.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (X.shape[0],):
        raise ValueError(f"Y has shape {Y.shape}, expected ({X.shape[0]},)")
    if dd is None:
        dd = dual_decompose(X)
    r = dd.rank
    if r == 0:
        theta = np.zeros(X.shape[1])
    else:
        vr = dd.dual_vectors[:, :r]
        coeff = (vr.T @ Y) / (dd.n * dd.lambda_hat[:r])
        theta = X.T @ (vr @ coeff)
    ynorm = np.linalg.norm(Y)
    if ynorm > 0 and np.linalg.norm(X @ theta - Y) > INTERPOLATION_RTOL * ynorm:
        warnings.warn(
            "Y outside the column space of X; returning the least-squares "
            "solution of minimum norm",
            NonInterpolatingWarning,
            stacklevel=2,
        )
    return theta


def fit_direct(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Dense SVD reference path, guarded to n*d <= 10^6.

    Uses the same relative rank cutoff as the dual path so the two routes are
    comparable to machine precision.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, d = X.shape
    if n * d > DIRECT_SIZE_GUARD:
        raise ValueError(f"fit_direct size guard exceeded: {n}*{d} > {DIRECT_SIZE_GUARD}")
    u, s, vt = np.linalg.svd(X, full_matrices=False)
    if s.size and s[0] > 0:
        # cutoff on singular values equivalent to the dual eigenvalue cutoff
        keep = s > np.sqrt(max(n, d) * np.finfo(float).eps) * s[0]
    else:
        keep = np.zeros(s.shape, dtype=bool)
    k = int(np.sum(keep))
    if k == 0:
        return np.zeros(d)
    return vt[:k].T @ ((u[:, :k].T @ Y) / s[:k])


def project_rowspace(dd: DualDecomposition, w: np.ndarray):
    """Split w into its row-space component and the remainder.

    Returns (q, w - q) with q the projection of w onto the span of the rows
    of X; the two pieces sum to w exactly by construction.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (dd.d,):
        raise ValueError(f"w has shape {w.shape}, expected ({dd.d},)")
    r = dd.rank
    if r == 0:
        return np.zeros_like(w), w.copy()
    vr = dd.dual_vectors[:, :r]
    coeff = (vr.T @ (dd.X @ w)) / (dd.n * dd.lambda_hat[:r])
    q = dd.X.T @ (vr @ coeff)
    return q, w - q
