"""Design and label generation.

Rows of the design are X_i = U Lambda^{1/2} Z_i with Z_i iid standardized
entries. Every entry is a pure function of (seed, row, column, role), drawn
through a counter-based stream per row, so any subset of rows or any prefix
of columns reproduces identically no matter what else was generated.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import t as _student_t

from .model import CovarianceModel, ParameterVector, _as_vector
from .util import (
    ROLE_DESIGN,
    ROLE_NOISE,
    philox_stream,
    uniforms,
)

__all__ = [
    "EntryLaw",
    "Dataset",
    "sample_entries",
    "sample_design",
    "sample_labels",
    "make_dataset",
    "dump_design",
    "load_design",
]

_SQRT3 = math.sqrt(3.0)

_MAGIC = b"HDLS"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQ8x")  # magic, version, n, d, pad to 32 bytes


@dataclass(frozen=True)
class EntryLaw:
    """Standardized entry distribution: mean 0 and variance exactly 1.

    Tags: "gaussian", "rademacher", "uniform" (uniform on [-sqrt(3), sqrt(3)]),
    "student_t" (rescaled by sqrt((df-2)/df), df >= 5). The first three are
    sub-gaussian; student_t has finite fourth moment but heavier tails.
    """

    tag: str
    df: float | None = None

    def __post_init__(self):
        if self.tag not in ("gaussian", "rademacher", "uniform", "student_t"):
            raise ValueError(f"unknown entry law {self.tag!r}")
        if self.tag == "student_t":
            if self.df is None or self.df < 5:
                raise ValueError("student_t law requires df >= 5")
        elif self.df is not None:
            raise ValueError(f"law {self.tag!r} takes no df parameter")

    @property
    def is_subgaussian(self) -> bool:
        return self.tag != "student_t"

    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Inverse CDF of the standardized law, elementwise on (0, 1)."""
        if self.tag == "gaussian":
            return ndtri(u)
        if self.tag == "rademacher":
            return np.where(u < 0.5, -1.0, 1.0)
        if self.tag == "uniform":
            return (2.0 * u - 1.0) * _SQRT3
        scale = math.sqrt((self.df - 2.0) / self.df)
        return _student_t.ppf(u, self.df) * scale

    def __str__(self):
        if self.tag == "student_t":
            return f"student_t({self.df:g})"
        return self.tag


GAUSSIAN = EntryLaw("gaussian")


def sample_entries(
    n: int, p: int, law: EntryLaw, seed: int, role: int = ROLE_DESIGN
) -> np.ndarray:
    """n x p matrix of iid standardized entries, keyed per (seed, row)."""
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    out = np.empty((n, p))
    for i in range(n):
        gen = philox_stream(seed, i, role)
        out[i] = law.ppf(uniforms(gen, p))
    return out


def sample_design(
    model: CovarianceModel, n: int, law: EntryLaw, seed: int
) -> np.ndarray:
    """Draw the n x d design for the given covariance model.

    Deterministic in (model, n, law, seed); generating fewer rows, or the
    same rows on another machine, yields bit-identical values.
    """
    z = sample_entries(n, model.d, law, seed, ROLE_DESIGN)
    z *= np.sqrt(model.eigenvalues)
    return np.ascontiguousarray(model.from_coords(z.T).T)


def sample_labels(
    X: np.ndarray, theta, sigma: float, law: EntryLaw, seed: int
) -> np.ndarray:
    """Labels Y = X theta + sigma * xi with xi iid from the law."""
    X = np.asarray(X, dtype=float)
    vec = _as_vector(theta)
    if X.ndim != 2 or X.shape[1] != vec.shape[0]:
        raise ValueError(
            f"design {X.shape} incompatible with theta of length {vec.shape[0]}"
        )
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    y = X @ vec
    if sigma > 0:
        gen = philox_stream(seed, 0, ROLE_NOISE)
        y = y + sigma * law.ppf(uniforms(gen, X.shape[0]))
    return y


@dataclass(frozen=True)
class Dataset:
    """One realized experiment instance with full provenance.

    Carrying (law, seed) alongside X lets downstream analyses regenerate the
    standardized coordinate stream exactly, which the dual-split diagnostic
    requires.
    """

    X: np.ndarray
    Y: np.ndarray
    theta: ParameterVector
    sigma: float
    model: CovarianceModel
    seed: int
    law: EntryLaw
    noise_law: EntryLaw

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])


def make_dataset(
    model: CovarianceModel,
    theta: ParameterVector,
    n: int,
    sigma: float,
    law: EntryLaw,
    seed: int,
    noise_law: EntryLaw | None = None,
) -> Dataset:
    """Sample a design and labels and bundle them with their provenance."""
    noise_law = law if noise_law is None else noise_law
    X = sample_design(model, n, law, seed)
    Y = sample_labels(X, theta, sigma, noise_law, seed)
    return Dataset(X, Y, theta, sigma, model, seed, law, noise_law)


def dump_design(path, X: np.ndarray, metadata: dict | None = None) -> None:
    """Write a design matrix as little-endian float64, row-major.

    The 32-byte header is magic "HDLS", a u32 format version, then n and d as
    u64. A sidecar at path + ".meta" records metadata as "dataset.key = value"
    lines when provided.
    """
    X = np.ascontiguousarray(X, dtype="<f8")
    n, d = X.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, n, d))
        fh.write(X.tobytes())
    if metadata is not None:
        lines = [f"dataset.{key} = {value}" for key, value in sorted(metadata.items())]
        with open(f"{path}.meta", "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def load_design(path) -> np.ndarray:
    """Read a matrix written by dump_design, validating the header."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError("truncated design file header")
        magic, version, n, d = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}, not a design dump")
        if version != _VERSION:
            raise ValueError(f"unsupported design dump version {version}")
        data = np.frombuffer(fh.read(8 * n * d), dtype="<f8")
    if data.size != n * d:
        raise ValueError("design file shorter than header promises")
    return data.reshape(n, d).copy()
