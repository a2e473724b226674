"""Affine subspace value types, orthonormalization and representation changes.

An m-dimensional affine subspace of R^n is stored either in primal form
(translation vector plus m orthonormal spanning rows) or in dual form
(translation vector plus n-m orthonormal normal rows whose orthogonal
complement is the spanned directions). Both forms are immutable after
construction so they can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AllVectorsDegenerate, DimensionMismatch, InvalidDimension

ORTHONORMAL_TOL = 1e-8


def _as_float64(a) -> np.ndarray:
    out = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite entries")
    return out


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def as_descriptor(values, n: int | None = None, unit_norm: bool = False) -> np.ndarray:
    """Validate a descriptor vector and return it as float64.

    Descriptors are plain 1-d arrays; this only checks finiteness, the
    expected length and (optionally) unit norm within 1e-6.
    """
    v = _as_float64(values)
    if v.ndim != 1:
        raise DimensionMismatch(f"descriptor must be 1-d, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise DimensionMismatch(f"expected length {n}, got {v.shape[0]}")
    if unit_norm and abs(np.linalg.norm(v) - 1.0) > 1e-6:
        raise ValueError("descriptor flagged unit-norm but |norm - 1| > 1e-6")
    return v


def orthonormalize(vectors, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal row basis of the span of `vectors`, dropping dependent ones.

    Rank is decided by a rank-revealing SVD: directions with singular value
    below tol * max_singular are discarded instead of raising, since
    adversarial sampling can produce nearly collinear inputs.
    """
    raw = list(vectors)
    if not raw:
        raise AllVectorsDegenerate("no input vectors")
    lengths = {np.asarray(v).shape for v in raw}
    if len(lengths) != 1 or any(len(s) != 1 for s in lengths):
        raise DimensionMismatch(f"ragged or non-1d input shapes: {sorted(lengths)}")
    mat = _as_float64(np.stack(raw))
    if np.all(np.linalg.norm(mat, axis=1) < tol):
        raise AllVectorsDegenerate("every input vector has norm below tolerance")
    _, s, vt = np.linalg.svd(mat, full_matrices=False)
    rank = int(np.sum(s > tol * s[0]))
    if rank == 0:
        raise AllVectorsDegenerate("inputs are numerically zero at tolerance")
    return vt[:rank]


def _complement_rows(rows: np.ndarray) -> np.ndarray:
    # Orthonormal basis of span(rows)^perp via the full right singular basis.
    n = rows.shape[1]
    m = rows.shape[0]
    _, _, vt = np.linalg.svd(rows, full_matrices=True)
    return vt[m:n]


@dataclass(frozen=True)
class AffineSubspacePrimal:
    """Affine subspace d0 + span(basis rows); basis rows are orthonormal."""

    d0: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        d0 = _frozen(_as_float64(self.d0))
        basis = _frozen(_as_float64(self.basis))
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "basis", basis)
        if d0.ndim != 1 or basis.ndim != 2:
            raise DimensionMismatch("d0 must be a vector and basis a matrix")
        m, n = basis.shape
        if d0.shape[0] != n:
            raise DimensionMismatch(f"d0 has length {d0.shape[0]}, basis columns {n}")
        if not 1 <= m < n:
            raise InvalidDimension(f"need 1 <= m < n, got m={m}, n={n}")
        gram = basis @ basis.T
        if np.abs(gram - np.eye(m)).max() > ORTHONORMAL_TOL:
            raise ValueError("basis rows are not orthonormal within 1e-8")

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    @property
    def m(self) -> int:
        return self.basis.shape[0]


@dataclass(frozen=True)
class AffineSubspaceDual:
    """Affine subspace d0 + span(normals rows)^perp; normal rows are orthonormal."""

    d0: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        d0 = _frozen(_as_float64(self.d0))
        normals = _frozen(_as_float64(self.normals))
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "normals", normals)
        if d0.ndim != 1 or normals.ndim != 2:
            raise DimensionMismatch("d0 must be a vector and normals a matrix")
        k, n = normals.shape
        if d0.shape[0] != n:
            raise DimensionMismatch(f"d0 has length {d0.shape[0]}, normals columns {n}")
        if not 1 <= k < n:
            raise InvalidDimension(f"need 1 <= n-m < n, got n-m={k}, n={n}")
        gram = normals @ normals.T
        if np.abs(gram - np.eye(k)).max() > ORTHONORMAL_TOL:
            raise ValueError("normal rows are not orthonormal within 1e-8")

    @property
    def n(self) -> int:
        return self.normals.shape[1]

    @property
    def m(self) -> int:
        return self.n - self.normals.shape[0]


@dataclass(frozen=True)
class ClosestPair:
    """Closest pair of points between two affine subspaces.

    coeffs_alpha / coeffs_beta are the basis coordinates of x_star and y_star
    on their subspaces; solvers working in dual form leave them as None.
    """

    x_star: np.ndarray
    y_star: np.ndarray
    distance: float
    coeffs_alpha: np.ndarray | None = field(default=None)
    coeffs_beta: np.ndarray | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "x_star", _frozen(_as_float64(self.x_star)))
        object.__setattr__(self, "y_star", _frozen(_as_float64(self.y_star)))
        object.__setattr__(self, "distance", float(self.distance))
        if self.distance < 0:
            raise ValueError("distance must be nonnegative")


def project_point(sub: AffineSubspacePrimal, e) -> np.ndarray:
    """Orthogonal projection of e onto the subspace: d0 + B^T B (e - d0)."""
    e = as_descriptor(e, n=sub.n)
    r = e - sub.d0
    return sub.d0 + sub.basis.T @ (sub.basis @ r)


def primal_to_dual(sub: AffineSubspacePrimal) -> AffineSubspaceDual:
    """Re-express a primal subspace by the normals of its spanning directions."""
    return AffineSubspaceDual(d0=sub.d0, normals=_complement_rows(sub.basis))


def dual_to_primal(sub: AffineSubspaceDual) -> AffineSubspacePrimal:
    """Recover a spanning basis from the hyperplane-intersection form."""
    return AffineSubspacePrimal(d0=sub.d0, basis=_complement_rows(sub.normals))
