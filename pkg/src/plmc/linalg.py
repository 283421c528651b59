"""Small dense symmetric matrices and the spectral operations built on them.

Everything here targets matrices of modest dimension (preconditioners for
sampling problems, d up to a few dozen), where a full eigendecomposition is
cheap and numerically safest. Decompositions are delegated to LAPACK via
numpy, which is deterministic for identical input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPD_RTOL = 1e-12


class NotSPDError(ValueError):
    """Raised when an operation needs a positive definite matrix and the
    smallest eigenvalue fails the relative threshold."""


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Copy the lower triangle onto the upper one (batched over leading axes).

    Makes symmetry exact by construction: only the lower triangle of the
    input is authoritative.
    """
    lower = np.tril(a)
    return lower + np.tril(a, -1).swapaxes(-1, -2)


class SymMatrix:
    """Dense symmetric matrix with structurally exact symmetry.

    The constructor keeps only the lower triangle of its argument, so
    ``m.array[i, j] == m.array[j, i]`` holds bit for bit.
    """

    __slots__ = ("_a",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] == 0:
            raise ValueError("empty matrix")
        if not np.all(np.isfinite(np.tril(a))):
            raise ValueError("matrix entries must be finite")
        self._a = symmetrize(a)
        self._a.setflags(write=False)

    @classmethod
    def identity(cls, dim: int) -> "SymMatrix":
        return cls(np.eye(dim))

    @classmethod
    def diagonal(cls, values) -> "SymMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    @property
    def array(self) -> np.ndarray:
        """Read-only view of the underlying (d, d) array."""
        return self._a

    def matvec(self, x) -> np.ndarray:
        return self._a @ np.asarray(x, dtype=float)

    def __repr__(self) -> str:
        return f"SymMatrix(dim={self.dim})"


@dataclass(frozen=True)
class EigenPair:
    """Eigendecomposition of a symmetric matrix.

    values are sorted in non-decreasing order; vectors holds the matching
    orthonormal eigenvectors as columns.
    """

    values: np.ndarray
    vectors: np.ndarray


def sym_eig(m: SymMatrix) -> EigenPair:
    """Full eigendecomposition. Deterministic for identical input."""
    values, vectors = np.linalg.eigh(m.array)
    return EigenPair(values=values, vectors=vectors)


def _check_spd(values: np.ndarray, what: str) -> None:
    largest = values[..., -1]
    threshold = SPD_RTOL * np.maximum(1.0, largest)
    smallest = values[..., 0]
    if np.any(smallest <= threshold):
        bad = float(np.min(smallest))
        raise NotSPDError(
            f"{what} needs a positive definite matrix: "
            f"min eigenvalue {bad:.6e} is at or below the threshold"
        )


def rebuild(values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Assemble V diag(values) V^T, batched over leading axes, symmetrized."""
    prod = (vectors * values[..., None, :]) @ vectors.swapaxes(-1, -2)
    return symmetrize(prod)


def spd_sqrt(m: SymMatrix) -> SymMatrix:
    """Symmetric positive definite square root."""
    pair = sym_eig(m)
    _check_spd(pair.values, "spd_sqrt")
    return SymMatrix(rebuild(np.sqrt(pair.values), pair.vectors))


def spd_inverse(m: SymMatrix) -> SymMatrix:
    """Inverse through the eigendecomposition, SPD input required."""
    pair = sym_eig(m)
    _check_spd(pair.values, "spd_inverse")
    return SymMatrix(rebuild(1.0 / pair.values, pair.vectors))


def spd_transform_batch(mats: np.ndarray, fn, what: str = "spd transform") -> np.ndarray:
    """Apply a spectral function to a stack of symmetric matrices.

    mats has shape (..., d, d); fn maps the eigenvalue array to transformed
    eigenvalues. The SPD threshold is enforced on every matrix in the stack.
    """
    values, vectors = np.linalg.eigh(symmetrize(mats))
    _check_spd(values, what)
    return rebuild(fn(values), vectors)
