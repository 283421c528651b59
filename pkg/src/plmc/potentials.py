"""Target potentials.

A potential psi defines the target density proportional to exp(-psi(x)).
Implementations expose batched evaluation over (n, d) arrays, which is what
the samplers consume; scalar convenience wrappers sit on top.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .linalg import SymMatrix, symmetrize


class Potential(ABC):
    """Potential of a target density exp(-psi); see module docstring."""

    dim: int

    @abstractmethod
    def value_batch(self, x: np.ndarray) -> np.ndarray:
        """psi at each row of x, shape (n, d) -> (n,)."""

    @abstractmethod
    def gradient_batch(self, x: np.ndarray) -> np.ndarray:
        """Gradient at each row, shape (n, d) -> (n, d)."""

    @abstractmethod
    def hessian_batch(self, x: np.ndarray) -> np.ndarray:
        """Hessian at each row, shape (n, d) -> (n, d, d)."""

    def _one(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of shape ({self.dim},), got {x.shape}")
        return x[None, :]

    def value(self, x) -> float:
        return float(self.value_batch(self._one(x))[0])

    def gradient(self, x) -> np.ndarray:
        return self.gradient_batch(self._one(x))[0]

    def hessian(self, x) -> SymMatrix:
        return SymMatrix(self.hessian_batch(self._one(x))[0])

    def lipschitz_bound(self) -> float | None:
        """Global bound on the Hessian spectral norm, when one is available."""
        return None


@dataclass(frozen=True)
class RosenbrockParams:
    a: float = 1.0
    b: float = 100.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("b must be positive")


class RosenbrockPotential(Potential):
    """psi(x) = (a - x1)^2 + b (x2 - x1^2)^2 on R^2.

    The normalizing constant of exp(-psi) is pi / sqrt(b), so the density
    factorizes as x1 ~ N(a, 1/2) and x2 | x1 ~ N(x1^2, 1/(2b)).
    """

    dim = 2

    def __init__(self, params: RosenbrockParams = RosenbrockParams()):
        self.params = params

    def value_batch(self, x):
        a, b = self.params.a, self.params.b
        x1, x2 = x[:, 0], x[:, 1]
        return (a - x1) ** 2 + b * (x2 - x1**2) ** 2

    def gradient_batch(self, x):
        a, b = self.params.a, self.params.b
        x1, x2 = x[:, 0], x[:, 1]
        gap = x2 - x1**2
        g = np.empty_like(x)
        g[:, 0] = -2.0 * (a - x1) - 4.0 * b * x1 * gap
        g[:, 1] = 2.0 * b * gap
        return g

    def hessian_batch(self, x):
        b = self.params.b
        x1, x2 = x[:, 0], x[:, 1]
        h = np.empty(x.shape[:1] + (2, 2))
        h[:, 0, 0] = 2.0 + 12.0 * b * x1**2 - 4.0 * b * x2
        h[:, 0, 1] = -4.0 * b * x1
        h[:, 1, 0] = h[:, 0, 1]
        h[:, 1, 1] = 2.0 * b
        return h

    def partition_constant(self) -> float:
        return float(np.pi / np.sqrt(self.params.b))


@dataclass(frozen=True)
class LogisticModel:
    """Design matrix, binary labels and diagonal Gaussian prior variances."""

    features: np.ndarray
    labels: np.ndarray
    prior_variances: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=float))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=float))
        object.__setattr__(self, "prior_variances",
                           np.asarray(self.prior_variances, dtype=float))
        n, d = self.features.shape
        if self.labels.shape != (n,):
            raise ValueError("labels must match the number of feature rows")
        if not np.all((self.labels == 0.0) | (self.labels == 1.0)):
            raise ValueError("labels must be 0 or 1")
        if self.prior_variances.shape != (d,):
            raise ValueError("need one prior variance per feature")
        if not np.all(self.prior_variances > 0):
            raise ValueError("prior variances must be positive")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


class LogisticPosterior(Potential):
    """Negative log posterior of Bayesian logistic regression.

    psi(beta) = sum_i [log(1 + exp(beta.x_i)) - y_i beta.x_i]
                + 0.5 beta^T Sigma^{-1} beta
    with Sigma the diagonal prior covariance. The Hessian
    X^T diag(s) X + Sigma^{-1} is positive definite everywhere.
    """

    def __init__(self, model: LogisticModel):
        self.model = model
        self.dim = model.dim
        x = model.features
        self._x = x
        self._y = model.labels
        self._prior_prec = 1.0 / model.prior_variances
        self._xty = x.T @ model.labels
        # flattened outer products x_i x_i^T, one GEMM turns per-point
        # sigmoid weights into a stack of Hessians
        self._outers = (x[:, :, None] * x[:, None, :]).reshape(model.n,
                                                               model.dim**2)

    def value_batch(self, beta):
        u = beta @ self._x.T
        fit = np.logaddexp(0.0, u).sum(axis=1) - beta @ self._xty
        return fit + 0.5 * np.sum(beta**2 * self._prior_prec, axis=1)

    def gradient_batch(self, beta):
        p = expit(beta @ self._x.T)
        return (p - self._y) @ self._x + beta * self._prior_prec

    def hessian_batch(self, beta):
        d = self.dim
        p = expit(beta @ self._x.T)
        s = p * (1.0 - p)
        h = (s @ self._outers).reshape(beta.shape[0], d, d)
        h.reshape(beta.shape[0], d * d)[:, :: d + 1] += self._prior_prec
        return h

    def lipschitz_bound(self) -> float:
        """(1/4) lambda_max(X^T X) + max_j 1/sigma_j^2, a global Hessian bound."""
        gram = self._x.T @ self._x
        lam = float(np.linalg.eigvalsh(symmetrize(gram))[-1])
        return 0.25 * lam + float(self._prior_prec.max())


class QuadraticPotential(Potential):
    """psi(x) = 0.5 (x - m)^T A (x - m) for SPD precision A; target N(m, A^{-1})."""

    def __init__(self, precision: SymMatrix, mean=None):
        self.precision = precision
        self.dim = precision.dim
        self.mean = (np.zeros(self.dim) if mean is None
                     else np.asarray(mean, dtype=float))
        if self.mean.shape != (self.dim,):
            raise ValueError("mean must match the precision dimension")
        values = np.linalg.eigvalsh(precision.array)
        if values[0] <= 0:
            raise ValueError("precision matrix must be positive definite")
        self._lmax = float(values[-1])

    def value_batch(self, x):
        dx = x - self.mean
        return 0.5 * np.einsum("ni,ij,nj->n", dx, self.precision.array, dx)

    def gradient_batch(self, x):
        return (x - self.mean) @ self.precision.array

    def hessian_batch(self, x):
        return np.broadcast_to(self.precision.array, x.shape[:1] + (self.dim, self.dim))

    def lipschitz_bound(self) -> float:
        return self._lmax


def grid_hessian_norm_max(pot: Potential, lower, upper, resolution: int = 200) -> float:
    """Max spectral norm of the Hessian over a uniform grid on a box.

    lower and upper are length-d corner vectors; the grid has ``resolution``
    points per axis, endpoints included. Intended for two dimensional
    potentials (the grid grows as resolution**d).
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != (pot.dim,) or upper.shape != (pot.dim,):
        raise ValueError("box corners must have the potential's dimension")
    axes = [np.linspace(lower[i], upper[i], resolution) for i in range(pot.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    hessians = pot.hessian_batch(points)
    values = np.linalg.eigvalsh(symmetrize(hessians))
    return float(np.abs(values).max())
