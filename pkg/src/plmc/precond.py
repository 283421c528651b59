"""Preconditioner fields B(t, x) for Langevin dynamics.

A preconditioner supplies three things at a point: the SPD matrix B, its
symmetric square root, and the row-wise divergence vector
(div B)_i = sum_j d/dx_j B_ij, which is the drift correction that keeps
exp(-psi) stationary when B varies with position. Batched evaluation over
(n, d) position arrays is the primary interface; single-point wrappers
return SymMatrix values.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .linalg import (
    NotSPDError,
    SPD_RTOL,
    SymMatrix,
    rebuild,
    spd_sqrt,
    spd_transform_batch,
    symmetrize,
)
from .potentials import Potential

FD_STEP_SCALE = 1e-4


@dataclass(frozen=True)
class ClampSpec:
    """Eigenvalue floor for curvature matrices: lambda -> max(|lambda|, epsilon)."""

    epsilon: float = 1e-3

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError("epsilon must be a positive number")


@dataclass(frozen=True)
class LambdaSchedule:
    """Interpolation weight lambda(t), either fixed or a linear ramp.

    The ramp reaches 1 at half the total integration time and stays there:
    lambda(t) = min(t / ramp_time, 1) with ramp_time = n_steps * step_size / 2.
    """

    fixed: float | None = None
    ramp_time: float | None = None

    @classmethod
    def constant(cls, value: float) -> "LambdaSchedule":
        if not 0.0 <= value <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        return cls(fixed=float(value))

    @classmethod
    def linear_ramp(cls, n_steps: int, step_size: float) -> "LambdaSchedule":
        if n_steps <= 0 or step_size <= 0:
            raise ValueError("ramp needs positive n_steps and step_size")
        return cls(ramp_time=0.5 * n_steps * step_size)

    def value(self, t: float) -> float:
        if self.fixed is not None:
            return self.fixed
        if t <= 0.0:
            return 0.0
        return min(t / self.ramp_time, 1.0)


class Preconditioner(ABC):
    """See the module docstring for the three-part contract."""

    dim: int
    position_dependent: bool = False

    @abstractmethod
    def matrix_batch(self, t: float, x: np.ndarray) -> np.ndarray:
        """B at each row of x, shape (n, d) -> (n, d, d)."""

    @abstractmethod
    def sqrt_batch(self, t: float, x: np.ndarray) -> np.ndarray:
        """Symmetric square root of B at each row."""

    def div_batch(self, t: float, x: np.ndarray) -> np.ndarray:
        """Row-wise divergence at each row; zero unless position dependent."""
        return np.zeros_like(x)

    def evaluate_batch(self, t: float, x: np.ndarray):
        """(B, sqrt B, div B) in one call; subclasses share work here."""
        return self.matrix_batch(t, x), self.sqrt_batch(t, x), self.div_batch(t, x)

    def _one(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of shape ({self.dim},), got {x.shape}")
        return x[None, :]

    def b_matrix(self, t: float, x) -> SymMatrix:
        return SymMatrix(self.matrix_batch(t, self._one(x))[0])

    def b_sqrt(self, t: float, x) -> SymMatrix:
        return SymMatrix(self.sqrt_batch(t, self._one(x))[0])

    def b_div(self, t: float, x) -> np.ndarray:
        return self.div_batch(t, self._one(x))[0]


class FixedMatrix(Preconditioner):
    """Constant SPD preconditioner; divergence is exactly zero."""

    position_dependent = False

    def __init__(self, matrix: SymMatrix):
        self.matrix = matrix
        self.sqrt = spd_sqrt(matrix)  # also validates positive definiteness
        self.dim = matrix.dim

    def matrix_batch(self, t, x):
        return np.broadcast_to(self.matrix.array, x.shape[:1] + (self.dim, self.dim))

    def sqrt_batch(self, t, x):
        return np.broadcast_to(self.sqrt.array, x.shape[:1] + (self.dim, self.dim))


def constant_scalar(c: float, dim: int) -> FixedMatrix:
    """B = c I with c > 0."""
    if not (np.isfinite(c) and c > 0):
        raise ValueError("constant preconditioner needs c > 0")
    return FixedMatrix(SymMatrix(c * np.eye(dim)))


def fixed_matrix(m: SymMatrix) -> FixedMatrix:
    """Wrap a fixed SPD matrix; raises NotSPDError otherwise."""
    return FixedMatrix(m)


class CurvatureAware(Preconditioner):
    """B(x) built from the potential's local curvature.

    The Hessian is eigendecomposed and inverted with eigenvalues pushed
    through |lambda| -> max(|lambda|, epsilon), which keeps B well defined
    in indefinite regions. With clamp=None the raw inverse is used; that is
    only valid for potentials whose Hessian is positive definite everywhere
    (the logistic posterior is the motivating case) and is cheaper because
    the divergence can go through linear solves instead of
    eigendecompositions.
    """

    position_dependent = True

    def __init__(self, potential: Potential, clamp: ClampSpec | None = ClampSpec(),
                 fd_scale: float = FD_STEP_SCALE):
        self.potential = potential
        self.clamp = clamp
        self.fd_scale = fd_scale
        self.dim = potential.dim

    def _inv_values(self, values: np.ndarray) -> np.ndarray:
        if self.clamp is not None:
            return 1.0 / np.maximum(np.abs(values), self.clamp.epsilon)
        small = values[..., 0]
        if np.any(small <= SPD_RTOL * np.maximum(1.0, values[..., -1])):
            raise NotSPDError(
                "unclamped curvature preconditioner hit a non-SPD Hessian; "
                "use a ClampSpec for this potential"
            )
        return 1.0 / values

    def matrix_batch(self, t, x):
        values, vectors = np.linalg.eigh(self.potential.hessian_batch(x))
        return rebuild(self._inv_values(values), vectors)

    def sqrt_batch(self, t, x):
        values, vectors = np.linalg.eigh(self.potential.hessian_batch(x))
        return rebuild(np.sqrt(self._inv_values(values)), vectors)

    def _fd_points(self, x):
        n, d = x.shape
        delta = self.fd_scale * (1.0 + np.abs(x).max(axis=1))
        eye = np.eye(d)
        plus = x[:, None, :] + delta[:, None, None] * eye
        minus = x[:, None, :] - delta[:, None, None] * eye
        pts = np.concatenate([plus.reshape(n * d, d), minus.reshape(n * d, d)])
        return pts, delta

    def div_batch(self, t, x):
        n, d = x.shape
        pts, delta = self._fd_points(x)
        if self.clamp is None:
            # column j of H^{-1} at each perturbed point via one batched solve
            hess = self.potential.hessian_batch(pts)
            rhs = np.broadcast_to(np.eye(d), (n, d, d)).reshape(n * d, d)
            rhs = np.concatenate([rhs, rhs])
            cols = np.linalg.solve(hess, rhs[..., None])[..., 0]
        else:
            b = self.matrix_batch(t, pts)
            picker = np.broadcast_to(np.eye(d), (n, d, d)).reshape(n * d, d)
            picker = np.concatenate([picker, picker])
            cols = np.matmul(b, picker[..., None])[..., 0]
        plus = cols[: n * d].reshape(n, d, d)
        minus = cols[n * d :].reshape(n, d, d)
        return (plus - minus).sum(axis=1) / (2.0 * delta)[:, None]

    def evaluate_batch(self, t, x):
        values, vectors = np.linalg.eigh(self.potential.hessian_batch(x))
        inv = self._inv_values(values)
        b = rebuild(inv, vectors)
        s = rebuild(np.sqrt(inv), vectors)
        return b, s, self.div_batch(t, x)


def curvature_aware(potential: Potential,
                    clamp: ClampSpec | None = ClampSpec()) -> CurvatureAware:
    return CurvatureAware(potential, clamp)


class Interpolated(Preconditioner):
    """B(t, x) = (1 - lambda(t)) G + lambda(t) L(x).

    G is a fixed global preconditioner, L a position dependent local one,
    and lambda(t) ramps from broad global moves to local geometry. At the
    endpoints the evaluation delegates to the pure ingredient, so lambda in
    {0, 1} reproduces it bit for bit.
    """

    position_dependent = True

    def __init__(self, global_pc: Preconditioner, local_pc: Preconditioner,
                 schedule: LambdaSchedule):
        if global_pc.position_dependent:
            raise ValueError("the global ingredient must be position independent")
        if global_pc.dim != local_pc.dim:
            raise ValueError("ingredient dimensions differ")
        self.global_pc = global_pc
        self.local_pc = local_pc
        self.schedule = schedule
        self.dim = global_pc.dim

    def matrix_batch(self, t, x):
        lam = self.schedule.value(t)
        if lam == 0.0:
            return self.global_pc.matrix_batch(t, x)
        if lam == 1.0:
            return self.local_pc.matrix_batch(t, x)
        return (1.0 - lam) * self.global_pc.matrix_batch(t, x) \
            + lam * self.local_pc.matrix_batch(t, x)

    def sqrt_batch(self, t, x):
        lam = self.schedule.value(t)
        if lam == 0.0:
            return self.global_pc.sqrt_batch(t, x)
        if lam == 1.0:
            return self.local_pc.sqrt_batch(t, x)
        return spd_transform_batch(self.matrix_batch(t, x), np.sqrt,
                                   "interpolated sqrt")

    def div_batch(self, t, x):
        lam = self.schedule.value(t)
        if lam == 0.0:
            return np.zeros_like(x)
        div = self.local_pc.div_batch(t, x)
        return div if lam == 1.0 else lam * div

    def evaluate_batch(self, t, x):
        lam = self.schedule.value(t)
        if lam == 0.0:
            return self.global_pc.evaluate_batch(t, x)
        if lam == 1.0:
            return self.local_pc.evaluate_batch(t, x)
        local = self.local_pc.matrix_batch(t, x)
        b = (1.0 - lam) * self.global_pc.matrix_batch(t, x) + lam * local
        s = spd_transform_batch(b, np.sqrt, "interpolated sqrt")
        return b, s, lam * self.local_pc.div_batch(t, x)


def interpolated(global_pc: Preconditioner, local_pc: Preconditioner,
                 schedule: LambdaSchedule) -> Interpolated:
    return Interpolated(global_pc, local_pc, schedule)


class MatrixFieldPreconditioner(Preconditioner):
    """User supplied matrix field with optional analytic divergence.

    field(t, x) maps an (n, d) batch to (n, d, d) SPD matrices. Without
    div_field the divergence falls back to central finite differences.
    """

    position_dependent = True

    def __init__(self, dim: int, field, div_field=None, fd_scale: float = FD_STEP_SCALE):
        self.dim = dim
        self.field = field
        self.div_field = div_field
        self.fd_scale = fd_scale

    def matrix_batch(self, t, x):
        return symmetrize(np.asarray(self.field(t, x), dtype=float))

    def sqrt_batch(self, t, x):
        return spd_transform_batch(self.matrix_batch(t, x), np.sqrt, "field sqrt")

    def div_batch(self, t, x):
        if self.div_field is not None:
            return np.asarray(self.div_field(t, x), dtype=float)
        delta = self.fd_scale * (1.0 + np.abs(x).max(axis=1))
        out = np.zeros_like(x)
        for j in range(self.dim):
            shift = np.zeros(self.dim)
            shift[j] = 1.0
            bp = self.matrix_batch(t, x + delta[:, None] * shift)
            bm = self.matrix_batch(t, x - delta[:, None] * shift)
            out += (bp[:, :, j] - bm[:, :, j]) / (2.0 * delta)[:, None]
        return out


class DiagonalFieldPreconditioner(Preconditioner):
    """Diagonal matrix field B(t, x) = diag(v(t, x)).

    diag_field returns the positive diagonal (n, d); diag_div, when given,
    returns the vector with entries d v_i / d x_i, which is the full
    divergence of a diagonal field. The square root is exact and cheap.
    """

    position_dependent = True

    def __init__(self, dim: int, diag_field, diag_div=None,
                 fd_scale: float = FD_STEP_SCALE):
        self.dim = dim
        self.diag_field = diag_field
        self.diag_div = diag_div
        self.fd_scale = fd_scale

    def _diag(self, t, x):
        v = np.asarray(self.diag_field(t, x), dtype=float)
        if np.any(v <= 0):
            raise NotSPDError("diagonal field produced a non-positive entry")
        return v

    def _embed(self, v):
        out = np.zeros(v.shape + (self.dim,))
        idx = np.arange(self.dim)
        out[:, idx, idx] = v
        return out

    def matrix_batch(self, t, x):
        return self._embed(self._diag(t, x))

    def sqrt_batch(self, t, x):
        return self._embed(np.sqrt(self._diag(t, x)))

    def div_batch(self, t, x):
        if self.diag_div is not None:
            return np.asarray(self.diag_div(t, x), dtype=float)
        delta = self.fd_scale * (1.0 + np.abs(x).max(axis=1))
        out = np.zeros_like(x)
        for j in range(self.dim):
            shift = np.zeros(self.dim)
            shift[j] = 1.0
            vp = self._diag(t, x + delta[:, None] * shift)[:, j]
            vm = self._diag(t, x - delta[:, None] * shift)[:, j]
            out[:, j] = (vp - vm) / (2.0 * delta)
        return out


def fd_divergence(b_field, t: float, x, step: float | None = None) -> np.ndarray:
    """Central difference divergence of a single-point matrix field.

    b_field(t, x) returns a SymMatrix or a (d, d) array. The default step is
    1e-4 * (1 + |x|_inf). Returns the length-d vector with entries
    sum_j [B_ij(x + step e_j) - B_ij(x - step e_j)] / (2 step).
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    if step is None:
        step = FD_STEP_SCALE * (1.0 + float(np.abs(x).max()))
    out = np.zeros(d)
    for j in range(d):
        shift = np.zeros(d)
        shift[j] = step
        bp = b_field(t, x + shift)
        bm = b_field(t, x - shift)
        bp = np.asarray(getattr(bp, "array", bp), dtype=float)
        bm = np.asarray(getattr(bm, "array", bm), dtype=float)
        out += (bp[:, j] - bm[:, j]) / (2.0 * step)
    return out


def drift(potential: Potential, pc: Preconditioner, t: float, x) -> np.ndarray:
    """Langevin drift -B grad(psi) + div B at a single point."""
    x = np.asarray(x, dtype=float)
    g = potential.gradient(x)
    return -pc.b_matrix(t, x).matvec(g) + pc.b_div(t, x)
