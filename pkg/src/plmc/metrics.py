"""Distances, diagnostics and moment estimators for sample sets."""

from __future__ import annotations

import csv

import numpy as np

from .linalg import SPD_RTOL, SymMatrix, spd_inverse, symmetrize
from .potentials import Potential

COVARIANCE_RIDGE = 1e-8


class SampleSet:
    """Immutable bundle of n points in R^d with finite entries."""

    __slots__ = ("_samples",)

    def __init__(self, samples):
        a = np.array(samples, dtype=float)
        if a.ndim != 2:
            raise ValueError("samples must be an (n, d) array")
        if a.shape[0] < 1:
            raise ValueError("need at least one sample")
        if not np.all(np.isfinite(a)):
            raise ValueError("samples must be finite")
        a.setflags(write=False)
        self._samples = a

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def dim(self) -> int:
        return self._samples.shape[1]

    def __len__(self) -> int:
        return self._samples.shape[0]

    def __repr__(self) -> str:
        return f"SampleSet(n={len(self)}, dim={self.dim})"


def _as_samples(a) -> np.ndarray:
    if isinstance(a, SampleSet):
        return a.samples
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected an (n, d) sample array")
    return a


def w2_marginal(a, b, coord: int) -> float:
    """1-D Wasserstein-2 distance between one coordinate's marginals.

    Equal sized sets use the sorted coupling, which is the exact optimal
    transport in one dimension. Mismatched sizes evaluate both empirical
    quantile functions at the midpoints (i - 1/2) / m for m = max(n_a, n_b);
    with equal sizes that reduces to the sorted coupling identically.
    """
    sa, sb = _as_samples(a), _as_samples(b)
    if sa.shape[1] != sb.shape[1]:
        raise ValueError("sample sets have different dimensions")
    if not 0 <= coord < sa.shape[1]:
        raise ValueError(f"coordinate {coord} out of range for dim {sa.shape[1]}")
    xa = np.sort(sa[:, coord])
    xb = np.sort(sb[:, coord])
    m = max(xa.size, xb.size)
    p = (np.arange(m) + 0.5) / m
    qa = xa[np.ceil(p * xa.size).astype(int) - 1]
    qb = xb[np.ceil(p * xb.size).astype(int) - 1]
    return float(np.sqrt(np.mean((qa - qb) ** 2)))


def w2_marginal_all(a, b) -> np.ndarray:
    sa, sb = _as_samples(a), _as_samples(b)
    if sa.shape[1] != sb.shape[1]:
        raise ValueError("sample sets have different dimensions")
    return np.array([w2_marginal(sa, sb, c) for c in range(sa.shape[1])])


def w2_marginal_avg(a, b) -> float:
    return float(w2_marginal_all(a, b).mean())


def w2_marginal_max(a, b) -> float:
    return float(w2_marginal_all(a, b).max())


def w2_marginal_min(a, b) -> float:
    return float(w2_marginal_all(a, b).min())


def mean_error(a, reference_mean) -> float:
    """Squared Euclidean distance between the sample mean and a reference."""
    sa = _as_samples(a)
    ref = np.asarray(reference_mean, dtype=float)
    diff = sa.mean(axis=0) - ref
    return float(diff @ diff)


def cosine_observable(g1: float, g2: float):
    """The observable f(x) = cos(g1 x1 + g2 x2) on two dimensional samples."""

    def f(samples) -> np.ndarray:
        s = _as_samples(samples)
        if s.shape[1] != 2:
            raise ValueError("cosine observables are defined on R^2")
        return np.cos(g1 * s[:, 0] + g2 * s[:, 1])

    f.gammas = (g1, g2)
    return f


def observable_error(a, f, reference: float) -> float:
    """Absolute gap between the sample mean of f and a reference value."""
    return float(abs(f(_as_samples(a)).mean() - reference))


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    if denom == 0.0:
        return float("nan")
    return float((xc @ yc) / denom)


def acf(trajectories: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelation of chain trajectories along decorrelated directions.

    trajectories has shape (n_chains, n_steps, d). The covariance of the
    final snapshot is eigendecomposed; every snapshot is projected onto the
    eigenvectors (ordered by descending variance); for each projected
    coordinate and each lag the Pearson correlation is pooled over all
    (chain, start index) pairs. Returns shape (d, max_lag + 1). Degenerate
    coordinates yield NaN.
    """
    traj = np.asarray(trajectories, dtype=float)
    if traj.ndim != 3:
        raise ValueError("expected trajectories of shape (n_chains, n_steps, d)")
    n_chains, n_steps, d = traj.shape
    if not 0 <= max_lag < n_steps:
        raise ValueError("max_lag must lie in [0, n_steps)")
    cov = np.cov(traj[:, -1, :], rowvar=False).reshape(d, d)
    _, vectors = np.linalg.eigh(symmetrize(cov))
    vectors = vectors[:, ::-1]
    proj = traj @ vectors
    out = np.empty((d, max_lag + 1))
    for c in range(d):
        series = proj[:, :, c]
        for lag in range(max_lag + 1):
            head = series[:, : n_steps - lag].ravel()
            tail = series[:, lag:].ravel()
            out[c, lag] = _pearson(head, tail)
    return out


def estimate_covariance(a) -> SymMatrix:
    """Unbiased sample covariance, ridged when it is not positive definite.

    The ridge is 1e-8 * trace / d on the diagonal, just enough to make a
    rank deficient estimate usable by spd_sqrt downstream.
    """
    sa = _as_samples(a)
    if sa.shape[0] < 2:
        raise ValueError("covariance needs at least two samples")
    cov = np.atleast_2d(np.cov(sa, rowvar=False))
    values = np.linalg.eigvalsh(symmetrize(cov))
    if values[0] <= SPD_RTOL * max(1.0, values[-1]):
        ridge = COVARIANCE_RIDGE * float(np.trace(cov)) / cov.shape[0]
        cov = cov + ridge * np.eye(cov.shape[0])
    return SymMatrix(cov)


def estimate_fisher_inverse(a, potential: Potential) -> SymMatrix:
    """Inverse of the sample averaged Hessian of the potential."""
    sa = _as_samples(a)
    mean_hessian = potential.hessian_batch(sa).mean(axis=0)
    return spd_inverse(SymMatrix(mean_hessian))


def _fmt(value: float) -> str:
    return repr(float(value))


class MetricsSeries:
    """Metric values recorded along a run, serializable as CSV.

    Rows are (step, time, metric, value); value may be None for a metric
    that could not be evaluated at that step. Steps must be non-decreasing
    per metric name.
    """

    def __init__(self):
        self._rows: list[tuple[int, float, str, float | None]] = []
        self._last: dict[str, int] = {}

    def add(self, step: int, time: float, metric: str, value) -> None:
        step = int(step)
        if metric in self._last and step < self._last[metric]:
            raise ValueError(
                f"step {step} for {metric!r} is behind the last recorded "
                f"step {self._last[metric]}"
            )
        self._last[metric] = step
        v = None if value is None else float(value)
        self._rows.append((step, float(time), str(metric), v))

    @property
    def rows(self):
        return list(self._rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, MetricsSeries) and self._rows == other._rows

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "time", "metric", "value"])
            for step, time, metric, value in self._rows:
                writer.writerow([step, _fmt(time), metric,
                                 "" if value is None else _fmt(value)])

    @classmethod
    def from_csv(cls, path) -> "MetricsSeries":
        series = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["step", "time", "metric", "value"]:
                raise ValueError(f"unexpected metrics header {header!r}")
            for i, row in enumerate(reader, start=2):
                if len(row) != 4:
                    raise ValueError(f"row {i}: expected 4 fields, got {len(row)}")
                value = None if row[3] == "" else float(row[3])
                series.add(int(row[0]), float(row[1]), row[2], value)
        return series
