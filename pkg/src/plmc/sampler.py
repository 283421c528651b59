"""Ensemble samplers: tamed preconditioned Langevin dynamics and MALA.

The Langevin integrator is an Euler-Maruyama scheme with a tamed drift,

    y' = y + h * b / (1 + h |b|) + sqrt(2 h) B^{1/2} z,
    b = -B grad(psi) + div B,

which keeps superlinear drifts from blowing up the discretization. Chains
are advanced as a vectorized ensemble; every chain's noise comes from the
counter-based stream keyed by (seed, chain, step, dim), so results do not
depend on how chains are partitioned into blocks or threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .metrics import SampleSet
from .potentials import Potential, RosenbrockParams
from .precond import Preconditioner
from .rng import normal_block, normal_stream, uniform_block

__all__ = [
    "ChainEnsemble", "ConstantStep", "DiracInit", "DivergenceError",
    "GaussianInit", "PointsInit", "PolynomialDecay", "Trajectory",
    "ancestral_rosenbrock", "geometric_record_steps", "mala_step", "mala_tune",
    "normal_stream", "run_chain", "run_mala", "sample_init", "tame",
    "tamed_langevin_step",
]

DEFAULT_CHAIN_BLOCK = 1024


class DivergenceError(RuntimeError):
    """Too many chains left the finite range; the run was aborted."""


@dataclass(frozen=True)
class DiracInit:
    """All chains start at the same point."""

    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        if self.point.ndim != 1:
            raise ValueError("init point must be a vector")


@dataclass(frozen=True)
class GaussianInit:
    """Chains start at mean + std * z with independent standard normals."""

    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("init std must be positive")


@dataclass(frozen=True)
class PointsInit:
    """Chain i starts at the i-th given point; needs at least n_chains rows."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        if self.points.ndim != 2:
            raise ValueError("init points must form an (n, d) array")


@dataclass(frozen=True)
class ConstantStep:
    h: float

    def __post_init__(self):
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError("step size must be positive")

    def step_size(self, k: int) -> float:
        return self.h


@dataclass(frozen=True)
class PolynomialDecay:
    """h_k = h0 / (1 + k)^gamma with gamma in (1/2, 1].

    That range makes the step sequence square summable but not summable,
    so the dynamics keep moving while the discretization error stays
    controlled.
    """

    h0: float
    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.h0) and self.h0 > 0):
            raise ValueError("h0 must be positive")
        if not 0.5 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (1/2, 1]")

    def step_size(self, k: int) -> float:
        return self.h0 / (1.0 + k) ** self.gamma


@dataclass(frozen=True)
class ChainEnsemble:
    """Positions of n chains at one moment of the integration.

    time always equals the sum of the step sizes taken so far. Rows of
    diverged chains hold NaN and stay that way.
    """

    positions: np.ndarray
    step: int
    time: float
    seed: int

    @property
    def n_chains(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def n_diverged(self) -> int:
        return int((~np.isfinite(self.positions).all(axis=1)).sum())


@dataclass(frozen=True)
class Trajectory:
    """Recorded snapshots of an ensemble run.

    snapshots has shape (n_recorded, n_chains, dim); steps and times label
    the leading axis. Diverged chains appear as NaN rows from the step they
    diverged onward.
    """

    steps: np.ndarray
    times: np.ndarray
    snapshots: np.ndarray
    seed: int

    @property
    def n_diverged(self) -> int:
        return int((~np.isfinite(self.snapshots[-1]).all(axis=1)).sum())

    def final_positions(self) -> np.ndarray:
        return self.snapshots[-1]

    def sample_set(self, index: int = -1) -> SampleSet:
        """Snapshot as a SampleSet, diverged chains dropped."""
        snap = self.snapshots[index]
        return SampleSet(snap[np.isfinite(snap).all(axis=1)])


def tame(b: np.ndarray, h: float) -> np.ndarray:
    """b / (1 + h |b|), batched over leading axes.

    The result never exceeds |b| and never exceeds 1/h in norm, which is
    what bounds a single update regardless of how steep the potential is.
    """
    b = np.asarray(b, dtype=float)
    mag = np.sqrt(np.sum(b * b, axis=-1, keepdims=True))
    return b / (1.0 + h * mag)


def sample_init(init, n_chains: int, dim: int, seed) -> np.ndarray:
    if isinstance(init, DiracInit):
        if init.point.shape != (dim,):
            raise ValueError(f"init point has shape {init.point.shape}, expected ({dim},)")
        return np.tile(init.point, (n_chains, 1))
    if isinstance(init, GaussianInit):
        z = normal_block(seed, 0, n_chains, dim, stream=rng.INIT)
        return init.mean + init.std * z
    if isinstance(init, PointsInit):
        if init.points.shape[0] < n_chains or init.points.shape[1] != dim:
            raise ValueError("init points must cover n_chains rows of width dim")
        return init.points[:n_chains].copy()
    raise TypeError(f"unknown init spec {init!r}")


def _advance_block(positions, t, k, h, potential, pc, seed, first_chain):
    """One tamed step for a contiguous block of chains.

    Chains whose position is already NaN are pushed through the arithmetic
    at the origin and re-marked afterwards, which keeps array shapes fixed
    without letting NaN reach the eigensolvers.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        alive = np.isfinite(positions).all(axis=1)
        safe = np.where(alive[:, None], positions, 0.0)
        b_mat, b_sqrt, b_div = pc.evaluate_batch(t, safe)
        grad = potential.gradient_batch(safe)
        raw = -(np.matmul(b_mat, grad[..., None])[..., 0]) + b_div
        tamed = tame(raw, h)
        z = normal_block(seed, k, positions.shape[0], positions.shape[1],
                         stream=rng.LANGEVIN, first_chain=first_chain)
        noise = np.matmul(b_sqrt, z[..., None])[..., 0]
        new = safe + h * tamed + np.sqrt(2.0 * h) * noise
        ok = alive & np.isfinite(new).all(axis=1)
        return np.where(ok[:, None], new, np.nan)


def tamed_langevin_step(ensemble: ChainEnsemble, potential: Potential,
                        pc: Preconditioner, h: float) -> ChainEnsemble:
    """Advance the whole ensemble by one tamed Euler-Maruyama step."""
    if not h > 0:
        raise ValueError("step size must be positive")
    new = _advance_block(ensemble.positions, ensemble.time, ensemble.step, h,
                         potential, pc, ensemble.seed, first_chain=0)
    return ChainEnsemble(positions=new, step=ensemble.step + 1,
                         time=ensemble.time + h, seed=ensemble.seed)


def geometric_record_steps(n_steps: int, ratio: float = 1.3) -> np.ndarray:
    """Roughly geometric recording grid, always containing 0 and n_steps."""
    if ratio <= 1.0:
        raise ValueError("ratio must exceed 1")
    marks = {0, n_steps}
    v = 1.0
    while v < n_steps:
        marks.add(int(round(v)))
        v *= ratio
    return np.array(sorted(m for m in marks if 0 <= m <= n_steps), dtype=int)


def _resolve_record(record, n_steps: int) -> np.ndarray:
    if record is None:
        return geometric_record_steps(n_steps)
    if isinstance(record, str):
        if record == "all":
            return np.arange(n_steps + 1)
        raise ValueError(f"unknown recording plan {record!r}")
    steps = sorted(set(int(s) for s in record) | {0, n_steps})
    if steps[0] < 0 or steps[-1] > n_steps:
        raise ValueError("recorded steps must lie in [0, n_steps]")
    return np.array(steps, dtype=int)


def _blocks(n_chains: int, block: int):
    return [(s, min(s + block, n_chains)) for s in range(0, n_chains, block)]


def run_chain(potential: Potential, pc: Preconditioner, init, schedule,
              n_steps: int, n_chains: int, seed, *, record=None,
              workers: int | None = None, chain_block: int = DEFAULT_CHAIN_BLOCK,
              divergence_limit: float = 0.01) -> Trajectory:
    """Integrate an ensemble of chains and record snapshots.

    Chains are processed in fixed blocks of ``chain_block`` whatever the
    worker count, so the trajectory is bit-identical for any ``workers``.
    Aborts with DivergenceError when more than ``divergence_limit`` of the
    ensemble has gone non-finite.
    """
    if potential.dim != pc.dim:
        raise ValueError("potential and preconditioner dimensions differ")
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if n_chains <= 0:
        raise ValueError("need at least one chain")
    if workers is None:
        workers = int(os.environ.get("PLMC_WORKERS", "1"))

    d = potential.dim
    positions = sample_init(init, n_chains, d, seed)
    record_steps = _resolve_record(record, n_steps)
    record_set = set(int(s) for s in record_steps)

    snapshots = []
    times = []
    t = 0.0
    if 0 in record_set:
        snapshots.append(positions.copy())
        times.append(0.0)

    blocks = _blocks(n_chains, chain_block)
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for k in range(n_steps):
            h = schedule.step_size(k)
            new = np.empty_like(positions)

            def advance(span, _pos=positions, _new=new, _t=t, _k=k, _h=h):
                lo, hi = span
                _new[lo:hi] = _advance_block(_pos[lo:hi], _t, _k, _h,
                                             potential, pc, seed, first_chain=lo)

            if executor is None:
                for span in blocks:
                    advance(span)
            else:
                list(executor.map(advance, blocks))

            positions = new
            t += h
            bad = int((~np.isfinite(positions).all(axis=1)).sum())
            if bad > divergence_limit * n_chains:
                raise DivergenceError(
                    f"{bad} of {n_chains} chains diverged by step {k + 1} "
                    f"(limit {divergence_limit:.0%})"
                )
            if (k + 1) in record_set:
                snapshots.append(positions.copy())
                times.append(t)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    recorded = [s for s in record_steps]
    return Trajectory(steps=np.array(recorded, dtype=int),
                      times=np.array(times), snapshots=np.array(snapshots),
                      seed=int(seed))


def mala_step(ensemble: ChainEnsemble, potential: Potential, h: float):
    """One Metropolis adjusted Langevin step for every chain.

    Returns the updated ensemble and the boolean acceptance vector.
    Rejected chains keep their position exactly.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    y = ensemble.positions
    n, d = y.shape
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        g = potential.gradient_batch(y)
        z = normal_block(ensemble.seed, ensemble.step, n, d, stream=rng.MALA_PROPOSAL)
        prop = y - h * g + np.sqrt(2.0 * h) * z
        gp = potential.gradient_batch(prop)
        forward = prop - y + h * g
        backward = y - prop + h * gp
        log_acc = (potential.value_batch(y) - potential.value_batch(prop)
                   + np.sum(forward**2, axis=1) / (4.0 * h)
                   - np.sum(backward**2, axis=1) / (4.0 * h))
        u = uniform_block(ensemble.seed, ensemble.step, n, stream=rng.MALA_ACCEPT)
        accept = np.log(u) < log_acc
    new = np.where(accept[:, None], prop, y)
    out = ChainEnsemble(positions=new, step=ensemble.step + 1,
                        time=ensemble.time + h, seed=ensemble.seed)
    return out, accept


def run_mala(potential: Potential, init, h: float, n_steps: int, n_chains: int,
             seed, *, record=None):
    """Run a MALA ensemble; returns (Trajectory, mean acceptance rate)."""
    positions = sample_init(init, n_chains, potential.dim, seed)
    ensemble = ChainEnsemble(positions=positions, step=0, time=0.0, seed=int(seed))
    record_steps = _resolve_record(record, n_steps)
    record_set = set(int(s) for s in record_steps)
    snapshots, times = [], []
    if 0 in record_set:
        snapshots.append(ensemble.positions.copy())
        times.append(0.0)
    total = 0.0
    for k in range(n_steps):
        ensemble, accept = mala_step(ensemble, potential, h)
        total += float(accept.mean())
        if (k + 1) in record_set:
            snapshots.append(ensemble.positions.copy())
            times.append(ensemble.time)
    rate = total / n_steps if n_steps else 0.0
    traj = Trajectory(steps=record_steps, times=np.array(times),
                      snapshots=np.array(snapshots), seed=int(seed))
    return traj, rate


def mala_tune(potential: Potential, init, seed, target: float = 0.5, *,
              initial: float = 1e-2, window: float = 0.03,
              pilot_steps: int = 150, pilot_chains: int = 256,
              max_iters: int = 60) -> float:
    """Find a step size whose acceptance rate lands near ``target``.

    Doubles or halves until the target is bracketed, then bisects in log
    space. Acceptance is measured on deterministic pilot runs (one fresh
    stream per trial), so the result is reproducible for a fixed seed.
    """
    if not 0.0 < target < 1.0:
        raise ValueError("target acceptance must lie in (0, 1)")

    def measure(h: float, trial: int) -> float:
        pilot_seed = (int(seed) * 1000003 + trial) & ((1 << 63) - 1)
        positions = sample_init(init, pilot_chains, potential.dim, pilot_seed)
        ens = ChainEnsemble(positions=positions, step=0, time=0.0, seed=pilot_seed)
        rates = []
        for k in range(pilot_steps):
            ens, accept = mala_step(ens, potential, h)
            if k >= pilot_steps // 2:
                rates.append(float(accept.mean()))
        return float(np.mean(rates))

    h = float(initial)
    lo = hi = None  # lo: acceptance above target, hi: below
    for trial in range(max_iters):
        acc = measure(h, trial)
        if abs(acc - target) <= window:
            return h
        if acc > target:
            lo = h
            h = h * 2.0 if hi is None else float(np.sqrt(h * hi))
        else:
            hi = h
            h = h / 2.0 if lo is None else float(np.sqrt(h * lo))
    raise RuntimeError(
        f"mala_tune failed to reach acceptance {target} +- {window} "
        f"within {max_iters} trials"
    )


def ancestral_rosenbrock(params: RosenbrockParams, n: int, seed) -> SampleSet:
    """Exact samples of the Rosenbrock density by ancestral sampling.

    x1 ~ N(a, 1/2) and x2 | x1 ~ N(x1^2, 1/(2b)), matching the
    factorization of exp(-psi) with normalizing constant pi / sqrt(b).
    """
    if n <= 0:
        raise ValueError("need at least one sample")
    z = normal_block(seed, 0, n, 2, stream=rng.ANCESTRAL)
    x1 = params.a + np.sqrt(0.5) * z[:, 0]
    x2 = x1**2 + np.sqrt(0.5 / params.b) * z[:, 1]
    return SampleSet(np.stack([x1, x2], axis=1))
