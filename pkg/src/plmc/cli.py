"""Command line experiment harness.

Subcommands:
  sample     run one Langevin experiment, record metrics against ground truth
  sweep      grid of (preconditioner, step size) cells, final metric per cell
  reference  build a MALA reference sample set and moment estimates
  acf        autocorrelation of stationary chains per preconditioner

Configuration is a flat key = value text file plus --key value overrides on
the command line. Outputs are CSV files plus a resolved_config.txt echo of
every setting actually used; reruns with the same config and seed produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .data import load_heart_csv, load_samples, make_synthetic_logistic, save_samples
from .linalg import SymMatrix
from .metrics import (
    MetricsSeries,
    SampleSet,
    _fmt,
    acf,
    cosine_observable,
    estimate_covariance,
    estimate_fisher_inverse,
    mean_error,
    observable_error,
    w2_marginal,
    w2_marginal_avg,
    w2_marginal_max,
    w2_marginal_min,
)
from .potentials import (
    LogisticPosterior,
    Potential,
    QuadraticPotential,
    RosenbrockParams,
    RosenbrockPotential,
)
from .precond import (
    ClampSpec,
    LambdaSchedule,
    constant_scalar,
    curvature_aware,
    fixed_matrix,
    interpolated,
)
from .sampler import (
    ConstantStep,
    DiracInit,
    DivergenceError,
    GaussianInit,
    PointsInit,
    PolynomialDecay,
    ancestral_rosenbrock,
    mala_tune,
    run_chain,
    run_mala,
)

# Default curvature scale for the Rosenbrock target: a bound on the Hessian
# spectral norm over the region holding the bulk of the mass.
ROSENBROCK_CURVATURE_SCALE = 11655.0

DEFAULTS = {
    "potential": "rosenbrock",
    "rosenbrock.a": "1.0",
    "rosenbrock.b": "100.0",
    "quadratic.dim": "2",
    "quadratic.precision": "1,0,0,1",
    "quadratic.mean": "0,0",
    "logistic.source": "synthetic",
    "logistic.path": "data/processed.cleveland.data",
    "logistic.n": "300",
    "logistic.d": "13",
    "logistic.data_seed": "7",
    "precond": "curvature",
    "precond.c": "auto",
    "precond.epsilon": "0.001",
    "precond.clamp": "auto",
    "schedule": "constant",
    "h": "0.006",
    "decay.gamma": "1.0",
    "steps": "1000",
    "chains": "512",
    "seed": "1",
    "init": "gauss",
    "init.point": "0,0",
    "init.mean": "0.0",
    "init.std": "1.0",
    "record": "geometric",
    "ground_truth": "auto",
    "gt.n": "100000",
    "gt.path": "",
    "gt.iters": "10000",
    "gt.chains": "1000",
    "gt.target_accept": "0.5",
    "gt.h": "auto",
    "gt.seed": "999",
    "metrics": "w2_avg,mean_error",
    "out": "out",
    "sweep.h": "0.0001,0.001,0.006,0.03,0.1",
    "sweep.preconds": "constant,curvature,interpolated",
    "acf.preconds": "constant,curvature",
    "acf.steps": "200",
    "acf.max_lag": "50",
    "acf.chains": "64",
}


class ConfigError(ValueError):
    """Bad configuration key or value; maps to exit status 2."""


def parse_config_file(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = text.partition("=")
            key = key.strip()
            if key not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value.strip()
    return values


def parse_overrides(tokens) -> dict:
    values = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or i + 1 >= len(tokens):
            raise ConfigError(f"overrides must come as --key value pairs, got {tok!r}")
        key = tok[2:]
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = tokens[i + 1]
        i += 2
    return values


def resolve_config(path=None, overrides=None) -> dict:
    cfg = dict(DEFAULTS)
    if path:
        cfg.update(parse_config_file(path))
    if overrides:
        cfg.update(overrides)
    return cfg


def _get_float(cfg, key) -> float:
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"config key {key!r} must be a number, got {cfg[key]!r}") from None


def _get_int(cfg, key) -> int:
    try:
        return int(cfg[key])
    except ValueError:
        raise ConfigError(f"config key {key!r} must be an integer, got {cfg[key]!r}") from None


def _get_floats(cfg, key) -> list:
    try:
        return [float(v) for v in cfg[key].split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"config key {key!r} must be comma separated numbers") from None


def _get_choice(cfg, key, choices) -> str:
    value = cfg[key]
    if value not in choices:
        raise ConfigError(f"config key {key!r} must be one of {sorted(choices)}, got {value!r}")
    return value


def build_potential(cfg) -> Potential:
    kind = _get_choice(cfg, "potential", {"rosenbrock", "logistic", "quadratic"})
    if kind == "rosenbrock":
        return RosenbrockPotential(RosenbrockParams(a=_get_float(cfg, "rosenbrock.a"),
                                                    b=_get_float(cfg, "rosenbrock.b")))
    if kind == "quadratic":
        d = _get_int(cfg, "quadratic.dim")
        entries = _get_floats(cfg, "quadratic.precision")
        if len(entries) != d * d:
            raise ConfigError("quadratic.precision needs dim*dim row-major entries")
        mean = _get_floats(cfg, "quadratic.mean")
        if len(mean) != d:
            raise ConfigError("quadratic.mean needs dim entries")
        return QuadraticPotential(SymMatrix(np.array(entries).reshape(d, d)), mean)
    source = _get_choice(cfg, "logistic.source", {"synthetic", "heart"})
    if source == "heart":
        return LogisticPosterior(load_heart_csv(cfg["logistic.path"]))
    model, _ = make_synthetic_logistic(_get_int(cfg, "logistic.n"),
                                       _get_int(cfg, "logistic.d"),
                                       _get_int(cfg, "logistic.data_seed"))
    return LogisticPosterior(model)


def build_init(cfg, dim):
    kind = _get_choice(cfg, "init", {"gauss", "dirac"})
    if kind == "dirac":
        point = _get_floats(cfg, "init.point")
        if len(point) != dim:
            raise ConfigError(f"init.point needs {dim} entries")
        return DiracInit(np.array(point))
    return GaussianInit(mean=_get_float(cfg, "init.mean"), std=_get_float(cfg, "init.std"))


def build_schedule(cfg):
    kind = _get_choice(cfg, "schedule", {"constant", "decay"})
    h = _get_float(cfg, "h")
    if kind == "constant":
        return ConstantStep(h)
    return PolynomialDecay(h0=h, gamma=_get_float(cfg, "decay.gamma"))


def total_time(schedule, n_steps: int) -> float:
    return float(np.sum([schedule.step_size(k) for k in range(n_steps)]))


def build_ground_truth(cfg, potential) -> SampleSet:
    source = _get_choice(cfg, "ground_truth", {"auto", "ancestral", "mala", "file"})
    if source == "auto":
        source = "ancestral" if isinstance(potential, RosenbrockPotential) else "mala"
        cfg["ground_truth"] = source
    if source == "file":
        if not cfg["gt.path"]:
            raise ConfigError("ground_truth = file needs gt.path")
        return load_samples(cfg["gt.path"])
    if source == "ancestral":
        if not isinstance(potential, RosenbrockPotential):
            raise ConfigError("ancestral ground truth is only defined for rosenbrock")
        return ancestral_rosenbrock(potential.params, _get_int(cfg, "gt.n"),
                                    _get_int(cfg, "gt.seed"))
    h = mala_reference_step(cfg, potential)
    traj, _ = run_mala(potential, GaussianInit(0.0, 1.0), h,
                       _get_int(cfg, "gt.iters"), _get_int(cfg, "gt.chains"),
                       _get_int(cfg, "gt.seed"), record=[_get_int(cfg, "gt.iters")])
    return traj.sample_set()


def mala_reference_step(cfg, potential) -> float:
    if cfg["gt.h"] != "auto":
        return _get_float(cfg, "gt.h")
    h = mala_tune(potential, GaussianInit(0.0, 1.0), _get_int(cfg, "gt.seed"),
                  target=_get_float(cfg, "gt.target_accept"))
    cfg["gt.h"] = _fmt(h)
    return h


def build_preconditioner(cfg, potential, ground_truth, n_steps, schedule, name=None):
    kind = name if name is not None else cfg["precond"]
    if kind not in {"constant", "covariance", "fisher", "curvature", "interpolated"}:
        raise ConfigError(f"unknown preconditioner {kind!r}")
    if name is None:
        cfg["precond"] = kind
    if kind == "constant":
        if cfg["precond.c"] == "auto":
            bound = potential.lipschitz_bound()
            if bound is None:
                bound = (ROSENBROCK_CURVATURE_SCALE
                         if isinstance(potential, RosenbrockPotential) else None)
            if bound is None:
                raise ConfigError("precond.c = auto has no default for this potential")
            c = 1.0 / bound
            if name is None:
                cfg["precond.c"] = _fmt(c)
        else:
            c = _get_float(cfg, "precond.c")
        return constant_scalar(c, potential.dim)
    if kind == "covariance":
        return fixed_matrix(estimate_covariance(ground_truth))
    if kind == "fisher":
        return fixed_matrix(estimate_fisher_inverse(ground_truth, potential))
    clamp_mode = _get_choice(cfg, "precond.clamp", {"auto", "on", "off"})
    if clamp_mode == "auto":
        clamp_mode = "off" if isinstance(potential, LogisticPosterior) else "on"
        if name is None:
            cfg["precond.clamp"] = clamp_mode
    clamp = ClampSpec(_get_float(cfg, "precond.epsilon")) if clamp_mode == "on" else None
    local = curvature_aware(potential, clamp)
    if kind == "curvature":
        return local
    ramp = LambdaSchedule(ramp_time=0.5 * total_time(schedule, n_steps))
    return interpolated(fixed_matrix(estimate_covariance(ground_truth)), local, ramp)


def metric_evaluators(names, ground_truth: SampleSet):
    """Build (name, snapshot -> value) pairs against a ground truth set."""
    gt_mean = ground_truth.samples.mean(axis=0)
    evaluators = []
    for name in names:
        name = name.strip()
        if not name:
            continue
        if name == "w2_avg":
            fn = lambda s: w2_marginal_avg(s, ground_truth)
        elif name == "w2_max":
            fn = lambda s: w2_marginal_max(s, ground_truth)
        elif name == "w2_min":
            fn = lambda s: w2_marginal_min(s, ground_truth)
        elif name.startswith("w2_"):
            try:
                coord = int(name[3:])
            except ValueError:
                raise ConfigError(f"unknown metric {name!r}") from None
            if not 0 <= coord < ground_truth.dim:
                raise ConfigError(f"metric {name!r} is out of range")
            fn = lambda s, c=coord: w2_marginal(s, ground_truth, c)
        elif name == "mean_error":
            fn = lambda s: mean_error(s, gt_mean)
        elif name.startswith("cos_"):
            parts = name.split("_")
            if len(parts) != 3:
                raise ConfigError(f"unknown metric {name!r}")
            try:
                f = cosine_observable(float(parts[1]), float(parts[2]))
            except ValueError:
                raise ConfigError(f"unknown metric {name!r}") from None
            ref = float(f(ground_truth).mean())
            fn = lambda s, f=f, r=ref: observable_error(s, f, r)
        else:
            raise ConfigError(f"unknown metric {name!r}")
        evaluators.append((name, fn))
    if not evaluators:
        raise ConfigError("metrics list is empty")
    return evaluators


def write_resolved_config(cfg, out_dir) -> None:
    path = os.path.join(out_dir, "resolved_config.txt")
    with open(path, "w") as fh:
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")


def _write_matrix_csv(path, matrix: np.ndarray) -> None:
    matrix = np.atleast_2d(matrix)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(f"dim_{j}" for j in range(matrix.shape[1])) + "\n")
        for row in matrix:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _snapshot_set(snapshot: np.ndarray):
    alive = np.isfinite(snapshot).all(axis=1)
    if not alive.any():
        return None, alive
    return SampleSet(snapshot[alive]), alive


def cmd_sample(cfg, workers=None) -> int:
    potential = build_potential(cfg)
    ground_truth = build_ground_truth(cfg, potential)
    schedule = build_schedule(cfg)
    n_steps = _get_int(cfg, "steps")
    pc = build_preconditioner(cfg, potential, ground_truth, n_steps, schedule)
    init = build_init(cfg, potential.dim)
    record = "all" if cfg["record"] == "all" else None
    evaluators = metric_evaluators(cfg["metrics"].split(","), ground_truth)

    out_dir = cfg["out"]
    os.makedirs(out_dir, exist_ok=True)
    try:
        traj = run_chain(potential, pc, init, schedule, n_steps,
                         _get_int(cfg, "chains"), _get_int(cfg, "seed"),
                         record=record, workers=workers)
    except DivergenceError as exc:
        write_resolved_config(cfg, out_dir)
        print(f"sample: aborted: {exc}", file=sys.stderr)
        return 1

    series = MetricsSeries()
    for i, step in enumerate(traj.steps):
        snap_set, _ = _snapshot_set(traj.snapshots[i])
        for mname, fn in evaluators:
            value = None if snap_set is None else fn(snap_set)
            series.add(int(step), float(traj.times[i]), mname, value)
    series.to_csv(os.path.join(out_dir, "metrics.csv"))

    final = traj.final_positions()
    final_set, alive = _snapshot_set(final)
    if final_set is None:
        print("sample: every chain diverged", file=sys.stderr)
        return 1
    save_samples(os.path.join(out_dir, "samples.csv"), final_set,
                 step=int(traj.steps[-1]), chain_ids=np.flatnonzero(alive))
    write_resolved_config(cfg, out_dir)

    summary = ", ".join(f"{mname}={fn(final_set):.6g}" for mname, fn in evaluators)
    print(f"sample: {cfg['precond']} h={cfg['h']} steps={n_steps} "
          f"diverged={traj.n_diverged} {summary}")
    return 0


def cmd_sweep(cfg, workers=None) -> int:
    potential = build_potential(cfg)
    ground_truth = build_ground_truth(cfg, potential)
    names = [n.strip() for n in cfg["sweep.preconds"].split(",") if n.strip()]
    hs = _get_floats(cfg, "sweep.h")
    if not names or not hs:
        raise ConfigError("sweep needs sweep.preconds and sweep.h")
    n_steps = _get_int(cfg, "steps")
    metric_name, metric_fn = metric_evaluators(
        cfg["metrics"].split(","), ground_truth)[0]
    init = build_init(cfg, potential.dim)

    out_dir = cfg["out"]
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for name in names:
        for h in hs:
            schedule = ConstantStep(h)
            pc = build_preconditioner(cfg, potential, ground_truth, n_steps,
                                      schedule, name=name)
            try:
                traj = run_chain(potential, pc, init, schedule, n_steps,
                                 _get_int(cfg, "chains"), _get_int(cfg, "seed"),
                                 record=[n_steps], workers=workers)
                snap_set, _ = _snapshot_set(traj.final_positions())
                value = None if snap_set is None else metric_fn(snap_set)
            except DivergenceError:
                value = None
            rows.append((name, h, value))

    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as fh:
        fh.write("preconditioner,h,final_metric\n")
        for name, h, value in rows:
            fh.write(f"{name},{_fmt(h)},{'' if value is None else _fmt(value)}\n")
    write_resolved_config(cfg, out_dir)
    done = sum(1 for _, _, v in rows if v is not None)
    print(f"sweep: {done}/{len(rows)} cells completed (metric {metric_name})")
    return 0


def cmd_reference(cfg, workers=None) -> int:
    potential = build_potential(cfg)
    h = mala_reference_step(cfg, potential)
    iters = _get_int(cfg, "gt.iters")
    traj, rate = run_mala(potential, GaussianInit(0.0, 1.0), h, iters,
                          _get_int(cfg, "gt.chains"), _get_int(cfg, "gt.seed"),
                          record=[iters])
    samples = traj.sample_set()

    out_dir = cfg["out"]
    os.makedirs(out_dir, exist_ok=True)
    save_samples(os.path.join(out_dir, "samples.csv"), samples, step=iters)
    _write_matrix_csv(os.path.join(out_dir, "mean.csv"),
                      samples.samples.mean(axis=0))
    _write_matrix_csv(os.path.join(out_dir, "cov.csv"),
                      estimate_covariance(samples).array)
    _write_matrix_csv(os.path.join(out_dir, "fisher_inv.csv"),
                      estimate_fisher_inverse(samples, potential).array)
    write_resolved_config(cfg, out_dir)
    print(f"reference: h={_fmt(h)} acceptance={rate:.3f} n={len(samples)}")
    return 0


def cmd_acf(cfg, workers=None) -> int:
    potential = build_potential(cfg)
    ground_truth = build_ground_truth(cfg, potential)
    names = [n.strip() for n in cfg["acf.preconds"].split(",") if n.strip()]
    if not names:
        raise ConfigError("acf needs acf.preconds")
    n_steps = _get_int(cfg, "acf.steps")
    n_chains = _get_int(cfg, "acf.chains")
    max_lag = _get_int(cfg, "acf.max_lag")
    if len(ground_truth) < n_chains:
        raise ConfigError("acf.chains exceeds the ground truth size")
    init = PointsInit(ground_truth.samples)

    out_dir = cfg["out"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "acf.csv"), "w", newline="") as fh:
        fh.write("preconditioner,lag,coordinate,correlation\n")
        for name in names:
            schedule = build_schedule(cfg)
            pc = build_preconditioner(cfg, potential, ground_truth, n_steps,
                                      schedule, name=name)
            traj = run_chain(potential, pc, init, schedule, n_steps, n_chains,
                             _get_int(cfg, "seed"), record="all", workers=workers)
            series = acf(traj.snapshots.transpose(1, 0, 2), max_lag)
            for coord in range(series.shape[0]):
                for lag in range(series.shape[1]):
                    v = series[coord, lag]
                    text = "" if np.isnan(v) else _fmt(v)
                    fh.write(f"{name},{lag},{coord},{text}\n")
    write_resolved_config(cfg, out_dir)
    print(f"acf: wrote lags 0..{max_lag} for {', '.join(names)}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plmc",
        description="Preconditioned Langevin sampling experiments.",
        allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sample", "sweep", "reference", "acf"):
        p = sub.add_parser(name, allow_abbrev=False)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", help="override the run seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="worker threads (default $PLMC_WORKERS or 1)")

    args, extra = parser.parse_known_args(argv)
    try:
        overrides = parse_overrides(extra)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out"] = args.out
        cfg = resolve_config(args.config, overrides)
        command = {"sample": cmd_sample, "sweep": cmd_sweep,
                   "reference": cmd_reference, "acf": cmd_acf}[args.command]
        return command(cfg, workers=args.workers)
    except ConfigError as exc:
        print(f"plmc {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"plmc {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
