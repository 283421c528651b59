"""Dataset loading, synthetic data and sample persistence."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .metrics import SampleSet, _fmt
from .potentials import LogisticModel

HEART_FEATURES = 13


@dataclass(frozen=True)
class RawDataset:
    """Rows of raw string fields, column count already validated."""

    rows: tuple
    n_columns: int


def read_raw_csv(path, n_columns: int) -> RawDataset:
    """Read a comma separated file into raw string rows.

    Blank lines are skipped. A row with the wrong number of fields raises
    a ValueError naming the offending (1-based) row.
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(f.strip() == "" for f in row):
                continue
            if len(row) != n_columns:
                raise ValueError(
                    f"{path}: row {lineno} has {len(row)} fields, expected {n_columns}"
                )
            rows.append(tuple(f.strip() for f in row))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return RawDataset(rows=tuple(rows), n_columns=n_columns)


def heart_prior_variances(d: int = HEART_FEATURES) -> np.ndarray:
    """Linearly interpolated prior variances, 0.1 for the first coordinate
    up to 10.0 for the last."""
    return np.linspace(0.1, 10.0, d)


def load_heart_csv(path) -> LogisticModel:
    """Load the processed Cleveland heart disease table.

    Expects 14 comma separated columns: 13 features and the disease status.
    Rows containing a "?" placeholder are dropped. The status column is
    binarized as value > 0, and features are used as-is (no standardization,
    no intercept column). The prior follows heart_prior_variances.
    """
    raw = read_raw_csv(path, HEART_FEATURES + 1)
    kept = [row for row in raw.rows if "?" not in row]
    if not kept:
        raise ValueError(f"{path}: every row contained missing values")
    try:
        table = np.array([[float(f) for f in row] for row in kept])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric field ({exc})") from None
    features = table[:, :HEART_FEATURES]
    labels = (table[:, HEART_FEATURES] > 0).astype(float)
    return LogisticModel(features=features, labels=labels,
                         prior_variances=heart_prior_variances())


def make_synthetic_logistic(n: int, d: int, seed):
    """Synthetic logistic regression data with the same prior family.

    Features are iid standard normal, the true coefficient vector is drawn
    once from N(0, I), labels are Bernoulli under the logistic link.
    Returns (model, true_beta).
    """
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    gen = np.random.default_rng(seed)
    features = gen.standard_normal((n, d))
    beta = gen.standard_normal(d)
    labels = (gen.random(n) < expit(features @ beta)).astype(float)
    model = LogisticModel(features=features, labels=labels,
                          prior_variances=np.linspace(0.1, 10.0, d))
    return model, beta


def save_samples(path, a: SampleSet, step: int | None = None,
                 chain_ids=None) -> None:
    """Write a sample set as CSV with columns chain[,step],dim_0..dim_{d-1}."""
    samples = a.samples
    n, d = samples.shape
    ids = np.arange(n) if chain_ids is None else np.asarray(chain_ids)
    if ids.shape != (n,):
        raise ValueError("chain_ids must have one entry per sample")
    header = ["chain"] + (["step"] if step is not None else []) \
        + [f"dim_{j}" for j in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n):
            row = [int(ids[i])]
            if step is not None:
                row.append(int(step))
            row.extend(_fmt(v) for v in samples[i])
            writer.writerow(row)


def load_samples(path) -> SampleSet:
    """Read a CSV written by save_samples back into a SampleSet.

    The step column is optional; chain and step labels are not part of the
    returned samples.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "chain":
            raise ValueError(f"{path}: expected a header starting with 'chain'")
        start = 1
        if len(header) > 1 and header[1] == "step":
            start = 2
        dims = header[start:]
        expected = [f"dim_{j}" for j in range(len(dims))]
        if not dims or dims != expected:
            raise ValueError(f"{path}: malformed dimension columns {dims!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {lineno} has {len(row)} fields, "
                    f"expected {len(header)}"
                )
            try:
                rows.append([float(v) for v in row[start:]])
            except ValueError:
                raise ValueError(f"{path}: row {lineno} has a non-numeric field") from None
    if not rows:
        raise ValueError(f"{path}: no sample rows")
    return SampleSet(np.array(rows))
