"""Prefix-sum excursion statistics and scaling experiments.

The central statistic is sup_t |h_1 + ... + h_t| over a sampled sign
vector.  Scaling runs estimate moments of this supremum across domain
sizes and fit the normalized means against lg n.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Sequence

import numpy as np

from .parallel import map_reduce_chunks
from .rng import mix64
from .sign_families import AdversarialParams, FamilySpec, make_sampler


def prefix_sums(v: Sequence[int] | np.ndarray) -> np.ndarray:
    """Partial sums S_0 = 0, S_i = S_{i-1} + v_i, as int64."""
    arr = np.asarray(v, dtype=np.int64)
    out = np.zeros(len(arr) + 1, dtype=np.int64)
    np.cumsum(arr, out=out[1:])
    return out


def sup_abs_prefix(v: Sequence[int] | np.ndarray) -> int:
    """Largest |S_i| over 1 <= i <= n; at least 1 for any sign vector."""
    sums = prefix_sums(v)
    return int(np.abs(sums[1:]).max())


def sup_abs_prefix_batch(batch: np.ndarray) -> np.ndarray:
    """Row-wise sup |S_i| for a (rows, n) batch of sign vectors."""
    sums = np.cumsum(batch, axis=1, dtype=np.int64)
    return np.abs(sums).max(axis=1)


@dataclass(frozen=True)
class SupEstimate:
    """Monte Carlo estimate of E[(sup_t |S_t|)^moment_order]."""

    moment_order: int
    mean: float
    stderr: float
    trials: int
    n: int

    def __post_init__(self):
        if self.mean < 0 or self.stderr < 0:
            raise ValueError("moment estimates are nonnegative")


def _sup_moment_chunk(args, rng, count):
    family_config, moment_order = args
    spec = FamilySpec.from_config(family_config)
    sampler = make_sampler(spec)
    sups = sup_abs_prefix_batch(sampler.sample_batch(rng, count)).astype(np.float64)
    vals = sups ** moment_order
    return float(vals.sum()), float((vals ** 2).sum()), count


def estimate_sup_moment(spec: FamilySpec, moment_order: int, trials: int,
                        seed: int | None = None, workers: int = 1) -> SupEstimate:
    """Sample mean and standard error of (sup_t |S_t|)^moment_order."""
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if moment_order < 1:
        raise ValueError("moment order must be positive")
    if seed is None:
        seed = spec.seed
    total, total_sq, count = map_reduce_chunks(
        _sup_moment_chunk, (spec.to_config(), moment_order), trials, seed, workers)
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    stderr = (var / count) ** 0.5
    return SupEstimate(moment_order=moment_order, mean=mean, stderr=stderr,
                       trials=trials, n=spec.n)


def drift_check_h1(params: AdversarialParams, block_index: int) -> Fraction:
    """Exact E[S_{c * root}] for the biased stage: root times the partial
    sum of the block mean profile."""
    if not 1 <= block_index <= params.root:
        raise ValueError(f"block index must lie in 1..{params.root}")
    return params.root * sum(params.f[:block_index], Fraction(0))


@dataclass(frozen=True)
class ScalingTable:
    """Rows of (n, SupEstimate) with n strictly increasing powers of 4."""

    rows: tuple[tuple[int, SupEstimate], ...]

    def __post_init__(self):
        ns = [n for n, _ in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("n values must be strictly increasing")
        for n in ns:
            m = n
            while m % 4 == 0:
                m //= 4
            if m != 1:
                raise ValueError(f"n={n} is not a power of 4")

    def to_csv(self, out: IO[str], seed: int | None = None) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["n", "moment_order", "mean", "stderr", "trials", "seed"])
        for n, est in self.rows:
            writer.writerow([n, est.moment_order, repr(est.mean),
                             repr(est.stderr), est.trials, seed])


def scaling_table(spec_template: FamilySpec, n_values: Sequence[int],
                  moment_order: int, trials: int, seed: int,
                  workers: int = 1) -> ScalingTable:
    """Run estimate_sup_moment for each n, with per-row derived seeds."""
    rows = []
    for idx, n in enumerate(n_values):
        spec = spec_template.with_n(n)
        est = estimate_sup_moment(spec, moment_order, trials,
                                  seed=mix64(seed, idx), workers=workers)
        rows.append((n, est))
    return ScalingTable(rows=tuple(rows))


@dataclass(frozen=True)
class GrowthFit:
    """Least-squares fit of normalized sup moments against lg n.

    y = mean / n^(order/2) per row; slope_stderr is the classic
    residual-based OLS standard error, slope_stderr_propagated carries the
    per-row Monte Carlo errors through the fit instead.
    """

    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    slope_stderr_propagated: float


def fit_log_growth(table: ScalingTable) -> GrowthFit:
    if len(table.rows) < 3:
        raise ValueError("need at least 3 rows to fit")
    order = table.rows[0][1].moment_order
    x = np.array([np.log2(n) for n, _ in table.rows])
    y = np.array([est.mean / n ** (order / 2) for n, est in table.rows])
    y_err = np.array([est.stderr / n ** (order / 2) for n, est in table.rows])

    xc = x - x.mean()
    sxx = float((xc ** 2).sum())
    slope = float((xc * y).sum() / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_res = float((resid ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r_squared = 1.0 if ss_tot == 0 and ss_res == 0 else 1.0 - ss_res / ss_tot
    dof = len(x) - 2
    slope_stderr = (ss_res / dof / sxx) ** 0.5 if dof > 0 else 0.0
    slope_stderr_prop = float(np.sqrt(((xc * y_err) ** 2).sum()) / sxx)
    return GrowthFit(slope=slope, intercept=intercept, r_squared=r_squared,
                     slope_stderr=slope_stderr,
                     slope_stderr_propagated=slope_stderr_prop)
