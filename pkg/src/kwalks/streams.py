"""Insertion-only streams, prefix nets, and chaining forms.

A stream of items p_1..p_m over [n] tracks a counting vector z; z^(t) is
the count vector after t items.  For each level r the net points are a
greedy subsequence of prefixes pairwise farther apart than 2^(-r/2)||z||,
every prefix sits within that radius of its preceding net point, and level
r holds at most 2^r + 1 points.  Chain forms sum squared (or k-th power)
inner products over net-point differences and deterministically dominate
the supremum statistic up to explicit factors.

Radius comparisons square both sides and stay in integer arithmetic, so
net membership is never decided by floating-point rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .gf2 import all_polynomial_signs, min_width
from .parallel import map_reduce_chunks
from .sign_families import FamilySpec, make_sampler
from .walks import SupEstimate

# Exact k-th moment constants for +-1 valued steps.
MOMENT_CONSTANTS = {2: 1, 4: 3}


def _lg(m: int) -> int:
    if m < 1 or m & (m - 1):
        raise ValueError("stream length must be a power of 2")
    return m.bit_length() - 1


@dataclass(eq=False)
class InsertionStream:
    """Items p_1..p_m in [n], 1-based; m must be a power of two."""

    items: np.ndarray
    n: int

    def __post_init__(self):
        self.items = np.asarray(self.items, dtype=np.int64)
        if self.items.ndim != 1 or len(self.items) == 0:
            raise ValueError("stream must be a nonempty 1-d sequence")
        _lg(len(self.items))
        if self.items.min() < 1 or self.items.max() > self.n:
            raise ValueError(f"items must lie in 1..{self.n}")

    @property
    def m(self) -> int:
        return len(self.items)

    def counts(self) -> np.ndarray:
        """Final count vector z."""
        return np.bincount(self.items, minlength=self.n + 1)[1:]

    def norm_sq(self) -> int:
        return int((self.counts().astype(object) ** 2).sum())

    def prefix_inner(self, x: Sequence[float] | np.ndarray) -> np.ndarray:
        """W_t = <x, z^(t)> for t = 0..m."""
        arr = np.asarray(x, dtype=np.float64)
        if arr.shape != (self.n,):
            raise ValueError(f"expected a length-{self.n} vector")
        out = np.zeros(self.m + 1)
        np.cumsum(arr[self.items - 1], out=out[1:])
        return out

    def prefix_inner_rows(self, rows: np.ndarray) -> np.ndarray:
        arr = np.asarray(rows, dtype=np.float64)
        out = np.zeros((len(arr), self.m + 1))
        np.cumsum(arr[:, self.items - 1], axis=1, out=out[:, 1:])
        return out


def identity_stream(m: int) -> InsertionStream:
    """p_j = j: the plain random-walk case."""
    return InsertionStream(items=np.arange(1, m + 1), n=m)


def single_item_stream(m: int) -> InsertionStream:
    """Every insertion hits coordinate 1."""
    return InsertionStream(items=np.ones(m, dtype=np.int64), n=1)


def two_phase_stream(m: int, n: int = 256) -> InsertionStream:
    """Spread phase (round-robin over [n]) then a heavy second phase on 1."""
    half = m // 2
    first = (np.arange(half) % n) + 1
    second = np.ones(m - half, dtype=np.int64)
    return InsertionStream(items=np.concatenate([first, second]), n=n)


def uniform_stream(m: int, n: int = 256, seed: int = 0) -> InsertionStream:
    """Items drawn uniformly from [n] with a fixed seed."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    return InsertionStream(items=rng.integers(1, n + 1, size=m), n=n)


def dyadic_burst_stream(m: int, n: int = 256) -> InsertionStream:
    """Runs of doubling length (1, 2, 4, ...) over cycling items."""
    out = np.empty(m, dtype=np.int64)
    pos, j = 0, 0
    while pos < m:
        run = min(1 << j, m - pos)
        out[pos:pos + run] = (j % n) + 1
        pos += run
        j += 1
    return InsertionStream(items=out, n=n)


STREAM_GENERATORS = {
    "identity": identity_stream,
    "single-item": single_item_stream,
    "two-phase": two_phase_stream,
    "uniform": uniform_stream,
    "dyadic-bursts": dyadic_burst_stream,
}


def write_stream(stream: InsertionStream, path: str | Path) -> None:
    Path(path).write_text("".join(f"{int(p)}\n" for p in stream.items))


def read_stream(path: str | Path, n: int | None = None) -> InsertionStream:
    items = [int(line) for line in Path(path).read_text().split()]
    arr = np.array(items, dtype=np.int64)
    return InsertionStream(items=arr, n=n if n is not None else int(arr.max()))


# --------------------------------------------------------------------------
# net hierarchy

@dataclass(frozen=True)
class NetLevel:
    times: np.ndarray               # prefix times of the net points
    parents: np.ndarray | None      # index into the previous level, or None

    @property
    def size(self) -> int:
        """d_r: one less than the number of net points."""
        return len(self.times) - 1


@dataclass(eq=False)
class NetHierarchy:
    stream: InsertionStream
    norm_sq: int
    prefix_norm_sq: np.ndarray
    levels: list[NetLevel]

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def sizes_within_cap(self) -> bool:
        """d_r <= 2^r at every level."""
        return all(lvl.size <= 1 << r for r, lvl in enumerate(self.levels))

    def to_csv(self, out: IO[str]) -> None:
        import csv

        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["level", "s", "time", "parent_s"])
        for r, lvl in enumerate(self.levels):
            for s, t in enumerate(lvl.times):
                parent = "" if lvl.parents is None else int(lvl.parents[s])
                writer.writerow([r, s, int(t), parent])


def _net_times(items: np.ndarray, norm_sq: int, r: int) -> list[int]:
    """Greedy net point times at level r, exact integer comparisons.

    The next point after the one at time t1 is the first t with
    ||z^(t) - z^(t1)||^2 * 2^r > ||z||^2.
    """
    m = len(items)
    if (1 << r) > norm_sq:
        return list(range(m + 1))       # radius below 1: every prefix
    times = [0]
    deltas: dict[int, int] = {}
    dist_sq = 0
    for t in range(1, m + 1):
        c = int(items[t - 1])
        d = deltas.get(c, 0)
        dist_sq += 2 * d + 1
        deltas[c] = d + 1
        if (dist_sq << r) > norm_sq:
            times.append(t)
            deltas.clear()
            dist_sq = 0
    return times


def build_nets(stream: InsertionStream) -> NetHierarchy:
    """Greedy nets for levels r = 0 .. 2 lg m + 1 with parent maps."""
    m = stream.m
    counts = stream.counts().astype(np.int64)
    norm_sq = int((counts.astype(object) ** 2).sum())
    running = np.zeros(m + 1, dtype=np.int64)
    seen = np.zeros(stream.n + 1, dtype=np.int64)
    acc = 0
    for t, c in enumerate(stream.items, start=1):
        acc += 2 * seen[c] + 1
        seen[c] += 1
        running[t] = acc

    levels: list[NetLevel] = []
    for r in range(2 * _lg(m) + 2):
        times = np.array(_net_times(stream.items, norm_sq, r), dtype=np.int64)
        if r == 0:
            parents = None
        else:
            parents = np.searchsorted(levels[r - 1].times, times, side="right") - 1
        levels.append(NetLevel(times=times, parents=parents))
    return NetHierarchy(stream=stream, norm_sq=norm_sq,
                        prefix_norm_sq=running, levels=levels)


def coverage_check(nets: NetHierarchy, r: int) -> bool:
    """Every prefix within 2^(-r/2)||z|| of its preceding level-r net point,
    verified on squared distances in integer arithmetic."""
    if not 0 <= r < nets.num_levels:
        raise ValueError(f"level must lie in 0..{nets.num_levels - 1}")
    items = nets.stream.items
    m = nets.stream.m
    net_times = set(int(t) for t in nets.levels[r].times)
    deltas: dict[int, int] = {}
    dist_sq = 0
    for t in range(1, m + 1):
        c = int(items[t - 1])
        d = deltas.get(c, 0)
        dist_sq += 2 * d + 1
        deltas[c] = d + 1
        if t in net_times:
            deltas.clear()
            dist_sq = 0
        elif (dist_sq << r) > nets.norm_sq:
            return False
    return True


def net_point_norm_growth_ok(nets: NetHierarchy) -> bool:
    """Each new net point at level r grows ||z^(t)||^2 by more than
    2^(-r)||z||^2; this is what caps level sizes at 2^r."""
    for r, lvl in enumerate(nets.levels):
        norms = nets.prefix_norm_sq[lvl.times]
        growth = np.diff(norms.astype(object))
        if any((int(g) << r) <= nets.norm_sq for g in growth):
            return False
    return True


# --------------------------------------------------------------------------
# chain forms

def _level_diffs(nets: NetHierarchy, w: np.ndarray, r: int) -> np.ndarray:
    lvl = nets.levels[r]
    prev = nets.levels[r - 1]
    return w[..., lvl.times] - w[..., prev.times[lvl.parents]]


def chain_form_quadratic(nets: NetHierarchy, x: Sequence[float] | np.ndarray) -> float:
    """Sum over levels r >= 1 and net points of <a_{r,s} - parent, x>^2."""
    w = nets.stream.prefix_inner(x)
    total = 0.0
    for r in range(1, nets.num_levels):
        diffs = _level_diffs(nets, w, r)
        total += float((diffs ** 2).sum())
    return total


def chain_form_quadratic_rows(nets: NetHierarchy, rows: np.ndarray) -> np.ndarray:
    w = nets.stream.prefix_inner_rows(rows)
    total = np.zeros(len(w))
    for r in range(1, nets.num_levels):
        diffs = _level_diffs(nets, w, r)
        total += (diffs ** 2).sum(axis=1)
    return total


def chain_form_k(nets: NetHierarchy, x: Sequence[float] | np.ndarray, k: int) -> float:
    """Weighted form: sum over r of 2^(r/2) times the k-th power sums."""
    if k < 4 or k % 2:
        raise ValueError("k must be even and at least 4")
    w = nets.stream.prefix_inner(x)
    total = 0.0
    for r in range(1, nets.num_levels):
        diffs = _level_diffs(nets, w, r)
        total += float(2 ** (r / 2) * (diffs ** k).sum())
    return total


def chain_form_k_rows(nets: NetHierarchy, rows: np.ndarray, k: int) -> np.ndarray:
    if k < 4 or k % 2:
        raise ValueError("k must be even and at least 4")
    w = nets.stream.prefix_inner_rows(rows)
    total = np.zeros(len(w))
    for r in range(1, nets.num_levels):
        diffs = _level_diffs(nets, w, r)
        total += 2 ** (r / 2) * (diffs ** k).sum(axis=1)
    return total


def chain_dominance_floor(k: int, m: int) -> float:
    """Explicit constant c with chain_form_k >= c * sup_t <z^(t), x>^k.

    Against the worst split of a unit sum into L = 2 lg m + 1 hop values,
    the geometric profile with ratio 2^(-1/(2k)) equalizes the weighted
    terms; its head value gives the floor ((1 - rho) / (1 - rho^L))^k.
    """
    if k < 4 or k % 2:
        raise ValueError("k must be even and at least 4")
    levels = 2 * _lg(m) + 1
    rho = 2.0 ** (-1.0 / (2 * k))
    head = (1 - rho) / (1 - rho ** levels)
    return head ** k


def sup_inner(stream: InsertionStream, x: Sequence[float] | np.ndarray) -> float:
    """sup over 1 <= t <= m of |<x, z^(t)>|."""
    w = stream.prefix_inner(x)
    return float(np.abs(w[1:]).max())


# --------------------------------------------------------------------------
# moment checks

def mz_moment_check(v: Sequence[float], k: int, trials: int | None = None,
                    seed: int = 0):
    """E<v, X>^k for k-wise independent signs X, against B_k * ||v||_2^k.

    With trials unset, v must be integer-valued and short enough to
    enumerate (n <= 16): the moment is exact (a Fraction) and the bound is
    asserted with zero tolerance.  With trials set, the moment is Monte
    Carlo over the wide-field polynomial family and the bound is asserted
    with 3 standard errors of slack.  k in {2, 4}; returns (moment, bound).
    """
    if k not in MOMENT_CONSTANTS:
        raise ValueError(f"supported moment orders: {sorted(MOMENT_CONSTANTS)}")
    n = len(v)
    if trials is None:
        vec = [int(x) for x in v]
        if list(v) != vec:
            raise ValueError("exact moment check needs integer entries")
        if not 1 <= n <= 16:
            raise ValueError("exact enumeration supports 1 <= n <= 16")
        width = min_width(n)
        signs = all_polynomial_signs(width, n, k)
        inner = signs @ np.array(vec, dtype=np.int64)
        total = int((inner.astype(object) ** k).sum())
        moment = Fraction(total, len(signs))
        norm_sq = sum(x * x for x in vec)
        bound = Fraction(MOMENT_CONSTANTS[k]) * Fraction(norm_sq) ** (k // 2)
        if moment > bound:
            raise AssertionError(f"moment {moment} exceeds bound {bound}")
        return moment, bound

    if trials < 100:
        raise ValueError("need at least 100 trials")
    spec = FamilySpec(kind=("PolynomialKWise" if n >= k else "FullyIndependent"),
                      n=n, k=k if n >= k else None, seed=seed)
    vec_f = np.asarray(v, dtype=np.float64)
    total, total_sq, count = map_reduce_chunks(
        _mz_chunk, (spec.to_config(), tuple(float(x) for x in vec_f), k),
        trials, seed, 1)
    moment = total / count
    stderr = (max(total_sq / count - moment ** 2, 0.0) / count) ** 0.5
    bound = MOMENT_CONSTANTS[k] * float((vec_f ** 2).sum()) ** (k / 2)
    if moment > bound + 3 * stderr:
        raise AssertionError(f"moment {moment} exceeds bound {bound}")
    return moment, bound


def _mz_chunk(args, rng, count):
    family_config, vec, k = args
    sampler = make_sampler(FamilySpec.from_config(family_config))
    inner = sampler.sample_batch(rng, count).astype(np.float64) @ np.asarray(vec)
    vals = inner ** k
    return float(vals.sum()), float((vals ** 2).sum()), count


def _sup_inner_chunk(args, rng, count):
    family_config, items, n, k = args
    spec = FamilySpec.from_config(family_config)
    sampler = make_sampler(spec)
    stream = InsertionStream(items=np.asarray(items, dtype=np.int64), n=n)
    batch = sampler.sample_batch(rng, count).astype(np.float64)
    w = stream.prefix_inner_rows(batch)
    sups = np.abs(w[:, 1:]).max(axis=1) ** k
    return float(sups.sum()), float((sups ** 2).sum()), count


def mc_sup_moment(stream: InsertionStream, spec: FamilySpec, k: int,
                  trials: int, seed: int, workers: int = 1) -> SupEstimate:
    """Monte Carlo E[sup_t |<X, z^(t)>|^k] with standard error."""
    if spec.n != stream.n:
        raise ValueError("family dimension must match the stream dimension")
    # beyond n coordinates the independence requirement is vacuous
    needed = min(2 if k == 2 else k, spec.n)
    if spec.independence_order < needed:
        raise ValueError(
            f"order-{k} supremum moments need {needed}-wise independence")
    if trials < 100:
        raise ValueError("need at least 100 trials")
    total, total_sq, count = map_reduce_chunks(
        _sup_inner_chunk,
        (spec.to_config(), tuple(int(p) for p in stream.items), stream.n, k),
        trials, seed, workers)
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    return SupEstimate(moment_order=k, mean=mean, stderr=(var / count) ** 0.5,
                       trials=trials, n=stream.n)
