"""Sign families over {-1,+1}^n with controlled independence.

Two kinds of constructions live here.  The polynomial families are exactly
k-wise independent: a random degree-(k-1) polynomial over a binary field,
evaluated at fixed distinct points and mapped to signs through the low bit.

The adversarial family is pairwise independent yet drifts as far from the
origin as pairwise independence allows.  It is assembled in four stages:

* stage H1 draws entries independently with a per-block bias that ramps
  harmonically up to 1 and then mirrors down to -1, so prefix sums drift;
* stage H2 rotates an H1 draw by a uniform number of blocks, which zeroes
  every marginal mean while keeping the drift reachable;
* stage H3 mixes H2 with forced two-block sign patterns, chosen so every
  cross-block correlation cancels exactly;
* stage H mixes H3 (with a fair global negation) against balanced
  per-block sign subsets, weighted so the remaining within-block
  correlation vanishes exactly as well.

All stage constants are exact rationals; samplers convert them to floats
once at construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import IO

import numpy as np

from .gf2 import GF2Field, point_lsb_vectors, signs_from_coefficients

FULLY_INDEPENDENT = "FullyIndependent"
POLYNOMIAL_KWISE = "PolynomialKWise"
ADVERSARIAL_STAGE = "AdversarialStage"
KINDS = (FULLY_INDEPENDENT, POLYNOMIAL_KWISE, ADVERSARIAL_STAGE)
STAGES = ("H1", "H2", "H3", "H")

# Largest n for which exact moment tables (n x n rationals) are built.
EXACT_MOMENT_LIMIT = 4096

_BATCH = 1 << 14


class ResourceLimitError(RuntimeError):
    """Request would materialize a table beyond the supported size."""


def _is_power_of_four(n: int) -> bool:
    if n < 1:
        return False
    while n % 4 == 0:
        n //= 4
    return n == 1


@dataclass(frozen=True)
class FamilySpec:
    """Description of one sign family; hashable and cheap to copy.

    kind selects the construction; n is the domain size; k is the
    independence order (polynomial families only); stage picks one of the
    adversarial stages; seed is the default master seed for experiments.
    """

    kind: str
    n: int
    k: int | None = None
    stage: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must fit in 64 bits")
        if self.kind == POLYNOMIAL_KWISE:
            if self.k is None or not 2 <= self.k <= self.n:
                raise ValueError("polynomial family needs 2 <= k <= n")
        if self.kind == ADVERSARIAL_STAGE:
            if self.stage not in STAGES:
                raise ValueError(f"stage must be one of {STAGES}")
            if self.n < 16 or not _is_power_of_four(self.n):
                raise ValueError("adversarial family needs n a power of 4, n >= 16")

    @property
    def independence_order(self) -> int:
        """Largest k for which any k coordinates are independent signs."""
        if self.kind == FULLY_INDEPENDENT:
            return self.n
        if self.kind == POLYNOMIAL_KWISE:
            return self.k  # type: ignore[return-value]
        return 2 if self.stage == "H" else 1

    def to_config(self) -> dict[str, str]:
        out = {"kind": self.kind, "n": str(self.n), "seed": str(self.seed)}
        if self.k is not None:
            out["k"] = str(self.k)
        if self.stage is not None:
            out["stage"] = self.stage
        return out

    @classmethod
    def from_config(cls, mapping: dict[str, str]) -> "FamilySpec":
        known = {"kind", "n", "k", "stage", "seed"}
        unknown = set(mapping) - known
        if unknown:
            raise ValueError(f"unknown family keys: {sorted(unknown)}")
        if "kind" not in mapping or "n" not in mapping:
            raise ValueError("family config needs at least kind and n")
        return cls(
            kind=mapping["kind"],
            n=int(mapping["n"]),
            k=int(mapping["k"]) if "k" in mapping else None,
            stage=mapping.get("stage"),
            seed=int(mapping.get("seed", "0")),
        )

    def with_n(self, n: int) -> "FamilySpec":
        return replace(self, n=n)


def f_values(root: int) -> list[Fraction]:
    """Per-block mean profile: 1/(l+1-c) for c <= l, then -1/(c-l).

    root is the block count (and block size); l = root/2.  The profile is
    antisymmetric around the middle, so it sums to zero.
    """
    if root < 2 or root % 2:
        raise ValueError("block count must be even and at least 2")
    ell = root // 2
    return [Fraction(1, ell + 1 - c) if c <= ell else Fraction(-1, c - ell)
            for c in range(1, root + 1)]


def g_table(root: int) -> list[list[Fraction]]:
    """Cross-block correlations of the rotated stage.

    Entry (c1, c2) is the average over rotations d of f_{c1+d} * f_{c2+d}
    (indices cyclic).  The average depends only on c2 - c1 mod root, so one
    row is computed by direct summation and shifted into place.
    """
    f = f_values(root)
    row0 = [sum((f[d] * f[(d + r) % root] for d in range(root)), Fraction(0)) / root
            for r in range(root)]
    return [[row0[(c2 - c1) % root] for c2 in range(root)] for c1 in range(root)]


@dataclass(eq=False)
class AdversarialParams:
    """Exact constants of the adversarial construction for one n.

    root is the block count and block size (sqrt of n); ell = root / 2.
    f holds the per-block means of the biased stage, g the cross-block
    correlations of the rotated stage.  g_scale normalizes the pair-mode
    mixture (1 plus the total absolute off-diagonal correlation), c6 scales
    the surviving within-block correlation (c6 / root per pair), and p is
    the mixing probability that balances that correlation against the
    balanced-subset branch so it cancels exactly.
    """

    n: int
    root: int
    ell: int
    f: tuple[Fraction, ...]
    g: tuple[tuple[Fraction, ...], ...]
    g_scale: Fraction
    c6: Fraction
    p: Fraction

    @cached_property
    def h1_bias(self) -> np.ndarray:
        """P[entry = +1] for each position, as float64."""
        per_block = [0.5 + float(fc) / 2 for fc in self.f]
        return np.repeat(per_block, self.root)

    @cached_property
    def pair_modes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(c1, c2, forced sign of block c2) per pair mode, 0-based blocks."""
        c1s, c2s, signs = [], [], []
        for c1 in range(self.root):
            for c2 in range(c1 + 1, self.root):
                c1s.append(c1)
                c2s.append(c2)
                signs.append(-1 if self.g[c1][c2] >= 0 else 1)
        return (np.array(c1s, dtype=np.int64), np.array(c2s, dtype=np.int64),
                np.array(signs, dtype=np.int8))

    @cached_property
    def mode_cdf(self) -> np.ndarray:
        """Inverse-CDF boundaries: slot 0 draws the rotated stage, then the
        pair modes in lexicographic (c1, c2) order."""
        weights = [Fraction(1) / self.g_scale]
        for c1 in range(self.root):
            for c2 in range(c1 + 1, self.root):
                weights.append(abs(self.g[c1][c2]) / self.g_scale)
        return np.cumsum([float(w) for w in weights])

    @cached_property
    def p_float(self) -> float:
        return float(self.p)


@lru_cache(maxsize=16)
def adversarial_params(n: int) -> AdversarialParams:
    """All closed-form constants of the adversarial family, exactly."""
    if n < 16 or not _is_power_of_four(n):
        raise ValueError("adversarial family needs n a power of 4, n >= 16")
    root = int(round(n ** 0.5))
    assert root * root == n
    f = f_values(root)
    g = g_table(root)
    g_scale = Fraction(1) + sum(
        (abs(g[c1][c2]) for c1 in range(root) for c2 in range(c1 + 1, root)),
        Fraction(0))
    row_abs = sum((abs(v) for v in g[0]), Fraction(0))
    c6 = root * row_abs / g_scale
    p = Fraction(1) / (1 + c6 * (root - 1) / root)
    params = AdversarialParams(
        n=n, root=root, ell=root // 2, f=tuple(f),
        g=tuple(tuple(r) for r in g), g_scale=g_scale, c6=c6, p=p)
    # Mixture bookkeeping must be exact for the family to be pairwise
    # independent; fail loudly if it ever is not.
    assert Fraction(1) / g_scale + (g_scale - 1) / g_scale == 1
    assert p * c6 / root == (1 - p) * Fraction(1, root - 1)
    return params


def h2_cross_term_ratio(n: int) -> Fraction:
    """Total absolute off-diagonal correlation of the rotated stage, per n."""
    params = adversarial_params(n)
    root, g = params.root, params.g
    total = Fraction(0)
    for c1 in range(root):
        for c2 in range(root):
            pairs = root * root if c1 != c2 else root * (root - 1)
            total += abs(g[c1][c2]) * pairs
    return total / n


# --------------------------------------------------------------------------
# samplers

class AdversarialSampler:
    """Draws from one adversarial stage.  Immutable after construction."""

    def __init__(self, params: AdversarialParams, stage: str):
        if stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}")
        self.params = params
        self.stage = stage
        self.n = params.n

    @property
    def independence_order(self) -> int:
        return 2 if self.stage == "H" else 1

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(rng, 1)[0]

    def sample_batch(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if size < 0:
            raise ValueError("size must be nonnegative")
        return getattr(self, "_batch_" + self.stage.lower())(rng, size)

    def _batch_h1(self, rng, size):
        u = rng.random((size, self.n))
        return np.where(u < self.params.h1_bias, 1, -1).astype(np.int8)

    def _batch_h2(self, rng, size):
        base = self._batch_h1(rng, size)
        root = self.params.root
        d = rng.integers(0, root, size=size)
        idx = (np.arange(self.n)[None, :] + (d * root)[:, None]) % self.n
        return np.take_along_axis(base, idx, axis=1)

    def _batch_h3(self, rng, size):
        params = self.params
        mode = np.searchsorted(params.mode_cdf, rng.random(size), side="right")
        out = self._batch_h2(rng, size)
        pair_rows = np.nonzero(mode > 0)[0]
        if len(pair_rows):
            c1s, c2s, forced = params.pair_modes
            sel = mode[pair_rows] - 1
            uniform = (rng.integers(0, 2, size=(len(pair_rows), self.n)) * 2 - 1)
            block = np.arange(self.n) // params.root
            in_c1 = block[None, :] == c1s[sel][:, None]
            in_c2 = block[None, :] == c2s[sel][:, None]
            rows = np.where(in_c1, 1, uniform)
            rows = np.where(in_c2, forced[sel][:, None], rows)
            out[pair_rows] = rows.astype(np.int8)
        return out

    def _batch_h(self, rng, size):
        params = self.params
        root, ell = params.root, params.ell
        pick3 = rng.random(size) < params.p_float
        out = np.empty((size, self.n), dtype=np.int8)
        n3 = int(pick3.sum())
        if n3:
            drawn = self._batch_h3(rng, n3)
            flip = (rng.integers(0, 2, size=n3) * 2 - 1).astype(np.int8)
            out[pick3] = drawn * flip[:, None]
        nb = size - n3
        if nb:
            # Uniform size-ell subset of each block set to +1: rank the block
            # entries by iid uniforms and keep the smallest ell.
            ranks = rng.random((nb, root, root)).argsort(axis=2)
            out[~pick3] = np.where(ranks < ell, 1, -1).reshape(nb, self.n)
        return out


def sample_h1(params: AdversarialParams, rng: np.random.Generator) -> np.ndarray:
    """One draw from the biased independent stage."""
    return AdversarialSampler(params, "H1").sample(rng)


def sample_h2(params: AdversarialParams, rng: np.random.Generator) -> np.ndarray:
    """One draw: biased stage rotated by a uniform number of blocks."""
    return AdversarialSampler(params, "H2").sample(rng)


def sample_h3(params: AdversarialParams, rng: np.random.Generator) -> np.ndarray:
    """One draw from the correlation-cancelling mixture."""
    return AdversarialSampler(params, "H3").sample(rng)


def sample_h(params: AdversarialParams, rng: np.random.Generator) -> np.ndarray:
    """One draw from the final pairwise independent family."""
    return AdversarialSampler(params, "H").sample(rng)


class KWiseSampler:
    """Exactly k-wise independent signs from random field polynomials."""

    def __init__(self, n: int, k: int, width: int = 64, seed: int = 0):
        if not 2 <= k <= n:
            raise ValueError("need 2 <= k <= n")
        self.n = n
        self.k = k
        self.seed = seed
        self.field = GF2Field(width)
        if self.field.order < n:
            raise ValueError(f"field of order {self.field.order} too small for n={n}")
        self.vectors = point_lsb_vectors(self.field, n, k)

    @property
    def independence_order(self) -> int:
        return self.k

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(rng, 1)[0]

    def sample_batch(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if size < 0:
            raise ValueError("size must be nonnegative")
        out = np.empty((size, self.n), dtype=np.int8)
        step = max(1, _BATCH * 64 // max(self.n * self.k, 1))
        for lo in range(0, size, step):
            hi = min(lo + step, size)
            coeffs = self._draw_coefficients(rng, hi - lo)
            out[lo:hi] = signs_from_coefficients(self.vectors, coeffs)
        return out

    def _draw_coefficients(self, rng, count):
        if self.field.width == 64:
            return rng.integers(0, 1 << 64, size=(count, self.k), dtype=np.uint64)
        return rng.integers(0, self.field.order, size=(count, self.k)).astype(np.uint64)


def make_kwise(n: int, k: int, seed: int = 0, width: int = 64) -> KWiseSampler:
    """Sampler for the exactly k-wise independent polynomial family."""
    return KWiseSampler(n, k, width=width, seed=seed)


def sample_kwise(sampler: KWiseSampler, rng: np.random.Generator) -> np.ndarray:
    return sampler.sample(rng)


class IndependentSampler:
    """Fully independent uniform signs."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = n

    @property
    def independence_order(self) -> int:
        return self.n

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(rng, 1)[0]

    def sample_batch(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return (rng.integers(0, 2, size=(size, self.n)) * 2 - 1).astype(np.int8)


def make_sampler(spec: FamilySpec):
    """Sampler for any family spec.  Samplers are stateless between calls."""
    if spec.kind == FULLY_INDEPENDENT:
        return IndependentSampler(spec.n)
    if spec.kind == POLYNOMIAL_KWISE:
        return _cached_kwise(spec.n, spec.k)
    return _cached_adversarial(spec.n, spec.stage)


@lru_cache(maxsize=8)
def _cached_kwise(n: int, k: int) -> KWiseSampler:
    return KWiseSampler(n, k)


@lru_cache(maxsize=16)
def _cached_adversarial(n: int, stage: str) -> AdversarialSampler:
    return AdversarialSampler(adversarial_params(n), stage)


# --------------------------------------------------------------------------
# moments

@dataclass
class MomentSummary:
    """First two moments: mean vector and the table of E[h_i h_j]."""

    mean: list
    covariance: list
    exact: bool

    @property
    def n(self) -> int:
        return len(self.mean)

    def is_identity(self) -> bool:
        """True when the mean is exactly 0 and E[h_i h_j] is exactly I."""
        if any(v != 0 for v in self.mean):
            return False
        for i, row in enumerate(self.covariance):
            for j, v in enumerate(row):
                if v != (1 if i == j else 0):
                    return False
        return True

    def to_csv(self, out: IO[str]) -> None:
        """Rows (i, j, E[h_i h_j]) with 1-based indices, then the means."""
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["row", "col", "value"])
        for i, row in enumerate(self.covariance, start=1):
            for j, v in enumerate(row, start=1):
                writer.writerow([i, j, str(v)])
        for i, v in enumerate(self.mean, start=1):
            writer.writerow([i, 0, str(v)])


def exact_moments(spec: FamilySpec) -> MomentSummary:
    """Closed-form mean and second-moment table of an adversarial stage.

    Everything is exact rational arithmetic driven by the mixture structure:
    the biased stage factors over entries, the rotated stage averages block
    shifts, the cancelling stage mixes the rotated stage with pair modes,
    and the final stage mixes that against balanced block subsets.
    """
    if spec.kind != ADVERSARIAL_STAGE:
        raise ValueError("exact moments are defined for adversarial stages")
    if spec.n > EXACT_MOMENT_LIMIT:
        raise ResourceLimitError(
            f"n={spec.n} exceeds the exact-moment limit {EXACT_MOMENT_LIMIT}")
    params = adversarial_params(spec.n)
    n, root = params.n, params.root
    block = [i // root for i in range(n)]

    mean_block, pair_value = _stage_block_moments(params, spec.stage)
    mean = [mean_block[block[i]] for i in range(n)]
    one = Fraction(1)
    covariance = [
        [one if i == j else pair_value[block[i]][block[j]] for j in range(n)]
        for i in range(n)
    ]
    return MomentSummary(mean=mean, covariance=covariance, exact=True)


def _stage_block_moments(params: AdversarialParams, stage: str):
    """Per-block mean and per-block-pair E[h_i h_j] (i != j) for a stage."""
    root = params.root
    f, g = params.f, params.g

    if stage == "H1":
        mean = list(f)
        pair = [[f[c1] * f[c2] for c2 in range(root)] for c1 in range(root)]
        return mean, pair

    if stage == "H2":
        zero = Fraction(0)
        mean = [zero] * root
        pair = [[g[c1][c2] for c2 in range(root)] for c1 in range(root)]
        return mean, pair

    if stage == "H3":
        gs = params.g_scale
        mean = []
        for c in range(root):
            forced = Fraction(0)
            for c2 in range(c + 1, root):
                forced += abs(g[c][c2])            # block c is the +1 block
            for c1 in range(c):
                forced += -_sign(g[c1][c]) * abs(g[c1][c])
            mean.append(forced / gs)
        pair = [[Fraction(0)] * root for _ in range(root)]
        for c1 in range(root):
            for c2 in range(root):
                if c1 == c2:
                    row_abs = sum((abs(v) for v in g[c1]), Fraction(0))
                    pair[c1][c2] = row_abs / gs
                else:
                    a, b = min(c1, c2), max(c1, c2)
                    forced_product = -_sign(g[a][b]) * abs(g[a][b])
                    pair[c1][c2] = (g[c1][c2] + forced_product) / gs
        return mean, pair

    if stage == "H":
        p = params.p
        _, pair3 = _stage_block_moments(params, "H3")
        zero = Fraction(0)
        mean = [zero] * root                      # fair negation centers H3
        within = Fraction(-1, root - 1)           # balanced block subsets
        pair = [[p * pair3[c1][c2] + (1 - p) * (within if c1 == c2 else zero)
                 for c2 in range(root)] for c1 in range(root)]
        return mean, pair

    raise ValueError(f"stage must be one of {STAGES}")


def _sign(x: Fraction) -> int:
    return 1 if x >= 0 else -1


def empirical_moments(sampler, trials: int, rng: np.random.Generator) -> MomentSummary:
    """Sample means of h and of h h^T; floating point, for cross-checks."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    n = sampler.n
    total = np.zeros(n)
    gram = np.zeros((n, n))
    done = 0
    while done < trials:
        count = min(_BATCH, trials - done)
        batch = sampler.sample_batch(rng, count).astype(np.float64)
        total += batch.sum(axis=0)
        gram += batch.T @ batch
        done += count
    return MomentSummary(mean=list(total / trials),
                         covariance=[list(r) for r in gram / trials],
                         exact=False)
