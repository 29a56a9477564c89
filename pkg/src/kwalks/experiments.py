"""Config-driven experiments with deterministic CSV output.

A config file holds one experiment: an [experiment] section with the kind
and run controls, an optional [family] section, and a [params] section for
kind-specific knobs.  Data rows are byte-reproducible for a fixed config;
run metadata travels in '#'-prefixed footer lines and in the JSON summary.
"""

from __future__ import annotations

import configparser
import csv
import io
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import dyadic_matrix, maximal_inequality as mi, streams, walks
from .rng import mix64, substream
from .sign_families import (ADVERSARIAL_STAGE, FULLY_INDEPENDENT,
                            POLYNOMIAL_KWISE, FamilySpec, adversarial_params,
                            empirical_moments, exact_moments, g_table,
                            h2_cross_term_ratio, make_sampler)

VERSION = "0.1.0"

EXPERIMENT_KINDS = ("family-verify", "walk-scaling", "matrix-check",
                    "maximal-mc", "stream-track", "net-audit")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        detail = f" ({self.detail})" if self.detail else ""
        return f"{self.name}: {status}{detail}"


@dataclass
class ResultTable:
    header: list[str]
    rows: list[list] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, *values) -> None:
        self.rows.append([_fmt(v) for v in values])

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(name=name, passed=bool(passed), detail=detail))

    def write_csv(self, path: str | Path) -> None:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.header)
        writer.writerows(self.rows)
        for key in sorted(self.metadata):
            out.write(f"# {key}={self.metadata[key]}\n")
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(out.getvalue())

    def summary(self) -> dict:
        return {
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail}
                       for c in self.checks],
            "all_passed": self.all_passed,
            "rows": len(self.rows),
            "metadata": self.metadata,
        }


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))      # plain shortest-roundtrip form, numpy included
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


@dataclass
class ExperimentConfig:
    kind: str
    family: dict[str, str] = field(default_factory=dict)
    params: dict[str, str] = field(default_factory=dict)
    trials: int = 10000
    seed: int = 0
    output: str | None = None
    workers: int = 1

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ValueError(f"cannot read config {path}")
        if "experiment" not in parser:
            raise ValueError("config needs an [experiment] section")
        exp = parser["experiment"]
        kind = exp.get("kind", "")
        if kind not in EXPERIMENT_KINDS:
            raise ValueError(
                f"unknown experiment kind {kind!r}; choose from {EXPERIMENT_KINDS}")
        return cls(
            kind=kind,
            family=dict(parser["family"]) if "family" in parser else {},
            params=dict(parser["params"]) if "params" in parser else {},
            trials=exp.getint("trials", fallback=10000),
            seed=exp.getint("seed", fallback=0),
            output=exp.get("output", fallback=None),
            workers=exp.getint("workers", fallback=1),
        )

    def family_spec(self, n: int | None = None) -> FamilySpec:
        mapping = dict(self.family)
        if n is not None:
            mapping["n"] = str(n)
        # configparser lowercases keys; FamilySpec kinds are case sensitive
        kind = mapping.get("kind", "")
        for canonical in (FULLY_INDEPENDENT, POLYNOMIAL_KWISE, ADVERSARIAL_STAGE):
            if kind.lower() == canonical.lower():
                mapping["kind"] = canonical
        if "stage" in mapping:
            mapping["stage"] = mapping["stage"].upper()
        return FamilySpec.from_config(mapping)

    def int_list(self, key: str, default: str = "") -> list[int]:
        raw = self.params.get(key, default)
        return [int(tok) for tok in raw.replace(",", " ").split()]

    def float_list(self, key: str, default: str = "") -> list[float]:
        raw = self.params.get(key, default)
        return [float(tok) for tok in raw.replace(",", " ").split()]

    def get_int(self, key: str, default: int) -> int:
        return int(self.params.get(key, default))

    def get_float(self, key: str, default: float) -> float:
        return float(self.params.get(key, default))


def run(config: ExperimentConfig) -> ResultTable:
    """Dispatch to the named experiment and write its CSV if requested."""
    started = time.time()
    runner = _RUNNERS[config.kind]
    table = runner(config)
    table.metadata.setdefault("experiment", config.kind)
    table.metadata.setdefault("seed", config.seed)
    table.metadata.setdefault("trials", config.trials)
    table.metadata["version"] = VERSION
    table.metadata["wall_time_s"] = f"{time.time() - started:.3f}"
    if config.output:
        table.write_csv(config.output)
    return table


# --------------------------------------------------------------------------
# experiment runners

def _run_family_verify(config: ExperimentConfig) -> ResultTable:
    table = ResultTable(header=["n", "stage", "quantity", "value", "expected",
                                "seed", "trials"])
    n_values = config.int_list("n_list", "16")
    spec0 = config.family_spec(n=n_values[0]) if config.family else None
    stage = spec0.stage if spec0 and spec0.stage else "H"
    for n in n_values:
        spec = FamilySpec(kind=ADVERSARIAL_STAGE, n=n, stage=stage,
                          seed=config.seed)
        moments = exact_moments(spec)
        params = adversarial_params(n)
        if stage == "H":
            identity = moments.is_identity()
            table.add(n, stage, "covariance_identity", identity, True,
                      config.seed, config.trials)
            table.check(f"n={n} covariance=identity", identity)
        elif stage == "H1":
            mean_ok = all(moments.mean[i] == params.f[i // params.root]
                          for i in range(n))
            table.add(n, stage, "mean_matches_bias_profile", mean_ok, True,
                      config.seed, config.trials)
            table.check(f"n={n} H1 means", mean_ok)
        elif stage == "H2":
            root = params.root
            ok = (all(v == 0 for v in moments.mean)
                  and all(moments.covariance[i][j]
                          == params.g[i // root][j // root]
                          for i in range(n) for j in range(n) if i != j))
            table.add(n, stage, "centered_with_g_correlations", ok, True,
                      config.seed, config.trials)
            table.check(f"n={n} H2 moments", ok)
        else:
            root = params.root
            same_block = params.c6 / root
            ok = all(moments.covariance[i][j]
                     == (same_block if i // root == j // root else 0)
                     for i in range(n) for j in range(n) if i != j)
            table.add(n, stage, "within_block_correlation", ok, True,
                      config.seed, config.trials)
            table.check(f"n={n} H3 correlations", ok)
        if config.trials > 0:
            rng = substream(config.seed, n)
            emp = empirical_moments(make_sampler(spec), config.trials, rng)
            tol = 5.0 / config.trials ** 0.5
            worst = max(
                abs(emp.covariance[i][j] - float(moments.covariance[i][j]))
                for i in range(n) for j in range(n))
            table.add(n, stage, "max_moment_deviation", worst, tol,
                      config.seed, config.trials)
            table.check(f"n={n} empirical moments within {tol:.2g}", worst <= tol,
                        f"max deviation {worst:.2g}")
    return table


def _run_walk_scaling(config: ExperimentConfig) -> ResultTable:
    table = ResultTable(
        header=["n", "moment_order", "mean", "stderr", "trials", "seed"])
    n_values = config.int_list("n_list", "16 64 256 1024 4096")
    order = config.get_int("moment_order", 1)
    spec = config.family_spec(n=n_values[0])
    scaling = walks.scaling_table(spec, n_values, order, config.trials,
                                  config.seed, workers=config.workers)
    for n, est in scaling.rows:
        table.add(n, order, est.mean, est.stderr, est.trials, config.seed)
    fit = walks.fit_log_growth(scaling)
    table.metadata.update(
        slope=repr(fit.slope), intercept=repr(fit.intercept),
        r_squared=repr(fit.r_squared), slope_stderr=repr(fit.slope_stderr),
        slope_stderr_propagated=repr(fit.slope_stderr_propagated))
    if "min_slope" in config.params:
        table.check("slope above threshold",
                    fit.slope >= config.get_float("min_slope", 0.0),
                    f"slope {fit.slope:.4f}")
    if "min_r2" in config.params:
        table.check("fit quality", fit.r_squared >= config.get_float("min_r2", 0.9),
                    f"R^2 {fit.r_squared:.4f}")
    if "max_slope_se_mult" in config.params:
        mult = config.get_float("max_slope_se_mult", 2.0)
        table.check("slope consistent with zero",
                    abs(fit.slope) <= mult * fit.slope_stderr,
                    f"slope {fit.slope:.4f} vs {mult} x {fit.slope_stderr:.4f}")
    if "max_norm_ratio" in config.params:
        norm = [est.mean / (n * np.log2(n) ** order)
                for n, est in scaling.rows]
        ratio = max(norm) / min(norm)
        table.check("normalized statistic bounded",
                    ratio <= config.get_float("max_norm_ratio", 3.0),
                    f"max/min ratio {ratio:.2f}")
    return table


REFERENCE_8 = np.array([
    [3, 2, 1, 1, 0, 0, 0, 0], [2, 3, 1, 1, 0, 0, 0, 0],
    [1, 1, 3, 2, 0, 0, 0, 0], [1, 1, 2, 3, 0, 0, 0, 0],
    [0, 0, 0, 0, 3, 2, 1, 1], [0, 0, 0, 0, 2, 3, 1, 1],
    [0, 0, 0, 0, 1, 1, 3, 2], [0, 0, 0, 0, 1, 1, 2, 3]])


def _run_matrix_check(config: ExperimentConfig) -> ResultTable:
    table = ResultTable(header=["n", "quantity", "value", "bound", "seed"])
    n_values = config.int_list("n_list", "8 64 256")
    gaussians = config.get_int("gaussian_vectors", 1000)
    for n in n_values:
        lg = int(np.log2(n))
        tr = dyadic_matrix.trace(n)
        diag_sum = sum(dyadic_matrix.entry(n, i, i) for i in range(1, n + 1))
        table.add(n, "trace", tr, n * lg, config.seed)
        table.check(f"n={n} trace", tr == n * lg == diag_sum)
        if n == 8:
            match = bool((dyadic_matrix.dense_matrix(8) == REFERENCE_8).all())
            table.add(n, "reference_match", match, True, config.seed)
            table.check("n=8 displayed-matrix match", match)
        minima = dyadic_matrix.prefix_quadratic_minima(n)
        floor = 1.0 / lg - 1e-9
        table.add(n, "min_constrained_min", float(minima.min()), floor,
                  config.seed)
        table.check(f"n={n} constrained minimum", bool(minima.min() >= floor),
                    f"min {minima.min():.6f} vs 1/lg n {1 / lg:.6f}")
        ratio = dyadic_matrix.corollary_ratio(n) / (n * lg * lg)
        table.add(n, "corollary_ratio_normalized", ratio, 1.0, config.seed)
        table.check(f"n={n} trace x max inverse-form within (0, 1]",
                    0.0 < ratio <= 1.0 + 1e-12, f"ratio {ratio:.4f}")
        rng = substream(config.seed, n)
        ok = True
        for _ in range(gaussians):
            x = rng.standard_normal(n)
            form = dyadic_matrix.quadratic_form(n, x)
            prefixes = np.cumsum(x)
            if form < (prefixes ** 2).max() / lg - 1e-9:
                ok = False
                break
        table.add(n, "gaussian_prefix_bound", ok, True, config.seed)
        table.check(f"n={n} prefix lower bound on {gaussians} gaussians", ok)
    return table


def _run_maximal_mc(config: ExperimentConfig) -> ResultTable:
    table = ResultTable(header=["lambda", "hits", "trials", "empirical_p",
                                "stderr", "variance_bound", "fitted_constant",
                                "seed"])
    n = config.get_int("n", 1024)
    decades = config.get_float("sigma_decades", 4.0)
    k = config.get_int("k", 4)
    rng = substream(config.seed, 0)
    profile_sigmas = 10.0 ** (-decades * rng.random(n))
    sigmas = np.sqrt(profile_sigmas)
    total_var = float((sigmas ** 2).sum())
    mults = config.float_list("lambda_mults", "2 4 8")
    lambdas = [m * total_var ** 0.5 for m in mults]
    spec = (config.family_spec(n=n) if config.family
            else FamilySpec(kind=POLYNOMIAL_KWISE, n=n, k=k, seed=config.seed))
    rows = mi.mc_tail(spec, sigmas, lambdas, config.trials, config.seed,
                      workers=config.workers)
    for mult, row in zip(mults, rows):
        table.add(row.lam, row.hits, row.trials, row.empirical_p, row.stderr,
                  row.variance_bound, row.fitted_constant, config.seed)
        ok = row.empirical_p <= row.variance_bound + 3 * row.stderr
        table.check(f"lambda={mult}sqrt(var) tail bound", ok,
                    f"p {row.empirical_p:.5f} vs bound {row.variance_bound:.5f}")
    return table


def _run_stream_track(config: ExperimentConfig) -> ResultTable:
    table = ResultTable(header=["generator", "m", "k", "mean", "stderr",
                                "normalized", "trials", "seed"])
    gens = config.params.get("generators", "identity").split()
    m_values = config.int_list("m_list", "64 256 1024 4096 16384")
    k = config.get_int("k", 2)
    max_ratio = config.get_float("max_norm_ratio", 0.0)
    for gen_name in gens:
        gen = streams.STREAM_GENERATORS[gen_name]
        normalized = []
        for m in m_values:
            stream = gen(m)
            spec = config.family_spec(n=stream.n)
            est = streams.mc_sup_moment(stream, spec, k, config.trials,
                                        mix64(config.seed, m),
                                        workers=config.workers)
            norm_sq = stream.norm_sq()
            denom = (norm_sq * np.log2(m) ** 2 if k == 2
                     else float(norm_sq) ** (k / 2))
            normalized.append(est.mean / denom)
            table.add(gen_name, m, k, est.mean, est.stderr, normalized[-1],
                      config.trials, config.seed)
        if max_ratio > 0:
            ratio = max(normalized) / min(normalized)
            table.check(f"{gen_name} normalized order-{k} ratio",
                        ratio <= max_ratio, f"max/min {ratio:.2f}")
    return table


def _run_net_audit(config: ExperimentConfig) -> ResultTable:
    table = ResultTable(header=["generator", "m", "level", "d_r", "cap",
                                "coverage_ok", "seed", "realizations"])
    gens = config.params.get(
        "generators", "identity single-item two-phase uniform dyadic-bursts").split()
    m_values = config.int_list("m_list", "64 256 1024 4096 16384")
    realizations = config.get_int("realizations", 100)
    for gen_name in gens:
        gen = streams.STREAM_GENERATORS[gen_name]
        for m in m_values:
            stream = gen(m)
            nets = streams.build_nets(stream)
            sizes_ok = coverage_ok = True
            for r, lvl in enumerate(nets.levels):
                cov = streams.coverage_check(nets, r)
                sizes_ok &= lvl.size <= 1 << r
                coverage_ok &= cov
                table.add(gen_name, m, r, lvl.size, 1 << r, cov,
                          config.seed, realizations)
            table.check(f"{gen_name} m={m} net sizes", sizes_ok)
            table.check(f"{gen_name} m={m} coverage", coverage_ok)
            rng = substream(config.seed, m)
            batch = (make_sampler(FamilySpec(kind=FULLY_INDEPENDENT, n=stream.n))
                     .sample_batch(rng, realizations))
            w = stream.prefix_inner_rows(batch)
            sups = np.abs(w[:, 1:]).max(axis=1)
            quad = streams.chain_form_quadratic_rows(nets, batch)
            dom_q = bool((quad >= sups ** 2 / (2 * np.log2(m) + 1) - 1e-9).all())
            form4 = streams.chain_form_k_rows(nets, batch, 4)
            floor = streams.chain_dominance_floor(4, m)
            dom_4 = bool((form4 >= floor * sups ** 4 - 1e-9).all())
            table.check(f"{gen_name} m={m} quadratic dominance", dom_q)
            table.check(f"{gen_name} m={m} 4th-power dominance", dom_4)
    return table


_RUNNERS = {
    "family-verify": _run_family_verify,
    "walk-scaling": _run_walk_scaling,
    "matrix-check": _run_matrix_check,
    "maximal-mc": _run_maximal_mc,
    "stream-track": _run_stream_track,
    "net-audit": _run_net_audit,
}


# --------------------------------------------------------------------------
# deterministic verification suite

def verify_suite() -> list[Check]:
    """Exact, deterministic invariants; no Monte Carlo, runs in seconds."""
    checks: list[Check] = []

    def check(name, passed, detail=""):
        checks.append(Check(name=name, passed=bool(passed), detail=detail))

    from .sign_families import f_values

    f4 = f_values(4)
    check("block mean profile (root 4)",
          [str(v) for v in f4] == ["1/2", "1", "-1", "-1/2"])
    check("block mean profile sums to zero",
          all(sum(f_values(r), Fraction(0)) == 0 for r in (2, 4, 8, 16, 32)))

    g4 = g_table(4)
    check("rotated-stage correlations (root 4)",
          (g4[0][0], g4[0][2], g4[0][1], g4[0][3]) ==
          (Fraction(5, 8), Fraction(-1, 2), Fraction(-1, 16), Fraction(-1, 16)))
    shift_ok = True
    for root in (4, 8, 16):
        g = g_table(root)
        for c1 in range(root):
            for c2 in range(root):
                if g[c1][c2] != g[(c1 + 1) % root][(c2 + 1) % root]:
                    shift_ok = False
                if g[c1][c2] != g[c2][c1]:
                    shift_ok = False
    check("correlation table symmetric and shift invariant", shift_ok)

    params16 = adversarial_params(16)
    check("mixing constants at n=16",
          (params16.g_scale, params16.c6, params16.p) ==
          (Fraction(9, 4), Fraction(20, 9), Fraction(3, 8)))
    zero_cov = all(
        adversarial_params(n).p * adversarial_params(n).c6 / adversarial_params(n).root
        == (1 - adversarial_params(n).p) * Fraction(1, adversarial_params(n).root - 1)
        for n in (16, 64, 256))
    check("zero-covariance balance exact", zero_cov)

    for n in (16, 64, 256):
        spec = FamilySpec(kind=ADVERSARIAL_STAGE, n=n, stage="H")
        check(f"exact moments identity n={n}", exact_moments(spec).is_identity())

    ratios = [h2_cross_term_ratio(n) for n in (16, 64, 256, 1024)]
    check("rotated-stage cross terms below recorded constant 13",
          all(r < 13 for r in ratios),
          "ratios " + ", ".join(f"{float(r):.3f}" for r in ratios))

    displayed = np.array([
        [3, 2, 1, 1, 0, 0, 0, 0],
        [2, 3, 1, 1, 0, 0, 0, 0],
        [1, 1, 3, 2, 0, 0, 0, 0],
        [1, 1, 2, 3, 0, 0, 0, 0],
        [0, 0, 0, 0, 3, 2, 1, 1],
        [0, 0, 0, 0, 2, 3, 1, 1],
        [0, 0, 0, 0, 1, 1, 3, 2],
        [0, 0, 0, 0, 1, 1, 2, 3]])
    check("certificate matrix n=8 matches reference entries",
          bool((dyadic_matrix.dense_matrix(8) == displayed).all()))
    check("trace identity n in 4..4096",
          all(dyadic_matrix.trace(n) == n * int(np.log2(n))
              for n in (4, 8, 16, 64, 256, 1024, 4096)))

    rng = substream(20240101, 0)
    tree_ok = True
    for _ in range(10):
        profile = mi.random_profile(64, 4.0, rng)
        tree = mi.classify_and_rank(mi.build_tree(profile))
        if mi.check_invariants(tree):
            tree_ok = False
    check("interval invariants on 10 seeded profiles", tree_ok)

    stream = streams.identity_stream(64)
    nets = streams.build_nets(stream)
    check("net sizes within 2^r (identity m=64)", nets.sizes_within_cap())
    check("net coverage exact (identity m=64)",
          all(streams.coverage_check(nets, r) for r in range(nets.num_levels)))

    from .gf2 import all_polynomial_signs

    signs = all_polynomial_signs(2, 4, 2)
    pair_ok = True
    for i in range(4):
        for j in range(i + 1, 4):
            pattern = (signs[:, i] == 1) * 2 + (signs[:, j] == 1)
            counts = np.bincount(pattern, minlength=4)
            if not (counts == len(signs) // 4).all():
                pair_ok = False
    check("pairwise family exactly uniform on GF(4)", pair_ok)

    return checks
