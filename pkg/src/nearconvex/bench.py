"""Coreset-versus-uniform benchmark: approximation error over a grid of sizes."""
from __future__ import annotations

import csv
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import DataError, WeightedPointSet, load_csv, normalize_max_norm, standardize
from .losses import LossSpec, SolverConfig, make_loss, minimize
from .sampler import make_rng, sample_coreset, uniform_coreset
from .sensitivity import sensitivities

METHODS = ("sensitivity", "uniform")
SYNTH_KINDS = ("gaussian", "outlier", "two-class")
RESULT_COLUMNS = ("size", "method", "trial", "eps", "build_time_ms")
SUMMARY_COLUMNS = ("size", "method", "mean_eps", "std_eps")


def synth_dataset(kind: str, n: int, d: int, seed: int) -> WeightedPointSet:
    """Synthetic data: ``gaussian``, ``outlier`` (1% of rows scaled by 100) or ``two-class``."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = make_rng(seed)
    X = rng.standard_normal((n, d))
    if kind == "gaussian":
        return WeightedPointSet(X)
    if kind == "outlier":
        heavy = rng.permutation(n)[: n // 100]
        X[heavy] *= 100.0
        return WeightedPointSet(X)
    if kind == "two-class":
        if n < 2:
            raise ValueError("two-class data needs n >= 2")
        y = np.where(rng.permutation(n) < n // 2, 1.0, -1.0)
        X += y[:, None] * (1.5 / math.sqrt(d))
        return WeightedPointSet(X, None, y)
    raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {SYNTH_KINDS}")


def parse_sizes(spec: str) -> list[int]:
    """'A:B:K' -> K sizes evenly spaced from A to B, rounded; a single integer is one size."""
    parts = spec.split(":")
    if len(parts) == 1:
        sizes = [int(parts[0])]
    elif len(parts) == 3:
        a, b, k = float(parts[0]), float(parts[1]), int(parts[2])
        if k < 1:
            raise ValueError("need at least one size")
        sizes = [int(round(v)) for v in np.linspace(a, b, k)]
    else:
        raise ValueError(f"sizes must look like A:B:K, got {spec!r}")
    if sizes[0] < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"sizes must be positive and strictly increasing: {sizes}")
    return sizes


def approx_error(full: WeightedPointSet, sample: WeightedPointSet, loss: LossSpec,
                 config: SolverConfig = SolverConfig(), x_full=None, tol: float = 1e-6) -> float:
    """loss(full, argmin_sample) / min loss(full) - 1, clamped at 0."""
    if sample.n < 1:
        raise DataError("empty coreset")
    if x_full is None:
        x_full = minimize(full, loss, config)
    x_s = minimize(sample, loss, config)
    opt = loss.total(full, x_full)
    val = loss.total(full, x_s)
    if opt <= 0:
        return 0.0 if val <= tol else math.inf
    eps = val / opt - 1.0
    if eps < 0:
        if eps < -tol:
            warnings.warn(f"coreset minimiser beat the full minimiser by {-eps:.3g}; "
                          "treating it as solver error", RuntimeWarning, stacklevel=2)
        eps = 0.0
    return eps


@dataclass
class BenchConfig:
    loss: str
    sizes: Sequence[int]
    trials: int = 40
    seed: int = 0
    z: float = 1.0
    lam: Optional[float] = None
    standardize: bool = False
    unit_norm: bool = False
    output: Optional[str] = None
    workers: int = 1
    timing: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        sizes = list(self.sizes)
        if not sizes or sizes[0] < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("sizes must be positive and strictly increasing")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        self.sizes = sizes


@dataclass
class BenchResult:
    rows: list
    summary: list
    sensitivity_total: float
    full_optimum: float


def preprocess(ps: WeightedPointSet, do_standardize: bool, unit_norm: bool) -> WeightedPointSet:
    if do_standardize:
        ps = standardize(ps)
    if unit_norm:
        ps = normalize_max_norm(ps)
    return ps


def summarize(rows) -> list:
    out = []
    keys = sorted({(r[0], METHODS.index(r[1])) for r in rows})
    for size, mi in keys:
        eps = np.array([r[3] for r in rows if r[0] == size and r[1] == METHODS[mi]], dtype=float)
        eps = eps[np.isfinite(eps)]
        mean = float(eps.mean()) if eps.size else math.nan
        std = float(eps.std()) if eps.size else math.nan
        out.append((size, METHODS[mi], mean, std))
    return out


def run_benchmark(cfg: BenchConfig, ps: WeightedPointSet) -> BenchResult:
    """Both arms share the loss, the solver and the preprocessed data."""
    ps = preprocess(ps, cfg.standardize, cfg.unit_norm)
    loss = make_loss(cfg.loss, ps, z=cfg.z, lam=cfg.lam)
    profile = sensitivities(ps, cfg.loss, z=cfg.z, lam=getattr(loss, "lam", None), seed=cfg.seed)
    x_full = minimize(ps, loss, cfg.solver)
    full_opt = loss.total(ps, x_full)

    def one(job):
        si, mi, trial = job
        size, method = cfg.sizes[si], METHODS[mi]
        key = (si, mi, trial)
        try:
            t0 = time.perf_counter()
            if method == "sensitivity":
                cs = sample_coreset(ps, profile, size, cfg.seed, trial=key)
            else:
                cs = uniform_coreset(ps, size, cfg.seed, trial=key)
            sample = cs.materialize(ps)
            ms = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
            eps = approx_error(ps, sample, loss, cfg.solver, x_full=x_full)
        except Exception as exc:  # recorded per row, the run goes on
            warnings.warn(f"trial {key} failed: {exc}", RuntimeWarning, stacklevel=2)
            eps, ms = math.nan, 0.0
        return (size, method, trial, eps, ms)

    jobs = [(si, mi, t) for si in range(len(cfg.sizes)) for mi in range(2) for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(one, jobs))
    else:
        rows = [one(j) for j in jobs]
    res = BenchResult(rows, summarize(rows), profile.total, full_opt)
    if cfg.output:
        write_results(cfg.output, res)
    return res


def summary_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + "_summary" + (p.suffix or ".csv"))


def write_results(path, res: BenchResult):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(RESULT_COLUMNS)
        for size, method, trial, eps, ms in res.rows:
            out.writerow([size, method, trial, repr(float(eps)), repr(float(ms))])
    with summary_path(path).open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(SUMMARY_COLUMNS)
        for size, method, mean, std in res.summary:
            out.writerow([size, method, repr(mean), repr(std)])


def read_results(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        return [(int(r["size"]), r["method"], int(r["trial"]), float(r["eps"]),
                 float(r["build_time_ms"])) for r in rd]


def load_input(path: Optional[str], synth: Optional[str], seed: int) -> WeightedPointSet:
    """Read a CSV or build a ``KIND,N,D`` synthetic set."""
    if (path is None) == (synth is None):
        raise ValueError("give exactly one of an input file or a synthetic spec")
    if synth is not None:
        try:
            kind, n, d = synth.split(",")
            return synth_dataset(kind.strip(), int(n), int(d), seed)
        except ValueError as exc:
            raise ValueError(f"bad synthetic spec {synth!r}: {exc}") from None
    return load_csv(path)
