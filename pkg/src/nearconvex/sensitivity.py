"""Per-point sensitivity upper bounds for near-convex losses."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import DataError, WeightedPointSet
from .fsvd import FSvd, GSpec, fsvd, fsvd_quadratic

LOSSES = ("logistic", "svm", "lz", "outlier", "lse")
PROB_FLOOR = 1e-12
NORM_SLACK = 1e-9


@dataclass(frozen=True)
class NearConvexSpec:
    """Constants describing f as sandwiched between c1 (g^z + h^z) and c2 (g^z + h^z)."""

    g: GSpec
    c1: float = 1.0
    c2: float = 1.0
    c5: float = 0.0
    c: float = 1.0
    directions: Optional[np.ndarray] = None
    r: Optional[float] = None
    R: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.c1 <= self.c2:
            raise ValueError("need 0 < c1 <= c2")
        if self.c5 < 0 or self.c <= 0:
            raise ValueError("need c5 >= 0 and c > 0")
        if self.directions is not None:
            V = np.atleast_2d(np.asarray(self.directions, dtype=float))
            if not np.allclose(np.linalg.norm(V, axis=1), 1.0, atol=1e-12):
                raise ValueError("directions must be unit vectors")
            object.__setattr__(self, "directions", V)

    @property
    def z(self) -> float:
        return self.g.z


@dataclass(frozen=True)
class SensitivityProfile:
    """Clamped sensitivities ``s`` (what the sampler uses) plus the raw values."""

    raw: np.ndarray
    loss: str
    bound: float
    fsvd: tuple = ()
    params: dict = field(default_factory=dict)
    s: np.ndarray = field(init=False)

    def __post_init__(self):
        raw = np.array(self.raw, dtype=float)
        if raw.ndim != 1 or raw.size == 0 or not np.all(np.isfinite(raw)) or np.any(raw < 0):
            raise ValueError("sensitivities must be a non-empty vector of finite nonnegative values")
        raw.setflags(write=False)
        s = np.clip(raw, PROB_FLOOR, 1.0)
        s.setflags(write=False)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "fsvd", tuple(self.fsvd))

    @property
    def n(self) -> int:
        return self.s.size

    @property
    def total(self) -> float:
        return float(self.s.sum())

    t = total

    @property
    def raw_total(self) -> float:
        return float(self.raw.sum())

    def to_csv(self, path, source_rows=None):
        rows = np.arange(self.n) if source_rows is None else np.asarray(source_rows)
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            fh.write(f"# loss={self.loss} t={self.total!r} bound={self.bound!r}\n")
            fh.write("source_row,sensitivity\n")
            for r, v in zip(rows, self.s):
                fh.write(f"{int(r)},{float(v)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "SensitivityProfile":
        with Path(path).open(encoding="utf-8") as fh:
            meta = dict(kv.split("=", 1) for kv in fh.readline().lstrip("# ").split())
            fh.readline()
            vals = [float(line.split(",")[1]) for line in fh if line.strip()]
        return cls(np.array(vals), meta["loss"], float(meta["bound"]))


def _check_dims(fs: FSvd, ps: WeightedPointSet):
    if fs.d != ps.d:
        raise DataError(f"f-SVD is {fs.d}-dimensional but points are {ps.d}-dimensional")


def generic_sensitivities(spec: NearConvexSpec, fs: FSvd, ps: WeightedPointSet,
                          loss: str = "generic") -> SensitivityProfile:
    """s(p) = c2 c5 w/(c1 W) + (c c2 / (c1 c3^(2z))) w sum_j g(p, (D V^T)^-1 v_j)^z."""
    _check_dims(fs, ps)
    d, n, z, g = ps.d, ps.n, spec.z, spec.g
    Vdir = np.eye(d) if spec.directions is None else spec.directions
    if Vdir.shape != (d, d):
        raise DataError(f"need {d} directions of dimension {d}, got {Vdir.shape}")
    X = (Vdir / fs.D) @ fs.V.T
    G = g.g(ps.points, X)
    w, W = ps.weights, ps.total_weight
    raw = (spec.c2 * spec.c5 * w / (spec.c1 * W)
           + spec.c * spec.c2 / (spec.c1 * g.c3 ** (2 * z)) * w * (G ** z).sum(axis=1))
    bound = (spec.c2 * spec.c5 / spec.c1
             + spec.c * spec.c2 * g.c4 ** z / (spec.c1 * g.c3 ** (2 * z))
             * max(n ** (1 - z), 1.0) * fs.alpha ** z * d)
    return SensitivityProfile(raw, loss, bound, (fs,), {"z": z})


def lz_total_bound(n: int, d: int, z: float, alpha: Optional[float] = None) -> float:
    """Closed-form total for |p^T x|^z; alpha defaults to sqrt(d) (alpha=1 for z=2)."""
    if z == 2:
        return float(d)
    a = math.sqrt(d) if alpha is None else alpha
    if z < 1:
        return n ** (1 - z) * d * a ** z
    if z < 2:
        return d * a ** z
    return math.sqrt(d ** z) * d * a ** z


def lz_sensitivities(ps: WeightedPointSet, z: float, seed: int = 0,
                     fs: Optional[FSvd] = None, loss: str = "lz") -> SensitivityProfile:
    """w(p) ||U(p)||_z^z, times sqrt(d^z) when z > 2."""
    if not z > 0:
        raise ValueError(f"z must be positive, got {z}")
    if fs is None:
        fs = fsvd(GSpec(z), ps, seed=seed)
    _check_dims(fs, ps)
    U = fs.transform(ps.points)
    raw = ps.weights * (np.abs(U) ** z).sum(axis=1)
    if z > 2:
        raw = raw * math.sqrt(ps.d ** z)
    bound = lz_total_bound(ps.n, ps.d, z, None if fs.backend == "quadratic-exact" else fs.alpha)
    return SensitivityProfile(raw, loss, bound, (fs,), {"z": z})


def _require_unit_ball(ps: WeightedPointSet):
    top = float(np.max(np.linalg.norm(ps.points, axis=1)))
    if top > 1 + NORM_SLACK:
        raise DataError(f"all points need norm <= 1 (max is {top:.6g}); normalize first")


def _require_labels(ps: WeightedPointSet):
    if ps.labels is None:
        raise DataError("this loss needs labels")
    for c in (1, -1):
        if not ps.class_mask(c).any():
            raise DataError(f"class {c:+d} is empty")


def _check_lambda(lam: float):
    if not lam >= 1:
        raise ValueError(f"lambda must be at least 1, got {lam}")


def logistic_sensitivities(ps: WeightedPointSet, lam: float) -> SensitivityProfile:
    """(32/lam) (2 w/W_c + w ||U_c(p)||^2) W_c with one f-SVD per label class."""
    _check_lambda(lam)
    _require_labels(ps)
    _require_unit_ball(ps)
    raw = np.empty(ps.n)
    parts = []
    for c in (1, -1):
        mask = ps.class_mask(c)
        sub = ps.take(np.flatnonzero(mask))
        fs = fsvd_quadratic(sub)
        Wc = sub.total_weight
        u2 = (fs.transform(sub.points) ** 2).sum(axis=1)
        raw[mask] = 32.0 / lam * (2 * sub.weights / Wc + sub.weights * u2) * Wc
        parts.append(fs)
    bound = 32.0 / lam * (2 + ps.d) * ps.total_weight
    return SensitivityProfile(raw, "logistic", bound, parts, {"lambda": lam})


def svm_total_bound(w_pos: float, w_neg: float, d: int, lam: float) -> float:
    """The published closed form; under heavy class imbalance the formula below can exceed it."""
    W = w_pos + w_neg
    return 25 + w_pos / w_neg + w_neg / w_pos + 125 * W / (4 * lam) * (d + 2)


def svm_summed_bound(w_pos: float, w_neg: float, d: int, lam: float) -> float:
    """Term-by-term sum of the per-point formula, using sum_p w ||U(p)||^2 = d.

    The max term contributes at most 18 + 2 (W+/W- + W-/W+), which is where
    it parts from ``svm_total_bound``.
    """
    W = w_pos + w_neg
    return 24.5 + 2 * (w_pos / w_neg + w_neg / w_pos) + 125 * W / (4 * lam) * (d + 1)


def svm_sensitivities(ps: WeightedPointSet, lam: float) -> SensitivityProfile:
    """max{9w/W_y, 2w/W_-y} + 13w/(4W_y) + (125W/(4lam)) (w ||U(p)||^2 + w/W)."""
    _check_lambda(lam)
    _require_labels(ps)
    _require_unit_ball(ps)
    fs = fsvd_quadratic(ps)
    w, W = ps.weights, ps.total_weight
    Wp = float(w[ps.class_mask(1)].sum())
    Wn = W - Wp
    same = np.where(ps.labels > 0, Wp, Wn)
    other = W - same
    u2 = (fs.transform(ps.points) ** 2).sum(axis=1)
    raw = (np.maximum(9 * w / same, 2 * w / other) + 13 * w / (4 * same)
           + 125 * W / (4 * lam) * (w * u2 + w / W))
    stated = svm_total_bound(Wp, Wn, ps.d, lam)
    bound = max(stated, svm_summed_bound(Wp, Wn, ps.d, lam))
    return SensitivityProfile(raw, "svm", bound, (fs,), {"lambda": lam, "stated_bound": stated})


def outlier_sensitivities(ps: WeightedPointSet, z: float, seed: int = 0,
                          fs: Optional[FSvd] = None) -> SensitivityProfile:
    """w min{||U'(p)||_2, d^|1/2-1/z| ||(D'V^T)^-1||_2} with D' = D / (2 gamma)."""
    if not z > 0:
        raise ValueError(f"z must be positive, got {z}")
    if fs is None:
        fs = fsvd(GSpec(1.0), ps, seed=seed)
    _check_dims(fs, ps)
    d = ps.d
    bz = d ** abs(0.5 - 1.0 / z)
    gamma = max(1.0, 2 * math.pi * bz / float(fs.D.max()))
    Dp = fs.D / (2 * gamma)
    u = np.linalg.norm((ps.points @ fs.V) / Dp, axis=1)
    cap = bz / float(Dp.min())
    raw = ps.weights * np.minimum(u, cap)
    bound = 4 * gamma * d ** (2 + abs(0.5 - 1.0 / z))
    return SensitivityProfile(raw, "outlier", bound, (fs,), {"z": z, "gamma": gamma})


def lse_lift(ps: WeightedPointSet) -> WeightedPointSet:
    """p -> (||p||^2, 2p, 1) so that p'^T x' = ||p - x||^2 for x' = lse_lift_query(x)."""
    P = ps.points
    lifted = np.hstack([(P ** 2).sum(axis=1, keepdims=True), 2 * P, np.ones((ps.n, 1))])
    return WeightedPointSet(lifted, ps.weights, ps.labels)


def lse_lift_query(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    return np.concatenate([[1.0], -x, [float(x @ x)]])


def lse_sensitivities(ps: WeightedPointSet, seed: int = 0) -> SensitivityProfile:
    return lz_sensitivities(lse_lift(ps), 1.0, seed=seed, loss="lse")


def sensitivities(ps: WeightedPointSet, loss: str, z: float = 1.0,
                  lam: Optional[float] = None, seed: int = 0) -> SensitivityProfile:
    """Dispatch on the loss tag. ``lam`` defaults to sqrt(n)."""
    if lam is None:
        lam = math.sqrt(ps.n)
    if loss == "logistic":
        return logistic_sensitivities(ps, lam)
    if loss == "svm":
        return svm_sensitivities(ps, lam)
    if loss == "lz":
        return lz_sensitivities(ps, z, seed=seed)
    if loss == "outlier":
        return outlier_sensitivities(ps, z, seed=seed)
    if loss == "lse":
        return lse_sensitivities(ps, seed=seed)
    raise ValueError(f"unknown loss {loss!r}; expected one of {LOSSES}")
