"""Loss registry (value and subgradient per point) and the evaluation solver.

Queries for the labelled losses are (x, b) with b a scalar bias, so they have
d + 1 coordinates. The homogeneous losses (``lz`` and ``outlier``) are
minimised in affine-regression form: the last feature column is the response
and the last query coordinate is pinned to -1, so |p^T q| = |a^T theta - y|.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, sparse
from scipy.special import expit

from .dataset import DataError, WeightedPointSet


class SolverError(RuntimeError):
    pass


class LossSpec:
    tag = "base"
    homogeneous = False
    smooth = False
    has_bias = False

    def query_dim(self, d: int) -> int:
        return d + 1 if self.has_bias else d

    def _check(self, ps: WeightedPointSet, q) -> np.ndarray:
        q = np.asarray(q, dtype=float).ravel()
        if q.size != self.query_dim(ps.d):
            raise DataError(f"{self.tag} query needs {self.query_dim(ps.d)} coordinates, got {q.size}")
        return q

    def values(self, ps: WeightedPointSet, q) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, ps: WeightedPointSet, q) -> np.ndarray:
        """A subgradient of ``total`` at q."""
        raise NotImplementedError

    def total(self, ps: WeightedPointSet, q) -> float:
        return float(ps.weights @ self.values(ps, q))

    def project(self, q: np.ndarray) -> np.ndarray:
        if self.homogeneous:
            q = q.copy()
            q[-1] = -1.0
        return q

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in vars(self).items())
        return f"{type(self).__name__}({params})"


def _margins(ps: WeightedPointSet, q: np.ndarray) -> np.ndarray:
    if ps.labels is None:
        raise DataError("this loss needs labels")
    return ps.points @ q[:-1] + ps.labels * q[-1]


class LogisticLoss(LossSpec):
    """(1/lam) ln(1 + exp(p^T x + y b)) + ||x||^2 / (2W)."""

    tag = "logistic"
    smooth = True
    has_bias = True

    def __init__(self, lam: float, total_weight: float):
        self.lam = float(lam)
        self.total_weight = float(total_weight)

    def values(self, ps, q):
        q = self._check(ps, q)
        x = q[:-1]
        return np.logaddexp(0.0, _margins(ps, q)) / self.lam + (x @ x) / (2 * self.total_weight)

    def gradient(self, ps, q):
        q = self._check(ps, q)
        c = ps.weights * expit(_margins(ps, q)) / self.lam
        g = np.empty_like(q)
        g[:-1] = c @ ps.points + ps.total_weight * q[:-1] / self.total_weight
        g[-1] = c @ ps.labels
        return g


class HingeLoss(LossSpec):
    """lam max{0, 1 - (p^T x + y b)} + ||x||^2 / (2W)."""

    tag = "svm"
    has_bias = True

    def __init__(self, lam: float, total_weight: float):
        self.lam = float(lam)
        self.total_weight = float(total_weight)

    def values(self, ps, q):
        q = self._check(ps, q)
        x = q[:-1]
        return self.lam * np.maximum(0.0, 1.0 - _margins(ps, q)) + (x @ x) / (2 * self.total_weight)

    def gradient(self, ps, q):
        q = self._check(ps, q)
        active = (_margins(ps, q) < 1.0) * ps.weights * self.lam
        g = np.empty_like(q)
        g[:-1] = -(active @ ps.points) + ps.total_weight * q[:-1] / self.total_weight
        g[-1] = -(active @ ps.labels)
        return g


class LzLoss(LossSpec):
    """|p^T x|^z."""

    tag = "lz"
    homogeneous = True

    def __init__(self, z: float):
        if not z > 0:
            raise ValueError(f"z must be positive, got {z}")
        self.z = float(z)

    @property
    def smooth(self):
        return self.z > 1

    def values(self, ps, q):
        q = self._check(ps, q)
        return np.abs(ps.points @ q) ** self.z

    def gradient(self, ps, q):
        q = self._check(ps, q)
        r = ps.points @ q
        a = np.abs(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(a > 0, self.z * a ** (self.z - 1) * np.sign(r), 0.0)
        return (ps.weights * c) @ ps.points


class OutlierLoss(LossSpec):
    """min{|p^T x|, ||x||_z}."""

    tag = "outlier"
    homogeneous = True

    def __init__(self, z: float):
        if not z > 0:
            raise ValueError(f"z must be positive, got {z}")
        self.z = float(z)

    def _cap(self, q):
        return float(np.sum(np.abs(q) ** self.z) ** (1.0 / self.z))

    def values(self, ps, q):
        q = self._check(ps, q)
        return np.minimum(np.abs(ps.points @ q), self._cap(q))

    def gradient(self, ps, q):
        q = self._check(ps, q)
        r = ps.points @ q
        cap = self._cap(q)
        below = np.abs(r) < cap
        g = (ps.weights * below * np.sign(r)) @ ps.points
        if cap > 0:
            capped = float(ps.weights[~below].sum())
            a = np.abs(q)
            with np.errstate(divide="ignore", invalid="ignore"):
                dcap = np.where(a > 0, np.sign(q) * (a / cap) ** (self.z - 1), 0.0)
            g = g + capped * dcap
        return g


class LseLoss(LossSpec):
    """||p - x||^2."""

    tag = "lse"
    smooth = True

    def values(self, ps, q):
        q = self._check(ps, q)
        return ((ps.points - q) ** 2).sum(axis=1)

    def gradient(self, ps, q):
        q = self._check(ps, q)
        return 2 * (ps.total_weight * q - ps.weights @ ps.points)


def make_loss(tag: str, ps: Optional[WeightedPointSet] = None, z: float = 1.0,
              lam: Optional[float] = None) -> LossSpec:
    """Build a loss. The labelled losses take W and the sqrt(n) default lambda from ``ps``."""
    if tag in ("logistic", "svm"):
        if ps is None:
            raise ValueError(f"{tag} needs the full point set for its regulariser")
        lam = math.sqrt(ps.n) if lam is None else lam
        cls = LogisticLoss if tag == "logistic" else HingeLoss
        return cls(lam, ps.total_weight)
    if tag == "lz":
        return LzLoss(z)
    if tag == "outlier":
        return OutlierLoss(z)
    if tag == "lse":
        return LseLoss()
    raise ValueError(f"unknown loss {tag!r}")


def loss_total(ps: WeightedPointSet, loss: LossSpec, q) -> float:
    return loss.total(ps, q)


@dataclass(frozen=True)
class SolverConfig:
    iterations: int = 2000
    step: float = 1.0
    seed: int = 0  # the solver draws nothing at random; kept for provenance
    polish: bool = True


def _subgradient(ps, loss, q0, cfg):
    q = loss.project(q0)
    best_q, best_f = q, loss.total(ps, q)
    avg = q.copy()
    for k in range(1, cfg.iterations + 1):
        g = loss.gradient(ps, q)
        if not np.all(np.isfinite(g)):
            raise SolverError(f"non-finite subgradient at iteration {k}")
        if loss.homogeneous:
            g[-1] = 0.0
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        q = loss.project(q - cfg.step / math.sqrt(k) * g / gn)
        avg += (q - avg) / k
        f = loss.total(ps, q)
        if f < best_f:
            best_q, best_f = q, f
    avg = loss.project(avg)
    fa = loss.total(ps, avg)
    if fa < best_f:
        best_q, best_f = avg, fa
    return best_q, best_f


def _l1_lp(ps: WeightedPointSet) -> np.ndarray:
    """Exact weighted least-absolute-deviations fit with the response in the last column."""
    A, y, w = ps.points[:, :-1], ps.points[:, -1], ps.weights
    n, k = A.shape
    eye = sparse.identity(n, format="csr")
    As = sparse.csr_matrix(A)
    A_ub = sparse.vstack([sparse.hstack([As, -eye]), sparse.hstack([-As, -eye])], format="csr")
    b_ub = np.concatenate([y, -y])
    c = np.concatenate([np.zeros(k), w])
    bounds = [(None, None)] * k + [(0, None)] * n
    res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise SolverError(f"LP solver failed: {res.message}")
    return np.concatenate([res.x[:k], [-1.0]])


def _polish(ps, loss, q):
    free = slice(0, q.size - 1) if loss.homogeneous else slice(0, q.size)

    def full(v):
        out = q.copy()
        out[free] = v
        return out

    def fun(v):
        return loss.total(ps, full(v))

    if loss.smooth:
        res = optimize.minimize(lambda v: (fun(v), loss.gradient(ps, full(v))[free]),
                                q[free], jac=True, method="L-BFGS-B",
                                options={"maxiter": 1000, "gtol": 1e-12, "ftol": 1e-15})
    else:
        res = optimize.minimize(fun, q[free], method="Powell",
                                options={"xtol": 1e-9, "ftol": 1e-12, "maxiter": 20000})
    cand = full(res.x)
    return cand if loss.total(ps, cand) <= loss.total(ps, q) else q


def minimize(ps: WeightedPointSet, loss: LossSpec, config: SolverConfig = SolverConfig(),
             x0=None) -> np.ndarray:
    """Projected subgradient descent with step step/sqrt(k) and iterate averaging.

    The best of the iterates and their average is returned, optionally refined
    by a local method (L-BFGS-B for smooth losses, Powell otherwise). The
    homogeneous l1 loss is solved exactly as a linear program.
    """
    dim = loss.query_dim(ps.d)
    if loss.homogeneous and dim < 2:
        raise DataError("affine-regression form needs at least one feature plus the response")
    if config.polish and isinstance(loss, LzLoss) and loss.z == 1:
        return _l1_lp(ps)
    q0 = np.zeros(dim) if x0 is None else np.asarray(x0, dtype=float)
    q, _ = _subgradient(ps, loss, q0, config)
    if config.polish:
        q = _polish(ps, loss, q)
    return q

