"""f-SVD factorizations: an ellipsoid ``||D V^T x||_2`` that sandwiches a loss.

For a per-point function g, the level set

    X_g = {x : sum_p w(p)^e g(p, x)^beta <= 1},   e = max(1, 1/z), beta = max(1, z)

is a centrally symmetric convex body. An enclosing ellipsoid E whose shrunk
copy E / alpha sits inside X_g gives, for every query x,

    ||D V^T x||^beta <= sum_p w^e g(p, x)^beta <= (alpha ||D V^T x||)^beta.

Two backends are provided. ``fsvd_quadratic`` handles g = |p^T x| with z = 2
exactly through an SVD of the weighted data matrix. ``fsvd_general`` samples
the boundary of X_g along many directions, fits the minimum-volume
origin-centred ellipsoid to the samples and then shrinks it until no boundary
point escapes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .dataset import DataError, WeightedPointSet

QUADRATIC = "quadratic-exact"
MVEE = "mvee-sampled"

# queries are evaluated in chunks so n x k intermediates stay small
_CHUNK_ELEMS = 4_000_000


class DegenerateLevelSet(DataError):
    """The level set is unbounded: the data does not span R^d."""


class MveeNotConverged(RuntimeError):
    def __init__(self, msg, D, V):
        super().__init__(msg)
        self.D = D
        self.V = V


def abs_dot(points: np.ndarray, X: np.ndarray) -> np.ndarray:
    """g(p, x) = |p^T x| for every point (rows) and query (rows); shape n x k."""
    return np.abs(points @ X.T)


@dataclass(frozen=True)
class GSpec:
    """Per-point function g with its exponent z and homogeneity constants."""

    z: float = 1.0
    g: Callable[[np.ndarray, np.ndarray], np.ndarray] = abs_dot
    c3: float = 1.0
    c4: float = 1.0

    def __post_init__(self):
        if not self.z > 0:
            raise ValueError(f"z must be positive, got {self.z}")
        if not 0 < self.c3 <= self.c4:
            raise ValueError("need 0 < c3 <= c4")

    @property
    def weight_exponent(self) -> float:
        return max(1.0, 1.0 / self.z)

    @property
    def beta(self) -> float:
        return max(1.0, self.z)

    @property
    def is_quadratic(self) -> bool:
        return self.g is abs_dot and self.z == 2

    def level(self, ps: WeightedPointSet, X) -> np.ndarray:
        """sum_p w^e g(p, x)^beta for each row x of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        we = ps.weights ** self.weight_exponent
        out = np.empty(X.shape[0])
        step = max(1, _CHUNK_ELEMS // max(ps.n, 1))
        for lo in range(0, X.shape[0], step):
            G = self.g(ps.points, X[lo:lo + step])
            out[lo:lo + step] = we @ (G ** self.beta)
        return out

    def gauge(self, ps: WeightedPointSet, X) -> np.ndarray:
        """The norm whose unit ball is X_g: level(x)^(1/beta)."""
        return self.level(ps, X) ** (1.0 / self.beta)


@dataclass(frozen=True)
class FSvd:
    """Diagonal D (positive), orthogonal V and dilation alpha.

    ``transform`` maps p to U(p) = (V D)^-1 p.
    """

    D: np.ndarray
    V: np.ndarray
    alpha: float = 1.0
    backend: str = QUADRATIC
    seed: Optional[int] = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        D = np.array(self.D, dtype=float).ravel()
        V = np.array(self.V, dtype=float)
        if V.shape != (D.size, D.size):
            raise ValueError(f"V must be {D.size}x{D.size}, got {V.shape}")
        if not np.all(D > 0):
            raise ValueError("D entries must be strictly positive")
        D.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def d(self) -> int:
        return self.D.size

    def transform(self, points) -> np.ndarray:
        """U(p) = D^-1 V^T p, row-wise."""
        P = np.asarray(points, dtype=float)
        return (P @ self.V) / self.D

    def inverse_transform(self, U) -> np.ndarray:
        return (np.asarray(U, dtype=float) * self.D) @ self.V.T

    def ellipsoid_norm(self, X) -> np.ndarray:
        """||D V^T x||_2 for each row x."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.linalg.norm((X @ self.V) * self.D, axis=1)

    def directions(self) -> np.ndarray:
        """Rows are (D V^T)^-1 e_j, so that p^T row_j = U(p)_j."""
        return (self.V / self.D).T

    def shape_matrix(self) -> np.ndarray:
        """A = V D^2 V^T, i.e. E = {x : x^T A x <= 1}."""
        return (self.V * self.D ** 2) @ self.V.T

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "D": self.D.tolist(),
            "V": self.V.ravel().tolist(),
            "alpha": self.alpha,
            "backend": self.backend,
            "seed": self.seed,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, doc: dict) -> "FSvd":
        d = int(doc["d"])
        return cls(np.asarray(doc["D"], dtype=float),
                   np.asarray(doc["V"], dtype=float).reshape(d, d),
                   doc["alpha"], doc["backend"], doc.get("seed"))

    @classmethod
    def from_json(cls, text_or_path) -> "FSvd":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            with open(text, encoding="utf-8") as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def _canonical_signs(V: np.ndarray) -> np.ndarray:
    # make the largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _eig_factor(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric positive definite A -> (D, V) with A = V D^2 V^T, D descending."""
    lam, V = np.linalg.eigh((A + A.T) / 2)
    order = np.argsort(lam)[::-1]
    lam, V = lam[order], V[:, order]
    return np.sqrt(lam), _canonical_signs(V)


def fsvd_quadratic(ps: WeightedPointSet) -> FSvd:
    """Exact factorization for sum_p w |p^T x|^2 = ||D V^T x||^2."""
    A = np.sqrt(ps.weights)[:, None] * ps.points
    _, s, vt = np.linalg.svd(A, full_matrices=False)
    if s.size < ps.d or s[-1] <= s[0] * max(A.shape) * np.finfo(float).eps:
        raise DegenerateLevelSet(
            "degenerate level set: weighted Gram matrix is rank deficient "
            f"(d={ps.d}, n={ps.n})")
    return FSvd(s, _canonical_signs(vt.T), 1.0, QUADRATIC)


def boundary_points(g: GSpec, ps: WeightedPointSet, U) -> np.ndarray:
    """Scale each row of U onto the boundary of X_g."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    lev = g.level(ps, U)
    if np.any(lev <= 0):
        k = int(np.argmax(lev <= 0))
        raise DegenerateLevelSet(f"unbounded direction: {U[k].tolist()}")
    return U * (lev ** (-1.0 / g.beta))[:, None]


def boundary_point(g: GSpec, ps: WeightedPointSet, u) -> np.ndarray:
    """The point t*u on the boundary of X_g."""
    return boundary_points(g, ps, np.asarray(u, dtype=float)[None, :])[0]


def _mvee_weights(X: np.ndarray, tol: float, max_iter: int):
    """Pairwise Frank-Wolfe for the origin-centred MVEE (D-optimal design).

    Minimises -log det M(u), M(u) = sum u_i x_i x_i^T over the simplex. At the
    optimum max_i x_i^T M^-1 x_i = d. Each step moves mass from the support
    point with the smallest kappa to the point with the largest; plain away
    steps zig-zag badly when two samples are nearly collinear.
    Returns (u, M^-1, max kappa / d).
    """
    m, d = X.shape
    u = np.full(m, 1.0 / m)
    up = np.inf
    for it in range(max_iter):
        if it % 200 == 0:
            Minv = np.linalg.inv((X * u[:, None]).T @ X)
            kappa = np.einsum("ij,jk,ik->i", X, Minv, X)
        j = int(np.argmax(kappa))
        up = kappa[j] / d - 1.0
        if up <= tol:
            return u, Minv, kappa[j] / d
        support = np.flatnonzero(u > 0)
        k = support[np.argmin(kappa[support])]
        Mj = Minv @ X[j]
        kjk = X[k] @ Mj
        # log det(M + tau (x_j x_j^T - x_k x_k^T)) is concave in tau
        curv = 2.0 * (kappa[j] * kappa[k] - kjk ** 2)
        tau = u[k] if curv <= 0 else min(u[k], (kappa[j] - kappa[k]) / curv)
        a = 1.0 + tau * kappa[j]
        Minv = Minv - tau * np.outer(Mj, Mj) / a
        kappa = kappa - tau * (X @ Mj) ** 2 / a
        Mk = Minv @ X[k]
        b = 1.0 - tau * kappa[k]
        Minv = Minv + tau * np.outer(Mk, Mk) / b
        kappa = kappa + tau * (X @ Mk) ** 2 / b
        u[j] += tau
        u[k] = 0.0 if tau == u[k] else u[k] - tau
    raise MveeNotConverged(f"MVEE did not converge in {max_iter} iterations "
                           f"(max kappa/d - 1 = {up:.3g})", *_mvee_factor(X, Minv))


def _mvee_factor(X, Minv):
    d = X.shape[1]
    A = Minv / d
    # scale so that every sample is inside
    worst = np.max(np.einsum("ij,jk,ik->i", X, A, X))
    return _eig_factor(A / worst)


def mvee_symmetric(points, tol: float = 1e-6, max_iter: int = 100_000):
    """Minimum-volume origin-centred ellipsoid enclosing {+-x_i}.

    Returns (D, V) with E = {x : ||D V^T x|| <= 1} containing every sample.
    The symmetric set {+-x_i} has the same second moments as {x_i}, so the
    signs never need to be materialised.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if tol <= 0:
        raise ValueError("tol must be positive")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DegenerateLevelSet("samples do not span R^d")
    _, Minv, _ = _mvee_weights(X, tol, max_iter)
    return _mvee_factor(X, Minv)


def sphere_directions(rng: np.random.Generator, k: int, d: int) -> np.ndarray:
    U = rng.standard_normal((k, d))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def _make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _escape_search(g, ps, D, V, rng, n_probe, n_polish):
    """Find unit y minimising gauge((D V^T)^-1 y); values < 1 mean X_g leaks out of E."""
    d = D.size
    to_x = (V / D).T  # y @ to_x = (D V^T)^-1 y as a row

    def h(y):
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return np.inf
        return float(g.gauge(ps, (y / nrm) @ to_x)[0])

    Y = np.vstack([np.eye(d), sphere_directions(rng, n_probe, d)])
    vals = g.gauge(ps, Y @ to_x)
    best = np.argsort(vals)[:n_polish]
    found = []
    for b in best:
        res = minimize(h, Y[b], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 400 * d})
        y = res.x / np.linalg.norm(res.x)
        found.append((min(res.fun, vals[b]), y if res.fun <= vals[b] else Y[b]))
    found.sort(key=lambda t: t[0])
    raw = Y[np.argsort(vals)[:10 * d]]
    ys = np.vstack([np.array([y for _, y in found]), raw])
    return found[0][0], ys @ to_x


def fsvd_general(g: GSpec, ps: WeightedPointSet, num_directions: Optional[int] = None,
                 tol: float = 1e-6, seed: int = 0, refine_rounds: int = 4,
                 max_iter: int = 100_000) -> FSvd:
    """Sampled-boundary f-SVD for any homogeneous g.

    The ellipsoid is the MVEE of the sampled boundary points. It is then
    searched for boundary points of X_g that fall outside it; those are added
    to the sample and the fit repeated. Whatever gap remains after
    ``refine_rounds`` is closed by shrinking D by the worst ratio m < 1, which
    costs a dilation alpha = sqrt(d) / m instead of sqrt(d).
    """
    d = ps.d
    if num_directions is None:
        num_directions = max(100, 20 * d)
    if num_directions < 2 * d:
        raise ValueError(f"num_directions must be at least 2d = {2 * d}")
    rng = _make_rng(seed)
    U = np.vstack([np.eye(d), sphere_directions(rng, num_directions, d)])
    samples = boundary_points(g, ps, U)
    n_probe = max(2000, 200 * d)
    worst = 0.0
    for _ in range(refine_rounds + 1):
        D, V = mvee_symmetric(samples, tol, max_iter)
        worst, escapes = _escape_search(g, ps, D, V, rng, n_probe, n_polish=min(4, d + 1))
        if worst >= 1.0 - tol:
            break
        samples = np.vstack([samples, boundary_points(g, ps, escapes)])
    shrink = min(1.0, worst)
    return FSvd(D * shrink, V, math.sqrt(d) / shrink, MVEE, seed,
                {"min_gauge_ratio": float(worst), "samples": int(samples.shape[0])})


def fsvd(g: GSpec, ps: WeightedPointSet, seed: int = 0, **kw) -> FSvd:
    """Pick the exact backend when the level set is an ellipsoid."""
    if g.is_quadratic:
        return fsvd_quadratic(ps)
    return fsvd_general(g, ps, seed=seed, **kw)


def transform_U(fs: FSvd, p) -> np.ndarray:
    return fs.transform(np.asarray(p, dtype=float))


@dataclass(frozen=True)
class SandwichReport:
    lower: np.ndarray
    mid: np.ndarray
    upper: np.ndarray
    passed: np.ndarray

    @property
    def all_passed(self) -> bool:
        return bool(self.passed.all())

    @property
    def worst_upper_ratio(self) -> float:
        """max mid / upper; at most 1 when the upper bound holds."""
        return float(np.max(self.mid / self.upper))

    @property
    def worst_lower_ratio(self) -> float:
        """max lower / mid; at most 1 when the lower bound holds."""
        return float(np.max(self.lower / self.mid))


def verify_sandwich(fs: FSvd, g: GSpec, ps: WeightedPointSet, queries,
                    tol: float = 1e-6, rtol: float = 1e-9) -> SandwichReport:
    """Check (c3 e)^b <= sum w^e g^b <= ((1+tol) c4 alpha e)^b per query, e = ||D V^T x||."""
    X = np.atleast_2d(np.asarray(queries, dtype=float))
    if np.any(~X.any(axis=1)):
        raise ValueError("queries must be nonzero")
    e = fs.ellipsoid_norm(X)
    b = g.beta
    lower = (g.c3 * e) ** b
    mid = g.level(ps, X)
    upper = (g.c4 * fs.alpha * e) ** b
    ok = (lower <= mid * (1 + rtol)) & (mid <= upper * (1 + tol) ** b * (1 + rtol))
    return SandwichReport(lower, mid, upper, ok)
