"""Sample-size rule and i.i.d. importance sampling of coresets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import WeightedPointSet, save_csv
from .sensitivity import SensitivityProfile


def make_rng(seed: int, trial=None) -> np.random.Generator:
    """Counter-based Philox stream; ``trial`` (an int or tuple of ints) selects a substream."""
    if trial is None:
        key = ()
    elif isinstance(trial, tuple):
        key = tuple(int(k) for k in trial)
    else:
        key = (int(trial),)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def sample_size(t: float, d_prime: int, eps: float, delta: float, c_const: float = 1.0) -> int:
    """ceil(c t / eps^2 (d' ln t + ln(1/delta))), with ln t floored at 0 and m >= 1."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    if d_prime < 1 or c_const < 1:
        raise ValueError("need d_prime >= 1 and c_const >= 1")
    m = c_const * t / eps ** 2 * (d_prime * max(math.log(t), 0.0) + math.log(1.0 / delta))
    return max(1, math.ceil(m))


@dataclass(frozen=True)
class Coreset:
    """Sampled source indices (repeats allowed) and their weights."""

    indices: np.ndarray
    weights: np.ndarray
    seed: Optional[int] = None
    m: int = 0
    t: float = 0.0
    loss: str = ""
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64).ravel()
        v = np.array(self.weights, dtype=float).ravel()
        if idx.shape != v.shape:
            raise ValueError("indices and weights differ in length")
        if idx.size == 0 or np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("a coreset needs at least one entry and positive finite weights")
        idx.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", v)
        if not self.m:
            object.__setattr__(self, "m", int(idx.size))

    def __len__(self):
        return self.indices.size

    def merged(self) -> "Coreset":
        """Collapse repeated indices, summing their weights."""
        uniq, inv = np.unique(self.indices, return_inverse=True)
        v = np.bincount(inv, weights=self.weights)
        return Coreset(uniq, v, self.seed, self.m, self.t, self.loss, dict(self.provenance))

    def materialize(self, ps: WeightedPointSet) -> WeightedPointSet:
        return ps.take(self.indices, self.weights)

    def to_csv(self, path, ps: WeightedPointSet):
        save_csv(path, self.materialize(ps), source_rows=self.indices)


def _draw(ps: WeightedPointSet, s: np.ndarray, m: int, seed: int, trial, loss: str,
          provenance=None) -> Coreset:
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    if s.shape != (ps.n,):
        raise ValueError(f"profile has {s.size} entries but the point set has {ps.n}")
    cdf = np.cumsum(s)
    t = float(cdf[-1])
    u = make_rng(seed, trial).random(m) * t
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), ps.n - 1)
    v = ps.weights[idx] * t / (s[idx] * m)
    prov = {"trial": trial, **(provenance or {})}
    return Coreset(idx, v, seed, m, t, loss, prov)


def sample_coreset(ps: WeightedPointSet, profile, m: int, seed: int, trial=None) -> Coreset:
    """m i.i.d. draws with probability s(p)/t, each weighted w(p) t / (s(p) m).

    ``profile`` is a SensitivityProfile (its clamped ``s`` is used) or any
    vector of positive finite scores.
    """
    if isinstance(profile, SensitivityProfile):
        return _draw(ps, profile.s, m, seed, trial, profile.loss)
    s = np.asarray(profile, dtype=float).ravel()
    if s.size == 0 or not np.all(np.isfinite(s) & (s > 0)):
        raise ValueError("scores must be positive and finite")
    return _draw(ps, s, m, seed, trial, "")


def uniform_coreset(ps: WeightedPointSet, m: int, seed: int, trial=None,
                    loss: str = "uniform") -> Coreset:
    """Baseline: draws with probability w(p)/W, each weighted W/m."""
    return _draw(ps, ps.weights, m, seed, trial, loss, {"method": "uniform"})
