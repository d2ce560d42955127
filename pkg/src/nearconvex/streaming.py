"""Merge-and-reduce coreset construction over a stream of batches.

Leaves enter level 1. Whenever a level holds two pending coresets, their union
(each point keeping its coreset weight) is compressed again and pushed one
level up, exactly like incrementing a binary counter. Every compression uses
eps' = eps / (2 log2 n) and delta' = delta / (2 log2 n), where n is the stream
horizon supplied up front.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dataset import DataError, WeightedPointSet, concat
from .sampler import Coreset, sample_coreset, sample_size
from .sensitivity import SensitivityProfile

ProfileFn = Callable[[WeightedPointSet], SensitivityProfile]


def per_level_params(eps: float, delta: float, horizon: int) -> tuple[float, float]:
    """(eps / (2 log2 n), delta / (2 log2 n)); log2 n is floored at 1."""
    if horizon < 1:
        raise ValueError("horizon must be positive")
    k = 2 * max(1.0, math.log2(horizon))
    return eps / k, delta / k


def min_leaf_size(beta: float) -> float:
    """Smallest leaf size that keeps node sizes shrinking when t grows like n^beta."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    return 2 ** (beta / (1 - beta))


@dataclass
class _Node:
    points: WeightedPointSet
    source: np.ndarray


class StreamState:
    """Single-writer merge-and-reduce state machine.

    Parameters
    ----------
    profile_fn : callable
        Maps a weighted point set to its sensitivity profile.
    leaf_size : int
        Leaves hold 2 * leaf_size points.
    max_node_size : int, optional
        Upper limit on the size of every compressed node. Without it a node
        whose sample size reaches its input size is passed through unchanged.
    """

    def __init__(self, profile_fn: ProfileFn, leaf_size: int, eps: float, delta: float,
                 horizon: int, d_prime: int, c_const: float = 1.0, seed: int = 0,
                 loss: str = "", max_node_size: Optional[int] = None):
        if leaf_size < 1:
            raise ValueError("leaf_size must be positive")
        if not (0 < eps < 1 and 0 < delta < 1):
            raise ValueError("eps and delta must lie in (0, 1)")
        self.profile_fn = profile_fn
        self.leaf_size = int(leaf_size)
        self.eps, self.delta = eps, delta
        self.horizon = int(horizon)
        self.eps_prime, self.delta_prime = per_level_params(eps, delta, horizon)
        self.d_prime, self.c_const, self.seed = d_prime, c_const, seed
        self.loss = loss
        self.max_node_size = max_node_size
        self.buckets: dict[int, list[_Node]] = {}
        self.height = 0
        self.seen = 0
        self.partial_batches = 0
        self.max_live = 0
        self.node_sizes: dict[int, list[int]] = {}
        self._nodes_built = 0
        self._last_t = float("nan")

    @property
    def merge_depth(self) -> int:
        return max(0, self.height - 1)

    @property
    def live(self) -> int:
        return sum(len(b) for b in self.buckets.values())

    def _reduce(self, node: _Node, level: int, trial=None) -> _Node:
        ps = node.points
        profile = self.profile_fn(ps)
        m = sample_size(profile.total, self.d_prime, self.eps_prime, self.delta_prime, self.c_const)
        if self.max_node_size is not None:
            m = min(m, self.max_node_size)
        if trial is None:
            # node 0 shares the batch builder's stream, so a single-leaf run matches it
            trial = self._nodes_built or None
            self._nodes_built += 1
        self._last_t = profile.total
        if m >= ps.n:
            out = node
        else:
            cs = sample_coreset(ps, profile, m, self.seed, trial=trial)
            out = _Node(cs.materialize(ps), node.source[cs.indices])
        self.node_sizes.setdefault(level, []).append(out.points.n)
        return out

    def _track(self):
        self.max_live = max(self.max_live, self.live)

    def push(self, batch: WeightedPointSet) -> "StreamState":
        if batch.n == 0:
            raise DataError("empty batch")
        if batch.n > 2 * self.leaf_size:
            raise DataError(f"batch of {batch.n} points exceeds 2 * leaf_size = {2 * self.leaf_size}")
        if batch.n < 2 * self.leaf_size:
            self.partial_batches += 1
        src = np.arange(self.seen, self.seen + batch.n)
        self.seen += batch.n
        self.buckets.setdefault(1, []).append(self._reduce(_Node(batch, src), 1))
        self.height = max(self.height, 1)
        self._track()
        j = 1
        while j <= self.height:
            level = self.buckets.get(j, [])
            while len(level) >= 2:
                a, b = level.pop(0), level.pop(0)
                merged = _Node(concat([a.points, b.points]), np.concatenate([a.source, b.source]))
                self.buckets.setdefault(j + 1, []).append(self._reduce(merged, j + 1))
                self.height = max(self.height, j + 1)
                self._track()
            j += 1
        return self

    def finish(self) -> tuple[Coreset, WeightedPointSet]:
        """Fold pending nodes, oldest (highest level) first, into the root."""
        pending = [n for j in sorted(self.buckets, reverse=True) for n in self.buckets[j]]
        if not pending:
            raise DataError("empty stream")
        # folding must not disturb the stream, so finish() can be called again after more
        # pushes; fold nodes draw from (seen, i) substreams, disjoint from the push nodes
        saved = (self._last_t, {k: list(v) for k, v in self.node_sizes.items()})
        root = pending[0]
        for i, nxt in enumerate(pending[1:]):
            merged = _Node(concat([root.points, nxt.points]), np.concatenate([root.source, nxt.source]))
            root = self._reduce(merged, self.height + 1, trial=(self.seen, i))
        cs = Coreset(root.source, root.points.weights, self.seed, root.points.n,
                     self._last_t, self.loss, self.provenance())
        self._last_t, self.node_sizes = saved
        return cs, root.points

    def provenance(self) -> dict:
        return {
            "eps": self.eps, "delta": self.delta,
            "eps_prime": self.eps_prime, "delta_prime": self.delta_prime,
            "horizon": self.horizon, "leaf_size": self.leaf_size,
            "height": self.height, "merge_depth": self.merge_depth,
            "max_live": self.max_live, "seen": self.seen,
            "partial_batches": self.partial_batches,
            "node_sizes": {k: list(v) for k, v in self.node_sizes.items()},
        }


def stream_push(state: StreamState, batch: WeightedPointSet) -> StreamState:
    return state.push(batch)


def stream_finish(state: StreamState) -> tuple[Coreset, WeightedPointSet]:
    return state.finish()


def stream_coreset(batches, profile_fn: ProfileFn, **kw) -> tuple[Coreset, WeightedPointSet, StreamState]:
    state = StreamState(profile_fn, **kw)
    for b in batches:
        state.push(b)
    cs, pts = state.finish()
    return cs, pts, state
