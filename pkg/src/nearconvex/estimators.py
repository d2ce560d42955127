"""scikit-learn style wrappers around the f-SVD, the sampler and the stream builder."""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import to_point_set
from .fsvd import GSpec, fsvd
from .sampler import sample_coreset
from .sensitivity import sensitivities
from .streaming import StreamState


class FSVDTransformer(TransformerMixin, BaseEstimator):
    """Fit the f-SVD of X for g = |p^T x| with exponent z; transform maps p to U(p)."""

    def __init__(self, z=2.0, num_directions=None, tol=1e-6, random_state=0):
        self.z = z
        self.num_directions = num_directions
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None, sample_weight=None):
        ps = to_point_set(X, None, sample_weight)
        kw = {} if self.z == 2 else {"num_directions": self.num_directions, "tol": self.tol}
        self.fsvd_ = fsvd(GSpec(float(self.z)), ps, seed=self.random_state, **kw)
        self.D_ = self.fsvd_.D
        self.V_ = self.fsvd_.V
        self.alpha_ = self.fsvd_.alpha
        self.n_features_in_ = ps.d
        return self

    def transform(self, X):
        check_is_fitted(self, "fsvd_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.fsvd_.transform(X)

    def inverse_transform(self, U):
        check_is_fitted(self, "fsvd_")
        return self.fsvd_.inverse_transform(check_array(U, dtype=np.float64))


class SensitivitySampler(BaseEstimator):
    """Sensitivity-sampling coreset builder.

    ``fit`` computes the sensitivities; ``sample`` draws a weighted coreset
    and returns ``(X_s, y_s, weights)``.
    """

    def __init__(self, loss="lz", z=2.0, lam=None, size=100, random_state=0):
        self.loss = loss
        self.z = z
        self.lam = lam
        self.size = size
        self.random_state = random_state

    def fit(self, X, y=None, sample_weight=None):
        ps = to_point_set(X, y, sample_weight)
        lam = math.sqrt(ps.n) if self.lam is None else self.lam
        self.profile_ = sensitivities(ps, self.loss, z=self.z, lam=lam, seed=self.random_state)
        self.sensitivities_ = self.profile_.s
        self.total_sensitivity_ = self.profile_.total
        self.n_features_in_ = ps.d
        self._ps = ps
        return self

    def sample(self, size=None, random_state=None):
        check_is_fitted(self, "profile_")
        m = self.size if size is None else size
        seed = self.random_state if random_state is None else random_state
        cs = sample_coreset(self._ps, self.profile_, m, seed)
        self.coreset_ = cs
        S = cs.materialize(self._ps)
        return np.asarray(S.points), None if S.labels is None else np.asarray(S.labels), np.asarray(S.weights)

    def fit_resample(self, X, y=None, sample_weight=None):
        return self.fit(X, y, sample_weight).sample()


class StreamingCoreset(BaseEstimator):
    """Merge-and-reduce coreset fed through ``partial_fit`` in batches of at most 2*leaf_size rows."""

    def __init__(self, loss="lz", z=2.0, lam=None, leaf_size=256, epsilon=0.2, delta=0.1,
                 horizon=10_000, d_prime=None, c_const=1.0, max_node_size=None, random_state=0):
        self.loss = loss
        self.z = z
        self.lam = lam
        self.leaf_size = leaf_size
        self.epsilon = epsilon
        self.delta = delta
        self.horizon = horizon
        self.d_prime = d_prime
        self.c_const = c_const
        self.max_node_size = max_node_size
        self.random_state = random_state

    def _new_state(self, d):
        lam = math.sqrt(self.horizon) if self.lam is None else self.lam

        def profile(ps):
            return sensitivities(ps, self.loss, z=self.z, lam=lam, seed=self.random_state)

        return StreamState(profile, self.leaf_size, self.epsilon, self.delta, self.horizon,
                           self.d_prime or d + 1, self.c_const, self.random_state, self.loss,
                           self.max_node_size)

    def partial_fit(self, X, y=None, sample_weight=None):
        ps = to_point_set(X, y, sample_weight)
        if not hasattr(self, "state_"):
            self.state_ = self._new_state(ps.d)
            self.n_features_in_ = ps.d
        self.state_.push(ps)
        return self

    def fit(self, X, y=None, sample_weight=None):
        if hasattr(self, "state_"):
            del self.state_
        X = check_array(X, dtype=np.float64)
        step = 2 * self.leaf_size
        for lo in range(0, X.shape[0], step):
            sl = slice(lo, lo + step)
            self.partial_fit(X[sl], None if y is None else np.asarray(y)[sl],
                             None if sample_weight is None else np.asarray(sample_weight)[sl])
        return self

    def coreset(self):
        """Return ``(X_s, y_s, weights, source_rows)`` for the current root."""
        check_is_fitted(self, "state_")
        cs, S = self.state_.finish()
        y = None if S.labels is None else np.asarray(S.labels)
        return np.asarray(S.points), y, np.asarray(S.weights), cs.indices
