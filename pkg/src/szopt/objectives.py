"""Objective functions for bandit training and theory checks.

Two families live here.  Candidate-set objectives score an instance's
candidates under a linear model and turn the hidden task loss of the
winner (MAP) or of the softmax-annealed mixture into the observed value.
The synthetic zoo provides stochastic test functions with known Lipschitz
constants and optimum bounds for verifying the estimator and convergence
bounds; only coordinates in the active set influence their value, which
is what makes sparse perturbation exact for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy.special import ndtri

from szopt.perturb import RngStream, sample_sparse_gaussian
from szopt.sparsevec import ActiveSet, SparseVector, axpy, dot

SYNTHETIC_IDS = ("l1_well", "smooth_bowl", "nonconvex_ripple")


@dataclass
class ObjectiveSpec:
    """Which objective a run optimizes.

    kind: map_loss | annealed_loss | synthetic.
    gamma: temperature for annealed_loss (0 = uniform mean over candidates,
    math.inf = exact MAP).
    synthetic_id / synthetic_params: zoo member and its construction
    parameters (n, n_bar, seed, ...), for kind == synthetic.
    """

    kind: str
    gamma: float = 1.0
    synthetic_id: str = "l1_well"
    synthetic_params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("map_loss", "annealed_loss", "synthetic"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


def _weights_of(model) -> SparseVector:
    # accepts a LinearModel-like object or a bare weight vector
    w = getattr(model, "weights", model)
    if not isinstance(w, SparseVector):
        raise TypeError(f"expected LinearModel or SparseVector, got {type(model).__name__}")
    return w


def candidate_scores(model, instance) -> np.ndarray:
    w = _weights_of(model)
    return np.array([dot(w, phi) for phi in instance.features])


def map_loss(model, instance) -> float:
    """Hidden loss of the argmax candidate; ties go to the lowest index."""
    if instance.num_candidates == 0:
        raise ValueError("instance has no candidates")
    scores = candidate_scores(model, instance)
    winner = int(np.argmax(scores))  # argmax returns the first maximum
    return float(instance._losses[winner])


def annealed_loss(model, instance, gamma: float) -> float:
    """Softmax-weighted expected loss at temperature gamma.

    gamma=0 gives the unweighted mean over candidates; gamma=inf is exact
    MAP.  Computed in log space with max subtraction so gamma up to 1e6
    cannot overflow.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if instance.num_candidates == 0:
        raise ValueError("instance has no candidates")
    if math.isinf(gamma):
        return map_loss(model, instance)
    scores = candidate_scores(model, instance)
    logits = gamma * scores
    logits -= logits.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    losses = np.asarray(instance._losses)
    return float(probs @ losses)


def softmax_probs(scores: np.ndarray, gamma: float = 1.0) -> np.ndarray:
    """Stable softmax used by annealed scoring and candidate sampling."""
    logits = gamma * np.asarray(scores, dtype=np.float64)
    logits = logits - logits.max()
    p = np.exp(logits)
    return p / p.sum()


def smoothed_value(F, w: SparseVector, x, mu: float, active: ActiveSet,
                   num_samples: int, rng: RngStream) -> float:
    """Monte Carlo estimate of f_mu(w) = E_u[F(w + mu*u, x)] over sparse draws."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    total = 0.0
    for _ in range(num_samples):
        pert = sample_sparse_gaussian(active, rng)
        total += F(axpy(mu, pert.vector, w), x)
    return total / num_samples


# --- synthetic zoo ---------------------------------------------------------

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_NEG53 = 2.0 ** -53


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized on uint64 arrays (wrapping)."""
    with np.errstate(over="ignore"):  # wraparound is the algorithm
        z = (z + _GOLD).astype(np.uint64)
        z = (z ^ (z >> _S30)) * _MIX1
        z = (z ^ (z >> _S27)) * _MIX2
        return z ^ (z >> _S31)


def _hash_u64(a, b) -> np.ndarray:
    """Combine two uint64 array-likes into hashed uint64s (broadcasting)."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    return _mix64(a ^ _mix64(b))


def _hash_uniform(a, b) -> np.ndarray:
    """Uniforms in (0,1) derived from hashed (a, b)."""
    h = _hash_u64(a, b)
    return ((h >> _S11).astype(np.float64) + 0.5) * _TWO_NEG53


def _hash_normal(a, b) -> np.ndarray:
    return ndtri(_hash_uniform(a, b))


class SyntheticFunction:
    """A zoo member F(w, x) with documented L0, f* and active structure.

    x is a sample index; the per-sample offset is c_x = c* + 0.1 * z_x
    with c* seeded once (|c*_i| in [0.5, 1.5)) and z_x standard normal
    per (x, coordinate), both derived by counter-style hashing so any
    (x, i) pair is reproducible in isolation.

    With per_sample_active=False (default) the active set is the fixed
    block {0..n_bar-1} and every other coordinate is inert.  With
    per_sample_active=True each sample draws its own size-n_bar active
    subset of all n coordinates (hashed choice), modelling per-input
    feature sparsity; n_bar == n reproduces the dense case exactly.
    """

    def __init__(self, kind: str, n: int, n_bar: int, seed: int,
                 per_sample_active: bool = False, noise: float = 0.1):
        if kind not in SYNTHETIC_IDS:
            raise ValueError(f"unknown synthetic id {kind!r}; expected one of {SYNTHETIC_IDS}")
        if not 1 <= n_bar <= n:
            raise ValueError(f"need 1 <= n_bar <= n, got n_bar={n_bar}, n={n}")
        self.kind = kind
        self.dim = int(n)
        self.active_dim = int(n_bar)
        self.seed = int(seed) & ((1 << 64) - 1)
        self.per_sample_active = bool(per_sample_active)
        self.noise = float(noise)
        self.ripple_scale = 0.1
        if kind == "l1_well":
            self.lipschitz_const = math.sqrt(n_bar)
            self.f_star = 0.0
        elif kind == "smooth_bowl":
            self.lipschitz_const = 1.0
            self.f_star = 0.0
        else:  # nonconvex_ripple
            self.lipschitz_const = (1.0 + self.ripple_scale) * math.sqrt(n_bar)
            self.f_star = -self.ripple_scale * n_bar
        # distinct hash keys per purpose, derived from the seed
        base = np.uint64(self.seed)
        self._key_center = _mix64(np.asarray(base ^ np.uint64(0xA5A5A5A5A5A5A5A5), dtype=np.uint64))
        self._key_noise = _mix64(np.asarray(base ^ np.uint64(0x3C3C3C3C3C3C3C3C), dtype=np.uint64))
        self._key_active = _mix64(np.asarray(base ^ np.uint64(0x0F0F0F0F0F0F0F0F), dtype=np.uint64))
        self._fixed_idx = np.arange(self.active_dim, dtype=np.int64)

    # -- structure ---------------------------------------------------------

    def active_indices(self, x: int) -> np.ndarray:
        """Sorted active coordinates for sample x."""
        if not self.per_sample_active or self.active_dim == self.dim:
            return self._fixed_idx
        scores = _hash_u64(self._key_active ^ np.uint64(int(x) & ((1 << 64) - 1)),
                           np.arange(self.dim, dtype=np.uint64))
        part = np.argpartition(scores, self.active_dim - 1)[: self.active_dim]
        part.sort()
        return part.astype(np.int64)

    def active_indices_batch(self, xs: np.ndarray) -> np.ndarray:
        """(M, n_bar) active index matrix for a batch of sample ids."""
        if not self.per_sample_active or self.active_dim == self.dim:
            return np.broadcast_to(self._fixed_idx, (len(xs), self.active_dim))
        xs = np.asarray(xs, dtype=np.uint64)
        scores = _hash_u64((self._key_active ^ xs)[:, None],
                           np.arange(self.dim, dtype=np.uint64)[None, :])
        part = np.argpartition(scores, self.active_dim - 1, axis=1)[:, : self.active_dim]
        part.sort(axis=1)
        return part.astype(np.int64)

    def active_set(self, x: int) -> ActiveSet:
        return ActiveSet(self.dim, self.active_indices(x).tolist())

    def center(self, idx: np.ndarray) -> np.ndarray:
        """The seeded well center c* on the given coordinates."""
        h = _hash_u64(self._key_center, np.asarray(idx, dtype=np.uint64))
        sign = np.where((h & np.uint64(1)).astype(bool), 1.0, -1.0)
        mag = 0.5 + ((h >> _S11).astype(np.float64) + 0.5) * _TWO_NEG53
        return sign * mag

    def offsets(self, x, idx: np.ndarray) -> np.ndarray:
        """c_x on the given coordinates: center plus hashed Gaussian noise.

        x may be a scalar (idx 1-D) or an (M,) array with idx (M, d).
        """
        idx = np.asarray(idx, dtype=np.uint64)
        xk = self._key_noise ^ np.asarray(x, dtype=np.uint64)
        if idx.ndim == 2:
            xk = np.asarray(xk, dtype=np.uint64).reshape(-1, 1)
        z = _hash_normal(xk, idx)
        return self.center(idx) + self.noise * z

    # -- evaluation --------------------------------------------------------

    def value_on_active(self, vals: np.ndarray, x, idx: np.ndarray) -> float:
        """F given the weight values on this sample's active coordinates."""
        c = self.offsets(x, idx)
        d = vals - c
        if self.kind == "l1_well":
            return float(np.abs(d).sum())
        if self.kind == "smooth_bowl":
            return float(math.sqrt(1.0 + float(d @ d)) - 1.0)
        raw = float(np.abs(d).sum()) + self.ripple_scale * float(np.sin(vals).sum())
        return max(raw, self.f_star)

    def value_rows(self, V: np.ndarray, xs: np.ndarray, idx_mat: np.ndarray,
                   offsets: Optional[np.ndarray] = None) -> np.ndarray:
        """Vectorized F over rows: V[j] holds weights on idx_mat[j] for xs[j].

        Pass offsets to reuse a precomputed self.offsets(xs, idx_mat),
        which repeated evaluations at the same xs should do.
        """
        c = self.offsets(xs, idx_mat) if offsets is None else offsets
        d = V - c
        if self.kind == "l1_well":
            return np.abs(d).sum(axis=1)
        if self.kind == "smooth_bowl":
            return np.sqrt(1.0 + np.einsum("ij,ij->i", d, d)) - 1.0
        raw = np.abs(d).sum(axis=1) + self.ripple_scale * np.sin(V).sum(axis=1)
        return np.maximum(raw, self.f_star)

    def __call__(self, w, x) -> float:
        idx = self.active_indices(x)
        if isinstance(w, SparseVector):
            if w.dim != self.dim:
                raise ValueError(f"weight dim {w.dim} != function dim {self.dim}")
            vals = np.array([w.get(int(i)) for i in idx])
        else:
            vals = np.asarray(w, dtype=np.float64)[idx]
        return self.value_on_active(vals, x, idx)


def make_synthetic(id: str, n: int, n_bar: int, seed: int,
                   per_sample_active: bool = False) -> SyntheticFunction:
    """Construct a zoo member; see SyntheticFunction for the catalogue."""
    return SyntheticFunction(id, n, n_bar, seed, per_sample_active=per_sample_active)


class SyntheticSample:
    """One bandit interaction with a zoo function: the sample index x
    plays the role of an input, the function's active coordinates the
    role of the firing feature set."""

    __slots__ = ("func", "x")

    def __init__(self, func: SyntheticFunction, x: int):
        self.func = func
        self.x = int(x)

    @property
    def active_indices(self) -> np.ndarray:
        return self.func.active_indices(self.x)

    @property
    def active_set(self) -> ActiveSet:
        return self.func.active_set(self.x)
