"""Seedable sparse Gaussian perturbations.

The sampler draws independent standard normals on the coordinates of an
active set and leaves every other coordinate exactly zero.  Randomness
comes from a counter-based stream (Philox keyed by (seed, stream_id) with
an explicit block counter), so the k-th draw of a run can be regenerated
directly from (seed, stream_id, k) without replaying the run, and
distinct stream ids give independent streams for perturbations, data
order, and candidate sampling.

Normals are produced by inverse-CDF transform of one uniform block per
normal (no rejection sampling), so a fixed counter always yields the
same bits regardless of how many draws preceded it.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.special import ndtri

from szopt.sparsevec import ActiveSet, SparseVector

_MASK64 = (1 << 64) - 1


class RngStream:
    """Counter-based random stream: (seed, stream_id, counter) -> block of draws.

    Each draw call consumes one counter block (2^128 Philox states), so
    streams can be repositioned with `at(counter)` and never collide.
    Single-owner: share across threads only by splitting.
    """

    __slots__ = ("seed", "stream_id", "counter")

    def __init__(self, seed: int, stream_id: int = 0, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self.counter = int(counter)

    def split(self, stream_id: int) -> "RngStream":
        """Independent stream under the same seed."""
        return RngStream(self.seed, stream_id, 0)

    def at(self, counter: int) -> "RngStream":
        """Same stream repositioned at an absolute counter."""
        return RngStream(self.seed, self.stream_id, counter)

    def _block_generator(self) -> np.random.Generator:
        bg = np.random.Philox(key=[self.seed, self.stream_id], counter=self.counter << 128)
        self.counter += 1
        return np.random.Generator(bg)

    def raw(self, count: int) -> np.ndarray:
        """One block of `count` raw uint64 words."""
        if count == 0:
            self.counter += 1
            return np.empty(0, dtype=np.uint64)
        g = self._block_generator()
        return g.integers(0, 1 << 64, size=count, dtype=np.uint64, endpoint=False)

    def uniforms(self, count: int) -> np.ndarray:
        """Uniforms on the open interval (0,1): one uint64 word per value."""
        bits = self.raw(count)
        return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)

    def normals(self, count: int) -> np.ndarray:
        """Standard normals via inverse CDF; never exactly 0 or infinite."""
        return ndtri(self.uniforms(count))

    def integers(self, bound: int, count: int = 1) -> np.ndarray:
        """Uniform ints in [0, bound); deterministic floor of one uniform each."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        u = self.uniforms(count)
        return np.minimum((u * bound).astype(np.int64), bound - 1)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"


class Perturbation:
    """A sparse Gaussian draw: vector support inside `active`.

    `indices` and `values` are the construction arrays (indices sorted
    ascending, values drawn in that order); `vector` is the same content
    as a SparseVector.  effective_dim is the realized l0 norm, which
    matches |active| unless a value underflowed to exactly zero.
    """

    __slots__ = ("vector", "active", "effective_dim", "indices", "values")

    def __init__(self, vector: SparseVector, active: ActiveSet, indices: np.ndarray, values: np.ndarray):
        self.vector = vector
        self.active = active
        self.indices = indices
        self.values = values
        self.effective_dim = len(vector)

    def __repr__(self) -> str:
        return f"Perturbation(dim={self.vector.dim}, effective_dim={self.effective_dim})"


def sample_sparse_gaussian(active: ActiveSet, rng: RngStream) -> Perturbation:
    """Draw a standard normal on each active coordinate, zero elsewhere.

    Coordinates are drawn in sorted index order, so the result depends
    only on the active set's membership, not its iteration order.
    """
    if active.dim <= 0:
        raise ValueError("active.dim must be positive")
    idx = np.sort(active.as_array())
    values = rng.normals(len(idx))
    vec = SparseVector.from_arrays(active.dim, idx.tolist(), values.tolist())
    return Perturbation(vec, active, idx, values)


def moment_estimate(
    active: ActiveSet,
    p: int,
    num_samples: int,
    rng: RngStream,
    batch: int = 4096,
) -> float:
    """Monte Carlo estimate of E||u||^p over sparse Gaussian draws.

    Draws are batched (one counter block per batch) for speed; each row
    of a batch is one perturbation restricted to the active set.
    """
    if p not in (2, 4):
        raise ValueError(f"unsupported moment order p={p}; expected 2 or 4")
    d = len(active)
    if d == 0:
        return 0.0
    total = 0.0
    remaining = int(num_samples)
    while remaining > 0:
        rows = min(batch, remaining)
        block = rng.normals(rows * d).reshape(rows, d)
        sq = np.einsum("ij,ij->i", block, block)
        if p == 4:
            sq = sq * sq
        total += float(sq.sum())
        remaining -= rows
    return total / num_samples


def moment_closed_form(d: int, p: int) -> float:
    """Exact E||u||^p for a d-dimensional standard normal, p in {2,4}."""
    if p == 2:
        return float(d)
    if p == 4:
        return float(d * d + 2 * d)
    raise ValueError(f"unsupported moment order p={p}")


def moment_variance(d: int, p: int) -> float:
    """Exact Var(||u||^p) for chi-square_d, used for 3-sigma test bands."""
    if p == 2:
        return float(2 * d)
    if p == 4:
        # Var(X^2) for X ~ chi2_d: E X^4 - (E X^2)^2 = 8 d (d+2) (d+3)
        return float(8 * d * (d + 2) * (d + 3))
    raise ValueError(f"unsupported moment order p={p}")
