"""Sparse vectors over integer coordinates.

Weights, feature vectors and perturbations all live in R^n for n that can
be large (feature spaces are addressed by int32-range indices), but carry
few nonzeros.  The canonical representation is a dict from index to a
nonzero float: entries that are exactly 0.0 are dropped, so l0_norm is
just the dict size and iteration order is insertion order, which every
construction path keeps deterministic.

Vectors are immutable by convention once constructed; all operations here
return fresh vectors.  Optimizer inner loops that cannot afford a full
copy per iteration keep their own dense accumulator and materialize
vectors through this module at interface points (checkpoints, snapshots).
"""

from __future__ import annotations

from typing import Dict, Iterable, Iterator, List, Sequence, Tuple

import numpy as np


class SparseVector:
    """Immutable sparse vector: dimension plus index->value dict.

    Construction canonicalizes: exact-zero values are dropped, indices are
    validated against [0, dim).  NaN/Inf values are allowed in (they are
    detected downstream by the numerical guards), but zeros never survive.
    """

    __slots__ = ("dim", "entries")

    def __init__(self, dim: int, entries: Dict[int, float] | None = None):
        if dim < 0:
            raise ValueError(f"dim must be nonnegative, got {dim}")
        self.dim = int(dim)
        clean: Dict[int, float] = {}
        if entries:
            for i, v in entries.items():
                i = int(i)
                if not 0 <= i < self.dim:
                    raise IndexError(f"index {i} out of range for dim {self.dim}")
                v = float(v)
                if v != 0.0:
                    clean[i] = v
        self.entries = clean

    @classmethod
    def from_arrays(cls, dim: int, indices: Sequence[int], values: Sequence[float]) -> "SparseVector":
        """Build from parallel index/value sequences (zeros dropped)."""
        if len(indices) != len(values):
            raise ValueError("indices and values must have equal length")
        vec = cls(dim)
        entries = vec.entries
        for i, v in zip(indices, values):
            i = int(i)
            if not 0 <= i < dim:
                raise IndexError(f"index {i} out of range for dim {dim}")
            v = float(v)
            if v != 0.0:
                entries[i] = v
        return vec

    def get(self, i: int) -> float:
        return self.entries.get(i, 0.0)

    def __getitem__(self, i: int) -> float:
        return self.entries.get(i, 0.0)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Tuple[int, float]]:
        return iter(self.entries.items())

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return self.dim == other.dim and self.entries == other.entries

    def __repr__(self) -> str:
        head = ", ".join(f"{i}:{v:g}" for i, v in list(self.entries.items())[:6])
        tail = ", ..." if len(self.entries) > 6 else ""
        return f"SparseVector(dim={self.dim}, {{{head}{tail}}})"

    def indices(self) -> List[int]:
        return list(self.entries.keys())

    def to_dense(self) -> np.ndarray:
        """Dense float64 copy; only for small dims (tests, tiny problems)."""
        out = np.zeros(self.dim)
        for i, v in self.entries.items():
            out[i] = v
        return out

    def scale(self, alpha: float) -> "SparseVector":
        alpha = float(alpha)
        if alpha == 0.0:
            return SparseVector(self.dim)
        out = SparseVector(self.dim)
        out.entries.update((i, v * alpha) for i, v in self.entries.items())
        # multiplication can underflow to zero; keep canonical
        for i in [i for i, v in out.entries.items() if v == 0.0]:
            del out.entries[i]
        return out


class ActiveSet:
    """Ordered set of coordinate indices (the perturbation support).

    Keeps both a tuple (deterministic order, as given) and a frozenset for
    membership tests.  Indices must be unique and in [0, dim).
    """

    __slots__ = ("dim", "indices", "_members")

    def __init__(self, dim: int, indices: Iterable[int]):
        self.dim = int(dim)
        idx = tuple(int(i) for i in indices)
        for i in idx:
            if not 0 <= i < self.dim:
                raise IndexError(f"index {i} out of range for dim {self.dim}")
        self._members = frozenset(idx)
        if len(self._members) != len(idx):
            raise ValueError("duplicate indices in active set")
        self.indices = idx

    @classmethod
    def full(cls, dim: int) -> "ActiveSet":
        return cls(dim, range(dim))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __contains__(self, i: int) -> bool:
        return i in self._members

    def __eq__(self, other) -> bool:
        if not isinstance(other, ActiveSet):
            return NotImplemented
        return self.dim == other.dim and self.indices == other.indices

    def __repr__(self) -> str:
        return f"ActiveSet(dim={self.dim}, size={len(self.indices)})"

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)


def dot(x: SparseVector, y: SparseVector) -> float:
    """Inner product; iterates the smaller dict."""
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")
    a, b = x.entries, y.entries
    if len(b) < len(a):
        a, b = b, a
    total = 0.0
    for i, v in a.items():
        w = b.get(i)
        if w is not None:
            total += v * w
    return total


def axpy(alpha: float, x: SparseVector, y: SparseVector) -> SparseVector:
    """Return y + alpha * x in canonical form (exact zeros dropped)."""
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")
    alpha = float(alpha)
    out = SparseVector(y.dim)
    out.entries.update(y.entries)
    if alpha != 0.0:
        ent = out.entries
        for i, v in x.entries.items():
            s = ent.get(i, 0.0) + alpha * v
            if s == 0.0:
                ent.pop(i, None)
            else:
                ent[i] = s
    return out


def l0_norm(x: SparseVector) -> int:
    """Number of nonzeros; exactly len of the canonical dict."""
    return len(x.entries)


def l2_norm_sq(x: SparseVector) -> float:
    return sum(v * v for v in x.entries.values())


def restrict(x: SparseVector, active: ActiveSet) -> SparseVector:
    """Restriction of x to the active set (coordinates outside are zeroed)."""
    if x.dim != active.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {active.dim}")
    out = SparseVector(x.dim)
    ent = out.entries
    for i, v in x.entries.items():
        if i in active:
            ent[i] = v
    return out


# --- text serialization ----------------------------------------------------
#
# File layout: a `dim=<n>` header line, then one vector per line as
# space-separated `index:value` pairs (empty line = empty vector).  Values
# use repr() of the float, which round-trips bitwise.

def format_vector(x: SparseVector) -> str:
    return " ".join(f"{i}:{v!r}" for i, v in sorted(x.entries.items()))


def parse_vector(dim: int, line: str) -> SparseVector:
    vec = SparseVector(dim)
    line = line.strip()
    if not line:
        return vec
    for pair in line.split():
        try:
            idx_s, val_s = pair.split(":", 1)
            i = int(idx_s)
            v = float(val_s)
        except ValueError as e:
            raise ValueError(f"malformed index:value pair {pair!r}") from e
        if not 0 <= i < dim:
            raise IndexError(f"index {i} out of range for dim {dim}")
        if v != 0.0:
            vec.entries[i] = v
    return vec


def write_vectors(path: str, dim: int, vectors: Iterable[SparseVector]) -> None:
    with open(path, "w") as fh:
        fh.write(f"dim={dim}\n")
        for x in vectors:
            if x.dim != dim:
                raise ValueError(f"vector dim {x.dim} does not match header dim {dim}")
            fh.write(format_vector(x) + "\n")


def read_vectors(path: str) -> Tuple[int, List[SparseVector]]:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("dim="):
            raise ValueError(f"missing dim= header in {path}")
        try:
            dim = int(header[len("dim="):].strip())
        except ValueError as e:
            raise ValueError(f"bad dim= header in {path}") from e
        vectors = [parse_vector(dim, line) for line in fh.read().splitlines()]
    return dim, vectors
