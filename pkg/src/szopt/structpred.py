"""Linear structured prediction over explicit candidate sets.

Chunking is modelled with label-bigram states: each position carries a
(previous, current) tag pair from {O,B,I}^2, giving 9 states, of which
(O,I) is invalid everywhere and positions 0 only admits a virtual O
predecessor.  Viterbi and k-best decoding run on this lattice; candidate
sets for bandit training are materialized by k-best extraction.

Feature templates per position and state pair (16 when all windows are
in range): POS unigrams at offsets -2..2, POS bigrams and trigrams
anchored at offsets -1 and 0, word unigrams at -2..2, word bigrams at
-1 and 0.  A template whose window leaves the sentence does not fire at
all; a 1-token sentence therefore only produces unigram features.
Names are rendered as `template|context tokens|prev,cur`.

Index arrays cache each sentence's feature ids with a sentinel (one past
the registry size) standing in for unknown features, so emission scores
and candidate feature rows reduce to gathers against a weight vector
extended by one zero slot.
"""

from __future__ import annotations

from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from szopt.metrics import chunk_f1
from szopt.sparsevec import ActiveSet, SparseVector, dot

LABELS = ("O", "B", "I")
LABEL_INDEX = {lab: i for i, lab in enumerate(LABELS)}
BIGRAM_STATES: Tuple[Tuple[str, str], ...] = tuple(
    (p, c) for p in LABELS for c in LABELS)  # index = 3*prev + cur
STATE_INDEX = {pc: i for i, pc in enumerate(BIGRAM_STATES)}
INVALID_STATE = STATE_INDEX[("O", "I")]  # I may not follow O
START_STATES = (STATE_INDEX[("O", "O")], STATE_INDEX[("O", "B")])
NUM_STATES = 9
NUM_TEMPLATES = 16

# predecessor state indices for each state: preds of (a, b) are (z, a)
_PRED = np.array([[3 * z + (s // 3) for z in range(3)] for s in range(NUM_STATES)],
                 dtype=np.int64)
_STATE_SUFFIX = tuple(f"|{p},{c}" for p, c in BIGRAM_STATES)


class FeatureIndex:
    """Append-only name -> index registry, frozen before scoring."""

    __slots__ = ("_index", "_names", "frozen")

    def __init__(self):
        self._index: Dict[str, int] = {}
        self._names: List[str] = []
        self.frozen = False

    @property
    def size(self) -> int:
        return len(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def intern(self, name: str) -> int:
        idx = self._index.get(name)
        if idx is None:
            if self.frozen:
                raise ValueError(f"registry is frozen; cannot intern {name!r}")
            idx = len(self._names)
            self._index[name] = idx
            self._names.append(name)
        return idx

    def lookup(self, name: str) -> Optional[int]:
        return self._index.get(name)

    def name(self, idx: int) -> str:
        return self._names[idx]

    def freeze(self) -> "FeatureIndex":
        self.frozen = True
        return self


class LinearModel:
    __slots__ = ("weights", "feature_space")

    def __init__(self, weights: SparseVector, feature_space: FeatureIndex):
        if weights.dim != feature_space.size:
            raise ValueError(
                f"weight dim {weights.dim} != feature space size {feature_space.size}")
        self.weights = weights
        self.feature_space = feature_space

    @classmethod
    def zeros(cls, feature_space: FeatureIndex) -> "LinearModel":
        return cls(SparseVector(feature_space.size, {}), feature_space)


class Instance:
    """A candidate set with hidden per-candidate losses.

    Learners see ids, outputs, features and the active set; the loss of a
    candidate is only surfaced through bandit feedback operations, which
    live in modules that are allowed to touch _losses.

    Count-valued feature vectors (the chunking case) can alternatively be
    supplied as index rows: a (C, T) int32 matrix of feature ids per
    candidate, with the dimension itself as sentinel padding.  Scoring
    then reduces to gathers and the SparseVector features are only
    materialized if somebody asks for them.
    """

    __slots__ = ("id", "outputs", "_losses", "active_set", "num_candidates",
                 "dim", "_features", "_row_idx", "_row_pos", "_active_idx_arr")

    def __init__(self, id, outputs: Sequence, features: Sequence[SparseVector],
                 losses: Sequence[float], active_set: Optional[ActiveSet] = None):
        if len(features) == 0:
            raise ValueError("instance needs at least one candidate")
        if not (len(outputs) == len(features) == len(losses)):
            raise ValueError("candidate field lengths disagree")
        dim = features[0].dim
        for phi in features:
            if phi.dim != dim:
                raise ValueError("candidate feature dims disagree")
        self.id = id
        self.outputs = tuple(outputs)
        self.dim = dim
        self._features = tuple(features)
        self._set_losses(losses)
        if active_set is None:
            support = set()
            for phi in features:
                support.update(phi.indices())
            active_set = ActiveSet(dim, support)
        self.active_set = active_set
        self.num_candidates = len(features)
        self._row_idx = None
        self._row_pos = None
        self._active_idx_arr = None

    @classmethod
    def from_index_rows(cls, id, outputs: Sequence, losses: Sequence[float],
                        dim: int, row_idx: np.ndarray,
                        active_indices: np.ndarray) -> "Instance":
        """Build from per-candidate feature-id rows (sentinel == dim).

        active_indices must be the sorted union of the rows' real ids.
        """
        self = object.__new__(cls)
        self.id = id
        self.outputs = tuple(outputs)
        self.dim = int(dim)
        self._set_losses(losses)
        self.num_candidates = len(outputs)
        if row_idx.shape[0] != self.num_candidates:
            raise ValueError("row count != candidate count")
        self._features = None
        self._row_idx = row_idx
        self._active_idx_arr = np.asarray(active_indices, dtype=np.int64)
        # position of each slot inside the active set; the sentinel exceeds
        # every real id so it lands one past the end, matching a
        # zero-padded gather source
        self._row_pos = np.searchsorted(self._active_idx_arr, row_idx)
        self.active_set = ActiveSet(self.dim, self._active_idx_arr.tolist())
        return self

    def _set_losses(self, losses: Sequence[float]):
        for l in losses:
            if not 0.0 <= l <= 1.0:
                raise ValueError(f"loss {l} outside [0,1]")
        self._losses = tuple(float(l) for l in losses)

    @property
    def features(self) -> Tuple[SparseVector, ...]:
        if self._features is None:
            feats = []
            for row in self._row_idx:
                real = row[row != self.dim]
                idx, cnt = np.unique(real, return_counts=True)
                feats.append(SparseVector.from_arrays(self.dim, idx, cnt.astype(np.float64)))
            self._features = tuple(feats)
        return self._features

    def active_index_array(self) -> np.ndarray:
        if self._active_idx_arr is None:
            self._active_idx_arr = np.asarray(self.active_set.indices, dtype=np.int64)
        return self._active_idx_arr


class SequenceInstance:
    __slots__ = ("id", "tokens", "_gold_tags", "_cache")

    label_bigram_states = BIGRAM_STATES

    def __init__(self, id, tokens: Sequence[Tuple[str, str]], gold_tags: Sequence[str]):
        if len(tokens) == 0:
            raise ValueError("empty sentence")
        if len(tokens) != len(gold_tags):
            raise ValueError(f"{len(tokens)} tokens but {len(gold_tags)} tags")
        prev = "O"
        for j, t in enumerate(gold_tags):
            if t not in LABEL_INDEX:
                raise ValueError(f"invalid chunk tag {t!r} at position {j}")
            if t == "I" and prev == "O":
                raise ValueError(f"I follows O at position {j}: not valid BIO")
            prev = t
        self.id = id
        self.tokens = tuple((w, p) for w, p in tokens)
        self._gold_tags = tuple(gold_tags)
        self._cache = None  # (registry id, index array), built on first use

    def __len__(self) -> int:
        return len(self.tokens)


def position_templates(tokens: Sequence[Tuple[str, str]], i: int) -> List[str]:
    """The `template|context` strings firing at position i, fixed order."""
    L = len(tokens)
    out = []
    for d in (-2, -1, 0, 1, 2):
        j = i + d
        if 0 <= j < L:
            out.append(f"pu{d}|{tokens[j][1]}")
    for a in (-1, 0):
        j = i + a
        if 0 <= j and j + 1 < L:
            out.append(f"pb{a}|{tokens[j][1]} {tokens[j + 1][1]}")
    for a in (-1, 0):
        j = i + a
        if 0 <= j - 1 and j + 1 < L:
            out.append(f"pt{a}|{tokens[j - 1][1]} {tokens[j][1]} {tokens[j + 1][1]}")
    for d in (-2, -1, 0, 1, 2):
        j = i + d
        if 0 <= j < L:
            out.append(f"wu{d}|{tokens[j][0]}")
    for a in (-1, 0):
        j = i + a
        if 0 <= j and j + 1 < L:
            out.append(f"wb{a}|{tokens[j][0]} {tokens[j + 1][0]}")
    return out


def build_chunking_features(seq: SequenceInstance, registry: FeatureIndex
                            ) -> Iterator[Tuple[int, int, int]]:
    """Yield (position, state index, feature index) triples.

    In building mode every name is interned (all 9 state pairs per
    context, so any state can be scored later).  On a frozen registry
    unknown names are skipped.
    """
    frozen = registry.frozen
    lookup = registry.lookup
    intern = registry.intern
    for i in range(len(seq)):
        for base in position_templates(seq.tokens, i):
            for s, suffix in enumerate(_STATE_SUFFIX):
                if frozen:
                    idx = lookup(base + suffix)
                    if idx is None:
                        continue
                else:
                    idx = intern(base + suffix)
                yield i, s, idx


def register_chunking_features(seqs: Iterable[SequenceInstance],
                               registry: FeatureIndex) -> FeatureIndex:
    """Building pass: intern every feature of every sentence, then freeze."""
    if registry.frozen:
        raise ValueError("registry already frozen")
    for seq in seqs:
        for _ in build_chunking_features(seq, registry):
            pass
    return registry.freeze()


def emission_index_arrays(seq: SequenceInstance, registry: FeatureIndex) -> np.ndarray:
    """(L, 9, 16) int32 feature ids; missing slots hold the sentinel size.

    Cached on the sequence, keyed by registry identity.  Requires a
    frozen registry: scoring against a growing index would silently
    depend on visit order.
    """
    if not registry.frozen:
        raise ValueError("registry must be frozen before scoring")
    cached = seq._cache
    if cached is not None and cached[0] == id(registry):
        return cached[1]
    L = len(seq)
    sentinel = registry.size
    idx = np.full((L, NUM_STATES, NUM_TEMPLATES), sentinel, dtype=np.int32)
    lookup = registry.lookup
    for i in range(L):
        for t, base in enumerate(position_templates(seq.tokens, i)):
            for s, suffix in enumerate(_STATE_SUFFIX):
                fi = lookup(base + suffix)
                if fi is not None:
                    idx[i, s, t] = fi
    seq._cache = (id(registry), idx)
    return idx


def extended_dense(weights: SparseVector) -> np.ndarray:
    """Dense copy with one extra zero slot for the sentinel index."""
    w = np.zeros(weights.dim + 1)
    for i, v in weights:
        w[i] = v
    return w


def emissions_from_dense(idx: np.ndarray, w_ext: np.ndarray) -> np.ndarray:
    """(L, 9) state scores by summing the 16 template slots."""
    return w_ext[idx].sum(axis=2)


def _kbest_paths(emissions: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Exact k-best over the bigram lattice, as label-code paths.

    Returns (paths, scores): paths is (m, L) int8 with codes 0=O 1=B 2=I
    and m <= k, scores non-increasing.  Slot order under score ties is
    (lower state index, then lower predecessor rank), which makes the
    w=0 decode all-O.  Distinct slots always carry distinct tag
    sequences: a state path determines its tags and vice versa.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    L = emissions.shape[0]
    dp = np.full((NUM_STATES, k), -np.inf)
    for s in START_STATES:
        dp[s, 0] = emissions[0, s]
    bp_state = np.zeros((L, NUM_STATES, k), dtype=np.int8)
    bp_rank = np.zeros((L, NUM_STATES, k), dtype=np.int16)
    rows = np.arange(NUM_STATES)[:, None]
    for i in range(1, L):
        cand = dp[_PRED] + emissions[i][:, None, None]  # (9, 3, k)
        cand[INVALID_STATE] = -np.inf
        flat = cand.reshape(NUM_STATES, 3 * k)
        order = np.argsort(-flat, axis=1, kind="stable")[:, :k]
        dp = np.take_along_axis(flat, order, axis=1)
        bp_state[i] = _PRED[rows, order // k]
        bp_rank[i] = (order % k).astype(np.int16)
    final = dp.reshape(-1)  # state-major: slot = state*k + rank
    order = np.argsort(-final, kind="stable")[:k]
    keep = order[final[order] > -np.inf]
    m = len(keep)
    scores = final[keep]
    s = (keep // k).astype(np.int64)
    r = (keep % k).astype(np.int64)
    paths = np.empty((m, L), dtype=np.int8)
    for i in range(L - 1, 0, -1):
        paths[:, i] = s % 3
        s, r = bp_state[i, s, r].astype(np.int64), bp_rank[i, s, r].astype(np.int64)
    paths[:, 0] = (s % 3).astype(np.int8)
    return paths, scores


def kbest_from_emissions(emissions: np.ndarray, k: int
                         ) -> Tuple[List[List[str]], List[float]]:
    """String-tag view of _kbest_paths."""
    paths, scores = _kbest_paths(emissions, k)
    return [[LABELS[c] for c in row] for row in paths], [float(x) for x in scores]


def viterbi_from_emissions(emissions: np.ndarray) -> List[str]:
    tags_list, _ = kbest_from_emissions(emissions, 1)
    return tags_list[0]


def viterbi_decode(model: LinearModel, seq: SequenceInstance) -> List[str]:
    idx = emission_index_arrays(seq, model.feature_space)
    em = emissions_from_dense(idx, extended_dense(model.weights))
    return viterbi_from_emissions(em)


def kbest_decode(model: LinearModel, seq: SequenceInstance, k: int
                 ) -> List[Tuple[List[str], float]]:
    idx = emission_index_arrays(seq, model.feature_space)
    em = emissions_from_dense(idx, extended_dense(model.weights))
    tags_list, scores = kbest_from_emissions(em, k)
    return list(zip(tags_list, scores))


def sequence_features(seq: SequenceInstance, tags: Sequence[str],
                      registry: FeatureIndex) -> SparseVector:
    """Count vector of the features a tag sequence fires (valid BIO assumed)."""
    entries: Dict[int, float] = {}
    lookup = registry.lookup
    for i in range(len(seq)):
        prev = tags[i - 1] if i > 0 else "O"
        suffix = f"|{prev},{tags[i]}"
        for base in position_templates(seq.tokens, i):
            fi = lookup(base + suffix)
            if fi is not None:
                entries[fi] = entries.get(fi, 0.0) + 1.0
    return SparseVector(registry.size, entries)


def score_tags(model: LinearModel, seq: SequenceInstance, tags: Sequence[str]) -> float:
    return dot(model.weights, sequence_features(seq, tags, model.feature_space))


def as_candidate_instance(seq: SequenceInstance, model: LinearModel, k: int) -> Instance:
    """k-best candidates under the current weights, loss = 1 - span F1."""
    decoded = kbest_decode(model, seq, k)
    outputs = [tuple(tags) for tags, _ in decoded]
    features = [sequence_features(seq, tags, model.feature_space) for tags, _ in decoded]
    losses = [1.0 - chunk_f1(tags, seq._gold_tags) for tags, _ in decoded]
    return Instance(seq.id, outputs, features, losses)


def multiclass_instance(doc_vector: SparseVector, num_classes: int, gold: int,
                        doc_id=None) -> Instance:
    """One candidate per class; features are the doc vector shifted into
    the class's block of a num_classes*dim space."""
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    if not 0 <= gold < num_classes:
        raise ValueError(f"gold class {gold} outside 0..{num_classes - 1}")
    d = doc_vector.dim
    total = num_classes * d
    features = []
    losses = []
    for c in range(num_classes):
        off = c * d
        features.append(SparseVector(total, {off + i: v for i, v in doc_vector}))
        losses.append(0.0 if c == gold else 1.0)
    return Instance(doc_id, tuple(range(num_classes)), features, losses)
