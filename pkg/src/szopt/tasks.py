"""Supervised-to-bandit harnesses: streams, dev evaluation, decoding.

Each task turns its dataset into the instance stream run() consumes and
provides the dev metric used for early stopping.  Chunking re-decodes a
fresh k-best candidate set under the current weights at every step, so
its stream yields factories that run() calls with the optimizer state;
the other tasks have static candidate sets.
"""

from __future__ import annotations

import numpy as np

from szopt.errors import ConfigError
from szopt.metrics import corpus_bleu, corpus_chunk_f1
from szopt.objectives import SyntheticFunction, SyntheticSample
from szopt.perturb import RngStream
from szopt.sparsevec import SparseVector
from szopt.structpred import (LABELS, FeatureIndex, Instance, LinearModel,
                              SequenceInstance, _kbest_paths,
                              emission_index_arrays, emissions_from_dense,
                              register_chunking_features)

STREAM_DATA = 1


def shuffled_epochs(items, seed: int):
    """Cycle items forever, reshuffling deterministically each epoch."""
    rng = RngStream(seed, STREAM_DATA)
    n = len(items)
    while True:
        order = np.argsort(rng.raw(n), kind="stable")
        for j in order:
            yield items[int(j)]


def _dense_ext(w: SparseVector) -> np.ndarray:
    out = np.zeros(w.dim + 1)
    for i, v in w:
        out[i] = v
    return out


def _span_key(codes: np.ndarray) -> tuple:
    """Spans of a {0:O,1:B,2:I} code sequence as a hashable tuple."""
    spans = []
    start = -1
    for j, c in enumerate(codes):
        if c == 1 or (c == 2 and start < 0):
            if start >= 0:
                spans.append((start, j))
            start = j
        elif c == 0:
            if start >= 0:
                spans.append((start, j))
            start = -1
    if start >= 0:
        spans.append((start, len(codes)))
    return tuple(spans)


def _f1_from_spans(pred: tuple, gold: frozenset) -> float:
    if not pred and not gold:
        return 1.0
    hits = len(gold.intersection(pred))
    if hits == 0:
        return 0.0
    p = hits / len(pred)
    r = hits / len(gold)
    return 2 * p * r / (p + r)


class ChunkingTask:
    """Bandit chunking: k-best candidates under the current weights.

    The feature registry is built from the training sentences once and
    frozen; dev selection and test evaluation use corpus span F1 of the
    Viterbi decode.
    """

    name = "chunking"

    def __init__(self, train: list, dev: list, k: int = 20,
                 registry: FeatureIndex = None):
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
        if registry is None:
            registry = register_chunking_features(train, FeatureIndex())
        if not registry.frozen:
            raise ConfigError("feature registry must be frozen")
        self.train = list(train)
        self.dev = list(dev)
        self.k = k
        self.registry = registry
        self.dim = registry.size
        self._label_codes = {lab: i for i, lab in enumerate(LABELS)}
        self._gold_spans = {}
        self._gold_codes = {}
        for seq in self.train + self.dev:
            codes = np.array([self._label_codes[t] for t in seq._gold_tags],
                             dtype=np.int8)
            self._gold_codes[id(seq)] = codes
            self._gold_spans[id(seq)] = frozenset(_span_key(codes))

    def stream(self, seed: int):
        for seq in shuffled_epochs(self.train, seed):
            yield lambda state, s=seq: self.make_instance(s, state.w_ext)

    def make_instance(self, seq: SequenceInstance, w_ext: np.ndarray) -> Instance:
        idx = emission_index_arrays(seq, self.registry)
        em = emissions_from_dense(idx, w_ext)
        paths, _ = _kbest_paths(em, self.k)
        L = idx.shape[0]
        prev = np.zeros_like(paths)
        prev[:, 1:] = paths[:, :-1]
        states = 3 * prev + paths
        rows = idx[np.arange(L)[None, :], states].reshape(len(paths), -1)
        uniq = np.unique(rows)
        active = uniq[uniq < self.dim].astype(np.int64)
        gold = self._gold_spans[id(seq)]
        losses = [1.0 - _f1_from_spans(_span_key(p), gold) for p in paths]
        outputs = [tuple(LABELS[c] for c in p) for p in paths]
        return Instance.from_index_rows(seq.id, outputs, losses, self.dim,
                                        rows, active)

    def decode(self, w_ext: np.ndarray, seq: SequenceInstance) -> np.ndarray:
        idx = emission_index_arrays(seq, self.registry)
        em = emissions_from_dense(idx, w_ext)
        path, _ = _kbest_paths(em, 1)
        return path[0]

    def corpus_f1(self, w: SparseVector, seqs: list) -> float:
        w_ext = _dense_ext(w)
        hits = n_pred = n_gold = 0
        for seq in seqs:
            pred = _span_key(self.decode(w_ext, seq))
            gold = self._gold_spans.get(id(seq))
            if gold is None:
                gold = frozenset(_span_key(np.array(
                    [self._label_codes[t] for t in seq._gold_tags], dtype=np.int8)))
            hits += len(gold.intersection(pred))
            n_pred += len(pred)
            n_gold += len(gold)
        if n_pred == 0 and n_gold == 0:
            return 1.0
        if hits == 0:
            return 0.0
        p = hits / n_pred
        r = hits / n_gold
        return 2 * p * r / (p + r)

    def dev_eval(self, w: SparseVector) -> float:
        return 1.0 - self.corpus_f1(w, self.dev)

    def model(self, w: SparseVector) -> LinearModel:
        return LinearModel(w, self.registry)


class CandidateListTask:
    """Static candidate sets (n-best reranking, multiclass documents)."""

    def __init__(self, name: str, train: list, dev: list, dim: int):
        if not train:
            raise ConfigError(f"{name}: empty training set")
        self.name = name
        self.train = list(train)
        self.dev = list(dev)
        self.dim = dim

    def stream(self, seed: int):
        return shuffled_epochs(self.train, seed)

    def dev_eval(self, w: SparseVector) -> float:
        from szopt.optimizer import dev_map_loss
        if not self.dev:
            return 0.0
        return dev_map_loss(w, self.dev)


def rerank_task(train: list, dev: list) -> CandidateListTask:
    return CandidateListTask("rerank", train, dev, train[0].dim if train else 0)


def multiclass_task(train: list, dev: list) -> CandidateListTask:
    return CandidateListTask("multiclass", train, dev, train[0].dim if train else 0)


class SyntheticTask:
    """Streams fresh sample indices against one zoo function."""

    name = "synth"

    def __init__(self, func: SyntheticFunction):
        self.func = func
        self.dim = func.dim

    def stream(self, seed: int):
        rng = RngStream(seed, STREAM_DATA)
        while True:
            for x in rng.raw(256):
                yield SyntheticSample(self.func, int(x >> np.uint64(1)))

    def dev_eval(self, w: SparseVector) -> float:
        # mean objective on a fixed probe set; cheap and deterministic
        xs = np.arange(64)
        idx = self.func.active_indices_batch(xs)
        w_ext = _dense_ext(w)
        V = w_ext[idx]
        return float(self.func.value_rows(V, xs, idx).mean())


def select_outputs(instances, w: SparseVector):
    """Argmax candidate output per instance under the given weights."""
    w_ext = _dense_ext(w)
    picked = []
    for inst in instances:
        if inst._row_idx is not None:
            scores = w_ext[inst._row_idx].sum(axis=1)
        else:
            scores = np.array([sum(v * w_ext[i] for i, v in phi)
                               for phi in inst.features])
        picked.append(inst.outputs[int(np.argmax(scores))])
    return picked


def rerank_corpus_bleu(instances, refs, w: SparseVector) -> float:
    hyps = select_outputs(instances, w)
    return corpus_bleu(list(zip(hyps, refs)))


def multiclass_accuracy(instances, golds, w: SparseVector) -> float:
    picked = select_outputs(instances, w)
    right = sum(1 for c, g in zip(picked, golds) if c == g)
    return right / len(instances)
