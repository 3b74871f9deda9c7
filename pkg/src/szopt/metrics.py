"""Task losses and corpus evaluation: chunk F1, BLEU, 0/1 accuracy."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

MAX_ORDER = 4
SMOOTH_FLOOR = 0.01


@dataclass(frozen=True)
class ChunkSpan:
    start: int
    end: int  # exclusive
    type: str = ""

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"empty span [{self.start},{self.end})")


def extract_spans(tags: Sequence[str]) -> List[ChunkSpan]:
    """BIO tags to spans.  An I without a preceding span opens a new one,
    as does an I whose type differs from the running span's."""
    spans = []
    start = None
    ctype = ""
    for j, tag in enumerate(tags):
        head, _, ttype = tag.partition("-")
        if head == "B" or (head == "I" and (start is None or ttype != ctype)):
            if start is not None:
                spans.append(ChunkSpan(start, j, ctype))
            start, ctype = j, ttype
        elif head == "O":
            if start is not None:
                spans.append(ChunkSpan(start, j, ctype))
            start = None
        elif head != "I":
            raise ValueError(f"invalid chunk tag {tag!r} at position {j}")
    if start is not None:
        spans.append(ChunkSpan(start, len(tags), ctype))
    return spans


def chunk_f1(pred_tags: Sequence[str], gold_tags: Sequence[str]) -> float:
    """Span-level F1; 1.0 when neither side has spans, 0.0 when P=R=0."""
    if len(pred_tags) != len(gold_tags):
        raise ValueError(f"length mismatch: {len(pred_tags)} pred vs {len(gold_tags)} gold")
    pred = set(extract_spans(pred_tags))
    gold = set(extract_spans(gold_tags))
    if not pred and not gold:
        return 1.0
    hits = len(pred & gold)
    if hits == 0:
        return 0.0
    p = hits / len(pred)
    r = hits / len(gold)
    return 2 * p * r / (p + r)


def corpus_chunk_f1(pairs: Iterable[Tuple[Sequence[str], Sequence[str]]]) -> float:
    """Aggregate-count span F1 over (pred, gold) tag sequence pairs."""
    hits = n_pred = n_gold = 0
    for pred_tags, gold_tags in pairs:
        if len(pred_tags) != len(gold_tags):
            raise ValueError(f"length mismatch: {len(pred_tags)} pred vs "
                             f"{len(gold_tags)} gold")
        pred = set(extract_spans(pred_tags))
        gold = set(extract_spans(gold_tags))
        hits += len(pred & gold)
        n_pred += len(pred)
        n_gold += len(gold)
    if n_pred == 0 and n_gold == 0:
        return 1.0
    if hits == 0:
        return 0.0
    p = hits / n_pred
    r = hits / n_gold
    return 2 * p * r / (p + r)


@dataclass
class NGramStats:
    """Clipped n-gram match and hypothesis counts for orders 1..4."""

    matches: List[int] = field(default_factory=lambda: [0] * MAX_ORDER)
    counts: List[int] = field(default_factory=lambda: [0] * MAX_ORDER)
    hyp_len: int = 0
    ref_len: int = 0

    def add(self, other: "NGramStats") -> None:
        for n in range(MAX_ORDER):
            self.matches[n] += other.matches[n]
            self.counts[n] += other.counts[n]
        self.hyp_len += other.hyp_len
        self.ref_len += other.ref_len


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def ngram_stats(hyp: Sequence[str], ref: Sequence[str]) -> NGramStats:
    stats = NGramStats(hyp_len=len(hyp), ref_len=len(ref))
    for n in range(1, MAX_ORDER + 1):
        hgrams = _ngrams(hyp, n)
        rgrams = _ngrams(ref, n)
        stats.counts[n - 1] = sum(hgrams.values())
        stats.matches[n - 1] = sum(min(c, rgrams[g]) for g, c in hgrams.items())
    return stats


def sentence_bleu_smoothed(hyp: Sequence[str], ref: Sequence[str]) -> float:
    """BLEU-4 with zero match counts replaced by 0.01; empty hyp scores 0.

    Orders longer than the hypothesis have no n-grams at all; their
    precision is taken as the floor value itself.
    """
    if len(ref) == 0:
        raise ValueError("empty reference")
    if len(hyp) == 0:
        return 0.0
    stats = ngram_stats(hyp, ref)
    log_sum = 0.0
    for m, t in zip(stats.matches, stats.counts):
        if t == 0:
            p = SMOOTH_FLOOR
        elif m == 0:
            p = SMOOTH_FLOOR / t
        else:
            p = m / t
        log_sum += math.log(p)
    bp = math.exp(min(0.0, 1.0 - len(ref) / len(hyp)))
    return bp * math.exp(log_sum / MAX_ORDER)


def corpus_bleu(pairs: Iterable[Tuple[Sequence[str], Sequence[str]]]) -> float:
    """Unsmoothed corpus BLEU-4 with aggregate counts and corpus BP."""
    total = NGramStats()
    n_pairs = 0
    for hyp, ref in pairs:
        if len(ref) == 0:
            raise ValueError("empty reference")
        n_pairs += 1
        total.add(ngram_stats(hyp, ref))
    if n_pairs == 0:
        raise ValueError("empty corpus")
    if total.hyp_len == 0:
        return 0.0
    log_sum = 0.0
    for m, t in zip(total.matches, total.counts):
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    bp = math.exp(min(0.0, 1.0 - total.ref_len / total.hyp_len))
    return bp * math.exp(log_sum / MAX_ORDER)


def zero_one_loss(pred, gold) -> float:
    return 0.0 if pred == gold else 1.0
