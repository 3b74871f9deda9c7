"""Deterministic miniature corpora for the three tasks.

Desk-scale stand-ins for the chunking / n-best / document datasets: the
same seed always produces byte-identical files.  The chunking grammar
keeps POS tags informative but not sufficient (nouns and adjectives also
occur outside noun phrases), so models must use lexical context; the
n-best lists hide the edit count in one feature among fourteen; the
document vectors mix class-specific and shared vocabulary.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from szopt.perturb import RngStream
from szopt.structpred import SequenceInstance

STREAM_CHUNK = 7
STREAM_NBEST = 8
STREAM_DOCS = 9

_VOCAB = {
    "DT": 5, "JJ": 25, "NN": 70, "VB": 30, "RB": 12, "IN": 8,
}


def _word(pos: str, i: int) -> str:
    return f"{pos.lower()}{i}"


def _pick_word(rng: RngStream, pos: str) -> str:
    # triangular-ish skew: min of two uniforms favors low ids, giving a
    # few frequent words and a long tail
    u = rng.uniforms(2)
    return _word(pos, int(min(u) * _VOCAB[pos]))


def _uniform_int(rng: RngStream, bound: int) -> int:
    return int(rng.integers(bound, 1)[0])


def make_chunking_corpus(num_sentences: int, seed: int) -> List[SequenceInstance]:
    """Noun-phrase chunking sentences over a closed fake vocabulary.

    Every sentence has the same clause shape (three-token subject NP, verb,
    two-token object NP), so the gold tag pattern is constant and candidate
    loss profiles are comparable across sentences.  Value-history baselines
    need that: sentence-to-sentence loss spread would otherwise drown the
    perturbation signal they estimate.  Lexical variety comes from the
    sampled words alone.
    """
    rng = RngStream(seed, STREAM_CHUNK)
    out = []
    for sid in range(num_sentences):
        tokens: List[Tuple[str, str]] = []
        tags: List[str] = []

        tokens.append((_pick_word(rng, "DT"), "DT"))
        tags.append("B")
        tokens.append((_pick_word(rng, "JJ"), "JJ"))
        tags.append("I")
        tokens.append((_pick_word(rng, "NN"), "NN"))
        tags.append("I")

        tokens.append((_pick_word(rng, "VB"), "VB"))
        tags.append("O")

        # object NP opens with a determiner or a bare adjective, same tag
        pos = "DT" if rng.uniforms(1)[0] < 0.5 else "JJ"
        tokens.append((_pick_word(rng, pos), pos))
        tags.append("B")
        tokens.append((_pick_word(rng, "NN"), "NN"))
        tags.append("I")
        out.append(SequenceInstance(sid, tokens, tags))
    return out


def write_conll(seqs: Sequence[SequenceInstance], path: str) -> None:
    typed = {"B": "B-NP", "I": "I-NP", "O": "O"}
    with open(path, "w", encoding="utf-8") as fh:
        for seq in seqs:
            for (word, pos), tag in zip(seq.tokens, seq._gold_tags):
                fh.write(f"{word} {pos} {typed[tag]}\n")
            fh.write("\n")


NBEST_ARITY = 14
_NBEST_VOCAB = 45


def make_nbest_lines(num_ids: int, hyps_per_id: int, seed: int) -> List[str]:
    """n-best blocks whose feature 0 tracks edit count (negated, noisy);
    the other 13 features are distractors."""
    rng = RngStream(seed, STREAM_NBEST)
    lines = []
    for sid in range(num_ids):
        ref_len = 6 + _uniform_int(rng, 6)
        ref = [f"w{_uniform_int(rng, _NBEST_VOCAB)}" for _ in range(ref_len)]
        for h in range(hyps_per_id):
            edits = _uniform_int(rng, 5) if h > 0 else _uniform_int(rng, 2)
            hyp = list(ref)
            for _ in range(edits):
                pos = _uniform_int(rng, len(hyp))
                if rng.uniforms(1)[0] < 0.25 and len(hyp) > 2:
                    hyp.pop(pos)
                else:
                    hyp[pos] = f"w{_uniform_int(rng, _NBEST_VOCAB)}"
            feats = np.empty(NBEST_ARITY)
            feats[0] = -edits + 0.3 * rng.normals(1)[0]
            feats[1] = len(hyp) / ref_len
            feats[2:] = rng.normals(NBEST_ARITY - 2)
            feat_s = " ".join(f"{f:.4f}" for f in feats)
            if h == 0:
                lines.append(f"{sid} ||| {' '.join(hyp)} ||| {feat_s} ||| {' '.join(ref)}")
            else:
                lines.append(f"{sid} ||| {' '.join(hyp)} ||| {feat_s}")
    return lines


def write_nbest(num_ids: int, hyps_per_id: int, seed: int, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in make_nbest_lines(num_ids, hyps_per_id, seed):
            fh.write(line + "\n")


def write_docs(num_docs: int, num_classes: int, vocab: int, seed: int,
               path: str) -> None:
    """Sparse tf-idf-like documents with overlapping class vocabularies."""
    rng = RngStream(seed, STREAM_DOCS)
    width = vocab // num_classes
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"classes={num_classes} vocab={vocab}\n")
        for _ in range(num_docs):
            gold = _uniform_int(rng, num_classes)
            lo = gold * width
            n_terms = 8 + _uniform_int(rng, 8)
            entries = {}
            for _ in range(n_terms):
                if rng.uniforms(1)[0] < 0.75:
                    idx = lo + _uniform_int(rng, width)
                else:
                    idx = _uniform_int(rng, vocab)
                w = 0.2 + 1.3 * min(rng.uniforms(2))
                entries[idx] = round(entries.get(idx, 0.0) + w, 4)
            terms = " ".join(f"{i}:{entries[i]}" for i in sorted(entries))
            fh.write(f"{gold}\t{terms}\n")
