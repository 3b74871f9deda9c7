"""File formats: chunking corpora, n-best lists, sparse documents,
configs, run logs and checkpoints.  All line-oriented UTF-8 text.
"""

from __future__ import annotations

import csv
import math
import warnings
from typing import Dict, List, Optional, Tuple

from szopt.errors import ConfigError, DataError
from szopt.metrics import sentence_bleu_smoothed
from szopt.optimizer import Row, RunLog
from szopt.sparsevec import SparseVector, read_vectors, write_vectors
from szopt.structpred import (FeatureIndex, Instance, SequenceInstance,
                              multiclass_instance)

RUNLOG_HEADER = ["iter", "loss", "avg_cum_loss", "nbar", "dev_metric"]


def reduce_chunk_tag(tag: str) -> str:
    """Collapse typed chunk tags to the noun-phrase task's {B, I, O}."""
    if tag == "B-NP":
        return "B"
    if tag == "I-NP":
        return "I"
    return "O"


def parse_conll(path: str, strict: bool = True) -> List[SequenceInstance]:
    """Read 3-column chunking data; sentences are blank-line separated.

    strict aborts on the first malformed line or invalid tag sequence;
    lenient mode drops the offending sentence and warns.
    """
    sentences: List[SequenceInstance] = []
    tokens: List[Tuple[str, str]] = []
    tags: List[str] = []
    bad_line: Optional[str] = None

    def flush():
        nonlocal tokens, tags, bad_line
        if bad_line is not None:
            warnings.warn(f"{path}: skipping sentence ({bad_line})")
        elif tokens:
            try:
                sentences.append(SequenceInstance(len(sentences), tokens, tags))
            except ValueError as e:
                if strict:
                    raise DataError(f"{path}: {e}") from e
                warnings.warn(f"{path}: skipping sentence ({e})")
        tokens, tags, bad_line = [], [], None

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                flush()
                continue
            cols = line.split()
            if len(cols) != 3:
                msg = f"line {lineno}: expected 3 columns, got {len(cols)}"
                if strict:
                    raise DataError(f"{path}: {msg}")
                bad_line = bad_line or msg
                continue
            word, pos, tag = cols
            tokens.append((word, pos))
            tags.append(reduce_chunk_tag(tag))
    flush()
    return sentences


def _nbest_blocks(path: str) -> List[Tuple]:
    blocks: List[Tuple] = []  # (id, ref, [(toks, feats)]) in file order
    by_id: Dict[str, int] = {}
    arity: Optional[int] = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split("|||")]
            if len(parts) not in (3, 4):
                raise DataError(f"{path}: line {lineno}: expected 3 or 4 "
                                f"'|||' fields, got {len(parts)}")
            sid = parts[0]
            toks = tuple(parts[1].split())
            try:
                feats = [float(f) for f in parts[2].split()]
            except ValueError as e:
                raise DataError(f"{path}: line {lineno}: bad feature value ({e})") from e
            if arity is None:
                arity = len(feats)
            elif len(feats) != arity:
                raise DataError(f"{path}: line {lineno}: feature arity "
                                f"{len(feats)} != {arity}")
            if sid not in by_id:
                if len(parts) != 4 or not parts[3]:
                    raise DataError(f"{path}: line {lineno}: first hypothesis of "
                                    f"id {sid} must carry the reference")
                by_id[sid] = len(blocks)
                blocks.append((sid, tuple(parts[3].split()), []))
            blocks[by_id[sid]][2].append((toks, feats))
    return blocks


def parse_nbest(path: str) -> List[Instance]:
    """Read `id ||| tokens ||| features ||| ref` hypothesis blocks.

    The reference must appear on the first line of each id block; the
    dense features are embedded as sparse vectors over indices 0..d-1 and
    the hidden loss is 1 - smoothed sentence BLEU against the reference.
    """
    instances = []
    for sid, ref, hyps in _nbest_blocks(path):
        arity = len(hyps[0][1])
        outputs = [toks for toks, _ in hyps]
        features = [SparseVector(arity, {i: v for i, v in enumerate(f) if v != 0.0})
                    for _, f in hyps]
        losses = [1.0 - sentence_bleu_smoothed(toks, ref) for toks, _ in hyps]
        instances.append(Instance(sid, outputs, features, losses))
    return instances


def parse_nbest_refs(path: str) -> List[Tuple[str, ...]]:
    """References per id block, aligned with parse_nbest's instance order."""
    return [ref for _, ref, _ in _nbest_blocks(path)]


def parse_docs(path: str) -> List[Instance]:
    """Read `classes=<C> vocab=<V>` then `class<TAB>i:v ...` documents."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        fields = dict(f.split("=", 1) for f in header.split() if "=" in f)
        if "classes" not in fields or "vocab" not in fields:
            raise DataError(f"{path}: header must declare classes= and vocab=, "
                            f"got {header!r}")
        num_classes = int(fields["classes"])
        vocab = int(fields["vocab"])
        instances = []
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            gold_s, _, rest = line.partition("\t")
            try:
                gold = int(gold_s)
            except ValueError as e:
                raise DataError(f"{path}: line {lineno}: bad class ({e})") from e
            if not 0 <= gold < num_classes:
                raise DataError(f"{path}: line {lineno}: class {gold} "
                                f">= classes={num_classes}")
            entries: Dict[int, float] = {}
            for pair in rest.split():
                idx_s, _, val_s = pair.partition(":")
                try:
                    idx, val = int(idx_s), float(val_s)
                except ValueError as e:
                    raise DataError(f"{path}: line {lineno}: bad term {pair!r}") from e
                if not 0 <= idx < vocab:
                    raise DataError(f"{path}: line {lineno}: index {idx} "
                                    f">= vocab={vocab}")
                if not math.isfinite(val):
                    raise DataError(f"{path}: line {lineno}: non-finite weight")
                if idx in entries:
                    warnings.warn(f"{path}: line {lineno}: duplicate index {idx}, "
                                  f"last value wins")
                entries[idx] = val
            doc = SparseVector(vocab, entries)
            instances.append(multiclass_instance(doc, num_classes, gold,
                                                 doc_id=len(instances)))
    return instances


def write_runlog(log: RunLog, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUNLOG_HEADER)
        for r in log.rows:
            writer.writerow([r.iter, repr(r.loss), repr(r.avg_cum_loss), r.nbar,
                             "" if r.dev_metric is None else repr(r.dev_metric)])


def read_runlog(path: str) -> RunLog:
    rows: List[Row] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RUNLOG_HEADER:
            raise DataError(f"{path}: bad run log header {header!r}")
        for rec in reader:
            if len(rec) != 5:
                raise DataError(f"{path}: bad run log row {rec!r}")
            rows.append(Row(int(rec[0]), float(rec[1]), float(rec[2]), int(rec[3]),
                            None if rec[4] == "" else float(rec[4])))
    return RunLog(rows)


def write_checkpoint(w: SparseVector, path: str) -> None:
    write_vectors(path, w.dim, [w])


def read_checkpoint(path: str) -> SparseVector:
    dim, vectors = read_vectors(path)
    if len(vectors) != 1:
        raise DataError(f"{path}: expected a single weight vector, "
                        f"got {len(vectors)}")
    return vectors[0]


def _auto_type(s: str):
    low = s.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def parse_config(path: str) -> Dict[str, object]:
    """`key = value` lines; # starts a comment; values are auto-typed."""
    out: Dict[str, object] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            if not eq or not key.strip():
                raise ConfigError(f"{path}: line {lineno}: expected key = value, "
                                  f"got {raw.strip()!r}")
            out[key.strip()] = _auto_type(value.strip())
    return out


def write_registry(registry: FeatureIndex, path: str) -> None:
    """One feature name per line, line number = feature index."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(registry.size):
            fh.write(registry.name(i) + "\n")


def read_registry(path: str) -> FeatureIndex:
    reg = FeatureIndex()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            name = line.rstrip("\n")
            if name:
                reg.intern(name)
    return reg.freeze()
