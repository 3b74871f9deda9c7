import math

import pytest

from szopt.metrics import (ChunkSpan, chunk_f1, corpus_bleu, corpus_chunk_f1,
                           extract_spans, ngram_stats, sentence_bleu_smoothed,
                           zero_one_loss)

# Frozen decimal values, derived once by exact rational arithmetic from the
# metric definitions and pinned here to ten places.
GOLD_BLEU_DISJOINT = 0.0030213753973567683
GOLD_BLEU_ONE_HIT = 0.0015744053406497192
GOLD_BLEU_ONE_MISS = 0.0004978706836786395
GOLD_CORPUS_BLEU = 0.5341735956899848


class TestExtractSpans:
    def test_basic_bio(self):
        spans = extract_spans(["B", "I", "O", "B", "O"])
        assert spans == [ChunkSpan(0, 2, ""), ChunkSpan(3, 4, "")]

    def test_trailing_span_closes(self):
        assert extract_spans(["O", "B", "I"]) == [ChunkSpan(1, 3, "")]

    def test_orphan_i_opens(self):
        assert extract_spans(["I", "I", "O"]) == [ChunkSpan(0, 2, "")]

    def test_typed_tags(self):
        spans = extract_spans(["B-NP", "I-NP", "B-VP", "I-NP"])
        assert spans == [ChunkSpan(0, 2, "NP"), ChunkSpan(2, 3, "VP"),
                         ChunkSpan(3, 4, "NP")]

    def test_b_always_opens_fresh(self):
        assert extract_spans(["B", "B", "B"]) == [
            ChunkSpan(0, 1, ""), ChunkSpan(1, 2, ""), ChunkSpan(2, 3, "")]

    def test_bad_tag_rejected(self):
        with pytest.raises(ValueError):
            extract_spans(["B", "Q"])

    def test_empty_sequence(self):
        assert extract_spans([]) == []

    def test_empty_span_unconstructible(self):
        with pytest.raises(ValueError):
            ChunkSpan(3, 3)


class TestChunkF1:
    def test_frozen_example(self):
        got = chunk_f1(["B", "I", "O", "O", "O"], ["B", "I", "O", "B", "O"])
        assert got == pytest.approx(2 / 3, abs=1e-10)

    def test_perfect_and_empty(self):
        assert chunk_f1(["B", "I", "O"], ["B", "I", "O"]) == 1.0
        assert chunk_f1(["O", "O"], ["O", "O"]) == 1.0

    def test_no_overlap_zero(self):
        assert chunk_f1(["B", "O", "O"], ["O", "O", "B"]) == 0.0

    def test_boundary_sensitivity(self):
        # predicted span covers gold plus one token: no span-level credit
        assert chunk_f1(["B", "I", "I"], ["B", "I", "O"]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            chunk_f1(["B"], ["B", "O"])

    def test_symmetry(self):
        a = ["B", "I", "O", "B", "O"]
        b = ["B", "O", "O", "B", "I"]
        assert chunk_f1(a, b) == pytest.approx(chunk_f1(b, a))


class TestCorpusChunkF1:
    def test_counts_pool_across_sentences(self):
        pairs = [(["B", "O"], ["B", "O"]),
                 (["B", "I", "O"], ["O", "B", "I"])]
        # hits 1, pred 2, gold 2 -> P = R = F1 = 0.5
        assert corpus_chunk_f1(pairs) == pytest.approx(0.5)

    def test_not_mean_of_sentence_f1(self):
        pairs = [(["B"], ["B"]),
                 (["B", "B", "B", "B"], ["O", "O", "O", "O"])]
        pooled = corpus_chunk_f1(pairs)
        mean = (chunk_f1(*pairs[0]) + chunk_f1(*pairs[1])) / 2
        assert pooled == pytest.approx(1 / 3)
        assert pooled != pytest.approx(mean)

    def test_all_empty(self):
        assert corpus_chunk_f1([(["O"], ["O"])]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            corpus_chunk_f1([(["B"], ["B", "O"])])


class TestSentenceBleu:
    def test_identical_is_one(self):
        toks = "the cat sat on the mat".split()
        assert sentence_bleu_smoothed(toks, toks) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_frozen(self):
        got = sentence_bleu_smoothed(list("abcde"), list("vwxyz"))
        assert got == pytest.approx(GOLD_BLEU_DISJOINT, abs=1e-10)
        # closed form: all four orders floored at 0.01 / count
        assert got == pytest.approx(
            (0.01 / 5 * 0.01 / 4 * 0.01 / 3 * 0.01 / 2) ** 0.25, abs=1e-12)

    def test_short_hyp_one_hit_frozen(self):
        got = sentence_bleu_smoothed(["a"], ["a", "b", "c", "d"])
        assert got == pytest.approx(GOLD_BLEU_ONE_HIT, abs=1e-10)
        assert got == pytest.approx(math.exp(-3.0) * 0.01 ** 0.75, abs=1e-12)

    def test_short_hyp_one_miss_frozen(self):
        got = sentence_bleu_smoothed(["x"], ["a", "b", "c", "d"])
        assert got == pytest.approx(GOLD_BLEU_ONE_MISS, abs=1e-10)
        assert got == pytest.approx(math.exp(-3.0) * 0.01, abs=1e-12)

    def test_empty_hypothesis_zero(self):
        assert sentence_bleu_smoothed([], ["a"]) == 0.0

    def test_empty_reference_rejected(self):
        with pytest.raises(ValueError):
            sentence_bleu_smoothed(["a"], [])

    def test_word_order_matters(self):
        ref = "a b c d e".split()
        assert sentence_bleu_smoothed("a b c d e".split(), ref) > \
            sentence_bleu_smoothed("e d c b a".split(), ref)

    def test_no_brevity_penalty_for_long_hyp(self):
        ref = ["a", "b"]
        hyp = ["a", "b", "c", "d"]
        stats = ngram_stats(hyp, ref)
        assert stats.hyp_len == 4 and stats.ref_len == 2
        # bp = min(0, 1 - 2/4) -> exp(0) = 1; only precision terms remain
        got = sentence_bleu_smoothed(hyp, ref)
        p = (2 / 4) * (1 / 3) * (0.01 / 2) * 0.01
        assert got == pytest.approx(p ** 0.25, abs=1e-12)


class TestCorpusBleu:
    def test_frozen_example(self):
        pairs = [("the the the cat sat".split(),
                  "the cat sat on the mat".split()),
                 ("big dogs run fast".split(), "big dogs run fast".split())]
        assert corpus_bleu(pairs) == pytest.approx(GOLD_CORPUS_BLEU, abs=1e-10)

    def test_identical_corpus_is_one(self):
        pairs = [("a b c d".split(),) * 2, ("e f g h i".split(),) * 2]
        assert corpus_bleu(pairs) == pytest.approx(1.0, abs=1e-12)

    def test_unsmoothed_zero_on_missing_order(self):
        # no 4-gram overlap anywhere: corpus score collapses to zero
        assert corpus_bleu([("a b c d".split(), "a x y z".split())]) == 0.0

    def test_reduces_to_sentence_on_clean_single_pair(self):
        hyp = "the cat sat on the mat".split()
        ref = "the cat sat on a mat".split()
        stats = ngram_stats(hyp, ref)
        assert all(m > 0 for m in stats.matches)
        sent = sentence_bleu_smoothed(hyp, ref)
        assert corpus_bleu([(hyp, ref)]) == pytest.approx(sent, abs=1e-12)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            corpus_bleu([])

    def test_empty_reference_rejected(self):
        with pytest.raises(ValueError):
            corpus_bleu([(["a"], [])])

    def test_all_empty_hyps_zero(self):
        assert corpus_bleu([([], ["a"]), ([], ["b"])]) == 0.0


class TestZeroOne:
    def test_values(self):
        assert zero_one_loss(3, 3) == 0.0
        assert zero_one_loss("a", "b") == 1.0
