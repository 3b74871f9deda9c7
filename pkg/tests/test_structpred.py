import itertools
import os

import numpy as np
import pytest

from szopt.metrics import chunk_f1
from szopt.sparsevec import ActiveSet, SparseVector
from szopt.structpred import (BIGRAM_STATES, FeatureIndex, Instance,
                              LinearModel, SequenceInstance,
                              as_candidate_instance, build_chunking_features,
                              emission_index_arrays, emissions_from_dense,
                              extended_dense, kbest_decode,
                              kbest_from_emissions, multiclass_instance,
                              position_templates, register_chunking_features,
                              score_tags, sequence_features, viterbi_decode)

GOLDEN = os.path.join(os.path.dirname(__file__), "golden",
                      "chunk_feature_names.txt")

THREE = [("the", "DT"), ("big", "JJ"), ("dog", "NN")]


def three_token_registry():
    seq = SequenceInstance(0, THREE, ["B", "I", "I"])
    reg = FeatureIndex()
    register_chunking_features([seq], reg)
    return seq, reg


def valid_bio_sequences(length):
    for tags in itertools.product("OBI", repeat=length):
        prev = "O"
        ok = True
        for t in tags:
            if t == "I" and prev == "O":
                ok = False
                break
            prev = t
        if ok:
            yield list(tags)


class TestSequenceInstance:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            SequenceInstance(0, [], [])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            SequenceInstance(0, THREE, ["B", "I"])

    def test_rejects_bad_tag(self):
        with pytest.raises(ValueError):
            SequenceInstance(0, THREE, ["B", "I", "X"])

    def test_rejects_i_after_o(self):
        with pytest.raises(ValueError):
            SequenceInstance(0, THREE, ["B", "O", "I"])
        with pytest.raises(ValueError):
            SequenceInstance(0, THREE, ["I", "I", "O"])


class TestFeatureNames:
    def test_three_token_golden(self):
        with open(GOLDEN, encoding="utf-8") as fh:
            expected = fh.read().splitlines()
        seq, _ = three_token_registry()
        reg = FeatureIndex()
        emitted = [reg.name(fi) for _, _, fi in build_chunking_features(seq, reg)]
        assert emitted == expected
        assert len(expected) == 252

    def test_one_token_sentence_only_unigrams(self):
        bases = position_templates([("dog", "NN")], 0)
        assert bases == ["pu0|NN", "wu0|dog"]

    def test_windows_never_pad(self):
        for base in position_templates(THREE, 0):
            assert not base.startswith(("pu-", "wu-", "pb-", "pt-", "wb-"))

    def test_registry_freeze_semantics(self):
        reg = FeatureIndex()
        i = reg.intern("a")
        assert reg.intern("a") == i
        reg.freeze()
        assert reg.intern("a") == i  # known names still resolve
        with pytest.raises(ValueError):
            reg.intern("b")
        assert reg.lookup("b") is None
        assert "a" in reg and "b" not in reg

    def test_register_rejects_frozen(self):
        _, reg = three_token_registry()
        with pytest.raises(ValueError):
            register_chunking_features([], reg)

    def test_frozen_build_skips_unknown(self):
        seq, reg = three_token_registry()
        alien = SequenceInstance(1, [("cat", "NN")], ["B"])
        names = {reg.name(fi) for _, _, fi in build_chunking_features(alien, reg)}
        assert names == {f"pu0|NN|{p},{c}" for p in "OBI" for c in "OBI"}


class TestEmissionArrays:
    def test_requires_frozen(self):
        seq = SequenceInstance(0, THREE, ["B", "I", "I"])
        with pytest.raises(ValueError):
            emission_index_arrays(seq, FeatureIndex())

    def test_shape_and_sentinel(self):
        seq, reg = three_token_registry()
        idx = emission_index_arrays(seq, reg)
        assert idx.shape == (3, 9, 16)
        # 3-token sentence fires fewer than 16 templates per position, and
        # the empty slots hold the one-past-the-end sentinel
        assert idx.max() == reg.size
        assert (idx == reg.size).any()
        real = idx[idx != reg.size]
        assert real.min() >= 0 and real.max() < reg.size

    def test_cache_keyed_by_registry(self):
        seq, reg = three_token_registry()
        a = emission_index_arrays(seq, reg)
        assert emission_index_arrays(seq, reg) is a

    def test_emission_scores_match_feature_dot(self):
        seq, reg = three_token_registry()
        rng = np.random.default_rng(0)
        w = SparseVector.from_arrays(reg.size, np.arange(reg.size),
                                     rng.normal(size=reg.size))
        em = emissions_from_dense(emission_index_arrays(seq, reg),
                                  extended_dense(w))
        # position-summed state scores must equal the hand path score
        for tags in (["B", "I", "I"], ["O", "O", "B"], ["B", "B", "O"]):
            total = 0.0
            for i, t in enumerate(tags):
                prev = tags[i - 1] if i else "O"
                total += em[i, BIGRAM_STATES.index((prev, t))]
            model = LinearModel(w, reg)
            assert total == pytest.approx(score_tags(model, seq, tags), abs=1e-9)


class TestDecoding:
    def brute_best(self, model, seq):
        best = None
        for tags in valid_bio_sequences(len(seq)):
            s = score_tags(model, seq, tags)
            if best is None or s > best[1] + 1e-12:
                best = (tags, s)
        return best

    def test_viterbi_matches_brute_force(self):
        rng = np.random.default_rng(7)
        words = [("the", "DT"), ("big", "JJ"), ("dog", "NN"), ("ran", "VB"),
                 ("a", "DT"), ("cat", "NN")]
        for trial in range(30):
            L = int(rng.integers(1, 7))
            toks = [words[int(rng.integers(len(words)))] for _ in range(L)]
            seq = SequenceInstance(trial, toks, ["O"] * L)
            reg = FeatureIndex()
            register_chunking_features([seq], reg)
            w = SparseVector.from_arrays(reg.size, np.arange(reg.size),
                                         rng.normal(size=reg.size))
            model = LinearModel(w, reg)
            got = viterbi_decode(model, seq)
            tags, score = self.brute_best(model, seq)
            assert got == tags
            assert score_tags(model, seq, got) == pytest.approx(score, abs=1e-9)

    def test_kbest_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            L = int(rng.integers(2, 6))
            toks = [(f"w{int(rng.integers(4))}", f"P{int(rng.integers(3))}")
                    for _ in range(L)]
            seq = SequenceInstance(trial, toks, ["O"] * L)
            reg = FeatureIndex()
            register_chunking_features([seq], reg)
            w = SparseVector.from_arrays(reg.size, np.arange(reg.size),
                                         rng.normal(size=reg.size))
            model = LinearModel(w, reg)
            k = 5
            got = kbest_decode(model, seq, k)
            all_scored = sorted(
                ((score_tags(model, seq, t), t) for t in valid_bio_sequences(L)),
                key=lambda p: -p[0])
            assert len(got) == min(k, len(all_scored))
            for (tags, slot_score), (ref_score, ref_tags) in zip(got, all_scored):
                assert slot_score == pytest.approx(ref_score, abs=1e-9)
                assert tags == ref_tags
            # distinct candidates, scores non-increasing
            assert len({tuple(t) for t, _ in got}) == len(got)
            scores = [s for _, s in got]
            assert all(a >= b - 1e-12 for a, b in zip(scores, scores[1:]))

    def test_zero_weights_decode_all_o(self):
        seq, reg = three_token_registry()
        model = LinearModel.zeros(reg)
        assert viterbi_decode(model, seq) == ["O", "O", "O"]

    def test_weighted_feature_forces_tag(self):
        seq, reg = three_token_registry()
        entries = {}
        for p in "OBI":
            fi = reg.lookup(f"wu0|dog|{p},B")
            if fi is not None:
                entries[fi] = 10.0
        model = LinearModel(SparseVector(reg.size, entries), reg)
        assert viterbi_decode(model, seq)[2] == "B"

    def test_no_leading_i_or_i_after_o(self):
        rng = np.random.default_rng(3)
        seq, reg = three_token_registry()
        for _ in range(20):
            w = SparseVector.from_arrays(reg.size, np.arange(reg.size),
                                         rng.normal(size=reg.size) * 5)
            for tags, _ in kbest_decode(LinearModel(w, reg), seq, 27):
                assert tags[0] != "I"
                for a, b in zip(tags, tags[1:]):
                    assert not (a == "O" and b == "I")

    def test_k_validation(self):
        with pytest.raises(ValueError):
            kbest_from_emissions(np.zeros((2, 9)), 0)


class TestCandidateInstances:
    def test_as_candidate_instance_fields(self):
        seq, reg = three_token_registry()
        model = LinearModel.zeros(reg)
        inst = as_candidate_instance(seq, model, 4)
        assert inst.id == seq.id
        assert inst.num_candidates == 4
        for out, phi, loss in zip(inst.outputs, inst.features, inst._losses):
            assert phi == sequence_features(seq, list(out), reg)
            assert loss == pytest.approx(1.0 - chunk_f1(list(out),
                                                        list(seq._gold_tags)))

    def test_sequence_feature_counts_repeat(self):
        seq = SequenceInstance(0, [("dog", "NN"), ("dog", "NN")], ["O", "O"])
        reg = FeatureIndex()
        register_chunking_features([seq], reg)
        phi = sequence_features(seq, ["O", "O"], reg)
        assert phi.get(reg.lookup("wu0|dog|O,O")) == 2.0
        assert phi.get(reg.lookup("wb0|dog dog|O,O")) == 1.0


class TestInstance:
    def test_validation(self):
        f = [SparseVector(3, {0: 1.0})]
        with pytest.raises(ValueError):
            Instance(0, (), [], [])
        with pytest.raises(ValueError):
            Instance(0, ("a",), f, [0.5, 0.5])
        with pytest.raises(ValueError):
            Instance(0, ("a", "b"), f + [SparseVector(2)], [0.0, 0.0])
        with pytest.raises(ValueError):
            Instance(0, ("a",), f, [1.5])

    def test_default_active_set_is_support_union(self):
        feats = [SparseVector(6, {0: 1.0, 3: 1.0}), SparseVector(6, {3: 2.0, 5: 1.0})]
        inst = Instance(0, ("a", "b"), feats, [0.0, 1.0])
        assert inst.active_set == ActiveSet(6, [0, 3, 5])

    def test_from_index_rows_matches_direct(self):
        dim = 10
        rows = np.array([[2, 2, 5, dim], [7, dim, dim, dim]], dtype=np.int32)
        inst = Instance.from_index_rows(0, ("a", "b"), [0.0, 1.0], dim, rows,
                                        np.array([2, 5, 7]))
        feats = inst.features
        assert feats[0] == SparseVector(dim, {2: 2.0, 5: 1.0})
        assert feats[1] == SparseVector(dim, {7: 1.0})
        assert inst.active_set == ActiveSet(dim, [2, 5, 7])

    def test_from_index_rows_row_count_checked(self):
        with pytest.raises(ValueError):
            Instance.from_index_rows(0, ("a",), [0.0], 4,
                                     np.zeros((2, 3), dtype=np.int32),
                                     np.array([0]))


class TestMulticlass:
    def test_block_layout(self):
        doc = SparseVector(4, {1: 2.0, 3: 1.0})
        inst = multiclass_instance(doc, 3, gold=2, doc_id="d")
        assert inst.dim == 12
        assert inst.features[0] == SparseVector(12, {1: 2.0, 3: 1.0})
        assert inst.features[2] == SparseVector(12, {9: 2.0, 11: 1.0})
        assert inst._losses == (1.0, 1.0, 0.0)
        assert inst.outputs == (0, 1, 2)

    def test_validation(self):
        doc = SparseVector(2, {0: 1.0})
        with pytest.raises(ValueError):
            multiclass_instance(doc, 1, 0)
        with pytest.raises(ValueError):
            multiclass_instance(doc, 3, 3)


class TestLinearModel:
    def test_dim_check(self):
        reg = FeatureIndex()
        reg.intern("a")
        with pytest.raises(ValueError):
            LinearModel(SparseVector(5), reg)
        m = LinearModel.zeros(reg)
        assert m.weights.dim == 1
