import numpy as np
import pytest

from szopt.estimators import (RULE_KINDS, BaselineState, UpdateRule,
                              baseline_comparison_coef,
                              baseline_comparison_delta,
                              function_comparison_coef,
                              function_comparison_delta, sample_candidate,
                              scaled_delta, sfo_delta, szo_delta,
                              two_point_coef, two_point_delta)
from szopt.perturb import Perturbation, RngStream
from szopt.sparsevec import ActiveSet, SparseVector
from szopt.structpred import Instance


def make_pert(dim, entries):
    idx = np.array(sorted(entries), dtype=np.int64)
    vals = np.array([entries[i] for i in idx], dtype=np.float64)
    active = ActiveSet(dim, idx.tolist())
    return Perturbation(SparseVector.from_arrays(dim, idx, vals), active,
                        idx, vals)


class TestUpdateRule:
    def test_known_kinds(self):
        for kind in RULE_KINDS:
            assert UpdateRule(kind).kind == kind

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            UpdateRule("three_point")


class TestBaselineState:
    def test_running_mean_includes_current(self):
        s = BaselineState().push(0.1).push(0.3)
        assert s.count == 2
        assert s.mean == pytest.approx(0.2)
        s = s.push(0.5)
        assert s.count == 3
        assert s.mean == pytest.approx(0.3)

    def test_push_is_pure(self):
        s0 = BaselineState()
        s0.push(1.0)
        assert s0.count == 0 and s0.mean == 0.0


class TestCoefs:
    def test_two_point(self):
        assert two_point_coef(0.4, 0.2, 0.1) == pytest.approx(2.0)
        assert two_point_coef(0.2, 0.4, 0.1) == pytest.approx(-2.0)

    def test_function_comparison_strict(self):
        assert function_comparison_coef(0.3, 0.5, 0.05) == pytest.approx(-20.0)
        assert function_comparison_coef(0.5, 0.5, 0.05) == 0.0
        assert function_comparison_coef(0.7, 0.5, 0.05) == 0.0

    def test_baseline(self):
        assert baseline_comparison_coef(0.5, 0.3, 0.1) == pytest.approx(2.0)


class TestScaledDelta:
    def test_zero_coef_empty(self):
        pert = make_pert(5, {1: 0.7, 3: -0.2})
        d = scaled_delta(pert, 0.0, 5)
        assert d == SparseVector(5)

    def test_support_and_values(self):
        pert = make_pert(5, {1: 0.7, 3: -0.2})
        d = scaled_delta(pert, 2.0, 5)
        assert d == SparseVector(5, {1: 1.4, 3: -0.4})


class TestDeltas:
    def test_two_point_linear_function(self):
        # F(w) = 3 w_0 - w_2; coef = (F(w + mu u) - F(w)) / mu = 3 u_0 - u_2
        def F(w, x):
            return 3.0 * w.get(0) - w.get(2)
        w = SparseVector(4, {0: 1.0})
        pert = make_pert(4, {0: 0.5, 2: 2.0})
        d = two_point_delta(F, w, None, pert, 0.1)
        coef = 3.0 * 0.5 - 2.0
        assert np.allclose(d.to_dense(),
                           [coef * 0.5, 0.0, coef * 2.0, 0.0], atol=1e-12)

    def test_function_comparison_signs(self):
        def down(w, x):
            return -w.get(0)
        pert = make_pert(2, {0: 1.0})
        d = function_comparison_delta(down, SparseVector(2), None, pert, 0.2)
        # improvement: w - h d must move along +u
        assert d == SparseVector(2, {0: -5.0})
        d = function_comparison_delta(lambda w, x: w.get(0), SparseVector(2),
                                      None, pert, 0.2)
        assert d == SparseVector(2)

    def test_baseline_delta_and_state(self):
        state = BaselineState().push(0.1).push(0.3)
        pert = make_pert(3, {1: 1.0, 2: -1.0})
        d, state = baseline_comparison_delta(lambda w, x: 0.5, SparseVector(3),
                                             None, pert, 0.1, state)
        # Y includes the new value: (0.1 + 0.3 + 0.5) / 3 = 0.3
        assert state.count == 3 and state.mean == pytest.approx(0.3)
        assert d == SparseVector(3, {1: 2.0, 2: -2.0})

    def test_nonpositive_mu_rejected(self):
        pert = make_pert(2, {0: 1.0})
        F = lambda w, x: 0.0
        with pytest.raises(ValueError):
            two_point_delta(F, SparseVector(2), None, pert, 0.0)
        with pytest.raises(ValueError):
            function_comparison_delta(F, SparseVector(2), None, pert, -0.1)
        with pytest.raises(ValueError):
            baseline_comparison_delta(F, SparseVector(2), None, pert, 0.0,
                                      BaselineState())

    def test_perturbation_applied_at_mu_scale(self):
        seen = []
        def F(w, x):
            seen.append(w.get(0))
            return 0.0
        pert = make_pert(2, {0: 2.0})
        two_point_delta(F, SparseVector(2, {0: 1.0}), None, pert, 0.05)
        assert sorted(seen) == [pytest.approx(1.0), pytest.approx(1.1)]

    def test_exact_cancellation_drops_entry(self):
        def F(w, x):
            return float(len(dict(iter(w))))
        pert = make_pert(2, {0: -10.0})
        d = two_point_delta(F, SparseVector(2, {0: 1.0}), None, pert, 0.1)
        # perturbed w_0 = 1 - 1 = 0 exactly, so the support count drops
        assert d.get(0) == pytest.approx(((0.0 - 1.0) / 0.1) * -10.0)


class TestDispatcher:
    def test_routes_and_threads_state(self):
        pert = make_pert(2, {0: 1.0})
        F = lambda w, x: 0.7
        d, st = szo_delta(UpdateRule("two_point"), F, SparseVector(2), None,
                          pert, 0.1)
        assert st is None and d == SparseVector(2)
        d, st = szo_delta(UpdateRule("baseline_comparison"), F, SparseVector(2),
                          None, pert, 0.1)
        assert st.count == 1 and st.mean == pytest.approx(0.7)

    def test_sfo_not_dispatched(self):
        pert = make_pert(2, {0: 1.0})
        with pytest.raises(ValueError):
            szo_delta(UpdateRule("sfo"), lambda w, x: 0.0, SparseVector(2),
                      None, pert, 0.1)


class TestSfoDelta:
    def two_candidate_instance(self, losses):
        feats = [SparseVector(2, {0: 1.0}), SparseVector(2, {1: 1.0})]
        return Instance("s", ("a", "b"), feats, list(losses))

    def test_hand_value_zero_weights(self):
        inst = self.two_candidate_instance([0.0, 1.0])
        rng = RngStream(7, 3)
        y = sample_candidate(np.array([0.5, 0.5]), RngStream(7, 3))
        d = sfo_delta(SparseVector(2), inst, rng)
        if y == 0:
            assert d == SparseVector(2)  # zero loss kills the sample
        else:
            assert d == SparseVector(2, {0: -0.5, 1: 0.5})

    def test_hand_value_forced_draw(self):
        inst = self.two_candidate_instance([0.0, 1.0])
        # find a stream whose first uniform lands on candidate 1
        for seed in range(20):
            if RngStream(seed, 3).uniforms(1)[0] >= 0.5:
                break
        d = sfo_delta(SparseVector(2), inst, RngStream(seed, 3))
        assert d == SparseVector(2, {0: -0.5, 1: 0.5})

    def test_zero_at_zero_loss(self):
        inst = self.two_candidate_instance([0.0, 0.0])
        d = sfo_delta(SparseVector(2), inst, RngStream(1, 3))
        assert d == SparseVector(2)

    def test_matches_score_function_formula(self):
        feats = [SparseVector(3, {0: 1.0, 2: 0.5}),
                 SparseVector(3, {1: 2.0}),
                 SparseVector(3, {0: -1.0, 1: 1.0})]
        inst = Instance("s", ("a", "b", "c"), feats, [0.2, 0.9, 0.4])
        w = SparseVector(3, {0: 0.3, 1: -0.2})
        scores = np.array([0.3 + 0.5 * 0.0, -0.4, -0.3 - 0.2])
        e = np.exp(scores - scores.max())
        p = e / e.sum()
        y = sample_candidate(p, RngStream(5, 3))
        d = sfo_delta(w, inst, RngStream(5, 3))
        dense = np.zeros(3)
        loss = [0.2, 0.9, 0.4][y]
        for i, v in feats[y]:
            dense[i] += loss * v
        for pj, phi in zip(p, feats):
            for i, v in phi:
                dense[i] -= loss * pj * v
        got = d.to_dense()
        assert np.allclose(got, dense, atol=1e-12)

    def test_mean_over_draws_tracks_expected_gradient(self):
        # E[delta] = sum_y p_y Delta_y (phi_y - E phi); check by averaging
        inst = self.two_candidate_instance([0.1, 0.8])
        w = SparseVector(2, {0: 0.5})
        p = None
        total = np.zeros(2)
        n = 4000
        for k in range(n):
            total += sfo_delta(w, inst, RngStream(k, 3)).to_dense()
        scores = np.array([0.5, 0.0])
        e = np.exp(scores - scores.max())
        p = e / e.sum()
        expect = np.zeros(2)
        phis = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        ephi = p[0] * phis[0] + p[1] * phis[1]
        for y in (0, 1):
            expect += p[y] * [0.1, 0.8][y] * (phis[y] - ephi)
        assert np.allclose(total / n, expect, atol=0.02)

    def test_empty_candidates_rejected(self):
        class Hollow:
            num_candidates = 0
        with pytest.raises(ValueError):
            sfo_delta(SparseVector(2), Hollow(), RngStream(0, 3))


class TestSampleCandidate:
    def test_degenerate_distribution(self):
        p = np.array([0.0, 1.0, 0.0])
        for seed in range(10):
            assert sample_candidate(p, RngStream(seed, 3)) == 1

    def test_index_in_range_and_unbiased(self):
        p = np.array([0.25, 0.25, 0.5])
        counts = np.zeros(3)
        for seed in range(2000):
            counts[sample_candidate(p, RngStream(seed, 3))] += 1
        assert np.allclose(counts / 2000, p, atol=0.05)
