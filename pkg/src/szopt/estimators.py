"""Update rules: sparse zeroth-order estimators and the SFO gradient.

Every rule produces a delta consumed uniformly by the optimizer as
w <- w - h * delta.  Sign conventions are normalized here so one loop
serves all rules; in particular the function-comparison rule returns
-u/mu on improvement so that the subtraction realizes a +(h/mu) u move.

The *_coef functions give the scalar multiple of the perturbation u that
each rule produces; the *_delta functions are the full operations that
evaluate the objective and assemble the sparse delta.  Hot loops use the
coefficient form directly on the perturbation's value array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from szopt.objectives import candidate_scores, softmax_probs
from szopt.perturb import Perturbation, RngStream
from szopt.sparsevec import SparseVector

RULE_KINDS = ("two_point", "function_comparison", "baseline_comparison", "sfo")


@dataclass(frozen=True)
class UpdateRule:
    kind: str

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown update rule {self.kind!r}; expected one of {RULE_KINDS}")


@dataclass(frozen=True)
class BaselineState:
    """Running mean Y of perturbed function values, including the current one."""

    count: int = 0
    mean: float = 0.0

    def push(self, v: float) -> "BaselineState":
        k = self.count + 1
        return BaselineState(k, self.mean + (v - self.mean) / k)


def two_point_coef(v_perturbed: float, v_base: float, mu: float) -> float:
    return (v_perturbed - v_base) / mu


def function_comparison_coef(v_perturbed: float, v_base: float, mu: float) -> float:
    # strict <: ties carry no directional information
    return -1.0 / mu if v_perturbed < v_base else 0.0


def baseline_comparison_coef(v_perturbed: float, baseline: float, mu: float) -> float:
    return (v_perturbed - baseline) / mu


def scaled_delta(pert: Perturbation, coef: float, dim: int) -> SparseVector:
    """coef * u as a sparse vector; support stays inside the active set."""
    if coef == 0.0:
        return SparseVector(dim, {})
    return SparseVector.from_arrays(dim, pert.indices, coef * pert.values)


def two_point_delta(F, w: SparseVector, x, pert: Perturbation, mu: float) -> SparseVector:
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    v1 = F(_perturbed(w, pert, mu), x)
    v0 = F(w, x)
    return scaled_delta(pert, two_point_coef(v1, v0, mu), w.dim)


def function_comparison_delta(F, w: SparseVector, x, pert: Perturbation, mu: float) -> SparseVector:
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    v1 = F(_perturbed(w, pert, mu), x)
    v0 = F(w, x)
    return scaled_delta(pert, function_comparison_coef(v1, v0, mu), w.dim)


def baseline_comparison_delta(F, w: SparseVector, x, pert: Perturbation, mu: float,
                              state: BaselineState):
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    v1 = F(_perturbed(w, pert, mu), x)
    new_state = state.push(v1)
    return scaled_delta(pert, baseline_comparison_coef(v1, new_state.mean, mu), w.dim), new_state


def sample_candidate(probs: np.ndarray, rng: RngStream) -> int:
    """Draw a candidate index from the given distribution (one uniform)."""
    u = rng.uniforms(1)[0]
    cum = np.cumsum(probs)
    return min(int(np.searchsorted(cum, u, side="right")), len(probs) - 1)


def sfo_delta(model, instance, rng: RngStream) -> SparseVector:
    """Score-function gradient sample: Delta(y) * (phi(y) - E_p[phi]).

    y is drawn from the softmax policy over candidate scores at
    temperature 1; the feature expectation is computed exactly over the
    candidate list, so the only randomness is the single draw of y.
    """
    if instance.num_candidates == 0:
        raise ValueError("instance has no candidates")
    scores = candidate_scores(model, instance)
    probs = softmax_probs(scores, gamma=1.0)
    y = sample_candidate(probs, rng)
    loss = float(instance._losses[y])
    w = getattr(model, "weights", model)
    entries = {}
    for i, v in instance.features[y]:
        entries[i] = entries.get(i, 0.0) + loss * v
    for p, phi in zip(probs, instance.features):
        if p == 0.0:
            continue
        for i, v in phi:
            entries[i] = entries.get(i, 0.0) - loss * p * v
    return SparseVector(w.dim, entries)


def szo_delta(rule: UpdateRule, F, w: SparseVector, x, pert: Perturbation, mu: float,
              state: BaselineState = None):
    """Reference dispatcher for the three perturbation-based rules.

    Returns (delta, state); state is passed through unchanged except for
    baseline_comparison.
    """
    if rule.kind == "two_point":
        return two_point_delta(F, w, x, pert, mu), state
    if rule.kind == "function_comparison":
        return function_comparison_delta(F, w, x, pert, mu), state
    if rule.kind == "baseline_comparison":
        return baseline_comparison_delta(F, w, x, pert, mu, state or BaselineState())
    raise ValueError(f"szo_delta does not handle rule {rule.kind!r}")


def _perturbed(w: SparseVector, pert: Perturbation, mu: float) -> SparseVector:
    entries = dict(w.entries)
    for i, u in zip(pert.indices, pert.values):
        i = int(i)
        nv = entries.get(i, 0.0) + mu * float(u)
        if nv == 0.0:
            entries.pop(i, None)
        else:
            entries[i] = nv
    return SparseVector(w.dim, entries)
