"""SZO-SP training loop, generalized over update rules.

One uniform step form serves every rule: w_{k+1} = w_k - h * delta, with
delta = coef * u for the perturbation rules and the exact score-function
gradient sample for sfo.  Internally the weights live in a dense float64
array with one trailing zero slot so that sentinel-padded index rows can
be gathered without masking; SparseVector views are produced at the
interfaces.

The per-step observed loss is the one-point bandit value: the perturbed
function value for the SZO rules (the perturbed arm, for two_point) and
the sampled candidate's loss for sfo.  Average cumulative loss is the
left-to-right running mean of exactly those values.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from szopt.errors import ConfigError, NumericalAbort
from szopt.estimators import (BaselineState, UpdateRule, baseline_comparison_coef,
                              function_comparison_coef, sample_candidate,
                              two_point_coef)
from szopt.objectives import ObjectiveSpec, SyntheticSample, softmax_probs
from szopt.perturb import RngStream
from szopt.sparsevec import SparseVector
from szopt.structpred import Instance

PERTURBATION_MODES = ("ALL", "SPARSE")

STREAM_PERTURB = 0
STREAM_DATA = 1
STREAM_SFO = 2


@dataclass
class RunConfig:
    rule: UpdateRule = field(default_factory=lambda: UpdateRule("two_point"))
    mu: float = 0.05
    h: float = 0.01
    max_iters: int = 10000
    eval_every: int = 1000
    seed: int = 0
    perturbation_mode: str = "SPARSE"
    objective: ObjectiveSpec = field(default_factory=lambda: ObjectiveSpec("map_loss"))
    snapshot_every: int = 0  # 0 = keep no iterate snapshots

    def __post_init__(self):
        if isinstance(self.rule, str):
            self.rule = UpdateRule(self.rule)
        if self.h <= 0:
            raise ConfigError(f"h must be positive, got {self.h}")
        if self.mu <= 0:
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.snapshot_every < 0:
            raise ConfigError(f"snapshot_every must be >= 0, got {self.snapshot_every}")
        if self.perturbation_mode not in PERTURBATION_MODES:
            raise ConfigError(
                f"perturbation_mode must be one of {PERTURBATION_MODES}, "
                f"got {self.perturbation_mode!r}")

    @classmethod
    def from_mapping(cls, m: Dict) -> "RunConfig":
        """Build from a flat key=value mapping (config file / CLI merge)."""
        m = dict(m)
        obj_kind = m.pop("objective", "map_loss")
        spec = ObjectiveSpec(
            obj_kind,
            gamma=float(m.pop("gamma", 1.0)),
            synthetic_id=m.pop("synthetic_id", "l1_well"),
            synthetic_params={k: m.pop(k) for k in ("n", "n_bar", "function_seed",
                                                    "per_sample_active")
                              if k in m},
        )
        known = {}
        for name, cast in (("rule", str), ("mu", float), ("h", float),
                           ("max_iters", int), ("eval_every", int), ("seed", int),
                           ("perturbation_mode", str), ("snapshot_every", int)):
            if name in m:
                known[name] = cast(m.pop(name))
        if m:
            raise ConfigError(f"unknown config keys: {sorted(m)}")
        return cls(objective=spec, **known)


@dataclass
class StepInfo:
    loss: float
    nbar: int
    delta_sq: float


class OptimizerState:
    """Mutable run state; the dense weight array carries a trailing zero
    slot that sentinel indices gather from."""

    __slots__ = ("dim", "k", "baseline", "cumulative_loss", "rng_perturb",
                 "rng_sfo", "w_ext", "last", "_full_idx")

    def __init__(self, dim: int, seed: int):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.k = 0
        self.baseline = BaselineState()
        self.cumulative_loss = 0.0
        self.rng_perturb = RngStream(seed, STREAM_PERTURB)
        self.rng_sfo = RngStream(seed, STREAM_SFO)
        self.w_ext = np.zeros(dim + 1)
        self.last: Optional[StepInfo] = None
        self._full_idx = None

    @property
    def w(self) -> SparseVector:
        nz = np.flatnonzero(self.w_ext[: self.dim])
        return SparseVector.from_arrays(self.dim, nz, self.w_ext[nz])

    def full_indices(self) -> np.ndarray:
        if self._full_idx is None:
            self._full_idx = np.arange(self.dim, dtype=np.int64)
        return self._full_idx


@dataclass
class Row:
    iter: int
    loss: float
    avg_cum_loss: float
    nbar: int
    dev_metric: Optional[float] = None


@dataclass
class Checkpoint:
    iteration: int
    dev_metric: float
    weights: SparseVector


class RunLog:
    """Per-iteration rows plus theory hooks and iterate snapshots.

    Equality (and the CSV round trip) covers the rows; h_per_step,
    delta_sq and snapshots are in-memory hooks for bound evaluation.
    """

    def __init__(self, rows: Optional[List[Row]] = None):
        self.rows: List[Row] = rows if rows is not None else []
        self.h_per_step: List[float] = []
        self.delta_sq: List[float] = []
        self.snapshots: Dict[int, SparseVector] = {}
        self.summary: Dict = {}

    def __eq__(self, other):
        return isinstance(other, RunLog) and self.rows == other.rows

    def __len__(self):
        return len(self.rows)


def _score_rows(inst: Instance, w_ext: np.ndarray) -> np.ndarray:
    return w_ext[inst._row_idx].sum(axis=1)


def _scores_dicts(inst: Instance, w_ext: np.ndarray) -> np.ndarray:
    return np.array([sum(v * w_ext[i] for i, v in phi) for phi in inst.features])


def _candidate_value(scores: np.ndarray, losses: np.ndarray, spec: ObjectiveSpec) -> float:
    if spec.kind == "map_loss":
        return float(losses[int(np.argmax(scores))])
    probs = softmax_probs(scores, spec.gamma)
    return float(probs @ losses)


def step(state: OptimizerState, instance, config: RunConfig) -> OptimizerState:
    """One bandit interaction; mutates and returns state.

    instance is either a candidate Instance or a SyntheticSample.
    """
    if state.k >= config.max_iters:
        raise ValueError(f"state already at k={state.k} >= max_iters")
    if config.rule.kind == "sfo":
        return _sfo_step(state, instance, config)
    h, mu = config.h, config.mu
    synthetic = isinstance(instance, SyntheticSample)
    if config.perturbation_mode == "SPARSE":
        active_idx = (instance.active_indices if synthetic
                      else instance.active_index_array())
    else:
        active_idx = state.full_indices()
    u = state.rng_perturb.normals(len(active_idx))

    if synthetic:
        func, x = instance.func, instance.x
        fidx = instance.active_indices
        base_vals = state.w_ext[fidx]
        if config.perturbation_mode == "SPARSE":
            u_at = u
        else:
            u_at = u[fidx]
        v1 = func.value_on_active(base_vals + mu * u_at, x, fidx)
        v0 = None
        if config.rule.kind in ("two_point", "function_comparison"):
            v0 = func.value_on_active(base_vals, x, fidx)
    else:
        losses = np.asarray(instance._losses)
        if instance._row_idx is not None:
            scores0 = _score_rows(instance, state.w_ext)
            if config.perturbation_mode == "SPARSE":
                corr = np.append(u, 0.0)[instance._row_pos].sum(axis=1)
            else:
                corr = np.append(u, 0.0)[instance._row_idx].sum(axis=1)
        else:
            scores0 = _scores_dicts(instance, state.w_ext)
            if config.perturbation_mode == "SPARSE":
                u_of = dict(zip(active_idx.tolist(), u.tolist()))
                corr = np.array([sum(v * u_of[i] for i, v in phi)
                                 for phi in instance.features])
            else:
                corr = np.array([sum(v * u[i] for i, v in phi)
                                 for phi in instance.features])
        scores1 = scores0 + mu * corr
        v1 = _candidate_value(scores1, losses, config.objective)
        v0 = None
        if config.rule.kind in ("two_point", "function_comparison"):
            v0 = _candidate_value(scores0, losses, config.objective)

    kind = config.rule.kind
    if kind == "two_point":
        coef = two_point_coef(v1, v0, mu)
    elif kind == "function_comparison":
        coef = function_comparison_coef(v1, v0, mu)
    else:
        state.baseline = state.baseline.push(v1)
        coef = baseline_comparison_coef(v1, state.baseline.mean, mu)
    if not np.isfinite(v1) or not np.isfinite(coef):
        raise NumericalAbort(
            f"non-finite value at step {state.k + 1}: observed={v1}, coef={coef}")
    if coef != 0.0:
        state.w_ext[active_idx] -= (h * coef) * u
    state.k += 1
    state.cumulative_loss += float(v1)
    state.last = StepInfo(float(v1), len(active_idx), float(coef * coef * (u @ u)))
    return state


def _sfo_step(state: OptimizerState, instance, config: RunConfig) -> OptimizerState:
    if isinstance(instance, SyntheticSample):
        raise ConfigError("sfo requires candidate instances, not synthetic samples")
    losses = np.asarray(instance._losses)
    active_idx = instance.active_index_array()
    na = len(active_idx)
    if instance._row_idx is not None:
        scores = _score_rows(instance, state.w_ext)
        probs = softmax_probs(scores, 1.0)
        y = sample_candidate(probs, state.rng_sfo)
        loss_y = float(losses[y])
        width = instance._row_pos.shape[1]
        cnt_y = np.bincount(instance._row_pos[y], minlength=na + 1)[:na]
        expect = np.bincount(instance._row_pos.ravel(),
                             weights=np.repeat(probs, width),
                             minlength=na + 1)[:na]
        delta = loss_y * (cnt_y - expect)
    else:
        scores = _scores_dicts(instance, state.w_ext)
        probs = softmax_probs(scores, 1.0)
        y = sample_candidate(probs, state.rng_sfo)
        loss_y = float(losses[y])
        acc: Dict[int, float] = {}
        for i, v in instance.features[y]:
            acc[i] = acc.get(i, 0.0) + loss_y * v
        for p, phi in zip(probs, instance.features):
            if p == 0.0:
                continue
            for i, v in phi:
                acc[i] = acc.get(i, 0.0) - loss_y * p * v
        pos = np.searchsorted(active_idx, np.fromiter(acc.keys(), dtype=np.int64,
                                                      count=len(acc)))
        delta = np.zeros(na)
        delta[pos] = np.fromiter(acc.values(), dtype=np.float64, count=len(acc))
    if not np.all(np.isfinite(delta)):
        raise NumericalAbort(f"non-finite sfo delta at step {state.k + 1}")
    state.w_ext[active_idx] -= config.h * delta
    state.k += 1
    state.cumulative_loss += loss_y
    state.last = StepInfo(loss_y, na, float(delta @ delta))
    return state


def run(config: RunConfig, train: Iterator, dev: Sequence = (),
        dev_eval: Optional[Callable[[SparseVector], float]] = None,
        dim: Optional[int] = None) -> Tuple[RunLog, Optional[Checkpoint]]:
    """Execute max_iters steps and early-stop on the dev metric.

    train yields instances (cycling streams are the caller's business);
    a yielded callable is invoked with the optimizer state and must
    return the instance, which lets candidate sets be re-decoded under
    the current weights.  dev is a list of held-out instances scored by
    mean MAP loss, or pass dev_eval to score the unperturbed weights
    directly (lower is always better).  The best-scoring iterate comes
    back as a Checkpoint; with no dev signal at all, checkpointing is
    off.

    dim fixes the weight dimension; when omitted it is taken from the
    first instance (and the first item must not be a callable then).
    """
    train = iter(train)
    first = next(train, None)
    if first is None:
        raise ValueError("empty training stream")
    if dim is None:
        if callable(first):
            raise ValueError("dim is required for factory-based streams")
        dim = (first.func.dim if isinstance(first, SyntheticSample)
               else first.dim)
    state = OptimizerState(dim, config.seed)
    log = RunLog()
    best: Optional[Checkpoint] = None
    do_eval = dev_eval is not None or len(dev) > 0
    if not do_eval:
        warnings.warn("no dev data and no dev_eval: checkpointing disabled")
    cum = 0.0
    inst = first
    for k in range(1, config.max_iters + 1):
        if inst is None:
            raise ValueError(f"training stream exhausted at step {k}")
        if callable(inst):
            inst = inst(state)
        step(state, inst, config)
        info = state.last
        cum += info.loss
        avg = cum / k
        metric = None
        if do_eval and (k % config.eval_every == 0 or k == config.max_iters):
            w_view = state.w
            metric = (dev_eval(w_view) if dev_eval is not None
                      else dev_map_loss(w_view, dev))
            if best is None or metric < best.dev_metric:
                best = Checkpoint(k, metric, w_view)
        log.rows.append(Row(k, info.loss, avg, info.nbar, metric))
        log.h_per_step.append(config.h)
        log.delta_sq.append(info.delta_sq)
        if config.snapshot_every and k % config.snapshot_every == 0:
            log.snapshots[k] = state.w
        if k < config.max_iters:
            inst = next(train, None)
    log.summary = {
        "iters": config.max_iters,
        "final_avg_cum_loss": log.rows[-1].avg_cum_loss,
        "best_iteration": best.iteration if best else None,
        "best_dev_metric": best.dev_metric if best else None,
    }
    return log, best


def dev_map_loss(w: SparseVector, dev: Sequence) -> float:
    """Mean hidden loss of the MAP candidate over a held-out list."""
    w_ext = np.zeros(w.dim + 1)
    for i, v in w:
        w_ext[i] = v
    total = 0.0
    for inst in dev:
        if inst._row_idx is not None:
            scores = _score_rows(inst, w_ext)
        else:
            scores = _scores_dicts(inst, w_ext)
        total += float(inst._losses[int(np.argmax(scores))])
    return total / len(dev)


def avg_cumulative_loss(log: RunLog, t: int) -> float:
    """Mean of the first t observed losses, recomputed left to right."""
    if not 1 <= t <= len(log.rows):
        raise ValueError(f"t={t} outside 1..{len(log.rows)}")
    cum = 0.0
    for row in log.rows[:t]:
        cum += row.loss
    return cum / t
