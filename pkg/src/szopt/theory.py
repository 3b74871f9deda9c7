"""Empirical verification of the estimator's bias and moment properties,
the convergence-rate bound, and the active-dimension scaling sweep.

Every check reduces to a BoundReport: a Monte Carlo lhs with standard
error against a closed-form rhs, passing one-sided at 3 sigma.  Bounds
are inequalities, so MC noise is only ever allowed to excuse a failure,
never to manufacture one.

The gradient-norm oracle is the two-point estimator itself averaged over
fresh perturbations; squared norms use a split-sample cross estimate
m1.m2 so the MC variance does not bias the lhs upward.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from szopt.errors import ConfigError
from szopt.objectives import SyntheticFunction, SyntheticSample, make_synthetic
from szopt.optimizer import (STREAM_DATA, OptimizerState, RunConfig, RunLog,
                             step)
from szopt.perturb import (RngStream, moment_closed_form, moment_estimate,
                           moment_variance)
from szopt.sparsevec import ActiveSet, SparseVector

# odd stream id, disjoint from the optimizer's perturb/data/sfo streams
STREAM_CHECK = 3


def _num_threads() -> int:
    env = os.environ.get("SZO_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class BoundReport:
    """One lhs-vs-rhs comparison; lhs_stderr carries the full MC
    uncertainty of the comparison (both sides' estimation error)."""

    lhs: float
    lhs_stderr: float
    rhs: float
    passed: bool
    params: Dict[str, object] = field(default_factory=dict)

    @classmethod
    def evaluate(cls, lhs: float, lhs_stderr: float, rhs: float,
                 params: Dict[str, object]) -> "BoundReport":
        passed = bool(lhs <= rhs + 3.0 * lhs_stderr)
        return cls(float(lhs), float(lhs_stderr), float(rhs), passed, params)

    def consistent(self) -> bool:
        return self.passed == (self.lhs <= self.rhs + 3.0 * self.lhs_stderr)

    def to_json(self) -> str:
        return json.dumps({"lhs": self.lhs, "lhs_stderr": self.lhs_stderr,
                           "rhs": self.rhs, "passed": self.passed,
                           "params": self.params}, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "BoundReport":
        obj = json.loads(line)
        return cls(obj["lhs"], obj["lhs_stderr"], obj["rhs"], obj["passed"],
                   obj.get("params", {}))


def write_reports(path: str, reports: Sequence[BoundReport]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(rep.to_json() + "\n")


def read_reports(path: str) -> List[BoundReport]:
    with open(path, encoding="utf-8") as fh:
        return [BoundReport.from_json(line) for line in fh if line.strip()]


def _dense(w: SparseVector, dim: int) -> np.ndarray:
    out = np.zeros(dim)
    for i, v in w.entries.items():
        out[i] = v
    return out


def _draw_xs(rng: RngStream, m: int) -> np.ndarray:
    return (rng.raw(m) >> np.uint64(1)).astype(np.int64)


def _estimator_batch(func, w_dense: np.ndarray, mu: float, m: int,
                     rng: RngStream):
    """m two-point estimator samples at w, fresh x and u per sample.

    Returns (coef, U, idx) with idx either (nb,) for a fixed active set
    or (m, nb) per-sample; estimator sample j is coef[j] * U[j] scattered
    onto its index row.
    """
    xs = _draw_xs(rng, m)
    if getattr(func, "per_sample_active", False):
        idx = func.active_indices_batch(xs)
        base = w_dense[idx]
    else:
        idx = func.active_indices(0)
        base = np.broadcast_to(w_dense[idx], (m, len(idx)))
    nb = idx.shape[-1]
    U = rng.normals(m * nb).reshape(m, nb)
    idx_mat = idx if idx.ndim == 2 else np.broadcast_to(idx, (m, nb))
    offs = func.offsets(xs, idx_mat)
    v0 = func.value_rows(base, xs, idx_mat, offs)
    v1 = func.value_rows(base + mu * U, xs, idx_mat, offs)
    coef = (v1 - v0) / mu
    return coef, U, idx


def _mean_vec(coef, U, idx, dim: int) -> np.ndarray:
    out = np.zeros(dim)
    contrib = coef[:, None] * U
    if idx.ndim == 1:
        out[idx] = contrib.sum(axis=0)
    else:
        np.add.at(out, idx.ravel(), contrib.ravel())
    return out / len(coef)


def _proj(coef, U, idx, v: np.ndarray) -> np.ndarray:
    """Per-sample inner products s_j . v."""
    g = v[idx] if idx.ndim == 2 else v[idx][None, :]
    return coef * (U * g).sum(axis=1)


def grad_norm_sq_estimate(func, w_dense: np.ndarray, mu: float, samples: int,
                          rng: RngStream) -> Tuple[float, float]:
    """Cross estimate of ||grad f_mu(w)||^2 with delta-method stderr.

    The two halves of the sample are averaged separately and dotted, so
    the spurious trace term of a naive squared mean cancels.  Each half's
    coefficients are centered by the other half's mean coefficient; the
    centering constant is independent of the half it applies to and
    multiplies a zero-mean direction, so the estimate stays unbiased
    (up to an O(1/samples^2) cross term) while the deterministic part of
    the coefficient, which near an l1 well grows with the active width
    and otherwise swamps the variance, drops out.
    """
    if samples < 4:
        raise ValueError(f"samples must be >= 4, got {samples}")
    m1 = samples // 2
    c1, U1, i1 = _estimator_batch(func, w_dense, mu, m1, rng)
    c2, U2, i2 = _estimator_batch(func, w_dense, mu, samples - m1, rng)
    b1 = float(c2.mean())
    b2 = float(c1.mean())
    c1 = c1 - b1
    c2 = c2 - b2
    g1 = _mean_vec(c1, U1, i1, func.dim)
    g2 = _mean_vec(c2, U2, i2, func.dim)
    ghat = float(g1 @ g2)
    t1 = _proj(c1, U1, i1, g2)
    t2 = _proj(c2, U2, i2, g1)
    var = t1.var(ddof=1) / len(t1) + t2.var(ddof=1) / len(t2)
    return ghat, float(math.sqrt(var))


def estimator_bias_check(func, w: SparseVector, mu: float, samples: int,
                         rng: RngStream, fd_delta: float = 1e-3,
                         z_max: float = 4.0) -> BoundReport:
    """Mean of s_mu(w) against central finite differences of MC f_mu.

    Both sides share the (x, u) draws, so the per-coordinate z-score is a
    paired test: d_j = s_j[i] - (F(w + de_i + mu u_j) - F(w - de_i +
    mu u_j)) / 2d, z_i = mean(d)/stderr(d).  Needs a smooth function with
    a fixed active set; any object with the synthetic-function batch
    interface works (the zoo's smooth_bowl is the intended member).
    """
    if samples < 10 ** 5:
        raise ConfigError(f"bias check needs >= 1e5 samples, got {samples}")
    if getattr(func, "per_sample_active", False):
        raise ValueError("bias check needs a fixed active set")
    idx = func.active_indices(0)
    nb = len(idx)
    w_dense = _dense(w, func.dim)
    xs = _draw_xs(rng, samples)
    U = rng.normals(samples * nb).reshape(samples, nb)
    idx_mat = np.broadcast_to(idx, (samples, nb))
    offs = func.offsets(xs, idx_mat)
    W = np.broadcast_to(w_dense[idx], (samples, nb))
    v0 = func.value_rows(W, xs, idx_mat, offs)
    pert = W + mu * U
    v1 = func.value_rows(pert, xs, idx_mat, offs)
    coef = (v1 - v0) / mu
    z = np.empty(nb)
    shift = np.zeros(nb)
    for a in range(nb):
        shift[a] = fd_delta
        vp = func.value_rows(pert + shift, xs, idx_mat, offs)
        vm = func.value_rows(pert - shift, xs, idx_mat, offs)
        shift[a] = 0.0
        d = coef * U[:, a] - (vp - vm) / (2.0 * fd_delta)
        se = d.std(ddof=1) / math.sqrt(samples)
        mean = d.mean()
        if se == 0.0:
            z[a] = 0.0 if mean == 0.0 else math.inf
        else:
            z[a] = mean / se
    lhs = float(np.abs(z).max())
    params = {"kind": getattr(func, "kind", "custom"), "n": func.dim,
              "n_bar": nb, "mu": mu, "samples": samples,
              "fd_delta": fd_delta, "worst_coord": int(np.abs(z).argmax())}
    return BoundReport.evaluate(lhs, 0.0, z_max, params)


def moment_bound_check(d: int, p: int, samples: int,
                       rng: RngStream) -> BoundReport:
    """Sample E||u||^p against the (p+d)^{p/2} envelope."""
    if samples < 10 ** 5:
        raise ConfigError(f"moment check needs >= 1e5 samples, got {samples}")
    active = ActiveSet(max(d, 1), range(d))
    lhs = moment_estimate(active, p, samples, rng)
    se = math.sqrt(moment_variance(d, p) / samples)
    rhs = float((p + d) ** (p / 2))
    params = {"d": d, "p": p, "samples": samples,
              "closed_form": moment_closed_form(d, p)}
    return BoundReport.evaluate(lhs, se, rhs, params)


def second_moment_check(func, w: SparseVector, mu: float, samples: int,
                        rng: RngStream) -> BoundReport:
    """Sample mean of ||s_mu(w)||^2 against the L0^2 (nbar + 4)^2 envelope.

    Pointwise |coef| <= L0 ||u|| for an L0-Lipschitz objective, so each
    squared norm is at most L0^2 ||u||^4 and the mean at most
    L0^2 (nbar + 4)^2.  That chain is loose for random directions, so the
    sample mean should clear the envelope with a wide margin, not just at
    the 3-sigma slack the report grants.
    """
    if samples < 10 ** 5:
        raise ConfigError(
            f"second-moment check needs >= 1e5 samples, got {samples}")
    w_dense = _dense(w, func.dim)
    coef, U, _ = _estimator_batch(func, w_dense, mu, samples, rng)
    t = coef ** 2 * np.einsum("ij,ij->i", U, U)
    lhs = float(t.mean())
    se = float(t.std(ddof=1) / math.sqrt(samples))
    nb = func.active_dim
    L0 = func.lipschitz_const
    params = {"kind": func.kind, "n": func.dim, "n_bar": nb, "mu": mu,
              "samples": samples}
    return BoundReport.evaluate(lhs, se, float(L0 ** 2 * (nb + 4) ** 2),
                                params)


def theorem1_tracker(log: RunLog, func: SyntheticFunction, mu: float,
                     grad_mc_samples: int = 10_000,
                     rng: Optional[RngStream] = None) -> BoundReport:
    """Average gradient-norm bound over a finished run's iterates.

    lhs: h-weighted average of ||grad f_mu(w_k)||^2 over the thinned
    iterates the run snapshotted (w_0 = 0 is implicit and always
    included; snapshots at the final iterate are excluded since no update
    departs from it).  rhs: (1/S_N)((f_mu(w_0) - f*) + (1/2) L1 (nbar +
    4)^2 L0^2 sum h_k^2) with L1 = (sqrt(nbar)/mu) L0 and f_mu(w_0)
    MC-estimated.  A run longer than one step must have snapshots.
    """
    T = len(log.h_per_step)
    if T == 0:
        raise ValueError("run artifacts carry no step sizes")
    if any(h <= 0 for h in log.h_per_step):
        raise ValueError("step sizes must be positive")
    ks = sorted(k for k in log.snapshots if k < T)
    if T > 1 and not ks:
        raise ValueError("run artifacts carry no iterate snapshots; "
                         "rerun with snapshot_every set")
    if rng is None:
        rng = RngStream(0, STREAM_CHECK)
    selected = [0] + ks
    weights = np.array([log.h_per_step[k] for k in selected])
    ghats = np.empty(len(selected))
    ses = np.empty(len(selected))
    for j, k in enumerate(selected):
        w_dense = (np.zeros(func.dim) if k == 0
                   else _dense(log.snapshots[k], func.dim))
        ghats[j], ses[j] = grad_norm_sq_estimate(func, w_dense, mu,
                                                 grad_mc_samples, rng)
    wsum = weights.sum()
    lhs = float((weights * ghats).sum() / wsum)
    se_lhs = float(math.sqrt(((weights / wsum) ** 2 * ses ** 2).sum()))

    nb = func.active_dim
    L0 = func.lipschitz_const
    L1 = math.sqrt(nb) / mu * L0
    s_n = float(sum(log.h_per_step))
    sum_h2 = float(sum(h * h for h in log.h_per_step))
    xs = _draw_xs(rng, grad_mc_samples)
    if func.per_sample_active:
        idx0 = func.active_indices_batch(xs)
    else:
        idx0 = np.broadcast_to(func.active_indices(0),
                               (grad_mc_samples, nb))
    U0 = rng.normals(grad_mc_samples * nb).reshape(grad_mc_samples, nb)
    vals = func.value_rows(mu * U0, xs, idx0)
    f_mu_0 = float(vals.mean())
    se_f = float(vals.std(ddof=1) / math.sqrt(grad_mc_samples))
    rhs = ((f_mu_0 - func.f_star)
           + 0.5 * L1 * (nb + 4) ** 2 * L0 ** 2 * sum_h2) / s_n
    stderr = math.sqrt(se_lhs ** 2 + (se_f / s_n) ** 2)
    params = {"kind": func.kind, "n": func.dim, "n_bar": nb, "mu": mu,
              "h": log.h_per_step[0], "N": T - 1, "L0": L0, "L1": L1,
              "f_mu_w0": f_mu_0, "f_star": func.f_star,
              "iterates_checked": len(selected),
              "grad_mc_samples": grad_mc_samples}
    return BoundReport.evaluate(lhs, stderr, rhs, params)


def optimal_step_size(alpha: float, R: float, n_bar: int, L0: float,
                      N: int) -> float:
    """Step size minimizing the rate bound over a horizon of N+1 steps."""
    if alpha <= 0 or R <= 0 or n_bar <= 0 or L0 <= 0 or N < 0:
        raise ValueError("all inputs must be positive (N nonnegative)")
    return math.sqrt(alpha * R / (n_bar * (n_bar + 4) ** 2
                                  * L0 ** 3 * (N + 1)))


def corollary_bound(h: float, alpha: float, R: float, n_bar: int, L0: float,
                    N: int) -> float:
    """The rate bound as a function of the constant step size h."""
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    if alpha <= 0 or R <= 0 or n_bar <= 0 or L0 <= 0 or N < 0:
        raise ValueError("all inputs must be positive (N nonnegative)")
    return (L0 * R / ((N + 1) * h)
            + (h / alpha) * n_bar * (n_bar + 4) ** 2 * L0 ** 4)


@dataclass
class CellResult:
    n_bar: int
    seed: int
    h: float
    cap: int
    iterations: Optional[int]    # None when the cap hit first
    censored: bool
    trajectory: List[Tuple[int, float, float]]  # (iter, ghat, stderr)

    def iterations_at(self, eps: float) -> Optional[int]:
        for k, ghat, _ in self.trajectory:
            if ghat <= eps:
                return k
        return None


@dataclass
class SweepResult:
    n: int
    epsilon: float
    seeds: List[int]
    n_bar_list: List[int]
    cells: List[CellResult]

    def per_nbar(self, n_bar: int) -> List[CellResult]:
        return [c for c in self.cells if c.n_bar == n_bar]

    def median_iterations(self, n_bar: int,
                          eps: Optional[float] = None) -> float:
        """Median iterations-to-eps over seeds; censored cells count at
        their cap, which understates slow cells but never reorders."""
        vals = []
        for cell in self.per_nbar(n_bar):
            it = (cell.iterations if eps is None
                  else cell.iterations_at(eps))
            vals.append(cell.cap if it is None else it)
        return float(np.median(vals))

    def at_epsilon(self, eps: float) -> Dict[int, List[Optional[int]]]:
        return {nb: [c.iterations_at(eps) for c in self.per_nbar(nb)]
                for nb in self.n_bar_list}

    def to_rows(self) -> List[Dict[str, object]]:
        return [{"n": self.n, "n_bar": c.n_bar, "seed": c.seed, "h": c.h,
                 "cap": c.cap, "iterations": c.iterations,
                 "censored": c.censored,
                 "final_grad_sq": c.trajectory[-1][1] if c.trajectory
                 else None}
                for c in self.cells]


def _run_cell(func: SyntheticFunction, n_bar: int, seed: int, h: float,
              cap: int, mu: float, rule, epsilon: float,
              grad_mc_samples: int,
              final_mc_samples: Optional[int] = None) -> CellResult:
    cfg = RunConfig(rule=rule, mu=mu, h=h, max_iters=cap,
                    eval_every=cap, seed=seed)
    state = OptimizerState(func.dim, seed)
    data_rng = RngStream(seed, STREAM_DATA)
    check_rng = RngStream(seed, STREAM_CHECK)
    thin = max(1, cap // 50)
    traj: List[Tuple[int, float, float]] = []
    reached: Optional[int] = None

    ghat, se = grad_norm_sq_estimate(func, state.w_ext[:func.dim], mu,
                                     grad_mc_samples, check_rng)
    traj.append((0, ghat, se))
    if ghat <= epsilon:
        reached = 0
    k = 0
    while reached is None and k < cap:
        chunk = min(thin, cap - k)
        xs = _draw_xs(data_rng, chunk)
        for j in range(chunk):
            step(state, SyntheticSample(func, int(xs[j])), cfg)
        k += chunk
        ghat, se = grad_norm_sq_estimate(func, state.w_ext[:func.dim], mu,
                                         grad_mc_samples, check_rng)
        traj.append((k, ghat, se))
        if ghat <= epsilon:
            reached = k
    if reached is None and final_mc_samples and final_mc_samples > grad_mc_samples:
        # Censored cells get one high-precision recheck at the cap; the
        # cheap in-run estimate is too noisy at wide n_bar to anchor an
        # epsilon (its sd grows like n_bar^2 / samples near the floor).
        ghat, se = grad_norm_sq_estimate(func, state.w_ext[:func.dim], mu,
                                         final_mc_samples, check_rng)
        traj[-1] = (k, ghat, se)
    return CellResult(n_bar, seed, h, cap, reached, reached is None, traj)


def complexity_sweep(n: int, n_bar_list: Sequence[int], epsilon: float,
                     seeds: Sequence[int], base: RunConfig,
                     func_seed: int = 0, grad_mc_samples: int = 10_000,
                     scale_steps: bool = True,
                     final_mc_samples: Optional[int] = None) -> SweepResult:
    """Iterations until the MC gradient norm falls to epsilon, per n_bar.

    Cells run on l1_well with a fixed coordinate well; per-cell step size
    is base.h / n_bar**1.25 when scale_steps is set.  Under a constant
    step the iterate's stationary gradient-norm floor grows like
    h n_bar^3 / mu, and floor times time-to-floor is h-independent, so no
    step size parks a wide cell's floor below a narrow cell's starting
    norm (about n_bar) within desk-scale caps.  The exponent instead
    slows the wide cells enough that an epsilon read off the widest cell
    at its cap lands below the starts of the cells one tier down, which
    cross in an n_bar-ordered sequence; cells already starting below
    epsilon cross at iteration zero.  (The horizon-optimal step size
    collapses to useless magnitudes at desk-scale caps, hence a hand
    rule.)  Cells sharing a seed share perturbation streams, making
    cross-n_bar comparisons paired.  Capped cells are censored, not
    failed; censored cells get a high-precision final check when
    final_mc_samples is set.
    """
    if len(seeds) < 3:
        raise ConfigError(f"sweep needs >= 3 seeds, got {len(seeds)}")
    for nb in n_bar_list:
        if nb > n:
            raise ConfigError(f"n_bar {nb} exceeds n {n}")
    jobs = []
    for nb in n_bar_list:
        func = make_synthetic("l1_well", n, nb, seed=func_seed)
        h = base.h / nb ** 1.25 if scale_steps else base.h
        for seed in seeds:
            jobs.append((func, nb, seed, h))
    with ThreadPoolExecutor(max_workers=_num_threads()) as pool:
        futures = [pool.submit(_run_cell, func, nb, seed, h, base.max_iters,
                               base.mu, base.rule, epsilon, grad_mc_samples,
                               final_mc_samples)
                   for func, nb, seed, h in jobs]
        cells = [f.result() for f in futures]
    return SweepResult(n, float(epsilon), list(seeds), list(n_bar_list),
                       cells)


def auto_epsilon_sweep(n: int, n_bar_list: Sequence[int],
                       seeds: Sequence[int], base: RunConfig,
                       func_seed: int = 0, grad_mc_samples: int = 10_000,
                       scale_steps: bool = True,
                       final_mc_samples: int = 100_000,
                       epsilon_floor: float = 1.0) -> SweepResult:
    """Two-phase sweep with epsilon taken from the largest cell.

    The widest active dimension runs to its cap first; epsilon is the
    median over seeds of the value its runs reach at the cap, measured
    with a high-precision final check (final_mc_samples).  The remaining
    cells then run with early stopping at that epsilon, which keeps total
    work bounded.  The median resists wide-cell check noise, and
    epsilon_floor blocks a noise-driven non-positive target that no cell
    could attain.
    """
    nb_max = max(n_bar_list)
    head = complexity_sweep(n, [nb_max], -math.inf, seeds, base,
                            func_seed, grad_mc_samples, scale_steps,
                            final_mc_samples)
    epsilon = float(np.median([c.trajectory[-1][1] for c in head.cells]))
    epsilon = max(epsilon, epsilon_floor)
    rest = [nb for nb in n_bar_list if nb != nb_max]
    cells = list(head.cells)
    if rest:
        tail = complexity_sweep(n, rest, epsilon, seeds, base,
                                func_seed, grad_mc_samples, scale_steps)
        cells += tail.cells
    order = {nb: i for i, nb in enumerate(n_bar_list)}
    cells.sort(key=lambda c: (order[c.n_bar], c.seed))
    return SweepResult(n, float(epsilon), list(seeds), list(n_bar_list),
                       cells)
