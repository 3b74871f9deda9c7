"""Command-line front end: training runs, offline evaluation, bound
checks, the scaling sweep, and synthetic data generation.

Every flag has a config-file equivalent (`--config file` with `key =
value` lines; precedence flags > file > defaults), every experiment is
fully determined by flags plus seed, and artifacts are CSV / JSON-lines
with a rendered figure next to them.  Exit codes: 0 ok, 1 bound
violation, 2 config error, 3 data error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from typing import Dict, List, Optional

import numpy as np

from szopt import data_io, plots, synthdata, tasks, theory
from szopt.errors import ConfigError, DataError, NumericalAbort
from szopt.objectives import ObjectiveSpec, make_synthetic
from szopt.optimizer import RunConfig, run
from szopt.perturb import RngStream
from szopt.sparsevec import SparseVector, read_vectors, write_vectors
from szopt.structpred import SequenceInstance

RULE_NAMES = {"two-point": "two_point", "func-cmp": "function_comparison",
              "baseline": "baseline_comparison", "sfo": "sfo"}
MODE_NAMES = {"all": "ALL", "sparse": "SPARSE"}
ZOO = ("l1_well", "smooth_bowl", "nonconvex_ripple")


def _int_list(text) -> List[int]:
    try:
        return [int(t) for t in str(text).split(",") if t != ""]
    except ValueError as e:
        raise ConfigError(f"bad integer list {text!r} ({e})") from e


def _merged(args, spec: Dict[str, object]) -> Dict[str, object]:
    """flags > config file > defaults, rejecting unknown file keys."""
    file_cfg: Dict[str, object] = {}
    if getattr(args, "config", None):
        file_cfg = data_io.parse_config(args.config)
        unknown = set(file_cfg) - set(spec)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, default in spec.items():
        val = getattr(args, key, None)
        if val is None:
            val = file_cfg.get(key, default)
        out[key] = val
    return out


def _require(params: Dict[str, object], key: str, task: str) -> object:
    if params[key] is None:
        raise ConfigError(f"--{key} is required for task {task}")
    return params[key]


def _positive(params: Dict[str, object], key: str) -> None:
    val = params[key]
    if val is not None and val <= 0:
        raise ConfigError(f"--{key} must be positive, got {val}")


TRAIN_SPEC = {
    "task": None, "rule": "two-point", "mode": "sparse", "h": 0.01,
    "mu": 0.05, "iters": 10000, "eval_every": 1000, "seed": 0, "k": 20,
    "gamma": 0.0, "objective": "map_loss", "snapshot_every": 0,
    "train": None, "dev": None, "out": None,
    "func": "l1_well", "n": 32, "nbar": 8, "func_seed": 0,
    "per_sample_active": False,
}


def cmd_train(args) -> int:
    p = _merged(args, TRAIN_SPEC)
    task_name = p["task"]
    if task_name not in ("chunking", "rerank", "multiclass", "synth"):
        raise ConfigError(f"--task must be one of chunking/rerank/multiclass/"
                          f"synth, got {task_name}")
    for key in ("h", "mu", "iters", "eval_every"):
        _positive(p, key)
    rule = RULE_NAMES.get(p["rule"], p["rule"])
    objective = ObjectiveSpec(p["objective"], gamma=float(p["gamma"]))
    cfg = RunConfig(rule=rule, mu=p["mu"], h=p["h"], max_iters=p["iters"],
                    eval_every=p["eval_every"], seed=p["seed"],
                    perturbation_mode=MODE_NAMES.get(p["mode"], p["mode"]),
                    objective=objective,
                    snapshot_every=p["snapshot_every"])

    registry = None
    if task_name == "synth":
        if p["func"] not in ZOO:
            raise ConfigError(f"--func must be one of {ZOO}, got {p['func']}")
        func = make_synthetic(p["func"], p["n"], p["nbar"],
                              seed=p["func_seed"],
                              per_sample_active=bool(p["per_sample_active"]))
        task = tasks.SyntheticTask(func)
        dim = func.dim
    elif task_name == "chunking":
        train_seqs = data_io.parse_conll(_require(p, "train", task_name))
        dev_seqs = data_io.parse_conll(p["dev"]) if p["dev"] else []
        task = tasks.ChunkingTask(train_seqs, dev_seqs, k=p["k"])
        registry = task.registry
        dim = task.dim
    elif task_name == "rerank":
        train_insts = data_io.parse_nbest(_require(p, "train", task_name))
        dev_insts = data_io.parse_nbest(p["dev"]) if p["dev"] else []
        task = tasks.rerank_task(train_insts, dev_insts)
        dim = task.dim
    else:
        train_insts = data_io.parse_docs(_require(p, "train", task_name))
        dev_insts = data_io.parse_docs(p["dev"]) if p["dev"] else []
        task = tasks.multiclass_task(train_insts, dev_insts)
        dim = task.dim

    dev_eval = task.dev_eval if getattr(task, "dev", None) or task_name == "synth" else None
    log, best = run(cfg, task.stream(cfg.seed), dev_eval=dev_eval, dim=dim)

    if p["out"]:
        out = p["out"]
        data_io.write_runlog(log, out + ".csv")
        if best is not None:
            data_io.write_checkpoint(best.weights, out + ".ckpt")
        if registry is not None:
            data_io.write_registry(registry, out + ".vocab")
        plots.learning_curve(log.rows, out + ".png",
                             title=f"{task_name} / {p['rule']} / {p['mode']}")
    summary = log.summary
    best_bit = ("" if best is None else
                f" best_iter={best.iteration} best_dev={best.dev_metric:.6f}")
    print(f"iters={summary['iters']} "
          f"final_avg_cum_loss={summary['final_avg_cum_loss']:.6f}{best_bit}")
    return 0


EVAL_SPEC = {"task": None, "model": None, "test": None, "vocab": None}


def cmd_eval(args) -> int:
    p = _merged(args, EVAL_SPEC)
    task_name = p["task"]
    if task_name not in ("chunking", "rerank", "multiclass"):
        raise ConfigError(f"--task must be one of chunking/rerank/multiclass, "
                          f"got {task_name}")
    model_path = _require(p, "model", task_name)
    test_path = _require(p, "test", task_name)
    dim, vectors = read_vectors(model_path)
    if len(vectors) != 1:
        raise DataError(f"{model_path}: expected a single weight vector, "
                        f"got {len(vectors)}")
    w = vectors[0]

    if task_name == "chunking":
        vocab_path = p["vocab"]
        if vocab_path is None:
            vocab_path = (model_path[:-5] if model_path.endswith(".ckpt")
                          else model_path) + ".vocab"
        registry = data_io.read_registry(vocab_path)
        if registry.size != dim:
            raise DataError(f"{vocab_path}: {registry.size} features but "
                            f"checkpoint dim {dim}")
        test_seqs = data_io.parse_conll(test_path)
        if not test_seqs:
            raise DataError(f"{test_path}: no test sentences")
        task = tasks.ChunkingTask(test_seqs, [], k=1, registry=registry)
        print(f"f1={task.corpus_f1(w, test_seqs):.4f}")
    elif task_name == "rerank":
        insts = data_io.parse_nbest(test_path)
        if not insts:
            raise DataError(f"{test_path}: no hypothesis blocks")
        refs = data_io.parse_nbest_refs(test_path)
        if insts[0].dim != dim:
            raise DataError(f"{test_path}: feature arity {insts[0].dim} but "
                            f"checkpoint dim {dim}")
        print(f"bleu={tasks.rerank_corpus_bleu(insts, refs, w):.4f}")
    else:
        insts = data_io.parse_docs(test_path)
        if not insts:
            raise DataError(f"{test_path}: no documents")
        golds = [inst.outputs[inst._losses.index(0.0)] for inst in insts]
        if insts[0].dim != dim:
            raise DataError(f"{test_path}: feature space {insts[0].dim} but "
                            f"checkpoint dim {dim}")
        print(f"acc={tasks.multiclass_accuracy(insts, golds, w):.4f}")
    return 0


CHECK_SPEC = {
    "check": None, "out": None, "seed": 0, "samples": None,
    "dims": "1,5,10,50,200", "p": "2,4",
    "n": None, "nbar": None, "nbars": "8,32,128,512", "mu": None, "h": None,
    "iters": None, "seeds": "1,2,3", "epsilon": None, "func": "all",
    "grad_samples": 10000, "func_seed": 0,
}


def _check_lemma2(p, rng) -> List[theory.BoundReport]:
    samples = int(p["samples"] or 10 ** 5)
    reports = []
    for d in _int_list(p["dims"]):
        for order in _int_list(p["p"]):
            reports.append(theory.moment_bound_check(d, order, samples, rng))
    return reports


def _check_lemma1(p, rng) -> List[theory.BoundReport]:
    n = int(p["n"] or 16)
    mu = float(p["mu"] or 0.05)
    samples = int(p["samples"] or 2 * 10 ** 5)
    func = make_synthetic("smooth_bowl", n, int(p["nbar"] or n),
                          seed=p["func_seed"])
    return [theory.estimator_bias_check(func, SparseVector(n), mu, samples,
                                        rng)]


def _check_theorem1(p, rng) -> List[theory.BoundReport]:
    n = int(p["n"] or 32)
    nbar = int(p["nbar"] or 8)
    mu = float(p["mu"] or 0.05)
    h = float(p["h"] or 0.01)
    iters = int(p["iters"] or 10 ** 4)
    kinds = ZOO if p["func"] == "all" else (p["func"],)
    reports = []
    for kind in kinds:
        if kind not in ZOO:
            raise ConfigError(f"--func must be one of {ZOO} or all, got {kind}")
        func = make_synthetic(kind, n, nbar, seed=p["func_seed"])
        task = tasks.SyntheticTask(func)
        cfg = RunConfig(rule="two_point", mu=mu, h=h, max_iters=iters,
                        eval_every=iters, seed=p["seed"],
                        snapshot_every=max(1, iters // 50))
        log, _ = run(cfg, task.stream(cfg.seed), dev_eval=task.dev_eval,
                     dim=func.dim)
        reports.append(theory.theorem1_tracker(log, func, mu,
                                               int(p["grad_samples"]), rng))
    return reports


def _sweep_result(p):
    n = int(p["n"] or 512)
    nbars = _int_list(p["nbars"])
    seeds = _int_list(p["seeds"])
    base = RunConfig(rule="two_point", mu=float(p["mu"] or 0.2),
                     h=float(p["h"] or 0.0084),
                     max_iters=int(p["iters"] or 6 * 10 ** 5),
                     eval_every=10 ** 9, seed=p["seed"])
    if p["epsilon"] is None:
        return theory.auto_epsilon_sweep(n, nbars, seeds, base,
                                         func_seed=int(p["func_seed"]),
                                         grad_mc_samples=int(p["grad_samples"]))
    return theory.complexity_sweep(n, nbars, float(p["epsilon"]), seeds, base,
                                   func_seed=int(p["func_seed"]),
                                   grad_mc_samples=int(p["grad_samples"]))


def _check_sweep(p) -> List[theory.BoundReport]:
    result = _sweep_result(p)
    eps = result.epsilon
    meds = {nb: result.median_iterations(nb, eps) for nb in result.n_bar_list}
    reports = []
    ordered = list(result.n_bar_list)
    for small, large in zip(ordered, ordered[1:]):
        reports.append(theory.BoundReport.evaluate(
            meds[small], 0.0, meds[large],
            {"check": "sweep-monotone", "n_bar_small": small,
             "n_bar_large": large, "epsilon": eps}))
    reports.append(theory.BoundReport.evaluate(
        meds[ordered[0]], 0.0, meds[ordered[-1]] / 2.0,
        {"check": "sweep-half-ratio", "n_bar_small": ordered[0],
         "n_bar_large": ordered[-1], "epsilon": eps}))
    return reports


def cmd_check_theory(args) -> int:
    p = _merged(args, CHECK_SPEC)
    check = p["check"]
    rng = RngStream(int(p["seed"]), theory.STREAM_CHECK)
    if check == "lemma2":
        reports = _check_lemma2(p, rng)
    elif check == "lemma1":
        reports = _check_lemma1(p, rng)
    elif check == "theorem1":
        reports = _check_theorem1(p, rng)
    elif check == "sweep":
        reports = _check_sweep(p)
    else:
        raise ConfigError(f"--check must be one of lemma1/lemma2/theorem1/"
                          f"sweep, got {check}")
    if p["out"]:
        theory.write_reports(p["out"] + ".jsonl", reports)
        plots.bound_chart(reports, p["out"] + ".png", title=f"check {check}")
    for rep in reports:
        print(rep.to_json())
    return 0 if all(r.passed for r in reports) else 1


SWEEP_SPEC = {
    "n": 512, "nbars": "8,32,128,512", "epsilon": None, "seeds": "1,2,3",
    "h": 0.0084, "mu": 0.2, "iters": 6 * 10 ** 5, "seed": 0,
    "grad_samples": 10000, "func_seed": 0, "out": None,
}


def cmd_sweep(args) -> int:
    p = _merged(args, SWEEP_SPEC)
    result = _sweep_result(p)
    rows = result.to_rows()
    if p["out"]:
        out = p["out"]
        with open(out + ".csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: ("" if v is None else v)
                                 for k, v in row.items()})
        plots.sweep_curve(result, result.epsilon, out + ".png")
    for nb in result.n_bar_list:
        med = result.median_iterations(nb, result.epsilon)
        print(f"n_bar={nb} median_iters={med:.0f}")
    return 0


SYNTH_SPEC = {"task": None, "size": None, "seed": 0, "out": None,
              "hyps": 8, "classes": 4, "vocab_size": 200}


def cmd_synth_data(args) -> int:
    p = _merged(args, SYNTH_SPEC)
    task_name = p["task"]
    if task_name not in ("chunking", "rerank", "multiclass"):
        raise ConfigError(f"--task must be one of chunking/rerank/multiclass, "
                          f"got {task_name}")
    if p["size"] is None or p["size"] < 0:
        raise ConfigError(f"--size must be a nonnegative integer, got "
                          f"{p['size']}")
    out = p["out"]
    if out is None:
        raise ConfigError("--out is required for synth-data")
    seed = int(p["seed"])
    size = int(p["size"])
    if task_name == "chunking":
        synthdata.write_conll(synthdata.make_chunking_corpus(size, seed), out)
    elif task_name == "rerank":
        synthdata.write_nbest(size, int(p["hyps"]), seed, out)
    else:
        synthdata.write_docs(size, int(p["classes"]), int(p["vocab_size"]),
                             seed, out)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="szopt",
        description="sparse stochastic zeroth-order optimization workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, spec, **kwargs):
        sp = sub.add_parser(name, **kwargs)
        sp.add_argument("--config", help="key = value file; flags override it")
        for key, _default in spec.items():
            flag = "--" + key.replace("_", "-")
            if key == "task":
                sp.add_argument(flag)
            elif key == "rule":
                sp.add_argument(flag, choices=sorted(RULE_NAMES))
            elif key == "mode":
                sp.add_argument(flag, choices=sorted(MODE_NAMES))
            elif key == "per_sample_active":
                sp.add_argument(flag, action="store_true", default=None)
            elif key in ("h", "mu", "gamma", "epsilon"):
                sp.add_argument(flag, type=float)
            elif key in ("dims", "p", "nbars", "seeds", "out", "train", "dev",
                         "model", "test", "vocab", "func", "check",
                         "objective"):
                sp.add_argument(flag)
            else:
                sp.add_argument(flag, type=int)
        sp.set_defaults(fn=fn)
        return sp

    add("train", cmd_train, TRAIN_SPEC, help="run a bandit training job")
    add("eval", cmd_eval, EVAL_SPEC, help="score a checkpoint on a test file")
    add("check-theory", cmd_check_theory, CHECK_SPEC,
        help="verify the bound suite; exit 1 on violation")
    add("sweep", cmd_sweep, SWEEP_SPEC,
        help="iterations-to-epsilon across active dimensions")
    add("synth-data", cmd_synth_data, SYNTH_SPEC,
        help="generate a deterministic miniature corpus")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericalAbort as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
