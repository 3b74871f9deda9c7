"""szopt: sparse stochastic zeroth-order optimization.

A small research library for training linear structured predictors from
bandit feedback with zeroth-order (two-evaluation or single-evaluation)
updates whose Gaussian perturbations are restricted to the active feature
set of the current input.  Ships with a synthetic function zoo, a BIO
chunking harness (Viterbi / k-best decoding over hand-rolled feature
templates), reranking and multiclass adapters, span-F1 and BLEU metrics,
and a suite of checks that verify the estimator and convergence bounds
numerically.
"""

from szopt.sparsevec import SparseVector, ActiveSet, dot, axpy, l0_norm, l2_norm_sq
from szopt.perturb import (RngStream, Perturbation, sample_sparse_gaussian,
                           moment_estimate, moment_closed_form)
from szopt.errors import ConfigError, DataError, NumericalAbort
from szopt.estimators import UpdateRule, RULE_KINDS
from szopt.objectives import (ObjectiveSpec, SyntheticFunction, SyntheticSample,
                              make_synthetic, SYNTHETIC_IDS, map_loss,
                              annealed_loss, smoothed_value)
from szopt.optimizer import (RunConfig, OptimizerState, RunLog, Row, Checkpoint,
                             step, run, PERTURBATION_MODES)
from szopt.structpred import (FeatureIndex, LinearModel, Instance,
                              SequenceInstance, viterbi_decode, kbest_decode,
                              register_chunking_features)
from szopt.metrics import (chunk_f1, corpus_chunk_f1, sentence_bleu_smoothed,
                           corpus_bleu, zero_one_loss)
from szopt.tasks import (ChunkingTask, CandidateListTask, SyntheticTask,
                         rerank_task, multiclass_task)
from szopt.theory import (BoundReport, grad_norm_sq_estimate,
                          estimator_bias_check, moment_bound_check,
                          second_moment_check, theorem1_tracker,
                          optimal_step_size, corollary_bound, complexity_sweep,
                          auto_epsilon_sweep, SweepResult, CellResult)

__version__ = "0.1.0"

__all__ = [
    "SparseVector", "ActiveSet", "dot", "axpy", "l0_norm", "l2_norm_sq",
    "RngStream", "Perturbation", "sample_sparse_gaussian", "moment_estimate",
    "moment_closed_form",
    "ConfigError", "DataError", "NumericalAbort",
    "UpdateRule", "RULE_KINDS",
    "ObjectiveSpec", "SyntheticFunction", "SyntheticSample", "make_synthetic",
    "SYNTHETIC_IDS", "map_loss", "annealed_loss", "smoothed_value",
    "RunConfig", "OptimizerState", "RunLog", "Row", "Checkpoint", "step",
    "run", "PERTURBATION_MODES",
    "FeatureIndex", "LinearModel", "Instance", "SequenceInstance",
    "viterbi_decode", "kbest_decode", "register_chunking_features",
    "chunk_f1", "corpus_chunk_f1", "sentence_bleu_smoothed", "corpus_bleu",
    "zero_one_loss",
    "ChunkingTask", "CandidateListTask", "SyntheticTask", "rerank_task",
    "multiclass_task",
    "BoundReport", "grad_norm_sq_estimate", "estimator_bias_check",
    "moment_bound_check", "second_moment_check", "theorem1_tracker",
    "optimal_step_size",
    "corollary_bound", "complexity_sweep", "auto_epsilon_sweep",
    "SweepResult", "CellResult",
]
