"""causalprune: two-stage causal/probabilistic window pruning with a
desk-scale transformer RUL predictor."""

from .causal import (CausalGraph, CausalPruneConfig, CiResult,
                     alignment_threshold, causal_fidelity, parcorr,
                     pcmci_graph, prune_causal, prune_causal_series)
from .gpopt import (GpModel, bayes_opt, expected_improvement, gp_posterior,
                    matern52)
from .metrics import EvalReport, nasa_score, retention_stats, rmse, separability
from .predictor import (PredictorConfig, PredictorModel, TrainConfig, backward,
                        finetune, init_model, load_checkpoint, loss_total,
                        predict, save_checkpoint, train, transformer_forward)
from .screen import (GmmModel, ScreenConfig, fit_gmm, kl_penalty,
                     optimize_threshold, posterior_hq, prune_quality,
                     shannon_entropy, threshold_objective, window_features)
from .series import (ColumnSchema, NormalizerParams, SensorSeries, Window,
                     WindowSet, apply_normalizer, downsample, fit_normalizer,
                     load_series, make_windows, write_series)
from .synth import DegradationSpec, ScmSpec, gen_degradation, gen_scm

__version__ = "0.1.0"
