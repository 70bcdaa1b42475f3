"""Latent factor analysis for high-dimensional sparse rating matrices with
a sequential-group differential-evolution refinement layer."""

from .data import (RatingTriple, SparseRatingMatrix, density, load_matrix,
                   load_ratings, make_synthetic, parse_ratings, save_matrix,
                   split)
from .errors import ConfigError, DataError, DivergenceError, SgdelfError
from .experiment import ExperimentSpec, run_experiment
from .model import (FactorModel, TrainConfig, init_model, load_model, mae,
                    objective, rmse, save_model)
from .pretrain import (AdamState, EpochTrace, adam_step, sgd_step, train_adam,
                       train_sgd)
from .refine import (DEConfig, DEEntity, DEPopulation, MutationEvent,
                     SubgroupTrace, col_fitness, global_best,
                     init_col_population, init_row_population, mutate_best1,
                     refine_all, refine_subgroup, row_fitness, select)
from .report import (EvalReport, ModelResult, f_rank, improvement_pct,
                     runtime_saving_pct, win_loss)

__version__ = "0.1.0"
