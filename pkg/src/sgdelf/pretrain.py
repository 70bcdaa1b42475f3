"""First training layer: stochastic gradient descent or Adam on the
regularized factor model, producing the parameters the refinement layer
starts from.

Both trainers visit every training rating once per epoch in a seeded
shuffled order and stop when the validation RMSE changes by less than the
configured threshold between consecutive epochs.  Non-finite values abort
with :class:`DivergenceError` instead of being clamped, so a bad learning
rate surfaces immediately.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass

import numpy as np

from .data import SparseRatingMatrix
from .errors import DivergenceError
from .model import FactorModel, TrainConfig, rmse


@dataclass
class EpochTrace:
    """One training epoch: 1-based index, metrics, and cumulative seconds."""

    epoch: int
    train_rmse: float
    valid_rmse: float
    seconds: float


def sgd_step(model: FactorModel, u: int, i: int, value: float,
             eta: float, lam: float) -> None:
    """One stochastic gradient step on a single rating.

    All four parameter blocks of (u, i) move simultaneously: the gradients
    are evaluated at the current values before any block is written.
    """
    p = model.P[u]
    q = model.Q[i]
    err = value - (p @ q + model.b[u] + model.c[i])
    if not math.isfinite(err):
        raise DivergenceError(
            f"non-finite update for (u={u}, i={i}) at eta={eta}")
    # p and q are views; build both updates before writing either so the
    # item step sees the pre-step user row.
    new_p = p + eta * (err * q - lam * p)
    new_q = q + eta * (err * p - lam * q)
    model.P[u] = new_p
    model.Q[i] = new_q
    model.b[u] += eta * (err - lam * model.b[u])
    model.c[i] += eta * (err - lam * model.c[i])


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the model parameters."""

    m_P: np.ndarray
    m_Q: np.ndarray
    m_b: np.ndarray
    m_c: np.ndarray
    v_P: np.ndarray
    v_Q: np.ndarray
    v_b: np.ndarray
    v_c: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_model(cls, model: FactorModel, beta1: float = 0.9,
                  beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(np.zeros_like(model.P), np.zeros_like(model.Q),
                   np.zeros_like(model.b), np.zeros_like(model.c),
                   np.zeros_like(model.P), np.zeros_like(model.Q),
                   np.zeros_like(model.b), np.zeros_like(model.c),
                   beta1=beta1, beta2=beta2, epsilon=epsilon)


def adam_step(model: FactorModel, state: AdamState, u: int, i: int,
              value: float, eta: float, lam: float) -> None:
    """One Adam step on a single rating.

    The step counter is global: each call advances it once, and only the
    moment slices of the touched (u, i) blocks are updated, with bias
    correction taken at the global count.
    """
    p = model.P[u]
    q = model.Q[i]
    err = value - (p @ q + model.b[u] + model.c[i])
    if not math.isfinite(err):
        raise DivergenceError(
            f"non-finite update for (u={u}, i={i}) at eta={eta}")
    gp = -err * q + lam * p
    gq = -err * p + lam * q
    gb = -err + lam * model.b[u]
    gc = -err + lam * model.c[i]

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step

    state.m_P[u] = b1 * state.m_P[u] + (1.0 - b1) * gp
    state.v_P[u] = b2 * state.v_P[u] + (1.0 - b2) * gp * gp
    model.P[u] = p - eta * (state.m_P[u] / bc1) / (np.sqrt(state.v_P[u] / bc2) + state.epsilon)

    state.m_Q[i] = b1 * state.m_Q[i] + (1.0 - b1) * gq
    state.v_Q[i] = b2 * state.v_Q[i] + (1.0 - b2) * gq * gq
    model.Q[i] = q - eta * (state.m_Q[i] / bc1) / (np.sqrt(state.v_Q[i] / bc2) + state.epsilon)

    state.m_b[u] = b1 * state.m_b[u] + (1.0 - b1) * gb
    state.v_b[u] = b2 * state.v_b[u] + (1.0 - b2) * gb * gb
    model.b[u] -= eta * (state.m_b[u] / bc1) / (math.sqrt(state.v_b[u] / bc2) + state.epsilon)

    state.m_c[i] = b1 * state.m_c[i] + (1.0 - b1) * gc
    state.v_c[i] = b2 * state.v_c[i] + (1.0 - b2) * gc * gc
    model.c[i] -= eta * (state.m_c[i] / bc1) / (math.sqrt(state.v_c[i] / bc2) + state.epsilon)


def train_sgd(model: FactorModel, train: SparseRatingMatrix,
              valid: SparseRatingMatrix, cfg: TrainConfig) -> list[EpochTrace]:
    """Train with plain SGD until convergence; returns the epoch trace."""
    def step(u, i, v):
        sgd_step(model, u, i, v, cfg.eta, cfg.lam)
    return _train(model, train, valid, cfg, step)


def train_adam(model: FactorModel, train: SparseRatingMatrix,
               valid: SparseRatingMatrix, cfg: TrainConfig,
               state: AdamState | None = None) -> list[EpochTrace]:
    """Train with Adam until convergence; returns the epoch trace."""
    if state is None:
        state = AdamState.for_model(model)
    def step(u, i, v):
        adam_step(model, state, u, i, v, cfg.eta, cfg.lam)
    return _train(model, train, valid, cfg, step)


def _train(model, train, valid, cfg, step_fn) -> list[EpochTrace]:
    if len(train) == 0:
        raise ValueError("training set is empty")
    # Distinct stream from init_model(cfg.seed) so the epoch shuffles do
    # not replay the initialization draws.
    rng = np.random.default_rng([cfg.seed, 1])
    users, items, values = train.users, train.items, train.values
    trace: list[EpochTrace] = []
    prev_valid = None
    start = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        # Overflow on the way to divergence is expected; the finite checks
        # below and in the step functions do the reporting.
        with np.errstate(over="ignore", invalid="ignore"):
            for pos in rng.permutation(len(train)):
                step_fn(users[pos], items[pos], values[pos])
            train_rmse = rmse(model, train)
            valid_rmse = rmse(model, valid)
        if not (math.isfinite(train_rmse) and math.isfinite(valid_rmse)):
            raise DivergenceError(
                f"non-finite RMSE after epoch {epoch} at eta={cfg.eta}")
        trace.append(EpochTrace(epoch, train_rmse, valid_rmse,
                                time.perf_counter() - start))
        if prev_valid is not None and abs(valid_rmse - prev_valid) < cfg.convergence_threshold:
            break
        prev_valid = valid_rmse
    return trace


def write_epoch_trace(trace: list[EpochTrace], path) -> None:
    """Emit an epoch trace as CSV."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_rmse", "valid_rmse", "seconds"])
        for row in trace:
            writer.writerow([row.epoch, f"{row.train_rmse:.17g}",
                             f"{row.valid_rmse:.17g}", f"{row.seconds:.6f}"])
