"""Biased latent factor model: parameters, prediction, loss, gradients, metrics.

A rating is predicted as the inner product of a user factor row and an
item factor row plus a per-user and a per-item bias.  All arithmetic is
64-bit; predictions are never clipped to the rating scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import SparseRatingMatrix
from .errors import DataError

_MODEL_MAGIC = "SGDELF1"


@dataclass
class TrainConfig:
    """Hyperparameters for factor-model training.

    ``lam`` is the L2 regularization strength applied to every parameter
    block; ``convergence_threshold`` is the minimum change in validation
    RMSE between epochs below which training stops.
    """

    eta: float = 0.01
    lam: float = 0.02
    factors: int = 20
    max_epochs: int = 1000
    convergence_threshold: float = 1e-5
    init_scale: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.lam < 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if self.factors < 1:
            raise ValueError(f"factors must be >= 1, got {self.factors}")
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if not (self.convergence_threshold > 0
                and math.isfinite(self.convergence_threshold)):
            raise ValueError("convergence_threshold must be positive and finite")
        if not self.init_scale > 0:
            raise ValueError(f"init_scale must be positive, got {self.init_scale}")


class FactorModel:
    """Parameter set {P, Q, b, c} of a biased latent factor model.

    ``P`` is num_users x f, ``Q`` is num_items x f (one row per item), and
    ``b`` / ``c`` are the user / item bias vectors.  Reads may happen
    concurrently; mutation requires exclusive access.
    """

    __slots__ = ("P", "Q", "b", "c")

    def __init__(self, P, Q, b, c):
        self.P = np.array(P, dtype=np.float64)
        self.Q = np.array(Q, dtype=np.float64)
        self.b = np.array(b, dtype=np.float64)
        self.c = np.array(c, dtype=np.float64)
        if self.P.ndim != 2 or self.Q.ndim != 2 or self.P.shape[1] != self.Q.shape[1]:
            raise ValueError("P and Q must be 2-d with a common factor dimension")
        if self.b.shape != (self.P.shape[0],) or self.c.shape != (self.Q.shape[0],):
            raise ValueError("bias vectors must match P and Q row counts")
        for block in (self.P, self.Q, self.b, self.c):
            if not np.all(np.isfinite(block)):
                raise ValueError("model parameters must be finite")

    @property
    def f(self) -> int:
        return self.P.shape[1]

    @property
    def num_users(self) -> int:
        return self.P.shape[0]

    @property
    def num_items(self) -> int:
        return self.Q.shape[0]

    def copy(self) -> "FactorModel":
        return FactorModel(self.P, self.Q, self.b, self.c)

    def predict(self, u: int, i: int) -> float:
        """Predicted rating for (u, i): p_u . q_i + b_u + c_i."""
        if not 0 <= u < self.num_users:
            raise IndexError(f"user index {u} out of range")
        if not 0 <= i < self.num_items:
            raise IndexError(f"item index {i} out of range")
        return float(self.P[u] @ self.Q[i] + self.b[u] + self.c[i])

    def predict_many(self, users, items) -> np.ndarray:
        """Vectorized prediction for aligned index arrays."""
        return (np.einsum("ij,ij->i", self.P[users], self.Q[items])
                + self.b[users] + self.c[items])

    def instance_loss(self, u: int, i: int, value: float, lam: float) -> float:
        """Regularized half squared error on a single rating."""
        err = value - self.predict(u, i)
        reg = (self.P[u] @ self.P[u] + self.Q[i] @ self.Q[i]
               + self.b[u] ** 2 + self.c[i] ** 2)
        return 0.5 * err * err + 0.5 * lam * float(reg)

    def instance_gradients(self, u: int, i: int, value: float, lam: float
                           ) -> tuple[np.ndarray, np.ndarray, float, float]:
        """Analytic gradients of :meth:`instance_loss` for the four blocks
        touched by (u, i): returns (d/dp_u, d/dq_i, d/db_u, d/dc_i)."""
        err = value - self.predict(u, i)
        gp = -err * self.Q[i] + lam * self.P[u]
        gq = -err * self.P[u] + lam * self.Q[i]
        gb = -err + lam * self.b[u]
        gc = -err + lam * self.c[i]
        return gp, gq, float(gb), float(gc)


def init_model(cfg: TrainConfig, num_users: int, num_items: int,
               seed: int | None = None) -> FactorModel:
    """Fresh model: P, Q uniform in (0, init_scale], biases zero.

    Small positive factors keep early predictions near zero while avoiding
    exactly-zero rows that gradient steps could never separate.
    Deterministic for a fixed seed (defaults to ``cfg.seed``).
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    # 1 - random() maps [0, 1) onto the half-open interval (0, 1].
    P = cfg.init_scale * (1.0 - rng.random((num_users, cfg.factors)))
    Q = cfg.init_scale * (1.0 - rng.random((num_items, cfg.factors)))
    return FactorModel(P, Q, np.zeros(num_users), np.zeros(num_items))


def rmse(model: FactorModel, data: SparseRatingMatrix) -> float:
    """Root mean squared prediction error over the known entries."""
    residuals = _residuals(model, data)
    return math.sqrt(float(residuals @ residuals) / len(data))


def mae(model: FactorModel, data: SparseRatingMatrix) -> float:
    """Mean absolute prediction error over the known entries."""
    residuals = _residuals(model, data)
    return float(np.abs(residuals).sum()) / len(data)


def _residuals(model: FactorModel, data: SparseRatingMatrix) -> np.ndarray:
    if len(data) == 0:
        raise ValueError("metrics are undefined on an empty rating set")
    return data.values - model.predict_many(data.users, data.items)


def objective(model: FactorModel, data: SparseRatingMatrix, lam: float) -> float:
    """Training objective: half squared error over the known entries plus
    (lam / 2) times the squared norm of every parameter block.

    Each parameter appears in the regularizer exactly once, so restricting
    the objective to one user (or item) sub-vector differs from the
    per-sub-group fitness only by a constant.
    """
    residuals = data.values - model.predict_many(data.users, data.items)
    reg = (float(np.sum(model.P * model.P)) + float(np.sum(model.Q * model.Q))
           + float(model.b @ model.b) + float(model.c @ model.c))
    return 0.5 * float(residuals @ residuals) + 0.5 * lam * reg


def save_model(model: FactorModel, path) -> None:
    """Write a model as decimal text.

    Layout: the magic line, a ``<num_users> <num_items> <f>`` line, the
    rows of P, the rows of Q, then b and c one vector per line.  Values
    carry 17 significant digits so the round trip is exact.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_MODEL_MAGIC}\n")
        fh.write(f"{model.num_users} {model.num_items} {model.f}\n")
        for row in model.P:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
        for row in model.Q:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
        fh.write(" ".join(f"{x:.17g}" for x in model.b) + "\n")
        fh.write(" ".join(f"{x:.17g}" for x in model.c) + "\n")


def load_model(path) -> FactorModel:
    """Read a model written by :func:`save_model`."""
    with open(path, "r", encoding="utf-8") as fh:
        if fh.readline().strip() != _MODEL_MAGIC:
            raise DataError(f"{path}: not a {_MODEL_MAGIC} model file")
        try:
            num_users, num_items, f = (int(x) for x in fh.readline().split())
        except ValueError:
            raise DataError(f"{path}: unreadable dimension line") from None
        rows = []
        for _ in range(num_users + num_items + 2):
            line = fh.readline()
            if not line:
                raise DataError(f"{path}: truncated model file")
            rows.append(np.array([float(x) for x in line.split()]))
    P = np.vstack(rows[:num_users]) if num_users else np.empty((0, f))
    Q = np.vstack(rows[num_users:num_users + num_items]) if num_items else np.empty((0, f))
    b, c = rows[-2], rows[-1]
    if P.shape != (num_users, f) or Q.shape != (num_items, f):
        raise DataError(f"{path}: factor row width does not match header")
    if b.shape != (num_users,) or c.shape != (num_items,):
        raise DataError(f"{path}: bias vector length does not match header")
    return FactorModel(P, Q, b, c)
