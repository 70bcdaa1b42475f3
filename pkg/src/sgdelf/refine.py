"""Second training layer: sequential-group differential evolution.

The trained parameters are split into per-user sub-vectors [p_u, b_u] and
per-item sub-vectors [q_i, c_i].  Each sub-vector seeds a population of K
candidate vectors; entity 0 is the sub-vector itself and the rest are
uniform perturbations of it.  Populations evolve by best/1 difference
mutation and greedy selection only -- there is deliberately no crossover,
so a candidate is always a whole vector, never a coordinate-wise mix.

Populations are processed strictly one after another (all user rows, then
all item columns, per pass), and each refined sub-vector is written back
into the model before the next population is built.  Selection never
accepts a worse candidate, so every write-back leaves the training
objective no higher than before.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import SparseRatingMatrix
from .errors import DivergenceError
from .model import FactorModel


@dataclass
class DEConfig:
    """Hyperparameters for the refinement layer.

    ``beta_*`` are the relative half-widths of the initialization
    intervals around the pre-trained coordinates (factor and bias widths
    are separate for rows and columns).  ``fitness_epsilon`` stops a
    population once the best fitness improves by less than this over a
    full iteration; ``passes`` repeats the whole row-then-column sweep.
    """

    pop_size: int = 10
    scale_factor: float = 0.4
    beta_p: float = 0.1
    beta_b: float = 0.1
    beta_q: float = 0.1
    beta_c: float = 0.1
    max_iters: int = 20
    fitness_epsilon: float = 1e-6
    seed: int = 0
    passes: int = 1

    def __post_init__(self):
        if self.pop_size < 2:
            raise ValueError(f"pop_size must be >= 2, got {self.pop_size}")
        if self.scale_factor < 0 or not math.isfinite(self.scale_factor):
            raise ValueError(f"scale_factor must be finite and >= 0, got "
                             f"{self.scale_factor}")
        for name in ("beta_p", "beta_b", "beta_q", "beta_c"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.fitness_epsilon < 0:
            raise ValueError("fitness_epsilon must be non-negative")
        if self.passes < 1:
            raise ValueError(f"passes must be >= 1, got {self.passes}")


@dataclass
class DEEntity:
    """One candidate sub-vector (f factor coordinates plus the bias) with
    its cached fitness."""

    vector: np.ndarray
    fitness: float


class DEPopulation:
    """K candidate entities for one sub-group plus the running best.

    ``best_idx`` always points at the entity of minimal fitness: selection
    only ever replaces an entity with a strictly better vector, so the
    best seen so far is always still present.
    """

    def __init__(self, kind: str, index: int, entities: list[DEEntity]):
        self.kind = kind
        self.index = index
        self.entities = entities
        self.best_idx = _argmin_fitness(entities)
        self.iterations = 0

    @property
    def best(self) -> DEEntity:
        return self.entities[self.best_idx]


@dataclass(frozen=True)
class MutationEvent:
    """Diagnostics record emitted per mutation when a callback is given.

    All vectors are copies taken at mutation time, so the event stream can
    be used to audit exactly how every accepted candidate was built.
    """

    kind: str
    index: int
    iteration: int
    k: int
    best: np.ndarray
    donor_a: np.ndarray
    donor_b: np.ndarray
    mutant: np.ndarray
    mutant_fitness: float
    accepted: bool
    best_fitness: float


@dataclass
class SubgroupTrace:
    """Refinement outcome of one sub-group.  ``initial_fitness`` is the
    fitness of the sub-vector that was in the model (entity 0), so
    ``initial - final`` is exactly how much the write-back lowered the
    training objective."""

    kind: str
    index: int
    initial_fitness: float
    final_fitness: float
    iterations: int


def row_fitness(vector, u: int, model: FactorModel, train: SparseRatingMatrix,
                lam: float) -> float:
    """Fitness of a candidate [p_u, b_u]: half squared error over the
    ratings in row u (item factors and biases fixed from the model) plus
    (lam / 2) * (|p_u|^2 + b_u^2)."""
    return _row_fitness_fn(model, u, train, lam)(np.asarray(vector, dtype=np.float64))


def col_fitness(vector, i: int, model: FactorModel, train: SparseRatingMatrix,
                lam: float) -> float:
    """Mirror of :func:`row_fitness` for a candidate [q_i, c_i] over the
    ratings in column i."""
    return _col_fitness_fn(model, i, train, lam)(np.asarray(vector, dtype=np.float64))


def _row_fitness_fn(model, u, train, lam) -> Callable[[np.ndarray], float]:
    pos = train.row_index[u]
    q_rows = model.Q[train.items[pos]]
    c_vals = model.c[train.items[pos]]
    r_vals = train.values[pos]

    def fitness(vec: np.ndarray) -> float:
        p, b = vec[:-1], vec[-1]
        resid = r_vals - q_rows @ p - b - c_vals
        return 0.5 * float(resid @ resid) + 0.5 * lam * (float(p @ p) + b * b)

    return fitness


def _col_fitness_fn(model, i, train, lam) -> Callable[[np.ndarray], float]:
    pos = train.col_index[i]
    p_rows = model.P[train.users[pos]]
    b_vals = model.b[train.users[pos]]
    r_vals = train.values[pos]

    def fitness(vec: np.ndarray) -> float:
        q, c = vec[:-1], vec[-1]
        resid = r_vals - p_rows @ q - b_vals - c
        return 0.5 * float(resid @ resid) + 0.5 * lam * (float(q @ q) + c * c)

    return fitness


def init_row_population(model: FactorModel, u: int, train: SparseRatingMatrix,
                        lam: float, cfg: DEConfig, rng) -> DEPopulation:
    """Population for row sub-group u: entity 0 is exactly [p_u, b_u], the
    others are coordinate-wise uniforms between (1-beta)x and (1+beta)x."""
    base = np.append(model.P[u], model.b[u])
    fitness = _row_fitness_fn(model, u, train, lam)
    return _init_population("row", u, base, cfg.beta_p, cfg.beta_b,
                            fitness, cfg, rng)


def init_col_population(model: FactorModel, i: int, train: SparseRatingMatrix,
                        lam: float, cfg: DEConfig, rng) -> DEPopulation:
    """Population for column sub-group i: entity 0 is exactly [q_i, c_i]."""
    base = np.append(model.Q[i], model.c[i])
    fitness = _col_fitness_fn(model, i, train, lam)
    return _init_population("col", i, base, cfg.beta_q, cfg.beta_c,
                            fitness, cfg, rng)


def _init_population(kind, index, base, beta_factors, beta_bias, fitness,
                     cfg, rng) -> DEPopulation:
    beta = np.full(len(base), beta_factors)
    beta[-1] = beta_bias
    # The interval endpoints flip order for negative coordinates; sort
    # them so the draw is always from [lo, hi].  A zero coordinate gives a
    # degenerate point.
    lo = np.minimum((1.0 - beta) * base, (1.0 + beta) * base)
    hi = np.maximum((1.0 - beta) * base, (1.0 + beta) * base)
    draws = lo + rng.random((cfg.pop_size - 1, len(base))) * (hi - lo)
    entities = [DEEntity(base.copy(), float(fitness(base)))]
    entities += [DEEntity(vec, float(fitness(vec))) for vec in draws]
    if not all(math.isfinite(e.fitness) for e in entities):
        raise DivergenceError(f"non-finite fitness in {kind} population {index}")
    return DEPopulation(kind, index, entities)


def _argmin_fitness(entities: list[DEEntity]) -> int:
    best = 0
    for k, e in enumerate(entities):
        if not math.isfinite(e.fitness):
            raise DivergenceError("non-finite fitness in population")
        if e.fitness < entities[best].fitness:
            best = k
    return best


def global_best(pop: DEPopulation) -> DEEntity:
    """Entity of minimal cached fitness; ties go to the lowest index."""
    return pop.entities[_argmin_fitness(pop.entities)]


def _draw_donors(pop_size: int, k: int, rng) -> tuple[int, int]:
    """Two distinct donor indices, both different from k."""
    if pop_size < 3:
        raise ValueError("best/1 mutation needs pop_size >= 3 for two "
                         "distinct donors")
    candidates = np.array([j for j in range(pop_size) if j != k])
    pair = rng.choice(candidates, size=2, replace=False)
    return int(pair[0]), int(pair[1])


def mutate_best1(pop: DEPopulation, k: int, cfg: DEConfig, rng) -> np.ndarray:
    """best/1 mutant for slot k: best vector plus scale_factor times the
    difference of two random distinct donors.  No coordinate clamping and
    no crossover are applied."""
    rd1, rd2 = _draw_donors(len(pop.entities), k, rng)
    return (pop.best.vector
            + cfg.scale_factor * (pop.entities[rd1].vector
                                  - pop.entities[rd2].vector))


def select(pop: DEPopulation, k: int, mutant, mutant_fitness: float) -> bool:
    """Greedy selection for slot k: keep the mutant only if it is strictly
    better; a tie keeps the incumbent.  Returns True when the mutant was
    accepted.  The running best is updated on strict improvement."""
    if not math.isfinite(mutant_fitness):
        raise DivergenceError("non-finite mutant fitness in selection")
    if mutant_fitness < pop.entities[k].fitness:
        pop.entities[k] = DEEntity(np.array(mutant, dtype=np.float64),
                                   float(mutant_fitness))
        if mutant_fitness < pop.best.fitness:
            pop.best_idx = k
        return True
    return False


def refine_subgroup(pop: DEPopulation, fitness: Callable[[np.ndarray], float],
                    cfg: DEConfig, rng,
                    callback: Callable[[MutationEvent], None] | None = None
                    ) -> DEEntity:
    """Evolve one population until the best fitness stalls or the
    iteration cap is reached; returns the best entity.

    The running best can improve mid-iteration and later mutants in the
    same iteration already build on it.
    """
    pop_size = len(pop.entities)
    for iteration in range(1, cfg.max_iters + 1):
        before = pop.best.fitness
        for k in range(pop_size):
            rd1, rd2 = _draw_donors(pop_size, k, rng)
            best_vec = pop.best.vector
            donor_a = pop.entities[rd1].vector
            donor_b = pop.entities[rd2].vector
            mutant = best_vec + cfg.scale_factor * (donor_a - donor_b)
            mutant_fitness = float(fitness(mutant))
            if callback is None:
                select(pop, k, mutant, mutant_fitness)
            else:
                snapshot = (best_vec.copy(), donor_a.copy(), donor_b.copy(),
                            mutant.copy())
                accepted = select(pop, k, mutant, mutant_fitness)
                callback(MutationEvent(pop.kind, pop.index, iteration, k,
                                       *snapshot, mutant_fitness, accepted,
                                       pop.best.fitness))
        pop.iterations = iteration
        if before - pop.best.fitness < cfg.fitness_epsilon:
            break
    return pop.best


def refine_all(model: FactorModel, train: SparseRatingMatrix, lam: float,
               cfg: DEConfig,
               callback: Callable[[MutationEvent], None] | None = None
               ) -> list[SubgroupTrace]:
    """Refine every sub-group in place, sequentially.

    Per pass, rows are processed in index order and then columns; each
    refined best vector is written back before the next population is
    built, so later sub-groups see earlier improvements.  Rows and columns
    without ratings are skipped untouched (their fitness would be pure
    regularization).  Deterministic for a fixed ``cfg.seed``.
    """
    rng = np.random.default_rng(cfg.seed)
    f = model.f
    trace: list[SubgroupTrace] = []
    for _ in range(cfg.passes):
        for u in range(model.num_users):
            if len(train.row_index[u]) == 0:
                continue
            fitness = _row_fitness_fn(model, u, train, lam)
            base = np.append(model.P[u], model.b[u])
            pop = _init_population("row", u, base, cfg.beta_p, cfg.beta_b,
                                   fitness, cfg, rng)
            initial = pop.entities[0].fitness
            best = refine_subgroup(pop, fitness, cfg, rng, callback)
            model.P[u] = best.vector[:f]
            model.b[u] = best.vector[f]
            trace.append(SubgroupTrace("row", u, initial, best.fitness,
                                       pop.iterations))
        for i in range(model.num_items):
            if len(train.col_index[i]) == 0:
                continue
            fitness = _col_fitness_fn(model, i, train, lam)
            base = np.append(model.Q[i], model.c[i])
            pop = _init_population("col", i, base, cfg.beta_q, cfg.beta_c,
                                   fitness, cfg, rng)
            initial = pop.entities[0].fitness
            best = refine_subgroup(pop, fitness, cfg, rng, callback)
            model.Q[i] = best.vector[:f]
            model.c[i] = best.vector[f]
            trace.append(SubgroupTrace("col", i, initial, best.fitness,
                                       pop.iterations))
    return trace


def write_refine_trace(trace: list[SubgroupTrace], path) -> None:
    """Emit a refinement trace as CSV."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subgroup_kind", "index", "initial_fitness",
                         "final_fitness", "iterations"])
        for row in trace:
            writer.writerow([row.kind, row.index, f"{row.initial_fitness:.17g}",
                             f"{row.final_fitness:.17g}", row.iterations])
