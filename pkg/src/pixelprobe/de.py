"""Differential evolution with latin hypercube initialization.

Minimization-only rand/1/bin DE: per generation each member spawns a mutant
x_r1 + F*(x_r2 - x_r3), binomial crossover mixes it with the member, and the
trial replaces the member only on strict fitness improvement.  F is either
fixed or redrawn uniformly from a dither range once per generation.

The fitness function is a batch evaluator (N, D) -> (N,).  All random draws
happen on the control thread in fixed member order before trials are
evaluated, so results are bit-reproducible for a given seed no matter how
the evaluator parallelizes internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ContractViolationError


class FitnessEvaluationError(RuntimeError):
    """The batch fitness function raised; carries the failing generation."""

    def __init__(self, generation: int, cause: BaseException):
        super().__init__(f"fitness evaluation failed at generation {generation}: {cause}")
        self.generation = generation


@dataclass
class DeConfig:
    """Optimizer settings.

    ``mutation_factor`` is either a float (fixed F) or a (lo, hi) pair, in
    which case F is redrawn uniformly from [lo, hi) each generation.
    ``bounds`` is a (D, 2) array of per-dimension [min, max] boxes.
    """

    bounds: np.ndarray = None
    population_size: int = 400
    max_generations: int = 100
    crossover_rate: float = 0.7
    mutation_factor: float | tuple[float, float] = (0.5, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.bounds is not None:
            self.bounds = np.asarray(self.bounds, dtype=np.float64)
            if self.bounds.ndim != 2 or self.bounds.shape[1] != 2:
                raise ContractViolationError(f"bounds must be (D, 2), got {self.bounds.shape}")
            if np.any(self.bounds[:, 0] >= self.bounds[:, 1]):
                raise ContractViolationError("each bounds row needs min < max")
        if self.population_size < 4:
            raise ContractViolationError("population_size must be >= 4")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ContractViolationError("crossover_rate must be in [0, 1]")
        f = self.mutation_factor
        if np.isscalar(f):
            if not 0.0 <= f <= 2.0:
                raise ContractViolationError("mutation factor must be in [0, 2]")
        else:
            lo, hi = f
            if not (0.0 <= lo < hi <= 2.0):
                raise ContractViolationError("dither range must satisfy 0 <= lo < hi <= 2")


@dataclass
class Population:
    """One generation's members with their cached fitness values."""

    generation: int  # 1 = the evaluated initial population
    members: np.ndarray  # (P, D)
    fitnesses: np.ndarray  # (P,)


@dataclass
class EvolveResult:
    best_member: np.ndarray
    best_fitness: float
    generations_run: int
    history: list[float] = field(default_factory=list)  # best fitness per generation
    stopped_early: bool = False


def lhs_init(bounds, population_size: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube sample: per dimension, one point in each of P equal strata.

    Strata order is shuffled independently per dimension.
    """
    bounds = np.asarray(bounds, dtype=np.float64)
    d = bounds.shape[0]
    p = population_size
    members = np.empty((p, d))
    for j in range(d):
        strata = rng.permutation(p)
        offsets = rng.random(p)
        unit = (strata + offsets) / p
        members[:, j] = bounds[j, 0] + unit * (bounds[j, 1] - bounds[j, 0])
    return members


def _draw_parents(population_size: int, i: int, rng: np.random.Generator) -> tuple[int, int, int]:
    """Three distinct indices != i, uniform without replacement."""
    picks = rng.choice(population_size - 1, size=3, replace=False)
    return tuple(int(r) + (r >= i) for r in picks)


def _draw_parent_matrix(population_size: int, rng: np.random.Generator) -> np.ndarray:
    """Per member, three distinct parent indices != the member's own index.

    Vectorized rejection sampling over the index range with self excluded;
    the draw sequence is fixed by the rng, so runs stay reproducible.
    """
    p = population_size
    picks = rng.integers(0, p - 1, size=(p, 3))
    while True:
        clash = ((picks[:, 0] == picks[:, 1])
                 | (picks[:, 0] == picks[:, 2])
                 | (picks[:, 1] == picks[:, 2]))
        if not clash.any():
            break
        picks[clash] = rng.integers(0, p - 1, size=(int(clash.sum()), 3))
    rows = np.arange(p)[:, None]
    return picks + (picks >= rows)


def mutate(members, i: int, factor: float, rng: np.random.Generator, bounds,
           parents: tuple[int, int, int] | None = None) -> np.ndarray:
    """rand/1 mutant for member i, clamped to bounds.

    ``parents`` forces the (r1, r2, r3) triple instead of drawing it; the
    indices must be distinct and different from i.
    """
    members = np.asarray(members)
    p = members.shape[0]
    if p < 4:
        raise ContractViolationError("mutation needs a population of at least 4")
    if parents is None:
        r1, r2, r3 = _draw_parents(p, i, rng)
    else:
        r1, r2, r3 = parents
        if len({r1, r2, r3, i}) != 4:
            raise ContractViolationError("parent indices must be distinct and != i")
    bounds = np.asarray(bounds, dtype=np.float64)
    v = members[r1] + factor * (members[r2] - members[r3])
    return np.clip(v, bounds[:, 0], bounds[:, 1])


def crossover(target, mutant, crossover_rate: float, rng: np.random.Generator) -> np.ndarray:
    """Binomial crossover; one uniformly chosen dimension always comes from the mutant."""
    target = np.asarray(target)
    mutant = np.asarray(mutant)
    if target.shape != mutant.shape:
        raise ContractViolationError("target and mutant must have the same dimension")
    d = target.shape[0]
    draws = rng.random(d)
    j_rand = int(rng.integers(d))
    take_mutant = draws <= crossover_rate
    take_mutant[j_rand] = True
    return np.where(take_mutant, mutant, target)


def _draw_factor(config: DeConfig, rng: np.random.Generator) -> float:
    f = config.mutation_factor
    if np.isscalar(f):
        return float(f)
    lo, hi = f
    return float(rng.uniform(lo, hi))


def evolve(fitness_fn, config: DeConfig, early_stop=None) -> EvolveResult:
    """Run the generational loop and return the best member found.

    ``fitness_fn`` maps an (N, D) matrix to N fitness values (lower is
    better).  ``early_stop``, if given, is called as
    ``early_stop(best_member, best_fitness)`` after each completed
    generation (the evaluated initial population counts as generation 1)
    and stops the run when it returns True.

    ``generations_run`` counts evaluated generations, so a full run gives
    ``generations_run == max_generations`` (the initial population plus
    ``max_generations - 1`` evolution sweeps).
    """
    if config.bounds is None:
        raise ContractViolationError("config.bounds is required")
    rng = np.random.default_rng(config.seed)
    bounds = config.bounds
    p = config.population_size
    d = bounds.shape[0]
    cr = config.crossover_rate

    members = lhs_init(bounds, p, rng)
    fitnesses = _evaluate(fitness_fn, members, generation=1)
    pop = Population(generation=1, members=members, fitnesses=fitnesses)

    history = []
    result = _record_best(pop, history)
    if early_stop is not None and early_stop(result.best_member, result.best_fitness):
        result.stopped_early = True
        result.generations_run = 1
        return result

    for generation in range(2, config.max_generations + 1):
        # all draws happen here, before any evaluation, in a fixed order
        factor = _draw_factor(config, rng)
        r1, r2, r3 = _draw_parent_matrix(p, rng).T
        mutants = pop.members[r1] + factor * (pop.members[r2] - pop.members[r3])
        np.clip(mutants, bounds[:, 0], bounds[:, 1], out=mutants)
        take_mutant = rng.random((p, d)) <= cr
        take_mutant[np.arange(p), rng.integers(0, d, size=p)] = True
        trials = np.where(take_mutant, mutants, pop.members)
        trial_fitnesses = _evaluate(fitness_fn, trials, generation)
        improved = trial_fitnesses < pop.fitnesses
        pop.members[improved] = trials[improved]
        pop.fitnesses[improved] = trial_fitnesses[improved]
        pop.generation = generation

        result = _record_best(pop, history)
        if early_stop is not None and early_stop(result.best_member, result.best_fitness):
            result.stopped_early = True
            result.generations_run = generation
            return result

    result.generations_run = config.max_generations
    return result


def _evaluate(fitness_fn, members, generation: int) -> np.ndarray:
    try:
        values = np.asarray(fitness_fn(members), dtype=np.float64)
    except Exception as exc:
        raise FitnessEvaluationError(generation, exc) from exc
    if values.shape != (members.shape[0],):
        raise FitnessEvaluationError(
            generation,
            ValueError(f"batch evaluator returned shape {values.shape}, expected ({members.shape[0]},)"),
        )
    return values


def _record_best(pop: Population, history: list[float]) -> EvolveResult:
    best = int(np.argmin(pop.fitnesses))
    history.append(float(pop.fitnesses[best]))
    return EvolveResult(
        best_member=pop.members[best].copy(),
        best_fitness=float(pop.fitnesses[best]),
        generations_run=pop.generation,
        history=history,
        stopped_early=False,
    )
