"""Genetic-algorithm wavelength selection scored by cross-validated PLSR error."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from ._validation import check_fraction
from .chemometrics import SpectraTable, cv_rmse_path


@dataclass
class GaConfig:
    population_size: int = 50
    generations: int = 100
    tournament_size: int = 3
    mutation_rate: float = 0.03
    elitism_rate: float = 0.50
    min_bands: int = 3
    max_bands: int = 15
    cv_folds: int = 5
    max_lv: int = 10
    seed: int = 0

    def validate(self, n_bands):
        check_fraction(self.mutation_rate, "mutation_rate")
        check_fraction(self.elitism_rate, "elitism_rate")
        if self.tournament_size < 2:
            raise ValueError("tournament_size must be >= 2")
        if self.tournament_size > self.population_size:
            raise ValueError("tournament_size cannot exceed population_size")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not 1 <= self.min_bands <= self.max_bands <= n_bands:
            raise ValueError(
                f"band-count bounds infeasible: need 1 <= min ({self.min_bands}) "
                f"<= max ({self.max_bands}) <= B ({n_bands})"
            )
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")


@dataclass
class Individual:
    genome: np.ndarray
    fitness: float = math.nan

    @property
    def evaluated(self):
        return not math.isnan(self.fitness)

    def copy(self):
        return Individual(self.genome.copy(), self.fitness)


@dataclass
class GaResult:
    best_genome: np.ndarray
    best_fitness: float
    selected_wavelengths: np.ndarray
    history: list = field(default_factory=list)
    mean_history: list = field(default_factory=list)

    def write(self, history_path, wavelengths_path):
        with open(history_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["generation", "best_fitness", "mean_fitness"])
            for g, (best, mean) in enumerate(zip(self.history, self.mean_history), start=1):
                writer.writerow([g, repr(float(best)), repr(float(mean))])
        Path(wavelengths_path).write_text(
            "\n".join(repr(float(w)) for w in self.selected_wavelengths) + "\n"
        )


def read_wavelengths(path):
    return [float(line) for line in Path(path).read_text().split()]


def interleaved_folds(n, k):
    """Fold ``f`` holds rows ``f, f + k, f + 2k, ...`` (independent of any seed)."""
    k = min(k, n)
    return [np.arange(f, n, k) for f in range(k)]


def fitness(ind, table, cv_folds=5, max_lv=10):
    """k-fold CV RMSE of PLSR on the genome's bands, minimised over LV count."""
    genome = ind.genome if isinstance(ind, Individual) else np.asarray(ind, dtype=bool)
    cols = np.flatnonzero(genome)
    if cols.size == 0:
        raise ValueError("genome selects no band")
    folds = interleaved_folds(len(table), cv_folds)
    n_train = len(table) - max(len(f) for f in folds)
    lv = max(1, min(max_lv, cols.size, n_train - 1))
    path = cv_rmse_path(table.X[:, cols], table.y, folds, lv)
    return float(path.min())


def tournament_select(population, k, rng):
    """Best of ``k`` members drawn uniformly without replacement (lower fitness wins)."""
    idx = rng.choice(len(population), size=k, replace=False)
    # ties resolve to the lowest population index
    best = min(idx, key=lambda i: (population[i].fitness, i))
    return population[best]


def single_point_crossover(a, b, point=None, rng=None):
    """Swap genome suffixes at ``point`` (drawn from [1, B-1] when omitted)."""
    ga = a.genome if isinstance(a, Individual) else np.asarray(a, dtype=bool)
    gb = b.genome if isinstance(b, Individual) else np.asarray(b, dtype=bool)
    if ga.shape != gb.shape:
        raise ValueError("genomes differ in length")
    n = ga.size
    if point is None:
        point = int(rng.integers(1, n))
    if not 1 <= point <= n - 1:
        raise ValueError(f"crossover point {point} outside [1, {n - 1}]")
    c1 = np.concatenate([ga[:point], gb[point:]])
    c2 = np.concatenate([gb[:point], ga[point:]])
    return Individual(c1), Individual(c2)


def repair(genome, min_bands, max_bands, rng):
    """Flip random genes until the selected-band count lies in [min_bands, max_bands]."""
    genome = genome.copy()
    count = int(genome.sum())
    if count < min_bands:
        off = np.flatnonzero(~genome)
        genome[rng.choice(off, size=min_bands - count, replace=False)] = True
    elif count > max_bands:
        on = np.flatnonzero(genome)
        genome[rng.choice(on, size=count - max_bands, replace=False)] = False
    return genome


def mutate(ind, rate, rng, min_bands=0, max_bands=None):
    """Bit-flip mutation with per-gene probability ``rate``, then repair."""
    check_fraction(rate, "rate")
    genome = ind.genome if isinstance(ind, Individual) else np.asarray(ind, dtype=bool)
    flips = rng.random(genome.size) < rate
    mutated = genome ^ flips
    max_bands = genome.size if max_bands is None else max_bands
    return Individual(repair(mutated, min_bands, max_bands, rng))


def random_genome(n_bands, min_bands, max_bands, rng):
    k = int(rng.integers(min_bands, max_bands + 1))
    genome = np.zeros(n_bands, dtype=bool)
    genome[rng.choice(n_bands, size=k, replace=False)] = True
    return genome


def run_ga(table, config=None):
    """Evolve band subsets; the best genome minimises CV RMSE.

    Each generation keeps the top ``elitism_rate`` fraction unchanged and fills
    the rest with tournament-selected parents recombined by single-point
    crossover and mutated. Evaluations are cached per genome, so a run is a
    pure function of ``(table, config)``.
    """
    config = config or GaConfig()
    n_bands = table.n_bands
    config.validate(n_bands)
    rng = np.random.default_rng(config.seed)
    cache = {}

    def evaluate(ind):
        if not ind.evaluated:
            key = ind.genome.tobytes()
            if key not in cache:
                cache[key] = fitness(ind, table, config.cv_folds, config.max_lv)
            ind.fitness = cache[key]
        return ind

    def ranked(pop):
        order = sorted(range(len(pop)), key=lambda i: (pop[i].fitness, i))
        return [pop[i] for i in order]

    population = [
        evaluate(Individual(random_genome(n_bands, config.min_bands, config.max_bands, rng)))
        for _ in range(config.population_size)
    ]
    population = ranked(population)
    n_elite = max(1, int(round(config.elitism_rate * config.population_size)))
    n_elite = min(n_elite, config.population_size)
    history, mean_history = [], []

    for _ in range(config.generations):
        offspring = [ind.copy() for ind in population[:n_elite]]
        while len(offspring) < config.population_size:
            a = tournament_select(population, config.tournament_size, rng)
            b = tournament_select(population, config.tournament_size, rng)
            for child in single_point_crossover(a, b, rng=rng):
                if len(offspring) == config.population_size:
                    break
                child = mutate(child, config.mutation_rate, rng, config.min_bands, config.max_bands)
                offspring.append(child)
        population = ranked([evaluate(ind) for ind in offspring])
        history.append(population[0].fitness)
        mean_history.append(float(np.mean([ind.fitness for ind in population])))

    best = population[0]
    return GaResult(
        best_genome=best.genome.copy(),
        best_fitness=best.fitness,
        selected_wavelengths=table.wavelengths[best.genome],
        history=history,
        mean_history=mean_history,
    )


class GeneticBandSelector(SelectorMixin, BaseEstimator):
    """Select wavelength columns with :func:`run_ga`.

    Parameters mirror :class:`GaConfig`. After ``fit`` the estimator exposes
    ``support_`` (boolean mask over columns) and ``result_`` (the
    :class:`GaResult`).
    """

    def __init__(self, population_size=50, generations=100, tournament_size=3,
                 mutation_rate=0.03, elitism_rate=0.5, min_bands=3, max_bands=15,
                 cv_folds=5, max_lv=10, seed=0):
        self.population_size = population_size
        self.generations = generations
        self.tournament_size = tournament_size
        self.mutation_rate = mutation_rate
        self.elitism_rate = elitism_rate
        self.min_bands = min_bands
        self.max_bands = max_bands
        self.cv_folds = cv_folds
        self.max_lv = max_lv
        self.seed = seed

    def fit(self, X, y, wavelengths=None):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if wavelengths is None:
            wavelengths = np.arange(X.shape[1], dtype=np.float64)
        table = SpectraTable(range(X.shape[0]), X, y, wavelengths)
        self.result_ = run_ga(table, GaConfig(**self.get_params()))
        self.support_ = self.result_.best_genome
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_
