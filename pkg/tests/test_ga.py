import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hsirecon.ga import (
    GaConfig, GeneticBandSelector, Individual, fitness, interleaved_folds, mutate, random_genome,
    read_wavelengths, repair, run_ga, single_point_crossover, tournament_select,
)
from hsirecon.synth import make_planted_table

PLANTED = (3, 9, 15)


def genome_of(bands, n=20):
    g = np.zeros(n, dtype=bool)
    g[list(bands)] = True
    return g


def bits(text):
    return np.array([c == "1" for c in text])


@pytest.fixture(scope="module")
def planted():
    return make_planted_table()


@pytest.fixture(scope="module")
def noiseless():
    return make_planted_table(noise_sd=0.0)


class TestFitness:
    def test_planted_noiseless(self, noiseless):
        assert fitness(genome_of(PLANTED), noiseless) < 1e-6

    def test_noise_bands_near_sd(self, planted):
        noise = [b for b in range(20) if b not in PLANTED][:4]
        value = fitness(genome_of(noise), planted)
        assert value == pytest.approx(np.std(planted.y, ddof=1), rel=0.2)

    def test_deterministic(self, planted):
        g = genome_of((1, 4, 9))
        assert fitness(g, planted) == fitness(g.copy(), planted)

    def test_empty_genome(self, planted):
        with pytest.raises(ValueError, match="no band"):
            fitness(np.zeros(20, bool), planted)

    def test_folds_partition(self):
        folds = interleaved_folds(11, 5)
        np.testing.assert_array_equal(np.sort(np.concatenate(folds)), np.arange(11))
        np.testing.assert_array_equal(folds[1], [1, 6])


class TestTournament:
    @staticmethod
    def population(values):
        return [Individual(np.zeros(2, bool), float(v)) for v in values]

    def test_full_size_is_global_best(self, rng):
        pop = self.population([4, 2, 9, 1, 5])
        for _ in range(20):
            assert tournament_select(pop, 5, rng) is pop[3]

    def test_k1_uniform(self, rng):
        pop = self.population([1, 2, 3, 4])
        counts = np.zeros(4)
        for _ in range(8000):
            winner = tournament_select(pop, 1, rng)
            counts[next(i for i, p in enumerate(pop) if p is winner)] += 1
        np.testing.assert_allclose(counts / 8000, 0.25, atol=0.02)

    def test_k2_best_frequency(self, rng):
        # the best member is in 3 of the 6 two-member subsets
        pop = self.population([1, 2, 3, 4])
        wins = sum(tournament_select(pop, 2, rng) is pop[0] for _ in range(10000))
        assert wins / 10000 == pytest.approx(3 / 6, abs=0.02)


class TestCrossover:
    def test_hand_example(self):
        c1, c2 = single_point_crossover(bits("1100"), bits("0011"), point=2)
        np.testing.assert_array_equal(c1.genome, bits("1111"))
        np.testing.assert_array_equal(c2.genome, bits("0000"))

    def test_equal_parents(self):
        a = bits("10110")
        for child in single_point_crossover(a, a.copy(), point=3):
            np.testing.assert_array_equal(child.genome, a)

    def test_last_point(self):
        a, b = bits("10101"), bits("01010")
        c1, c2 = single_point_crossover(a, b, point=4)
        assert np.count_nonzero(c1.genome != a) <= 1 and np.count_nonzero(c2.genome != b) <= 1

    def test_point_range(self):
        with pytest.raises(ValueError, match="outside"):
            single_point_crossover(bits("10"), bits("01"), point=2)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            single_point_crossover(bits("10"), bits("011"), point=1)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 30), st.integers(0, 2**31))
    def test_gene_conservation(self, n, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.random(n) < 0.5, rng.random(n) < 0.5
        c1, c2 = single_point_crossover(a, b, rng=rng)
        np.testing.assert_array_equal(c1.genome.astype(int) + c2.genome, a.astype(int) + b)


class TestMutation:
    def test_rate_zero(self, rng):
        g = bits("1011001")
        np.testing.assert_array_equal(mutate(Individual(g), 0.0, rng).genome, g)

    def test_rate_one_complements(self, rng):
        g = bits("1011001")
        np.testing.assert_array_equal(mutate(Individual(g), 1.0, rng).genome, ~g)

    def test_mean_flips(self, rng):
        g = np.zeros(200, bool)
        flips = [mutate(Individual(g), 0.03, rng).genome.sum() for _ in range(1000)]
        assert np.mean(flips) == pytest.approx(6.0, abs=0.5)

    def test_rate_validated(self, rng):
        with pytest.raises(ValueError):
            mutate(Individual(bits("10")), 1.5, rng)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 10), st.integers(0, 10))
    def test_repair_bounds(self, seed, lo, extra):
        rng = np.random.default_rng(seed)
        hi = min(lo + extra, 20)
        g = repair(rng.random(20) < rng.random(), lo, hi, rng)
        assert lo <= g.sum() <= hi

    def test_random_genome_bounds(self, rng):
        for _ in range(50):
            assert 3 <= random_genome(20, 3, 6, rng).sum() <= 6


class TestRunGa:
    small = dict(population_size=12, generations=8, min_bands=2, max_bands=6)

    def test_generations_zero(self, planted):
        result = run_ga(planted, GaConfig(generations=0, **{k: v for k, v in self.small.items()
                                                           if k != "generations"}))
        assert result.history == []
        assert np.isfinite(result.best_fitness)

    def test_history_monotone(self, planted):
        result = run_ga(planted, GaConfig(**self.small))
        assert len(result.history) == 8
        assert np.all(np.diff(result.history) <= 0)

    def test_deterministic(self, planted):
        a = run_ga(planted, GaConfig(seed=4, **self.small))
        b = run_ga(planted, GaConfig(seed=4, **self.small))
        np.testing.assert_array_equal(a.best_genome, b.best_genome)
        assert a.history == b.history and a.mean_history == b.mean_history

    def test_every_genome_within_bounds(self, planted, monkeypatch):
        import hsirecon.ga as ga_module

        seen = []
        original = ga_module.fitness

        def spy(ind, *args):
            seen.append(int(ind.genome.sum()))
            return original(ind, *args)

        monkeypatch.setattr(ga_module, "fitness", spy)
        run_ga(planted, GaConfig(**self.small))
        assert seen and all(2 <= s <= 6 for s in seen)

    def test_infeasible_bounds(self, planted):
        with pytest.raises(ValueError, match="infeasible"):
            run_ga(planted, GaConfig(min_bands=5, max_bands=4))
        with pytest.raises(ValueError, match="infeasible"):
            run_ga(planted, GaConfig(min_bands=3, max_bands=25))

    @pytest.mark.parametrize("bad", [dict(mutation_rate=1.2), dict(tournament_size=1),
                                     dict(elitism_rate=-0.1), dict(cv_folds=1)])
    def test_config_validation(self, planted, bad):
        with pytest.raises(ValueError):
            run_ga(planted, GaConfig(**bad))

    def test_write(self, tmp_path, planted):
        result = run_ga(planted, GaConfig(**self.small))
        result.write(tmp_path / "h.csv", tmp_path / "w.txt")
        lines = (tmp_path / "h.csv").read_text().splitlines()
        assert lines[0] == "generation,best_fitness,mean_fitness" and len(lines) == 9
        np.testing.assert_array_equal(read_wavelengths(tmp_path / "w.txt"),
                                      result.selected_wavelengths)

    def test_selector_estimator(self, planted):
        sel = GeneticBandSelector(**self.small, seed=1).fit(planted.X, planted.y)
        assert sel.transform(planted.X).shape[1] == sel.support_.sum()
        assert sel.get_support().dtype == bool
