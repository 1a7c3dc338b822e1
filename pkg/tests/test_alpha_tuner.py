#!/usr/bin/env python
#
# A toolkit for robust optimization of expensive black-box functions over discrete spaces
# Copyright (C) 2024-2026
# The atmkit developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Lesser Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Lesser Public License for more details.
#
# You should have received a copy of the GNU Lesser Public License
# along with this program.  If not, see [http://www.gnu.org/licenses/].
import numpy as np
import pytest

from atmkit.alpha_tuner import (
    DEFAULT_COMMON_GRID,
    TuneConfig,
    candidate_alphas,
    tune_alpha,
)
from atmkit.factor_space import Design, FactorSpace, ObservationSet, full_factorial
from atmkit.marginal_stats import AlphaVector, SliceTable
from atmkit.oa_designs import OaRequest, randomize, smallest_oa
from atmkit.testbed import builtin, discretize, random_additive
from tests.conftest import product_obs


def sample(objective, seed):
    design = randomize(smallest_oa(OaRequest(objective.space.levels)), seed)
    return ObservationSet(design, objective.evaluate_many(design.runs))


@pytest.fixture(scope="module")
def detpep10():
    return discretize(builtin("detpep10"), 5)


class TestTuneConfig:
    def test_defaults(self):
        config = TuneConfig()
        assert config.candidate_count == 200
        assert config.common_alpha_grid == DEFAULT_COMMON_GRID
        assert config.workers == 1

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"candidate_count": 1},
            {"common_alpha_grid": (0.5, 1.5)},
            {"synthetic_design_cap": 0},
            {"workers": 0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TuneConfig(**kwargs)


class TestCandidates:
    def test_layout(self):
        candidates = candidate_alphas(4, TuneConfig(seed=3))
        assert len(candidates) == 200
        assert candidates[0] == AlphaVector.zeros(4)
        assert candidates[1] == AlphaVector.ones(4)
        assert [c.alphas[0] for c in candidates[2:11]] == list(DEFAULT_COMMON_GRID)
        assert all(len(set(c.alphas)) == 1 for c in candidates[2:11])
        draws = np.array([c.alphas for c in candidates[11:]])
        assert draws.shape == (189, 4)
        assert np.all((draws >= 0) & (draws <= 1))

    def test_small_count(self):
        candidates = candidate_alphas(2, TuneConfig(candidate_count=5))
        assert len(candidates) == 5
        assert candidates[:2] == [AlphaVector.zeros(2), AlphaVector.ones(2)]

    def test_deterministic(self):
        assert candidate_alphas(3, TuneConfig(seed=9)) == candidate_alphas(3, TuneConfig(seed=9))
        assert candidate_alphas(3, TuneConfig(seed=9)) != candidate_alphas(3, TuneConfig(seed=8))


class TestTuneAlpha:
    def test_constant_data(self):
        design = full_factorial(FactorSpace.uniform(3, 3))
        result = tune_alpha(ObservationSet(design, np.ones(design.n_runs)))
        assert result.alphas == AlphaVector.ones(3)
        assert result.surrogate.constant
        assert np.all(result.diagnostics.values == result.value)

    def test_additive_surrogate_favours_means(self):
        objective = random_additive((4,) * 6, seed=2)
        result = tune_alpha(sample(objective, 0), TuneConfig(seed=1))
        values = result.diagnostics.values
        # the all-ones candidate is among the minimizers
        assert values[1] == pytest.approx(values.min())
        assert result.alphas.mean == pytest.approx(1.0)

    def test_endpoints_bound_the_result(self, detpep10):
        for seed in range(5):
            result = tune_alpha(sample(detpep10, seed), TuneConfig(seed=seed))
            values = result.diagnostics.values
            assert result.value <= values[0] + 1e-12
            assert result.value <= values[1] + 1e-12
            assert result.value == pytest.approx(values.min())

    def test_value_is_surrogate_at_setting(self, detpep10):
        result = tune_alpha(sample(detpep10, 1), TuneConfig(seed=1))
        synthetic = ObservationSet(
            result.synthetic_design, result.surrogate.predict(result.synthetic_design.runs)
        )
        setting = SliceTable(synthetic).predict(result.alphas.alphas)
        assert setting == result.setting
        assert result.surrogate.predict([setting])[0] == pytest.approx(result.value)
        assert result.synthetic_design.n_runs <= 25

    def test_deterministic(self, detpep10):
        obs = sample(detpep10, 4)
        first = tune_alpha(obs, TuneConfig(seed=4))
        second = tune_alpha(obs, TuneConfig(seed=4))
        assert first.alphas == second.alphas
        assert first.setting == second.setting

    def test_workers(self, detpep10):
        obs = sample(detpep10, 2)
        serial = tune_alpha(obs, TuneConfig(seed=2))
        threaded = tune_alpha(obs, TuneConfig(seed=2, workers=3))
        assert serial.alphas == threaded.alphas
        np.testing.assert_array_equal(serial.diagnostics.values, threaded.diagnostics.values)

    def test_never_calls_the_objective(self, detpep10):
        obs = sample(detpep10, 3)
        detpep10.reset()
        tune_alpha(obs, TuneConfig(seed=3))
        assert detpep10.eval_count == 0

    def test_improves_on_means_on_detpep10(self, detpep10):
        # the surrogate is exact on the full table, so beating the all-ones candidate means
        # the synthetic design holds a better setting than the marginal means find
        runs = full_factorial(detpep10.space).runs
        obs = ObservationSet(Design(runs, levels=(5, 5, 5)), detpep10.evaluate_many(runs))
        improved = 0
        for seed in range(20):
            result = tune_alpha(obs, TuneConfig(seed=seed))
            if result.value < result.diagnostics.values[1] - 1e-9:
                improved += 1
                assert result.alphas.mean < 1.0
        assert improved >= 5

    def test_additive_data_keeps_the_means(self):
        tuned = [
            tune_alpha(sample(random_additive((4,) * 6, seed=seed), seed), TuneConfig(seed=seed))
            for seed in range(25)
        ]
        share = np.mean([result.alphas.mean >= 0.8 for result in tuned])
        assert share >= 0.8
        assert all(not result.surrogate.interactions for result in tuned)

    def test_product_structure_lowers_the_percentages(self):
        tuned = [tune_alpha(product_obs(seed), TuneConfig(seed=seed)) for seed in range(25)]
        share = np.mean([result.alphas.mean <= 0.5 for result in tuned])
        assert share >= 0.6
        assert all((0, 1) in result.surrogate.active_interactions for result in tuned)
        # the marginal means never reach the product's minimum
        assert all(result.value < result.diagnostics.values[1] for result in tuned)

    def test_diagnostics(self, detpep10, tmp_path):
        result = tune_alpha(sample(detpep10, 0), TuneConfig(candidate_count=20))
        frame = result.diagnostics.to_frame()
        assert list(frame.columns) == ["alpha_1", "alpha_2", "alpha_3", "value"]
        assert len(frame) == 20
        result.diagnostics.to_csv(tmp_path / "diagnostics.csv")
        assert (tmp_path / "diagnostics.csv").read_text().startswith("alpha_1,")
