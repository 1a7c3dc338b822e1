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
import json

import numpy as np
import pytest

from atmkit.factor_space import (
    Design,
    FactorSpace,
    InvalidSettingError,
    ObservationSet,
    full_factorial,
)
from atmkit.heredity_model import (
    LassoConfig,
    SurrogateModel,
    evaluate,
    fit,
    interaction_strength,
    lambda_grid,
    predict,
)
from atmkit.oa_designs import OaRequest, randomize, smallest_oa
from atmkit.testbed import random_additive
from tests.conftest import PRODUCT_LEFT, PRODUCT_RIGHT, product_obs


@pytest.fixture(scope="module")
def additive_obs():
    objective = random_additive((4,) * 9, seed=11)
    design = randomize(smallest_oa(OaRequest((4,) * 9)), 5)
    return ObservationSet(design, objective.evaluate_many(design.runs))


@pytest.fixture(scope="module")
def product_2x2_obs():
    base = full_factorial(FactorSpace.uniform(2, 2)).runs
    runs = np.vstack([base] * 4)
    return ObservationSet(Design(runs, levels=(2, 2)), runs[:, 0] * runs[:, 1])


@pytest.fixture(scope="module")
def interaction_obs():
    # main effects on all three factors plus a (0, 1) interaction
    design = full_factorial(FactorSpace.uniform(3, 3))
    x = design.runs.astype(float)
    y = 2.0 * x[:, 0] - x[:, 1] + 0.5 * (x[:, 2] == 2) + 0.8 * (x[:, 0] - 2) * (x[:, 1] - 2)
    return ObservationSet(design, y)


class TestLassoConfig:
    def test_defaults(self):
        config = LassoConfig()
        assert config.n_lambdas == 50
        assert config.lambda_ratio == 1e-4
        assert config.cv_folds == 5
        assert config.loo_below == 15

    @pytest.mark.parametrize(
        "kwargs",
        [{"n_lambdas": 0}, {"lambda_ratio": 1.5}, {"cv_folds": 1}, {"tol": 0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            LassoConfig(**kwargs)


class TestFit:
    def test_additive_data_has_weak_interactions(self, additive_obs):
        model = fit(additive_obs, seed=0)
        assert model.satisfies_heredity()
        assert interaction_strength(model) < 0.05
        assert model.active_main

    @pytest.mark.parametrize("seed", range(5))
    def test_additive_stage_zero_design_keeps_main_effects(self, seed):
        objective = random_additive((4,) * 9, seed=seed)
        design = randomize(smallest_oa(OaRequest((4,) * 9)), seed)
        assert design.n_runs == 32
        obs = ObservationSet(design, objective.evaluate_many(design.runs))
        model = fit(obs, seed=seed)
        assert len(model.active_main) >= 4
        assert not model.interactions
        assert model.interaction_lam == float("inf")
        fitted = predict(model, obs.runs)
        assert np.corrcoef(fitted, obs.responses)[0, 1] > 0.8

    def test_replicated_product_is_recovered(self):
        model = fit(product_obs(), seed=1)
        assert model.active_interactions == {(0, 1)}
        assert np.isfinite(model.interaction_lam)
        table = full_factorial(FactorSpace.uniform(2, 5)).runs
        truth = PRODUCT_LEFT[table[:, 0] - 1] * PRODUCT_RIGHT[table[:, 1] - 1]
        np.testing.assert_allclose(predict(model, table), truth, atol=0.25)
        assert model.satisfies_heredity()

    def test_product_data_activates_interaction(self, product_2x2_obs):
        model = fit(product_2x2_obs, seed=0)
        assert (0, 1) in model.active_interactions
        assert model.satisfies_heredity()

    def test_constant_response(self):
        design = full_factorial(FactorSpace.uniform(2, 3))
        model = fit(ObservationSet(design, np.full(design.n_runs, 4.2)))
        assert model.constant
        assert model.intercept == pytest.approx(4.2)
        assert all(not any(effects) for effects in model.main_effects)
        assert not model.interactions
        assert evaluate(model, (3, 1)) == pytest.approx(4.2)
        assert lambda_grid(ObservationSet(design, np.full(design.n_runs, 4.2))).size == 0

    def test_sum_to_zero(self, interaction_obs):
        model = fit(interaction_obs, seed=3)
        for effects in model.main_effects:
            assert sum(effects) == pytest.approx(0.0, abs=1e-9)
        for table in model.interactions.values():
            table = np.asarray(table)
            np.testing.assert_allclose(table.sum(axis=0), 0.0, atol=1e-9)
            np.testing.assert_allclose(table.sum(axis=1), 0.0, atol=1e-9)

    def test_heredity(self, interaction_obs, additive_obs):
        for obs in (interaction_obs, additive_obs):
            for seed in range(3):
                model = fit(obs, seed=seed)
                for l, m in model.active_interactions:
                    assert l in model.active_main or m in model.active_main

    def test_row_order_invariance(self, interaction_obs):
        order = np.random.default_rng(1).permutation(interaction_obs.n)
        shuffled = ObservationSet(
            Design(interaction_obs.runs[order], levels=interaction_obs.levels),
            interaction_obs.responses[order],
        )
        first = fit(interaction_obs, seed=2)
        second = fit(shuffled, seed=2)
        assert first.lam == second.lam
        np.testing.assert_allclose(first.main_effects, second.main_effects)
        assert first.active_interactions == second.active_interactions

    def test_deterministic(self, additive_obs):
        assert fit(additive_obs, seed=4) == fit(additive_obs, seed=4)

    def test_huge_penalty_gives_intercept_only(self, interaction_obs):
        top = lambda_grid(interaction_obs)[0]
        model = fit(interaction_obs, lam=10 * top)
        assert not model.active_main
        assert not model.interactions
        assert model.intercept == pytest.approx(interaction_obs.responses.mean())
        assert not model.constant

    def test_smallest_penalty_interpolates(self, interaction_obs):
        lam = lambda_grid(interaction_obs)[-1]
        model = fit(interaction_obs, lam=lam)
        residual = predict(model, interaction_obs.runs) - interaction_obs.responses
        assert np.linalg.norm(residual) < 1e-2 * np.linalg.norm(interaction_obs.responses)

    def test_lambda_grid(self, interaction_obs):
        grid = lambda_grid(interaction_obs)
        assert grid.size == 50
        assert np.all(np.diff(grid) < 0)
        assert grid[-1] == pytest.approx(grid[0] * 1e-4)
        # the largest value zeros every effect
        assert not fit(interaction_obs, lam=grid[0]).active_main

    def test_leave_one_out_for_small_data(self):
        design = full_factorial(FactorSpace.from_levels([2, 3]))
        y = np.array([1.0, 2.0, 0.5, 3.0, 4.5, 2.5])
        model = fit(ObservationSet(design, y), cv_folds=3)
        assert model.satisfies_heredity()
        assert np.isfinite(model.lam)

    def test_invalid_penalty(self, interaction_obs):
        with pytest.raises(ValueError, match="positive"):
            fit(interaction_obs, lam=0.0)

    def test_levels_mismatch(self, interaction_obs):
        with pytest.raises(ValueError, match="one entry per factor"):
            fit(interaction_obs, levels=(3, 3))


class TestSurrogateModel:
    def test_evaluate(self):
        model = SurrogateModel((2, 3), 1.0, ((0.5, -0.5), (0.0, 0.0, 0.0)))
        assert evaluate(model, (1, 2)) == pytest.approx(1.5)
        assert evaluate(model, (2, 3)) == pytest.approx(0.5)
        assert model.active_main == frozenset({0})
        assert interaction_strength(model) == 0.0

    def test_evaluate_errors(self):
        model = SurrogateModel((2,), 0.0, ((0.0, 0.0),))
        with pytest.raises(InvalidSettingError):
            evaluate(model, (1, 1))
        with pytest.raises(InvalidSettingError):
            predict(model, [[3]])

    def test_dict_keeps_both_penalty_levels(self):
        model = fit(product_obs(), seed=1)
        again = SurrogateModel.from_dict(json.loads(json.dumps(model.to_dict())))
        assert again == model
        assert again.interaction_lam == model.interaction_lam

        additive = SurrogateModel((2,), 0.5, ((1.0, -1.0),), lam=0.1)
        assert additive.to_dict()["interaction_lambda"] is None
        assert SurrogateModel.from_dict(additive.to_dict()) == additive

    def test_intercept_only(self):
        model = SurrogateModel((2, 2), 3.0, ((0.0, 0.0), (0.0, 0.0)))
        np.testing.assert_allclose(predict(model, [[1, 1], [2, 2]]), 3.0)

    def test_interaction_strength_guard(self):
        model = SurrogateModel(
            (2, 2), 0.0, ((0.0, 0.0), (0.0, 0.0)), {(0, 1): ((1.0, -1.0), (-1.0, 1.0))}
        )
        strength = interaction_strength(model)
        assert np.isfinite(strength)
        assert strength > 1e10
        assert not model.satisfies_heredity()

    def test_dict_roundtrip(self, interaction_obs):
        model = fit(interaction_obs, seed=0)
        again = SurrogateModel.from_dict(model.to_dict())
        np.testing.assert_allclose(
            predict(again, interaction_obs.runs), predict(model, interaction_obs.runs)
        )
