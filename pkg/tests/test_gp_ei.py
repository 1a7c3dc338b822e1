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
import math

import numpy as np
import pytest
from scipy.stats import norm

from atmkit.factor_space import Design, FactorKind, FactorSpace, ObservationSet, full_factorial
from atmkit.gp_ei import (
    VARIANCE_FLOOR,
    FactorizationError,
    GpConfig,
    candidate_runs,
    condition,
    correlation_matrix,
    covariance,
    expected_improvement,
    expected_improvement_values,
    fit_gp,
    log_likelihood,
    posterior,
    run_ei,
    sel_stage_sizes,
    select_batch,
)
from atmkit.oa_designs import OaRequest, randomize, smallest_oa
from atmkit.sel_engine import SelConfig, SelState, suggest_batch
from atmkit.testbed import add_noise, builtin, discretize, random_additive

ORD = FactorKind.ORDINAL
NOM = FactorKind.NOMINAL
FAST_GP = GpConfig(n_starts=3, max_iter=200)


@pytest.fixture(scope="module")
def detpep10_obs():
    objective = discretize(builtin("detpep10"), 5)
    design = randomize(smallest_oa(OaRequest((5, 5, 5))), 0)
    return ObservationSet(design, objective.evaluate_many(design.runs))


@pytest.fixture(scope="module")
def line_obs():
    design = Design([[1], [2], [3], [4], [5]], levels=(5,))
    return ObservationSet(design, [0.3, -0.2, 0.5, 1.1, 0.4])


class TestGpConfig:
    def test_defaults(self):
        config = GpConfig()
        assert config.n_starts == 10
        assert config.max_iter == 500
        assert config.theta_bounds == (1e-6, 1e3)
        assert config.nugget_bounds == (1e-8, 10.0)
        assert config.candidate_cap == 100_000
        assert not config.physical_distances

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_starts": 0},
            {"theta_bounds": (1.0, 0.5)},
            {"nugget_bounds": (0.0, 1.0)},
            {"nugget": -1.0},
            {"candidate_cap": 0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            GpConfig(**kwargs)


class TestCovariance:
    def test_examples(self, line_obs):
        model = condition(line_obs, [ORD], 0.0, 2.0, (0.7,), 0.0)
        assert covariance((3,), (3,), model) == pytest.approx(2.0)
        assert covariance((1,), (3,), model) == pytest.approx(2.0 * math.exp(-0.7 * 4))

        flat = condition(line_obs, [ORD], 0.0, 2.0, (0.0,), 0.0)
        assert covariance((1,), (5,), flat) == pytest.approx(2.0)

    def test_nominal_half(self):
        obs = ObservationSet(Design([[1], [2], [3]]), [0.0, 1.0, 2.0])
        model = condition(obs, [NOM], 0.0, 3.0, (math.log(2),), 0.1)
        assert covariance((1,), (3,), model) == pytest.approx(1.5)
        assert covariance((2,), (3,), model) == pytest.approx(1.5)

    def test_mixed_exponent(self):
        left = [[1, 1]]
        right = [[3, 2]]
        value = correlation_matrix(left, right, (0.5, 0.25), [ORD, NOM])[0, 0]
        assert value == pytest.approx(math.exp(-(0.5 * 4 + 0.25)))

    def test_physical_positions(self):
        value = correlation_matrix([[1]], [[2]], (1.0,), [ORD], positions=[(0.0, 0.5)])[0, 0]
        assert value == pytest.approx(math.exp(-0.25))

    def test_symmetry_and_psd(self):
        rng = np.random.default_rng(0)
        kinds = [ORD, NOM, ORD, NOM]
        for _ in range(20):
            runs = np.column_stack([rng.integers(1, 5, size=50) for _ in kinds])
            theta = rng.uniform(0, 3, size=4)
            matrix = correlation_matrix(runs, runs, theta, kinds, positions=[range(1, 5)] * 4)
            np.testing.assert_allclose(matrix, matrix.T)
            assert np.linalg.eigvalsh(matrix).min() >= -1e-8


class TestPosterior:
    def test_interpolates_without_nugget(self, line_obs):
        model = condition(line_obs, [ORD], 0.0, 1.0, (0.5,), 0.0)
        for setting, value in zip(line_obs.design.settings(), line_obs.responses):
            result = posterior(model, setting)
            assert result.mean == pytest.approx(value)
            assert result.sd == 0.0

    def test_interpolates_with_floor_nugget(self, line_obs):
        model = condition(line_obs, [ORD], 0.0, 1.0, (1.0,), 1e-8)
        means, sds = model.posterior_many(line_obs.runs)
        np.testing.assert_allclose(means, line_obs.responses, rtol=1e-6, atol=1e-6)
        assert np.all(sds < 1e-3)

    def test_two_point_oracle(self):
        obs = ObservationSet(Design([[1], [2]], levels=(3,)), [1.0, 3.0])
        mean, variance, theta = 1.5, 2.0, 0.4
        model = condition(obs, [ORD], mean, variance, (theta,), 0.0)
        r = math.exp(-theta)
        cross = np.array([math.exp(-4 * theta), math.exp(-theta)])
        inverse = np.array([[1.0, -r], [-r, 1.0]]) / (1 - r**2)
        residual = np.array([1.0, 3.0]) - mean
        result = posterior(model, (3,))
        assert result.mean == pytest.approx(mean + cross @ inverse @ residual)
        assert result.sd**2 == pytest.approx(variance * (1 - cross @ inverse @ cross))

    def test_prior_reversion(self):
        obs = ObservationSet(Design([[1], [2]], levels=(3,)), [1.0, 3.0])
        model = condition(obs, [NOM], 0.5, 2.0, (1e3,), 0.0)
        result = posterior(model, (3,))
        assert result.mean == pytest.approx(0.5)
        assert result.sd == pytest.approx(math.sqrt(2.0))

    def test_duplicates_without_nugget(self):
        obs = ObservationSet(Design([[1], [1], [2]], levels=(2,)), [1.0, 2.0, 5.0])
        model = condition(obs, [NOM], 0.0, 1.0, (1.0,), 0.0)
        assert posterior(model, (1,)).mean == pytest.approx(1.5)
        assert model.jitter in (1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

    def test_positive_definite_needs_no_jitter(self, line_obs):
        model = condition(line_obs, [ORD], 0.0, 1.0, (0.5,), 0.0)
        assert model.jitter == 0.0

    def test_factorization_error(self, line_obs):
        with pytest.raises(FactorizationError) as info:
            log_likelihood(line_obs, [ORD], (-2.0,), 0.0)
        assert isinstance(info.value, np.linalg.LinAlgError)
        assert info.value.jitter == 1e-4
        assert info.value.condition > 1

    def test_dimension_mismatch(self, line_obs):
        model = condition(line_obs, [ORD], 0.0, 1.0, (0.5,), 0.0)
        with pytest.raises(ValueError):
            model.posterior_many([[1, 2]])


class TestFitGp:
    def test_interpolation(self, detpep10_obs):
        model = fit_gp(detpep10_obs, [ORD] * 3, seed=1, config=GpConfig(nugget=0.0, n_starts=3))
        means, sds = model.posterior_many(detpep10_obs.runs)
        np.testing.assert_allclose(means, detpep10_obs.responses, rtol=1e-6)
        assert np.all(sds == 0)

    def test_loglik_beats_every_start(self, detpep10_obs):
        model = fit_gp(detpep10_obs, [ORD] * 3, seed=2, config=FAST_GP)
        assert len(model.starts) == 3
        values = [value for pair in model.starts for value in pair]
        assert model.loglik >= max(values) - 1e-6 * max(1.0, abs(model.loglik))

    def test_loglik_matches_profile(self, detpep10_obs):
        model = fit_gp(detpep10_obs, [ORD] * 3, seed=2, config=FAST_GP)
        ratio = model.nugget / model.variance
        assert log_likelihood(detpep10_obs, [ORD] * 3, model.theta, ratio) == pytest.approx(
            model.loglik, rel=1e-6
        )

    def test_bounds(self, detpep10_obs):
        model = fit_gp(detpep10_obs, [NOM] * 3, seed=0, config=FAST_GP)
        assert all(1e-6 * (1 - 1e-9) <= theta <= 1e3 * (1 + 1e-9) for theta in model.theta)
        ratio = model.nugget / model.variance
        assert 1e-8 * (1 - 1e-9) <= ratio <= 10 * (1 + 1e-9)

    def test_duplicates_need_a_nugget(self):
        runs = [[1], [1], [2], [2], [3], [3], [4], [4]]
        y = [0.0, 0.6, 1.0, 1.5, 2.2, 1.7, 3.0, 3.4]
        model = fit_gp(ObservationSet(Design(runs), y), [ORD], seed=0, config=FAST_GP)
        assert model.nugget / model.variance > 1e-4

    def test_affine_equivariance(self, detpep10_obs):
        shifted = ObservationSet(detpep10_obs.design, 3.0 * detpep10_obs.responses + 5.0)
        first = fit_gp(detpep10_obs, [ORD] * 3, seed=4, config=FAST_GP)
        second = fit_gp(shifted, [ORD] * 3, seed=4, config=FAST_GP)
        np.testing.assert_allclose(second.theta, first.theta, rtol=1e-6)
        grid = full_factorial(FactorSpace.uniform(3, 5)).runs
        first_means, first_sds = first.posterior_many(grid)
        second_means, second_sds = second.posterior_many(grid)
        np.testing.assert_allclose(second_means, 3.0 * first_means + 5.0, rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(second_sds, 3.0 * first_sds, rtol=1e-6, atol=1e-8)

    def test_deterministic(self, detpep10_obs):
        first = fit_gp(detpep10_obs, [ORD] * 3, seed=5, config=FAST_GP)
        second = fit_gp(detpep10_obs, [ORD] * 3, seed=5, config=FAST_GP)
        assert first.theta == second.theta
        assert first.nugget == second.nugget

    def test_constant_response(self):
        design = full_factorial(FactorSpace.uniform(2, 3))
        model = fit_gp(ObservationSet(design, np.full(9, 2.5)), [ORD, ORD])
        assert model.constant
        assert model.variance == VARIANCE_FLOOR
        result = posterior(model, (2, 2))
        assert result.mean == pytest.approx(2.5)

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="at least 3"):
            fit_gp(ObservationSet(Design([[1], [2]]), [0.0, 1.0]), [ORD])

    def test_kinds_mismatch(self, detpep10_obs):
        with pytest.raises(ValueError, match="kinds"):
            fit_gp(detpep10_obs, [ORD])

    def test_frame(self, detpep10_obs):
        model = fit_gp(detpep10_obs, [ORD] * 3, seed=0, config=FAST_GP)
        frame = model.to_frame()
        thetas = ["theta_1", "theta_2", "theta_3"]
        assert list(frame.columns) == thetas + ["sigma2", "nugget", "loglik"]


class TestExpectedImprovement:
    def test_closed_form(self):
        values = expected_improvement_values([1.0, 0.0, 1.0, 2.0], [0.0, 0.0, 1.0, 0.0], 1.0)
        np.testing.assert_allclose(values, [0.0, 1.0, norm.pdf(0.0), 0.0])
        assert values[2] == pytest.approx(0.3989422804)

    def test_general(self):
        mean, sd, best = 0.3, 0.7, 0.1
        z = (best - mean) / sd
        expected = (best - mean) * norm.cdf(z) + sd * norm.pdf(z)
        assert expected_improvement_values([mean], [sd], best)[0] == pytest.approx(expected)

    def test_nonnegative(self, detpep10_obs):
        model = fit_gp(detpep10_obs, [ORD] * 3, seed=0, config=FAST_GP)
        grid = full_factorial(FactorSpace.uniform(3, 5)).runs
        means, sds = model.posterior_many(grid)
        assert np.all(sds >= 0)
        assert np.all(expected_improvement_values(means, sds, detpep10_obs.responses.min()) >= 0)

    def test_incumbent(self, detpep10_obs):
        model = fit_gp(detpep10_obs, [ORD] * 3, seed=0, config=GpConfig(nugget=0.0, n_starts=2))
        setting, best = detpep10_obs.best()
        assert expected_improvement(model, setting, best) <= 1e-10


class TestSelectBatch:
    @pytest.fixture(scope="class")
    def model(self, detpep10_obs):
        return fit_gp(detpep10_obs, [ORD] * 3, seed=0, config=FAST_GP)

    def test_single_pick_is_argmax(self, model, detpep10_obs):
        space = FactorSpace.uniform(3, 5)
        selection = select_batch(model, 1, space)
        grid = full_factorial(space).runs
        visited = {tuple(row) for row in detpep10_obs.runs.tolist()}
        unvisited = np.array([row for row in grid.tolist() if tuple(row) not in visited])
        means, sds = model.posterior_many(unvisited)
        values = expected_improvement_values(means, sds, detpep10_obs.responses.min())
        assert selection.settings == (tuple(unvisited[int(np.argmax(values))]),)
        assert not selection.exhausted

    def test_batch_is_distinct_and_unvisited(self, model, detpep10_obs):
        selection = select_batch(model, 5, FactorSpace.uniform(3, 5))
        assert len(set(selection.settings)) == 5
        visited = {tuple(row) for row in detpep10_obs.runs.tolist()}
        assert not visited & set(selection.settings)

    def test_visited_argument(self, model):
        space = FactorSpace.uniform(3, 5)
        first = select_batch(model, 1, space).settings[0]
        second = select_batch(model, 1, space, visited=np.array([first])).settings[0]
        assert first != second

    def test_cap_equivalence(self, model):
        space = FactorSpace.uniform(3, 5)
        enumerated = select_batch(model, 3, space, config=GpConfig(candidate_cap=125))
        capped = select_batch(model, 3, space, config=GpConfig(candidate_cap=100_000))
        assert enumerated.settings == capped.settings

    def test_exhaustion(self):
        space = FactorSpace.uniform(2, 2)
        obs = ObservationSet(full_factorial(space), [1.0, 2.0, 0.5, 3.0])
        model = condition(obs, [ORD, ORD], 1.0, 1.0, (0.5, 0.5), 0.0)
        selection = select_batch(model, 2, space)
        assert selection.exhausted
        assert selection.settings == ()

    def test_invalid_q(self, model):
        with pytest.raises(ValueError):
            select_batch(model, 0, FactorSpace.uniform(3, 5))


class TestCandidates:
    def test_enumeration(self):
        runs = candidate_runs(FactorSpace.uniform(3, 5), cap=125)
        assert runs.shape == (125, 3)

    def test_sampling(self):
        runs = candidate_runs(FactorSpace.uniform(3, 5), cap=50, seed=1)
        assert runs.shape[0] <= 50
        assert len({tuple(row) for row in runs.tolist()}) == runs.shape[0]
        assert runs.tolist() == sorted(runs.tolist())
        np.testing.assert_array_equal(
            runs, candidate_runs(FactorSpace.uniform(3, 5), cap=50, seed=1)
        )


class TestRunEi:
    def test_stage_sizes(self):
        assert sel_stage_sizes((4,) * 9) == [27, 12]
        assert sel_stage_sizes((4,) * 18) == [54, 20]
        assert sel_stage_sizes((4,) * 9, config=SelConfig(augmentation="all-x2")) == [54, 24]

    def test_budget_and_shared_design(self):
        objective = discretize(builtin("friedman"), 4)
        run = run_ei(objective, stage_sizes=[4, 3], seed=7, config=FAST_GP)
        assert [record.n for record in run.records] == [16, 20, 23]
        assert objective.eval_count == 23
        _, design = suggest_batch(SelState.start(objective.space), SelConfig(seed=7))
        np.testing.assert_array_equal(run.data.runs[:16], design.runs)
        assert len({tuple(row) for row in run.data.runs[16:].tolist()}) == 7

    def test_noiseless_prediction_is_best_observed(self):
        objective = random_additive((3, 3, 3), seed=2)
        run = run_ei(objective, stage_sizes=[2], seed=0, config=FAST_GP)
        assert run.records[-1].prediction == run.data.best()[0]

    def test_noisy_prediction_is_visited(self):
        objective = add_noise(random_additive((3, 3, 3), seed=2), 0.5, seed=1)
        run = run_ei(objective, stage_sizes=[2], seed=0, config=FAST_GP)
        visited = {tuple(row) for row in run.data.runs.tolist()}
        assert run.records[-1].prediction in visited

    def test_nominal_kernel(self):
        objective = random_additive((3, 3, 3), seed=5)
        run = run_ei(objective, kinds=[NOM] * 3, stage_sizes=[2], seed=0, config=FAST_GP)
        assert run.model.kinds == (NOM,) * 3
        assert run.data.n == 11
