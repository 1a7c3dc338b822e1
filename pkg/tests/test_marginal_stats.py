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

from atmkit.factor_space import FactorSpace, ObservationSet, full_factorial
from atmkit.marginal_stats import (
    AlphaVector,
    EmptySampleError,
    MissingLevelsError,
    SliceTable,
    marginal_profile,
    predict_am,
    predict_atm,
    predict_pw,
    tail_count,
    tail_mean,
)
from tests.conftest import make_obs


@pytest.fixture(scope="function")
def grid_0751():
    # f(1,1)=0, f(1,2)=7, f(2,1)=5, f(2,2)=1
    return make_obs([[1, 1], [1, 2], [2, 1], [2, 2]], [0.0, 7.0, 5.0, 1.0], levels=(2, 2))


@pytest.fixture(scope="function")
def random_obs():
    design = full_factorial(FactorSpace.from_levels([3, 4, 2]))
    rng = np.random.default_rng(7)
    return ObservationSet(design, rng.normal(size=design.n_runs))


class TestAlphaVector:
    def test_creation(self):
        vector = AlphaVector((0.2, 0.4))
        assert vector.p == 2
        assert len(vector) == 2
        assert vector[1] == 0.4
        assert vector.mean == pytest.approx(0.3)
        assert list(vector) == [0.2, 0.4]
        assert str(vector) == "0.2;0.4"

    def test_constructors(self):
        assert AlphaVector.zeros(3).alphas == (0.0, 0.0, 0.0)
        assert AlphaVector.ones(2).alphas == (1.0, 1.0)
        assert AlphaVector.common(0.3, 2).alphas == (0.3, 0.3)

    def test_errors(self):
        with pytest.raises(ValueError, match="at least one"):
            AlphaVector(())
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            AlphaVector((0.5, 1.5))


class TestTailMean:
    @pytest.mark.parametrize(
        "alpha, expected",
        [(1.0, 0.25), (0.0, 0.1), (0.5, 0.15), (0.25, 0.1), (0.75, 0.2)],
    )
    def test_values(self, alpha, expected):
        assert tail_mean([0.4, 0.1, 0.3, 0.2], alpha) == pytest.approx(expected)

    def test_single_value(self):
        for alpha in (0.0, 0.3, 1.0):
            assert tail_mean([2.5], alpha) == 2.5

    def test_tail_count(self):
        assert tail_count(10, 0.3) == 3
        assert tail_count(10, 0.0) == 1
        assert tail_count(10, 0.01) == 1
        assert tail_count(10, 1.0) == 10
        assert tail_count(3, 0.5) == 2

    def test_monotone_in_alpha(self):
        values = np.random.default_rng(0).normal(size=17)
        means = [tail_mean(values, alpha) for alpha in np.linspace(0, 1, 21)]
        assert all(a <= b + 1e-12 for a, b in zip(means, means[1:]))
        assert means[0] == pytest.approx(values.min())
        assert means[-1] == pytest.approx(values.mean())

    def test_errors(self):
        with pytest.raises(EmptySampleError):
            tail_mean([], 0.5)
        with pytest.raises(ValueError, match="NaN"):
            tail_mean([1.0, np.nan], 0.5)
        with pytest.raises(ValueError):
            tail_mean([1.0], -0.1)


class TestMarginalProfile:
    def test_grid_mean(self, grid_2x2):
        profile = marginal_profile(grid_2x2, AlphaVector.ones(2))
        assert profile.stats(0) == [1.5, 3.5]
        assert profile.stats(1) == [2.0, 3.0]

    def test_grid_min(self, grid_2x2):
        profile = marginal_profile(grid_2x2, (0.0, 0.0))
        assert profile.stats(0) == [1.0, 3.0]
        assert profile.stats(1) == [1.0, 2.0]
        assert profile.argmin(0) == 1
        assert profile.argmax(1) == 2

    def test_missing_level(self):
        obs = make_obs([[1, 1], [1, 2]], [1.0, 2.0], levels=(3, 2))
        profile = marginal_profile(obs, (1.0, 1.0))
        entries = profile.factors[0]
        assert [entry.missing for entry in entries] == [False, True, True]
        assert entries[1].stat is None
        assert entries[1].count == 0
        assert profile.argmin(0) == 1
        assert profile.argmax(0) == 1

    def test_missing_lowest_level(self):
        obs = make_obs([[1, 1]], [1.0], levels=(2, 2))
        table = SliceTable(obs, (2, 2))
        assert np.isnan(table.stats(0, 1.0)[1])
        obs = make_obs([[2, 1]], [1.0], levels=(2, 2))
        profile = marginal_profile(obs, (1.0, 1.0), levels=(2, 2))
        assert profile.argmin(0) == 2

    def test_ties(self):
        obs = make_obs([[1], [2], [3]], [1.0, 1.0, 1.0])
        profile = marginal_profile(obs, (0.5,))
        assert profile.argmin(0) == 1
        assert profile.argmax(0) == 3

    def test_frame(self, grid_2x2):
        frame = marginal_profile(grid_2x2, (1.0, 0.5)).to_frame()
        assert list(frame.columns) == ["factor", "level", "alpha", "stat", "count"]
        assert len(frame) == 4
        assert frame["factor"].tolist() == [1, 1, 2, 2]
        assert frame["alpha"].tolist() == [1.0, 1.0, 0.5, 0.5]
        assert marginal_profile(grid_2x2, (1.0, 1.0)).to_csv().startswith("factor,level")

    def test_wrong_length(self, grid_2x2):
        with pytest.raises(ValueError, match="Expected 2"):
            marginal_profile(grid_2x2, (1.0,))


class TestSliceTable:
    def test_matches_tail_mean(self, random_obs):
        table = SliceTable(random_obs)
        for factor, num_levels in enumerate(random_obs.levels):
            for alpha in (0.0, 0.1, 0.37, 0.5, 1.0):
                stats = table.stats(factor, alpha)
                for level in range(1, num_levels + 1):
                    values = random_obs.responses[random_obs.runs[:, factor] == level]
                    assert stats[level - 1] == pytest.approx(tail_mean(values, alpha))

    def test_counts(self, random_obs):
        table = SliceTable(random_obs)
        assert table.counts(0) == [8, 8, 8]
        assert table.counts(1) == [6, 6, 6, 6]

    def test_argmin_ignores_empty_levels(self):
        obs = make_obs([[1, 1], [1, 2]], [1.0, 0.0], levels=(2, 2))
        table = SliceTable(obs)
        assert table.argmin(0, 1.0) == 1
        assert table.argmin(1, 0.0) == 2
        assert table.argmax(0, 1.0) == 1


class TestPredictors:
    def test_grid(self, grid_0751):
        assert predict_am(grid_0751) == (2, 1)
        assert predict_atm(grid_0751, AlphaVector.zeros(2)) == (1, 1)
        assert predict_pw(grid_0751) == (1, 1)

    def test_reductions(self, random_obs):
        assert predict_atm(random_obs, AlphaVector.ones(3)) == predict_am(random_obs)
        # on a full factorial the marginal minima meet at the overall winner
        assert predict_atm(random_obs, AlphaVector.zeros(3)) == predict_pw(random_obs)

    def test_am_skips_missing_levels(self):
        obs = make_obs([[2, 1], [2, 2], [3, 1]], [4.0, 3.0, 9.0], levels=(3, 2))
        assert predict_am(obs) == (2, 2)

    def test_unobserved_factor_raises(self):
        # the run sits outside the requested profile, so factor 0 has no data at all
        obs = make_obs([[3, 1]], [1.0])
        with pytest.raises(MissingLevelsError):
            predict_atm(obs, (1.0, 1.0), levels=(2, 2))
        with pytest.raises(MissingLevelsError):
            marginal_profile(obs, (1.0, 1.0), levels=(2, 2)).argmin(0)

    def test_single_run(self):
        obs = make_obs([[2, 3]], [1.5])
        assert predict_pw(obs) == (2, 3)
        assert predict_am(obs) == (2, 3)
