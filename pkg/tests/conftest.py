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
import os

import numpy as np
import pytest

from atmkit.factor_space import Design, FactorSpace, ObservationSet, full_factorial
from atmkit.testbed import builtin, discretize

GITHUB_ACTION = os.getenv("GITHUB_ACTION", False)


def pytest_configure(config):
    config.addinivalue_line("filterwarnings", "ignore::ResourceWarning")
    config.addinivalue_line("markers", "benchmark: long running replication studies")


def env_var_2_bool(env_var: object) -> bool:
    if isinstance(env_var, bool):
        return env_var
    if not isinstance(env_var, str):
        return False
    return env_var.lower().strip() == "true"


def make_obs(runs, responses, levels=None) -> ObservationSet:
    return ObservationSet(Design(np.asarray(runs), levels=levels), np.asarray(responses, float))


# a pure two-factor product u[x1] * v[x2]; its minimum -16 needs the lower tails of both
# factors, the marginal means of both point elsewhere
PRODUCT_LEFT = np.array([-4.0, 1.0, 1.0, 2.0, 2.0])
PRODUCT_RIGHT = np.array([-2.0, -2.0, -1.0, 0.0, 4.0])


def product_obs(seed=None, copies=4) -> ObservationSet:
    """Replicated 5 x 5 table of a randomly relabelled, rescaled and shifted product."""
    rng = np.random.default_rng(seed)
    left, right = PRODUCT_LEFT, PRODUCT_RIGHT
    scale, shift = 1.0, 0.0
    if seed is not None:
        left = rng.permutation(left + rng.uniform(-0.02, 0.02, 5))
        right = rng.permutation(right + rng.uniform(-0.02, 0.02, 5))
        scale, shift = rng.uniform(0.5, 2.0), rng.uniform(-5.0, 5.0)
    runs = np.vstack([full_factorial(FactorSpace.uniform(2, 5)).runs] * copies)
    y = shift + scale * left[runs[:, 0] - 1] * right[runs[:, 1] - 1]
    return ObservationSet(Design(runs, levels=(5, 5)), y)


@pytest.fixture(scope="function")
def grid_2x2():
    # f(1,1)=1, f(1,2)=2, f(2,1)=3, f(2,2)=4
    return make_obs([[1, 1], [1, 2], [2, 1], [2, 2]], [1.0, 2.0, 3.0, 4.0], levels=(2, 2))


@pytest.fixture(scope="function")
def space_4_9():
    return FactorSpace.uniform(9, 4)


@pytest.fixture(scope="session")
def friedman_5_5():
    return discretize(builtin("friedman"), 5)


@pytest.fixture(scope="session")
def detpep10_5_3():
    return discretize(builtin("detpep10"), 5)


@pytest.fixture(autouse=True)
def change_directory(tmp_path):
    orig_dir = os.getcwd()
    # Switch to a temporary directory so we don't have to worry about cleaning up files
    os.chdir(str(tmp_path))
    yield
    os.chdir(orig_dir)
