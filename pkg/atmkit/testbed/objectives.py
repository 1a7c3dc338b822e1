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
"""This module contains discrete benchmark objectives, the brute-force oracle and the
marginal-conditional checker."""
import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from threading import Lock
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from atmkit.factor_space import (
    DEFAULT_ENUMERATION_CAP,
    FactorKind,
    FactorSpace,
    FactorSpec,
    Setting,
    full_factorial,
)
from atmkit.testbed.functions import ContinuousObjective, IncompatibleDimensionError

logger = logging.getLogger(__name__)

_REPLACED_LOCK = "atmkit_testbed_replaced_lock"
_CORNER_LIMIT = 12
_CHUNK = 65536

Evaluator = Callable[[np.ndarray], np.ndarray]


class ProbeScheme(str, Enum):
    """Offsets probed inside the tolerance box of :func:`robust_wrap`."""

    CORNERS = "corners"
    """Every corner of the box plus its center."""
    AXIAL = "axial"
    """Both ends of every axis plus the center."""


class DiscretizedObjective:
    """A black-box objective over level indices.

    Optimizers only see level indices; the mapping to physical values stays in here.
    Every call of :meth:`evaluate` and every row passed to :meth:`evaluate_many` counts as
    one evaluation. :meth:`noiseless` and :meth:`noiseless_many` are for scoring and do not
    count.

    Args:
        space (:class:`atmkit.factor_space.FactorSpace`): The feasible settings.
        evaluator (Callable): Maps an ``(m, p)`` array of level indices to ``m`` values.
        noise_sd (:obj:`float`, optional): Standard deviation of Gaussian observation
            noise. Defaults to 0.
        seed (:obj:`int`, optional): Seed of the noise stream.
        name (:obj:`str`, optional): Label used in logs and results.
        continuous (:class:`ContinuousObjective`, optional): The function behind
            ``evaluator`` when it was built by :func:`discretize`.

    Attributes:
        eval_count (:obj:`int`): Number of evaluations so far.
    """

    def __init__(
        self,
        space: FactorSpace,
        evaluator: Evaluator,
        noise_sd: float = 0.0,
        seed: Optional[int] = None,
        name: str = "",
        continuous: Optional[ContinuousObjective] = None,
    ):
        if noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        self.space = space
        self.evaluator = evaluator
        self.noise_sd = float(noise_sd)
        self.seed = seed
        self.name = name
        self.continuous = continuous
        self.eval_count = 0
        self._rng = np.random.default_rng(seed)
        self._counter_lock = Lock()

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(name={self.name!r}, levels={self.space.levels}, "
            f"noise_sd={self.noise_sd})"
        )

    def _runs(self, runs: Any) -> np.ndarray:
        runs = np.atleast_2d(np.asarray(runs, dtype=np.int64))
        if runs.shape[1] != self.space.p:
            raise ValueError(f"Expected {self.space.p} factors, got {runs.shape[1]}")
        upper = np.asarray(self.space.levels)
        if np.any(runs < 1) or np.any(runs > upper):
            bad = runs[np.any((runs < 1) | (runs > upper), axis=1)][0]
            self.space.validate_setting(tuple(int(x) for x in bad))
        return runs

    def noiseless_many(self, runs: Any) -> np.ndarray:
        """True values at ``runs``, without noise and without counting."""
        runs = self._runs(runs)
        return np.asarray(self.evaluator(runs), dtype=float).reshape(-1)

    def noiseless(self, setting: Sequence[int]) -> float:
        """True value of one setting, without noise and without counting."""
        return float(self.noiseless_many([self.space.validate_setting(setting)])[0])

    def evaluate_many(self, runs: Any) -> np.ndarray:
        """Observed values at ``runs``; counts one evaluation per row."""
        runs = self._runs(runs)
        values = np.asarray(self.evaluator(runs), dtype=float).reshape(-1)
        with self._counter_lock:
            self.eval_count += runs.shape[0]
            if self.noise_sd > 0:
                values = values + self._rng.normal(0.0, self.noise_sd, size=values.shape)
        return values

    def evaluate(self, setting: Sequence[int]) -> float:
        """Observed value of one setting.

        Raises:
            InvalidSettingError: If ``setting`` is not in the space.
        """
        return float(self.evaluate_many([self.space.validate_setting(setting)])[0])

    def __call__(self, setting: Sequence[int]) -> float:
        return self.evaluate(setting)

    def reset(self) -> None:
        """Sets the evaluation count back to 0 and restarts the noise stream."""
        with self._counter_lock:
            self.eval_count = 0
            self._rng = np.random.default_rng(self.seed)

    def __getstate__(self) -> Dict[str, Any]:
        """Replaces the counter lock by a marker so that the objective can be pickled."""
        state = self.__dict__.copy()
        for key, value in state.items():
            if isinstance(value, type(Lock())):
                state[key] = _REPLACED_LOCK
        return state

    def __setstate__(self, state: Dict[str, Any]) -> None:
        for key, value in state.items():
            if isinstance(value, str) and value == _REPLACED_LOCK:
                state[key] = Lock()
        self.__dict__.update(state)


def mid_levels(lo: float, hi: float, num_levels: int) -> Tuple[float, ...]:
    """Middles of ``num_levels`` equal intervals of ``[lo, hi]``."""
    width = (hi - lo) / num_levels
    return tuple(lo + (j - 0.5) * width for j in range(1, num_levels + 1))


class _PhysicalEvaluator:
    """Maps level indices to physical values before calling a continuous function."""

    def __init__(self, function: ContinuousObjective, table: Sequence[Sequence[float]]):
        self.function = function
        self.table = [np.asarray(values, dtype=float) for values in table]

    def points(self, runs: np.ndarray) -> np.ndarray:
        return np.column_stack(
            [values[runs[:, factor] - 1] for factor, values in enumerate(self.table)]
        )

    def __call__(self, runs: np.ndarray) -> np.ndarray:
        return self.function.evaluate_many(self.points(runs))


def discretize(
    function: ContinuousObjective,
    levels: Union[int, Sequence[int]],
    kinds: Optional[Sequence[Union[str, FactorKind]]] = None,
    noise_sd: float = 0.0,
    seed: Optional[int] = None,
) -> DiscretizedObjective:
    """Restricts ``function`` to the middles of equal intervals of its box.

    Level ``j`` of factor ``l`` sits at ``lo + (j - 0.5) (hi - lo) / N_l``.

    Args:
        function (:class:`ContinuousObjective`): The function to discretize.
        levels (:obj:`int` | Sequence[:obj:`int`]): Levels per factor, or one count for all.
        kinds (Sequence[:class:`atmkit.factor_space.FactorKind`], optional): Defaults to
            ordinal everywhere.
        noise_sd (:obj:`float`, optional): Observation noise.
        seed (:obj:`int`, optional): Seed of the noise stream.
    """
    if isinstance(levels, (int, np.integer)):
        levels = (int(levels),) * function.p
    levels = tuple(int(n) for n in levels)
    if len(levels) != function.p:
        raise IncompatibleDimensionError(
            f"{function.name} has {function.p} coordinates, got {len(levels)} level counts"
        )
    kinds = tuple(kinds) if kinds is not None else (FactorKind.ORDINAL,) * function.p
    table = [mid_levels(lo, hi, n) for (lo, hi), n in zip(function.bounds, levels)]
    space = FactorSpace(
        tuple(
            FactorSpec(n, FactorKind(kind), values)
            for n, kind, values in zip(levels, kinds, table)
        )
    )
    return DiscretizedObjective(
        space,
        _PhysicalEvaluator(function, table),
        noise_sd=noise_sd,
        seed=seed,
        name=function.name,
        continuous=function,
    )


def add_noise(
    objective: DiscretizedObjective, noise_sd: float, seed: Optional[int] = None
) -> DiscretizedObjective:
    """A fresh copy of ``objective`` whose observations carry ``N(0, noise_sd^2)`` noise.

    The noiseless values stay available through :meth:`DiscretizedObjective.noiseless`.
    """
    return DiscretizedObjective(
        objective.space,
        objective.evaluator,
        noise_sd=noise_sd,
        seed=seed,
        name=objective.name,
        continuous=objective.continuous,
    )


def probe_offsets(
    ranges: Sequence[float],
    tolerance: Union[float, Sequence[float]],
    scheme: Union[str, ProbeScheme] = ProbeScheme.AXIAL,
) -> np.ndarray:
    """Offsets probed by :func:`robust_wrap`, the zero offset first.

    Raises:
        IncompatibleDimensionError: For the corner scheme with more than 12 factors.
    """
    scheme = ProbeScheme(scheme)
    ranges = np.asarray(ranges, dtype=float)
    p = ranges.shape[0]
    fractions = np.broadcast_to(np.asarray(tolerance, dtype=float), (p,))
    if np.any(fractions < 0):
        raise ValueError("tolerance must be nonnegative")
    half_widths = fractions * ranges
    offsets = [np.zeros(p)]
    if scheme == ProbeScheme.CORNERS:
        if p > _CORNER_LIMIT:
            raise IncompatibleDimensionError(
                f"The corner scheme probes 2^{p} points; use the axial scheme above "
                f"{_CORNER_LIMIT} factors"
            )
        for signs in itertools.product((-1.0, 1.0), repeat=p):
            offsets.append(np.asarray(signs) * half_widths)
    else:
        for factor in range(p):
            for sign in (-1.0, 1.0):
                offset = np.zeros(p)
                offset[factor] = sign * half_widths[factor]
                offsets.append(offset)
    return np.vstack(offsets)


class _RobustEvaluator:
    def __init__(self, inner: _PhysicalEvaluator, offsets: np.ndarray, target: float):
        self.inner = inner
        self.offsets = offsets
        self.target = target

    def __call__(self, runs: np.ndarray) -> np.ndarray:
        points = self.inner.points(runs)
        probes = (points[:, None, :] + self.offsets[None, :, :]).reshape(-1, points.shape[1])
        values = self.inner.function.evaluate_many(probes).reshape(points.shape[0], -1)
        return np.abs(values - self.target).max(axis=1)


def robust_wrap(
    objective: DiscretizedObjective,
    target: float,
    tolerance: Union[float, Sequence[float]] = 0.015,
    scheme: Union[str, ProbeScheme] = ProbeScheme.AXIAL,
) -> DiscretizedObjective:
    """Nominal-the-best objective under internal noise.

    The value at ``x`` is the largest ``|C(x + t) - target|`` over the probed offsets ``t``,
    where ``C`` is the continuous function behind ``objective`` and each offset moves
    factor ``l`` by at most ``tolerance_l`` times its design range.

    Args:
        objective (:class:`DiscretizedObjective`): Built by :func:`discretize`.
        target (:obj:`float`): The nominal value.
        tolerance (:obj:`float` | Sequence[:obj:`float`], optional): Fraction of each
            design range. Defaults to 1.5%.
        scheme (:class:`ProbeScheme`, optional): Defaults to axial.
    """
    inner = objective.evaluator
    if not isinstance(inner, _PhysicalEvaluator):
        raise TypeError("robust_wrap needs an objective built by discretize")
    offsets = probe_offsets(inner.function.ranges, tolerance, scheme)
    logger.debug("Robust wrapper of %s probes %d offsets", objective.name, offsets.shape[0])
    return DiscretizedObjective(
        objective.space,
        _RobustEvaluator(inner, offsets, float(target)),
        noise_sd=objective.noise_sd,
        seed=objective.seed,
        name=f"robust-{objective.name}",
    )


class _TableEvaluator:
    def __init__(self, values: np.ndarray):
        self.values = values

    def __call__(self, runs: np.ndarray) -> np.ndarray:
        return self.values[tuple((runs - 1).T)]


def tabulated(
    values: Any,
    kinds: Optional[Sequence[Union[str, FactorKind]]] = None,
    name: str = "table",
) -> DiscretizedObjective:
    """An objective given by its full table; ``values[i_1 - 1, ..., i_p - 1]`` is ``f(i)``."""
    values = np.array(values, dtype=float)
    if values.ndim < 1 or not np.all(np.isfinite(values)):
        raise ValueError("values must be a finite array with one axis per factor")
    space = FactorSpace.from_levels(values.shape, kinds)
    return DiscretizedObjective(space, _TableEvaluator(values), name=name)


class _AdditiveEvaluator:
    def __init__(self, effects: Sequence[np.ndarray]):
        self.effects = [np.asarray(effect, dtype=float) for effect in effects]

    def __call__(self, runs: np.ndarray) -> np.ndarray:
        return sum(effect[runs[:, factor] - 1] for factor, effect in enumerate(self.effects))


def random_additive(levels: Sequence[int], seed: Optional[int] = None) -> DiscretizedObjective:
    """An additive objective with standard normal main effects per level."""
    rng = np.random.default_rng(seed)
    effects = [rng.standard_normal(int(n)) for n in levels]
    return DiscretizedObjective(
        FactorSpace.from_levels(levels), _AdditiveEvaluator(effects), name="additive"
    )


@dataclass(frozen=True)
class OracleResult:
    """Exact global minimum of a discrete objective.

    ``table`` holds every setting with its noiseless value (columns ``f1..fp,y``) when it
    was requested.
    """

    setting: Setting
    value: float
    table: Optional[pd.DataFrame] = None

    def to_csv(self, path: Union[str, Path, None] = None) -> Optional[str]:
        """Writes the full table as CSV. Returns the text if ``path`` is ``None``."""
        if self.table is None:
            raise ValueError("The oracle was run without keeping the table")
        return self.table.to_csv(path, index=False)


def full_table(
    objective: DiscretizedObjective, cap: int = DEFAULT_ENUMERATION_CAP
) -> Tuple[np.ndarray, np.ndarray]:
    """Every setting in lexicographic order and its noiseless value.

    Raises:
        CapacityError: If the space has more than ``cap`` settings.
    """
    runs = full_factorial(objective.space, cap=cap).runs
    values = np.concatenate(
        [
            objective.noiseless_many(runs[start : start + _CHUNK])
            for start in range(0, runs.shape[0], _CHUNK)
        ]
    )
    return runs, values


def brute_force(
    objective: DiscretizedObjective,
    cap: int = DEFAULT_ENUMERATION_CAP,
    keep_table: bool = False,
) -> OracleResult:
    """Evaluates every setting without noise and returns the first minimizer.

    Raises:
        CapacityError: If the space has more than ``cap`` settings.
    """
    runs, values = full_table(objective, cap)
    index = int(np.argmin(values))
    table = None
    if keep_table:
        table = pd.DataFrame(runs, columns=[f"f{i + 1}" for i in range(runs.shape[1])])
        table["y"] = values
    logger.debug(
        "Oracle of %s over %d settings: %.6g", objective.name, runs.shape[0], values[index]
    )
    return OracleResult(tuple(int(x) for x in runs[index]), float(values[index]), table)


@dataclass(frozen=True)
class McWitness:
    """A conditional slice whose minimum is not at the best marginal level.

    Attributes:
        factor (:obj:`int`): 0-based factor position.
        others (Tuple[:obj:`int`]): Levels of the other factors, in factor order.
        level (:obj:`int`): A level of ``factor`` that beats the marginal choice there.
    """

    factor: int
    others: Tuple[int, ...]
    level: int


@dataclass(frozen=True)
class McReport:
    """Outcome of :func:`check_mc`.

    Attributes:
        holds (:obj:`bool`): Whether every slice is minimized at the marginal choice.
        am_setting (Tuple[:obj:`int`]): Levels with the smallest true marginal means.
        witnesses (Tuple[:class:`McWitness`]): All violations.
    """

    holds: bool
    am_setting: Setting
    witnesses: Tuple[McWitness, ...]


def check_mc(
    source: Union[DiscretizedObjective, np.ndarray],
    cap: int = DEFAULT_ENUMERATION_CAP,
    rtol: float = 1e-12,
) -> McReport:
    """Checks that every conditional slice is minimized at the level with the smallest
    marginal mean.

    Args:
        source: An objective, whose full noiseless table is computed, or that table as an
            array with one axis per factor.
        cap (:obj:`int`, optional): Largest space size to enumerate.
        rtol (:obj:`float`, optional): Relative slack when comparing slice values.
    """
    if isinstance(source, DiscretizedObjective):
        _, flat = full_table(source, cap)
        values = flat.reshape(source.space.levels)
    else:
        values = np.asarray(source, dtype=float)
    slack = rtol * max(1.0, float(np.max(np.abs(values))))
    chosen = []
    witnesses = []
    for factor in range(values.ndim):
        others = tuple(axis for axis in range(values.ndim) if axis != factor)
        best = int(np.argmin(values.mean(axis=others)))
        chosen.append(best + 1)
        slices = np.moveaxis(values, factor, 0)
        minima = slices.min(axis=0)
        bad = np.argwhere(slices[best] > minima + slack)
        for index in bad:
            index = tuple(int(x) for x in index)
            witnesses.append(
                McWitness(
                    factor,
                    tuple(x + 1 for x in index),
                    int(np.argmin(slices[(slice(None),) + index])) + 1,
                )
            )
    return McReport(not witnesses, tuple(chosen), tuple(witnesses))
