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
"""This module contains marginal tail means and the AM, PW and ATM predictors."""
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from atmkit.factor_space import ObservationSet, Setting

# ceil(m * alpha) is taken after removing this much round-off, so 10 * 0.3 counts 3 values.
_CEIL_SLACK = 1e-9


class EmptySampleError(ValueError):
    """Raised when a tail mean is requested for an empty sample."""


class MissingLevelsError(LookupError):
    """Raised when every level of a factor lacks observations."""


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


@dataclass(frozen=True)
class AlphaVector:
    """Per-factor tail mean percentages.

    Args:
        alphas (Sequence[:obj:`float`]): One value in ``[0, 1]`` per factor.
    """

    alphas: Tuple[float, ...]

    def __post_init__(self) -> None:
        alphas = tuple(_check_alpha(alpha) for alpha in self.alphas)
        if not alphas:
            raise ValueError("An alpha vector needs at least one entry")
        object.__setattr__(self, "alphas", alphas)

    @classmethod
    def zeros(cls, p: int) -> "AlphaVector":
        """All factors at 0, the marginal minimum."""
        return cls((0.0,) * p)

    @classmethod
    def ones(cls, p: int) -> "AlphaVector":
        """All factors at 1, the marginal mean."""
        return cls((1.0,) * p)

    @classmethod
    def common(cls, alpha: float, p: int) -> "AlphaVector":
        """The same percentage for every factor."""
        return cls((float(alpha),) * p)

    @property
    def p(self) -> int:
        """:obj:`int`: Number of factors."""
        return len(self.alphas)

    @property
    def mean(self) -> float:
        """:obj:`float`: Average percentage."""
        return float(np.mean(self.alphas))

    def __iter__(self) -> Iterator[float]:
        return iter(self.alphas)

    def __len__(self) -> int:
        return len(self.alphas)

    def __getitem__(self, index: int) -> float:
        return self.alphas[index]

    def __str__(self) -> str:
        return ";".join(f"{alpha:g}" for alpha in self.alphas)


def tail_count(m: int, alpha: float) -> int:
    """Number of lowest order statistics averaged by a ``100 * alpha`` % tail mean."""
    if alpha == 0:
        return 1
    return min(m, max(1, math.ceil(m * alpha - _CEIL_SLACK)))


def tail_mean(values: Sequence[float], alpha: float) -> float:
    """Mean of the lowest ``ceil(m * alpha)`` values, or the minimum for ``alpha = 0``.

    Args:
        values (Sequence[:obj:`float`]): The sample.
        alpha (:obj:`float`): Percentage in ``[0, 1]``.

    Raises:
        EmptySampleError: If ``values`` is empty.
        ValueError: If ``values`` contains NaN or ``alpha`` is outside ``[0, 1]``.
    """
    alpha = _check_alpha(alpha)
    array = np.asarray(values, dtype=float).ravel()
    if array.size == 0:
        raise EmptySampleError("Cannot take the tail mean of an empty sample")
    if np.isnan(array).any():
        raise ValueError("Cannot take the tail mean of a sample containing NaN")
    ordered = np.sort(array, kind="stable")
    return float(ordered[: tail_count(array.size, alpha)].mean())


class SliceTable:
    """Sorted marginal slices of one observation set.

    Every (factor, level) slice is sorted once; tail means for any percentage are then
    read off cumulative sums, which keeps scoring many alpha vectors cheap.

    Args:
        obs (:class:`atmkit.factor_space.ObservationSet`): The data.
        levels (Sequence[:obj:`int`], optional): Level profile. Defaults to ``obs.levels``.
    """

    __slots__ = ("levels", "_cumulative")

    def __init__(self, obs: ObservationSet, levels: Optional[Sequence[int]] = None):
        self.levels = tuple(int(n) for n in (levels if levels is not None else obs.levels))
        if len(self.levels) != obs.design.n_factors:
            raise ValueError("levels must have one entry per factor")
        self._cumulative: List[List[np.ndarray]] = []
        for factor, num_levels in enumerate(self.levels):
            column = obs.runs[:, factor]
            self._cumulative.append(
                [
                    np.cumsum(np.sort(obs.responses[column == level], kind="stable"))
                    for level in range(1, num_levels + 1)
                ]
            )

    @property
    def p(self) -> int:
        """:obj:`int`: Number of factors."""
        return len(self.levels)

    def counts(self, factor: int) -> List[int]:
        """Slice sizes of ``factor`` per level."""
        return [int(cumulative.size) for cumulative in self._cumulative[factor]]

    def stats(self, factor: int, alpha: float) -> np.ndarray:
        """Tail means of every level of ``factor``; NaN marks levels without data."""
        out = np.full(self.levels[factor], np.nan)
        for index, cumulative in enumerate(self._cumulative[factor]):
            if cumulative.size:
                k = tail_count(cumulative.size, alpha)
                out[index] = cumulative[k - 1] / k
        return out

    def argmin(self, factor: int, alpha: float) -> int:
        """Level with the smallest tail mean; ties go to the lowest level.

        Raises:
            MissingLevelsError: If no level of ``factor`` has observations.
        """
        stats = self.stats(factor, alpha)
        if np.all(np.isnan(stats)):
            raise MissingLevelsError(f"Factor {factor} has no observed level")
        return int(np.nanargmin(stats)) + 1

    def argmax(self, factor: int, alpha: float) -> int:
        """Level with the largest tail mean; ties go to the highest level.

        Raises:
            MissingLevelsError: If no level of ``factor`` has observations.
        """
        stats = self.stats(factor, alpha)
        if np.all(np.isnan(stats)):
            raise MissingLevelsError(f"Factor {factor} has no observed level")
        reversed_stats = stats[::-1]
        return len(stats) - int(np.nanargmax(reversed_stats))

    def predict(self, alphas: Sequence[float]) -> Setting:
        """The ATM setting for ``alphas``."""
        if len(alphas) != self.p:
            raise ValueError(f"Expected {self.p} percentages, got {len(alphas)}")
        return tuple(self.argmin(factor, alpha) for factor, alpha in enumerate(alphas))


@dataclass(frozen=True)
class MarginalEntry:
    """Statistic of one (factor, level) slice. ``stat`` is ``None`` when ``count`` is 0."""

    level: int
    stat: Optional[float]
    count: int

    @property
    def missing(self) -> bool:
        """:obj:`bool`: Whether the level has no observations."""
        return self.count == 0


@dataclass(frozen=True)
class MarginalProfile:
    """Marginal tail means of every level of every factor."""

    factors: Tuple[Tuple[MarginalEntry, ...], ...]
    alphas: AlphaVector

    def stats(self, factor: int) -> List[Optional[float]]:
        """The statistics of ``factor``, ``None`` for missing levels."""
        return [entry.stat for entry in self.factors[factor]]

    def argmin(self, factor: int) -> int:
        """Level with the smallest statistic, ties to the lowest level.

        Raises:
            MissingLevelsError: If every level of ``factor`` is missing.
        """
        present = [entry for entry in self.factors[factor] if not entry.missing]
        if not present:
            raise MissingLevelsError(f"Factor {factor} has no observed level")
        return min(present, key=lambda entry: (entry.stat, entry.level)).level

    def argmax(self, factor: int) -> int:
        """Level with the largest statistic, ties to the highest level.

        Raises:
            MissingLevelsError: If every level of ``factor`` is missing.
        """
        present = [entry for entry in self.factors[factor] if not entry.missing]
        if not present:
            raise MissingLevelsError(f"Factor {factor} has no observed level")
        return max(present, key=lambda entry: (entry.stat, entry.level)).level

    def to_frame(self) -> pd.DataFrame:
        """Long table ``factor,level,alpha,stat,count`` with 1-based factor numbers."""
        rows = [
            {
                "factor": factor + 1,
                "level": entry.level,
                "alpha": self.alphas[factor],
                "stat": entry.stat,
                "count": entry.count,
            }
            for factor, entries in enumerate(self.factors)
            for entry in entries
        ]
        return pd.DataFrame(rows, columns=["factor", "level", "alpha", "stat", "count"])

    def to_csv(self, path: Union[str, Path, None] = None) -> Optional[str]:
        """Writes :meth:`to_frame` as CSV. Returns the text if ``path`` is ``None``."""
        return self.to_frame().to_csv(path, index=False)


def _as_alphas(alphas: Union[AlphaVector, Sequence[float]], p: int) -> AlphaVector:
    if not isinstance(alphas, AlphaVector):
        alphas = AlphaVector(tuple(alphas))
    if alphas.p != p:
        raise ValueError(f"Expected {p} percentages, got {alphas.p}")
    return alphas


def marginal_profile(
    obs: ObservationSet,
    alphas: Union[AlphaVector, Sequence[float]],
    levels: Optional[Sequence[int]] = None,
) -> MarginalProfile:
    """Tail mean of every (factor, level) slice, with the slice sizes.

    Args:
        obs (:class:`atmkit.factor_space.ObservationSet`): The data.
        alphas (:class:`AlphaVector` | Sequence[:obj:`float`]): One percentage per factor.
        levels (Sequence[:obj:`int`], optional): Level profile. Defaults to ``obs.levels``.

    Returns:
        :class:`MarginalProfile`: Levels without observations are marked missing.
    """
    table = SliceTable(obs, levels)
    alphas = _as_alphas(alphas, table.p)
    factors = []
    for factor in range(table.p):
        stats = table.stats(factor, alphas[factor])
        counts = table.counts(factor)
        factors.append(
            tuple(
                MarginalEntry(
                    level + 1, None if count == 0 else float(stats[level]), count
                )
                for level, count in enumerate(counts)
            )
        )
    return MarginalProfile(tuple(factors), alphas)


def predict_atm(
    obs: ObservationSet,
    alphas: Union[AlphaVector, Sequence[float]],
    levels: Optional[Sequence[int]] = None,
) -> Setting:
    """Per factor, the level with the smallest marginal tail mean.

    Ties go to the lowest level; levels without observations are skipped.

    Raises:
        MissingLevelsError: If a factor has no observed level at all.
    """
    table = SliceTable(obs, levels)
    return table.predict(_as_alphas(alphas, table.p).alphas)


def predict_am(obs: ObservationSet, levels: Optional[Sequence[int]] = None) -> Setting:
    """Per factor, the level with the smallest marginal mean."""
    return predict_atm(obs, AlphaVector.ones(obs.design.n_factors), levels)


def predict_pw(obs: ObservationSet) -> Setting:
    """The observed setting with the smallest response; ties go to the earliest run."""
    return obs.best()[0]
