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
"""This module contains the data-driven choice of ATM percentages.

A surrogate is fitted to the data, evaluated on a fresh randomized orthogonal array, and
every candidate percentage vector is scored by the surrogate value of the setting the ATM
predictor picks from that synthetic data. The true objective is never evaluated here.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from atmkit.factor_space import Design, ObservationSet, Setting
from atmkit.heredity_model import LassoConfig, SurrogateModel, fit
from atmkit.marginal_stats import AlphaVector, SliceTable
from atmkit.oa_designs import OaRequest, randomize, smallest_oa

logger = logging.getLogger(__name__)

DEFAULT_COMMON_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
"""Common percentages always scored after the all-zeros and all-ones vectors."""


@dataclass(frozen=True)
class TuneConfig:
    """Settings of :func:`tune_alpha`.

    Args:
        candidate_count (:obj:`int`, optional): Total number of scored vectors. Defaults
            to 200.
        common_alpha_grid (Sequence[:obj:`float`], optional): Common percentages scored
            after the two endpoints.
        synthetic_design_cap (:obj:`int`, optional): Largest run size of the synthetic
            design. A design with more runs than observations is used with a warning.
        seed (:obj:`int`, optional): Seed of the synthetic design, the random candidates
            and the surrogate's fold assignment. Defaults to 0.
        lasso (:class:`atmkit.heredity_model.LassoConfig`, optional): Surrogate settings.
        workers (:obj:`int`, optional): Threads scoring candidates. Defaults to 1.
    """

    candidate_count: int = 200
    common_alpha_grid: Tuple[float, ...] = DEFAULT_COMMON_GRID
    synthetic_design_cap: Optional[int] = None
    seed: int = 0
    lasso: LassoConfig = field(default_factory=LassoConfig)
    workers: int = 1

    def __post_init__(self) -> None:
        if self.candidate_count < 2:
            raise ValueError("candidate_count must include the all-zeros and all-ones vectors")
        grid = tuple(float(alpha) for alpha in self.common_alpha_grid)
        if any(not 0.0 <= alpha <= 1.0 for alpha in grid):
            raise ValueError("common_alpha_grid entries must lie in [0, 1]")
        object.__setattr__(self, "common_alpha_grid", grid)
        if self.synthetic_design_cap is not None and self.synthetic_design_cap < 1:
            raise ValueError("synthetic_design_cap must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")


def candidate_alphas(p: int, config: TuneConfig) -> List[AlphaVector]:
    """All-zeros, all-ones, the common grid, then uniform draws, ``candidate_count`` in all."""
    fixed = [AlphaVector.zeros(p), AlphaVector.ones(p)]
    fixed += [AlphaVector.common(alpha, p) for alpha in config.common_alpha_grid]
    fixed = fixed[: config.candidate_count]
    draws = config.candidate_count - len(fixed)
    rng = np.random.default_rng([config.seed, 2])
    return fixed + [AlphaVector(tuple(row)) for row in rng.uniform(0.0, 1.0, (draws, p))]


@dataclass(frozen=True)
class TuneDiagnostics:
    """Every scored candidate with the surrogate value of its ATM setting."""

    alphas: np.ndarray
    values: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        """Columns ``alpha_1..alpha_p,value``, one row per candidate in scoring order."""
        frame = pd.DataFrame(
            self.alphas, columns=[f"alpha_{i + 1}" for i in range(self.alphas.shape[1])]
        )
        frame["value"] = self.values
        return frame

    def to_csv(self, path: Union[str, Path, None] = None) -> Optional[str]:
        """Writes :meth:`to_frame` as CSV. Returns the text if ``path`` is ``None``."""
        return self.to_frame().to_csv(path, index=False)


@dataclass(frozen=True)
class TuneResult:
    """Outcome of :func:`tune_alpha`.

    Attributes:
        alphas (:class:`atmkit.marginal_stats.AlphaVector`): The chosen percentages.
        value (:obj:`float`): Surrogate value of the setting they select on the synthetic
            data.
        setting (Tuple[:obj:`int`]): That setting.
        surrogate (:class:`atmkit.heredity_model.SurrogateModel`): The fitted surrogate.
        synthetic_design (:class:`atmkit.factor_space.Design`): The randomized array the
            surrogate was evaluated on.
        diagnostics (:class:`TuneDiagnostics`): All scored candidates.
    """

    alphas: AlphaVector
    value: float
    setting: Setting
    surrogate: SurrogateModel
    synthetic_design: Design
    diagnostics: TuneDiagnostics


def _select(candidates: Sequence[AlphaVector], values: np.ndarray) -> int:
    best = float(values.min())
    tolerance = 1e-12 * max(1.0, abs(best))
    tied = [index for index, value in enumerate(values) if value <= best + tolerance]
    # larger mean first, then lexicographically smallest
    return min(tied, key=lambda index: (-candidates[index].mean, candidates[index].alphas))


def tune_alpha(
    obs: ObservationSet,
    config: Optional[TuneConfig] = None,
    levels: Optional[Sequence[int]] = None,
) -> TuneResult:
    """Chooses the ATM percentages for ``obs``.

    Args:
        obs (:class:`atmkit.factor_space.ObservationSet`): The data.
        config (:class:`TuneConfig`, optional): Tuning settings.
        levels (Sequence[:obj:`int`], optional): Level profile. Defaults to ``obs.levels``.

    Returns:
        :class:`TuneResult`: Ties in surrogate value go to the larger mean percentage,
        then to the lexicographically smallest vector.
    """
    config = config or TuneConfig()
    levels = tuple(int(n) for n in (levels if levels is not None else obs.levels))
    surrogate = fit(obs, seed=config.seed, config=config.lasso, levels=levels)

    base = smallest_oa(OaRequest(levels, max_runs=config.synthetic_design_cap))
    if base.n_runs > obs.n:
        logger.warning(
            "Synthetic design has %d runs, more than the %d observations", base.n_runs, obs.n
        )
    synthetic_design = randomize(base, [config.seed, 1])
    synthetic = ObservationSet(synthetic_design, surrogate.predict(synthetic_design.runs))
    table = SliceTable(synthetic, levels)

    candidates = candidate_alphas(len(levels), config)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            settings = list(executor.map(table.predict, (c.alphas for c in candidates)))
    else:
        settings = [table.predict(candidate.alphas) for candidate in candidates]
    values = surrogate.predict(np.asarray(settings))

    chosen = _select(candidates, values)
    logger.debug(
        "Tuned alphas %s with surrogate value %.6g over %d candidates",
        candidates[chosen],
        values[chosen],
        len(candidates),
    )
    return TuneResult(
        alphas=candidates[chosen],
        value=float(values[chosen]),
        setting=settings[chosen],
        surrogate=surrogate,
        synthetic_design=synthetic_design,
        diagnostics=TuneDiagnostics(
            np.array([candidate.alphas for candidate in candidates]), values
        ),
    )
