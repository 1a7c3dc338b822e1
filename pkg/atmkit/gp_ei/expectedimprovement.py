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
"""This module contains expected improvement and the batch EI optimization loop."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.stats import norm

from atmkit.factor_space import (
    Design,
    DesignProvenance,
    FactorKind,
    FactorSpace,
    ObservationSet,
    Setting,
    full_factorial,
)
from atmkit.gp_ei.gaussianprocess import GpConfig, GpModel, KindsLike, fit_gp
from atmkit.oa_designs import design_size
from atmkit.sel_engine import Objective, SelConfig, SelState, suggest_batch

logger = logging.getLogger(__name__)


def expected_improvement_values(
    means: np.ndarray, sds: np.ndarray, best: float
) -> np.ndarray:
    """Vectorized EI for minimization; points with zero deviation get ``max(best - m, 0)``."""
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    improvement = best - means
    values = np.maximum(improvement, 0.0)
    uncertain = sds > 0
    z = improvement[uncertain] / sds[uncertain]
    values[uncertain] = improvement[uncertain] * norm.cdf(z) + sds[uncertain] * norm.pdf(z)
    return np.maximum(values, 0.0)


def expected_improvement(model: GpModel, setting: Setting, best: float) -> float:
    """Expected improvement over ``best`` at one setting."""
    means, sds = model.posterior_many([setting])
    return float(expected_improvement_values(means, sds, best)[0])


@dataclass(frozen=True)
class BatchSelection:
    """Settings picked by :func:`select_batch`.

    ``exhausted`` is set when the unvisited candidates ran out before the batch was full.
    """

    settings: Tuple[Setting, ...]
    exhausted: bool = False


def candidate_runs(space: FactorSpace, cap: int, seed: int = 0) -> np.ndarray:
    """Every setting of ``space`` if there are at most ``cap``, else ``cap`` uniform draws.

    Sampled candidates are deduplicated and sorted lexicographically.
    """
    if space.cardinality <= cap:
        return full_factorial(space, cap=cap).runs
    rng = np.random.default_rng(seed)
    draws = np.column_stack([rng.integers(1, n + 1, size=cap) for n in space.levels])
    return np.unique(draws, axis=0)


def select_batch(
    model: GpModel,
    q: int,
    space: FactorSpace,
    seed: int = 0,
    config: Optional[GpConfig] = None,
    visited: Optional[np.ndarray] = None,
) -> BatchSelection:
    """Picks ``q`` unvisited settings by sequential EI maximization with a constant liar.

    After each pick the current best response is imputed there and the model is
    reconditioned with unchanged hyperparameters. EI ties go to the lexicographically
    smallest candidate.
    """
    if q < 1:
        raise ValueError("q must be positive")
    config = config or GpConfig()
    candidates = candidate_runs(space, config.candidate_cap, seed)
    seen: Set[Setting] = {tuple(int(x) for x in row) for row in model.runs}
    if visited is not None:
        seen.update(tuple(int(x) for x in row) for row in np.atleast_2d(visited))
    keep = np.array([tuple(int(x) for x in row) not in seen for row in candidates], dtype=bool)
    candidates = candidates[keep] if candidates.size else candidates
    best = float(model.responses.min())

    picks: List[Setting] = []
    current = model
    while len(picks) < q:
        if candidates.shape[0] == 0:
            logger.warning(
                "Candidates exhausted after %d of %d batch points", len(picks), q
            )
            return BatchSelection(tuple(picks), exhausted=True)
        means, sds = current.posterior_many(candidates)
        index = int(np.argmax(expected_improvement_values(means, sds, best)))
        pick = tuple(int(x) for x in candidates[index])
        picks.append(pick)
        candidates = np.delete(candidates, index, axis=0)
        if len(picks) < q:
            current = current.with_observation(pick, best)
    return BatchSelection(tuple(picks))


def sel_stage_sizes(
    levels: Sequence[int], t_elim: int = 2, config: Optional[SelConfig] = None
) -> List[int]:
    """Batch sizes of SEL stages ``1..t_elim`` when one level per factor goes each stage."""
    config = config or SelConfig()
    sizes = []
    for stage in range(1, t_elim + 1):
        profile = tuple(max(1, n - stage) for n in levels)
        sizes.append(
            design_size(profile, config.max_runs) * config.augmentation.multiplier(stage)
        )
    return sizes


@dataclass(frozen=True)
class EiStage:
    """Data size and predicted setting after one EI stage."""

    stage: int
    n: int
    prediction: Setting
    exhausted: bool = False


@dataclass(frozen=True)
class EiRun:
    """Stage records of a batch EI trajectory, its data and the last fitted model."""

    records: Tuple[EiStage, ...]
    data: ObservationSet
    model: GpModel


def _prediction(model: GpModel, data: ObservationSet, noisy: bool) -> Setting:
    if not noisy:
        return data.best()[0]
    means, _ = model.posterior_many(data.runs)
    return tuple(int(x) for x in data.runs[int(np.argmin(means))])


def run_ei(
    objective: Objective,
    kinds: Optional[KindsLike] = None,
    stage_sizes: Sequence[int] = (),
    seed: int = 0,
    config: Optional[GpConfig] = None,
    sel_config: Optional[SelConfig] = None,
) -> EiRun:
    """Batch EI starting from the first SEL design.

    The initial array is exactly the one :func:`atmkit.sel_engine.suggest_batch` draws for
    ``sel_config`` (seed ``seed`` unless given). Every later stage adds one batch of the
    given size. The prediction is the best observed setting for noiseless objectives and
    the visited setting with the lowest posterior mean otherwise.

    Args:
        objective: Anything with a ``space`` and ``evaluate_many``; a positive
            ``noise_sd`` attribute marks it noisy.
        kinds (Sequence[:class:`atmkit.factor_space.FactorKind`], optional): Kernel per
            factor. Defaults to the kinds of the space.
        stage_sizes (Sequence[:obj:`int`]): Batch sizes after the initial design.
        seed (:obj:`int`, optional): Seed of the fits and the candidate draws.
        config (:class:`atmkit.gp_ei.GpConfig`, optional): Process and candidate settings.
        sel_config (:class:`atmkit.sel_engine.SelConfig`, optional): Source of the initial
            array.
    """
    config = config or GpConfig()
    space = objective.space
    kinds = tuple(FactorKind(kind) for kind in (kinds if kinds is not None else space.kinds))
    sel_config = sel_config or SelConfig(seed=seed)
    positions = None
    if config.physical_distances and all(
        factor.physical_values is not None for factor in space.factors
    ):
        positions = [factor.physical_values for factor in space.factors]
    noisy = float(getattr(objective, "noise_sd", 0.0) or 0.0) > 0

    _, design = suggest_batch(SelState.start(space), sel_config)
    data = ObservationSet(design, objective.evaluate_many(design.runs))
    records: List[EiStage] = []
    exhausted = False
    for stage in range(len(stage_sizes) + 1):
        stage_seed = int(np.random.SeedSequence([seed, stage]).generate_state(1)[0])
        model = fit_gp(data, kinds, seed=stage_seed, config=config, positions=positions)
        records.append(EiStage(stage, data.n, _prediction(model, data, noisy), exhausted))
        if stage == len(stage_sizes) or exhausted:
            break
        selection = select_batch(model, stage_sizes[stage], space, stage_seed, config)
        exhausted = selection.exhausted
        if not selection.settings:
            break
        runs = np.asarray(selection.settings, dtype=np.int64)
        batch = Design(runs, DesignProvenance.EXTERNAL, space.levels)
        data = data.extend(ObservationSet(batch, objective.evaluate_many(runs)))
        logger.debug("EI stage %d: %d runs, %d in total", stage + 1, batch.n_runs, data.n)
    return EiRun(tuple(records), data, model)
