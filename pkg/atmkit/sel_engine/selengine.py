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
"""This module contains the sequential elimination of levels.

Every stage adds the smallest orthogonal array over the surviving levels, then removes from
each factor the level with the largest marginal tail mean. The percentages come from the
tuner (``atm``) or are fixed at 1 (``mean``) or 0 (``min``).

The state is an immutable snapshot. A stage runs through the phases::

    READY --suggest_batch--> PENDING --absorb--> OBSERVED --eliminate--> READY

``suggest_batch`` may also be called in the OBSERVED phase to add another batch to the
same stage.
"""
import logging
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from atmkit.alpha_tuner import TuneConfig, tune_alpha
from atmkit.factor_space import Design, FactorSpace, ObservationSet, Setting
from atmkit.heredity_model import LassoConfig
from atmkit.marginal_stats import AlphaVector, MissingLevelsError, SliceTable
from atmkit.oa_designs import AugmentScheme, OaRequest, augment, randomize, smallest_oa

logger = logging.getLogger(__name__)


class ProtocolError(RuntimeError):
    """Raised when a session step is taken out of order."""


class SelMethod(str, Enum):
    """How the percentages of a stage are chosen."""

    ATM = "atm"
    MEAN = "mean"
    MIN = "min"


class PredictMethod(str, Enum):
    """Predictors available on the data of a session."""

    ATM = "atm"
    MEAN = "mean"
    MIN = "min"
    PW = "pw"


class SelPhase(str, Enum):
    """Where a stage stands in the suggest, absorb, eliminate cycle."""

    READY = "ready"
    PENDING = "pending"
    OBSERVED = "observed"


class AugmentationScheme(str, Enum):
    """Which stages get a doubled design."""

    ALL_X1 = "all-x1"
    T0_X2 = "t0-x2"
    T1_X2 = "t1-x2"
    T2_X2 = "t2-x2"
    ALL_X2 = "all-x2"

    def multiplier(self, stage: int) -> int:
        """Design size multiplier of ``stage``."""
        if self is AugmentationScheme.ALL_X1:
            return 1
        if self is AugmentationScheme.ALL_X2:
            return 2
        return 2 if stage == int(self.value[1]) else 1


@dataclass(frozen=True)
class SelConfig:
    """Settings of a SEL run.

    Args:
        method (:class:`SelMethod`, optional): Defaults to ``atm``.
        tune (:class:`atmkit.alpha_tuner.TuneConfig`, optional): Tuner settings. Its seed
            is replaced by one derived from :attr:`seed` and the stage.
        exclude_dead_runs (:obj:`bool`, optional): Whether runs using an eliminated level
            are left out of later statistics. Defaults to :obj:`True`.
        augmentation (:class:`AugmentationScheme`, optional): Defaults to ``all-x1``.
        seed (:obj:`int`, optional): Seed of the stage designs and the tuner.
        max_runs (:obj:`int`, optional): Cap passed to the array construction.
    """

    method: SelMethod = SelMethod.ATM
    tune: TuneConfig = field(default_factory=TuneConfig)
    exclude_dead_runs: bool = True
    augmentation: AugmentationScheme = AugmentationScheme.ALL_X1
    seed: int = 0
    max_runs: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", SelMethod(self.method))
        object.__setattr__(self, "augmentation", AugmentationScheme(self.augmentation))

    def to_dict(self) -> Dict[str, Any]:
        """Serializes the configuration to a JSON compatible dictionary."""
        tune = self.tune
        return {
            "method": self.method.value,
            "exclude_dead_runs": self.exclude_dead_runs,
            "augmentation": self.augmentation.value,
            "seed": self.seed,
            "max_runs": self.max_runs,
            "tune": {
                "candidate_count": tune.candidate_count,
                "common_alpha_grid": list(tune.common_alpha_grid),
                "synthetic_design_cap": tune.synthetic_design_cap,
                "seed": tune.seed,
                "workers": tune.workers,
                "lasso": asdict(tune.lasso),
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SelConfig":
        """Inverse of :meth:`to_dict`."""
        tune = dict(data.get("tune", {}))
        lasso = LassoConfig(**tune.pop("lasso", {}))
        if "common_alpha_grid" in tune:
            tune["common_alpha_grid"] = tuple(tune["common_alpha_grid"])
        return cls(
            method=SelMethod(data.get("method", SelMethod.ATM)),
            tune=TuneConfig(lasso=lasso, **tune),
            exclude_dead_runs=bool(data.get("exclude_dead_runs", True)),
            augmentation=AugmentationScheme(data.get("augmentation", "all-x1")),
            seed=int(data.get("seed", 0)),
            max_runs=data.get("max_runs"),
        )


@dataclass(frozen=True)
class StageRecord:
    """What happened at one stage.

    Attributes:
        stage (:obj:`int`): Stage index, starting at 0.
        n (:obj:`int`): Cumulative number of observations at that point.
        alphas (Tuple[:obj:`float`], optional): Percentages used, ``None`` for ``pw``.
        prediction (Tuple[:obj:`int`]): Predicted setting in original level indices.
        eliminated (Tuple[:obj:`int` | :obj:`None`]): Level removed per factor, ``None``
            where nothing was removed.
    """

    stage: int
    n: int
    alphas: Optional[Tuple[float, ...]]
    prediction: Setting
    eliminated: Tuple[Optional[int], ...]

    def to_dict(self) -> Dict[str, Any]:
        """Serializes the record to a JSON compatible dictionary."""
        return {
            "stage": self.stage,
            "n": self.n,
            "alphas": None if self.alphas is None else list(self.alphas),
            "prediction": list(self.prediction),
            "eliminated": list(self.eliminated),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "StageRecord":
        """Inverse of :meth:`to_dict`."""
        return cls(
            int(data["stage"]),
            int(data["n"]),
            None if data.get("alphas") is None else tuple(map(float, data["alphas"])),
            tuple(int(x) for x in data["prediction"]),
            tuple(None if x is None else int(x) for x in data["eliminated"]),
        )


@dataclass(frozen=True)
class Prediction:
    """Outcome of :func:`predict`.

    Attributes:
        setting (Tuple[:obj:`int`]): Predicted setting in original level indices.
        value_estimate (:obj:`float`, optional): Mean observed response at the setting, or
            ``None`` if it was never sampled.
        alphas (:class:`atmkit.marginal_stats.AlphaVector`, optional): Percentages used,
            ``None`` for ``pw``.
    """

    setting: Setting
    value_estimate: Optional[float]
    alphas: Optional[AlphaVector]


@dataclass(frozen=True)
class SelState:
    """Snapshot of a SEL session.

    Args:
        space (:class:`atmkit.factor_space.FactorSpace`): The original space.
        surviving (Tuple[Tuple[:obj:`int`]]): Ascending original level indices still in
            play, per factor.
        stage (:obj:`int`, optional): Number of eliminations performed.
        phase (:class:`SelPhase`, optional): Position in the stage cycle.
        accumulated (:class:`atmkit.factor_space.ObservationSet`, optional): All data in
            original level indices.
        pending (:class:`atmkit.factor_space.Design`, optional): The suggested batch
            awaiting responses.
        batch (:obj:`int`, optional): Batches suggested at the current stage.
        history (Tuple[:class:`StageRecord`], optional): One record per elimination.
    """

    space: FactorSpace
    surviving: Tuple[Tuple[int, ...], ...]
    stage: int = 0
    phase: SelPhase = SelPhase.READY
    accumulated: Optional[ObservationSet] = None
    pending: Optional[Design] = None
    batch: int = 0
    history: Tuple[StageRecord, ...] = ()

    def __post_init__(self) -> None:
        surviving = tuple(tuple(sorted(int(x) for x in levels)) for levels in self.surviving)
        if len(surviving) != self.space.p:
            raise ValueError("surviving must have one entry per factor")
        for factor, (levels, num_levels) in enumerate(zip(surviving, self.space.levels)):
            if not levels:
                raise ValueError(f"Factor {factor} has no surviving level")
            if len(set(levels)) != len(levels) or levels[0] < 1 or levels[-1] > num_levels:
                raise ValueError(f"Surviving levels of factor {factor} are invalid")
        object.__setattr__(self, "surviving", surviving)
        object.__setattr__(self, "phase", SelPhase(self.phase))
        object.__setattr__(self, "history", tuple(self.history))

    @classmethod
    def start(cls, space: FactorSpace) -> "SelState":
        """A fresh session with every level surviving."""
        return cls(space, tuple(tuple(range(1, n + 1)) for n in space.levels))

    @property
    def profile(self) -> Tuple[int, ...]:
        """Tuple[:obj:`int`]: Number of surviving levels per factor."""
        return tuple(len(levels) for levels in self.surviving)

    @property
    def n(self) -> int:
        """:obj:`int`: Number of accumulated observations."""
        return 0 if self.accumulated is None else self.accumulated.n

    @property
    def is_terminal(self) -> bool:
        """:obj:`bool`: Whether a single setting remains."""
        return all(count == 1 for count in self.profile)

    def alive_mask(self) -> np.ndarray:
        """Which accumulated runs use surviving levels only."""
        if self.accumulated is None:
            return np.zeros(0, dtype=bool)
        mask = np.ones(self.accumulated.n, dtype=bool)
        for factor, levels in enumerate(self.surviving):
            mask &= np.isin(self.accumulated.runs[:, factor], levels)
        return mask

    def to_dict(self) -> Dict[str, Any]:
        """Serializes the state to a JSON compatible dictionary."""
        return {
            "space": self.space.to_dict(),
            "surviving": [list(levels) for levels in self.surviving],
            "stage": self.stage,
            "phase": self.phase.value,
            "batch": self.batch,
            "accumulated": None if self.accumulated is None else self.accumulated.to_dict(),
            "pending": None if self.pending is None else self.pending.to_dict(),
            "history": [record.to_dict() for record in self.history],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SelState":
        """Inverse of :meth:`to_dict`."""
        accumulated = data.get("accumulated")
        pending = data.get("pending")
        return cls(
            space=FactorSpace.from_dict(data["space"]),
            surviving=tuple(tuple(levels) for levels in data["surviving"]),
            stage=int(data["stage"]),
            phase=SelPhase(data["phase"]),
            accumulated=None if accumulated is None else ObservationSet.from_dict(accumulated),
            pending=None if pending is None else Design.from_dict(pending),
            batch=int(data.get("batch", 0)),
            history=tuple(StageRecord.from_dict(record) for record in data.get("history", ())),
        )


class Objective(Protocol):
    """What :func:`run_sel` needs from an objective."""

    space: FactorSpace

    def evaluate_many(self, runs: np.ndarray) -> np.ndarray:
        """One response per row of 1-based level indices."""


def _recode(state: SelState, runs: np.ndarray) -> np.ndarray:
    recoded = np.empty_like(runs)
    for factor, levels in enumerate(state.surviving):
        lookup = np.zeros(state.space.levels[factor] + 1, dtype=np.int64)
        lookup[list(levels)] = np.arange(1, len(levels) + 1)
        recoded[:, factor] = lookup[runs[:, factor]]
    return recoded


def _to_original(state: SelState, setting: Sequence[int]) -> Setting:
    return tuple(levels[int(x) - 1] for levels, x in zip(state.surviving, setting))


def restricted_data(state: SelState) -> ObservationSet:
    """Observations on surviving levels only, recoded to ``1..len(surviving)`` per factor.

    Raises:
        ProtocolError: If no accumulated run uses surviving levels only.
    """
    if state.accumulated is None:
        raise ProtocolError("No observations yet; suggest and absorb a batch first")
    mask = state.alive_mask()
    if not mask.any():
        raise ProtocolError("No observation uses surviving levels only; absorb a new batch")
    kept = state.accumulated.runs[mask]
    design = Design(_recode(state, kept), state.accumulated.design.provenance, state.profile)
    return ObservationSet(design, state.accumulated.responses[mask], state.accumulated.noise_sd)


def _tune_seed(config: SelConfig, stage: int) -> int:
    return int(np.random.SeedSequence([config.seed, stage]).generate_state(1)[0])


def _stage_alphas(
    state: SelState,
    config: SelConfig,
    method: SelMethod,
    alphas: Union[AlphaVector, Sequence[float], None],
) -> AlphaVector:
    p = state.space.p
    if alphas is not None:
        vector = alphas if isinstance(alphas, AlphaVector) else AlphaVector(tuple(alphas))
        if vector.p != p:
            raise ValueError(f"Expected {p} percentages, got {vector.p}")
        return vector
    if method == SelMethod.MEAN:
        return AlphaVector.ones(p)
    if method == SelMethod.MIN:
        return AlphaVector.zeros(p)
    tune = replace(config.tune, seed=_tune_seed(config, state.stage))
    return tune_alpha(restricted_data(state), tune, levels=state.profile).alphas


def _surviving_stats(
    state: SelState, config: SelConfig, alphas: AlphaVector
) -> List[np.ndarray]:
    """Tail means aligned with ``state.surviving``, NaN where a level has no data."""
    if config.exclude_dead_runs:
        table = SliceTable(restricted_data(state), state.profile)
        return [table.stats(factor, alpha) for factor, alpha in enumerate(alphas)]
    if state.accumulated is None:
        raise ProtocolError("No observations yet; suggest and absorb a batch first")
    table = SliceTable(state.accumulated, state.space.levels)
    return [
        table.stats(factor, alpha)[np.asarray(levels) - 1]
        for factor, (alpha, levels) in enumerate(zip(alphas, state.surviving))
    ]


def _best_index(values: np.ndarray, factor: int) -> int:
    if np.all(np.isnan(values)):
        raise MissingLevelsError(f"Factor {factor} has no observed surviving level")
    return int(np.nanargmin(values))


def _worst_index(values: np.ndarray, factor: int) -> int:
    if np.all(np.isnan(values)):
        raise MissingLevelsError(f"Factor {factor} has no observed surviving level")
    # highest index among tied maxima
    return len(values) - 1 - int(np.nanargmax(values[::-1]))


def _predict_from_stats(state: SelState, stats: Sequence[np.ndarray]) -> Setting:
    return tuple(
        levels[_best_index(values, factor)]
        for factor, (levels, values) in enumerate(zip(state.surviving, stats))
    )


def _observed_mean(state: SelState, setting: Setting) -> Optional[float]:
    if state.accumulated is None:
        return None
    hits = np.all(state.accumulated.runs == np.asarray(setting), axis=1)
    return float(state.accumulated.responses[hits].mean()) if hits.any() else None


def suggest_batch(
    state: SelState, config: Optional[SelConfig] = None
) -> Tuple[SelState, Design]:
    """The next batch: the smallest randomized array over the surviving levels.

    The design is reported in original level indices. When every factor has a single
    surviving level, the batch is that one setting.

    Returns:
        Tuple[:class:`SelState`, :class:`atmkit.factor_space.Design`]: The new state, now
        pending, and the batch to evaluate.

    Raises:
        ProtocolError: If a batch is already pending.
    """
    config = config or SelConfig()
    if state.phase == SelPhase.PENDING:
        raise ProtocolError("A batch is already pending; absorb its responses first")
    base = smallest_oa(OaRequest(state.profile, max_runs=config.max_runs))
    design_seed, augment_seed = np.random.SeedSequence(
        [config.seed, state.stage, state.batch]
    ).spawn(2)
    current = randomize(base, design_seed)
    scheme = (
        AugmentScheme.DOUBLE_THIS_STAGE
        if state.batch == 0 and config.augmentation.multiplier(state.stage) == 2
        else AugmentScheme.NONE
    )
    current = augment(current, scheme, augment_seed)
    runs = np.column_stack(
        [
            np.asarray(levels)[current.runs[:, factor] - 1]
            for factor, levels in enumerate(state.surviving)
        ]
    )
    design = Design(runs, current.provenance, state.space.levels)
    logger.debug(
        "Stage %d batch %d: %d runs over profile %s",
        state.stage,
        state.batch,
        design.n_runs,
        state.profile,
    )
    return replace(state, phase=SelPhase.PENDING, pending=design, batch=state.batch + 1), design


def absorb(
    state: SelState, responses: Union[ObservationSet, Sequence[float], np.ndarray]
) -> SelState:
    """Adds the responses of the pending batch to the accumulated data.

    Args:
        state (:class:`SelState`): A pending state.
        responses: One value per suggested run, in order, or an observation set whose runs
            equal the suggested batch.

    Raises:
        ProtocolError: If no batch is pending.
        ValueError: If the responses do not line up with the batch.
    """
    if state.phase != SelPhase.PENDING or state.pending is None:
        raise ProtocolError("No batch is pending; call suggest_batch first")
    if isinstance(responses, ObservationSet):
        if not np.array_equal(responses.runs, state.pending.runs):
            raise ValueError("The observed runs differ from the suggested batch")
        batch = ObservationSet(state.pending, responses.responses, responses.noise_sd)
    else:
        values = np.asarray(responses, dtype=float).reshape(-1)
        if values.shape[0] != state.pending.n_runs:
            raise ValueError(
                f"Got {values.shape[0]} responses for {state.pending.n_runs} suggested runs"
            )
        batch = ObservationSet(state.pending, values)
    accumulated = batch if state.accumulated is None else state.accumulated.extend(batch)
    return replace(state, phase=SelPhase.OBSERVED, pending=None, accumulated=accumulated)


def eliminate(
    state: SelState,
    config: Optional[SelConfig] = None,
    alphas: Union[AlphaVector, Sequence[float], None] = None,
) -> SelState:
    """Removes the level with the largest marginal tail mean from every factor.

    Factors with a single surviving level are skipped; ties remove the highest level. The
    ATM prediction made with the same percentages is kept in the stage record.

    Args:
        state (:class:`SelState`): An observed state.
        config (:class:`SelConfig`, optional): Method and tuner settings.
        alphas (Sequence[:obj:`float`], optional): Percentages to use instead of the ones
            the method would choose.

    Raises:
        ProtocolError: If the current batch has not been observed.
    """
    config = config or SelConfig()
    if state.phase != SelPhase.OBSERVED:
        raise ProtocolError("Elimination needs the responses of the current stage")
    vector = _stage_alphas(state, config, config.method, alphas)
    stats = _surviving_stats(state, config, vector)
    prediction = _predict_from_stats(state, stats)

    surviving = []
    eliminated: List[Optional[int]] = []
    for factor, (levels, values) in enumerate(zip(state.surviving, stats)):
        if len(levels) == 1:
            surviving.append(levels)
            eliminated.append(None)
            continue
        worst = _worst_index(values, factor)
        eliminated.append(levels[worst])
        surviving.append(levels[:worst] + levels[worst + 1 :])

    record = StageRecord(state.stage, state.n, vector.alphas, prediction, tuple(eliminated))
    logger.debug(
        "Stage %d (%s, alphas %s): removed %s",
        state.stage,
        config.method.value,
        vector,
        eliminated,
    )
    return replace(
        state,
        surviving=tuple(surviving),
        stage=state.stage + 1,
        phase=SelPhase.READY,
        batch=0,
        history=state.history + (record,),
    )


def predict(
    state: SelState,
    method: Union[PredictMethod, str, None] = None,
    config: Optional[SelConfig] = None,
    alphas: Union[AlphaVector, Sequence[float], None] = None,
) -> Prediction:
    """Applies a predictor to the data on surviving levels.

    Args:
        state (:class:`SelState`): A state with observations.
        method (:class:`PredictMethod` | :obj:`str`, optional): Defaults to the configured
            SEL method.
        config (:class:`SelConfig`, optional): Settings.
        alphas (Sequence[:obj:`float`], optional): Fixed percentages for ``atm``.

    Raises:
        ProtocolError: If there are no observations on surviving levels.
    """
    config = config or SelConfig()
    method = PredictMethod(method if method is not None else config.method.value)
    if method == PredictMethod.PW:
        winner, _ = restricted_data(state).best()
        setting = _to_original(state, winner)
        vector = None
    else:
        vector = _stage_alphas(state, config, SelMethod(method.value), alphas)
        setting = _predict_from_stats(state, _surviving_stats(state, config, vector))
    return Prediction(setting, _observed_mean(state, setting), vector)


@dataclass(frozen=True)
class SelRun:
    """Stage records of a whole SEL trajectory and the final state."""

    records: Tuple[StageRecord, ...]
    final: SelState


def run_sel(
    objective: Objective, config: Optional[SelConfig] = None, t_elim: int = 2
) -> SelRun:
    """Runs ``t_elim`` eliminations and a final prediction against ``objective``.

    Returns one record per stage; the last one carries the final prediction and no
    eliminations.
    """
    if t_elim < 0:
        raise ValueError("t_elim must be nonnegative")
    config = config or SelConfig()
    state = SelState.start(objective.space)
    records: List[StageRecord] = []
    for stage in range(t_elim + 1):
        state, design = suggest_batch(state, config)
        state = absorb(state, objective.evaluate_many(design.runs))
        if stage < t_elim:
            state = eliminate(state, config)
            records.append(state.history[-1])
        else:
            final = predict(state, config=config)
            records.append(
                StageRecord(
                    stage,
                    state.n,
                    None if final.alphas is None else final.alphas.alphas,
                    final.setting,
                    (None,) * state.space.p,
                )
            )
    return SelRun(tuple(records), state)
