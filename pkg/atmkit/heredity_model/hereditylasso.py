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
"""This module contains the heredity-constrained interaction lasso used as tuning surrogate.

The fit runs in two stages. Main effects are selected first on their own; interaction
columns are then built only for factor pairs with at least one surviving parent,
residualized against the main-effect span and fitted to the part of the response the main
effects cannot reach. Both stages have their own penalty level, chosen together by
cross-validation on logarithmic grids.
"""
import logging
import warnings
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lasso_path
from sklearn.model_selection import KFold, LeaveOneOut

from atmkit.factor_space import InvalidSettingError, ObservationSet, Setting

logger = logging.getLogger(__name__)

EPSILON = 1e-12
"""Guard added to denominators and used to detect constant responses."""

# relative norm below which a (residualized) column is treated as empty
_NULL_COLUMN = 1e-10
# relative norm below which the response has no component outside the main-effect span
_NULL_RESPONSE = 1e-8

Pair = Tuple[int, int]


@dataclass(frozen=True)
class LassoConfig:
    """Settings of the penalized fit.

    Args:
        n_lambdas (:obj:`int`, optional): Size of the penalty grid. Defaults to 50.
        lambda_ratio (:obj:`float`, optional): Smallest over largest grid value.
            Defaults to ``1e-4``.
        cv_folds (:obj:`int`, optional): Number of cross-validation folds. Defaults to 5.
        loo_below (:obj:`int`, optional): Leave-one-out is used below this many runs.
            Defaults to 15.
        tol (:obj:`float`, optional): Coordinate descent tolerance. Defaults to ``1e-7``.
        max_iter (:obj:`int`, optional): Maximum coordinate descent sweeps. Defaults to
            10000.
    """

    n_lambdas: int = 50
    lambda_ratio: float = 1e-4
    cv_folds: int = 5
    loo_below: int = 15
    tol: float = 1e-7
    max_iter: int = 10_000

    def __post_init__(self) -> None:
        if self.n_lambdas < 1:
            raise ValueError("n_lambdas must be positive")
        if not 0 < self.lambda_ratio < 1:
            raise ValueError("lambda_ratio must lie in (0, 1)")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol and max_iter must be positive")


@dataclass(frozen=True)
class SurrogateModel:
    """Main effects plus two-factor interactions on a discrete space.

    Main effects are stored per level and sum to zero within each factor; every stored
    interaction table sums to zero along both margins. Only nonzero interaction tables are
    kept.

    Args:
        levels (Tuple[:obj:`int`]): Level profile of the space the model was fitted on.
        intercept (:obj:`float`): Constant term.
        main_effects (Tuple[Tuple[:obj:`float`]]): One effect per level and factor.
        interactions (Dict[Tuple[:obj:`int`, :obj:`int`], Tuple[Tuple[:obj:`float`]]]):
            ``N_l x N_m`` effect tables keyed by 0-based factor pairs ``l < m``.
        lam (:obj:`float`): Main-effect penalty level, ``inf`` for constant data.
        constant (:obj:`bool`): Whether the data had zero variance.
        interaction_lam (:obj:`float`): Interaction penalty level, ``inf`` when no pair
            was allowed in.
    """

    levels: Tuple[int, ...]
    intercept: float
    main_effects: Tuple[Tuple[float, ...], ...]
    interactions: Dict[Pair, Tuple[Tuple[float, ...], ...]] = field(default_factory=dict)
    lam: float = float("inf")
    constant: bool = False
    interaction_lam: float = float("inf")

    @property
    def p(self) -> int:
        """:obj:`int`: Number of factors."""
        return len(self.levels)

    @property
    def active_main(self) -> FrozenSet[int]:
        """FrozenSet[:obj:`int`]: Factors with a nonzero main effect."""
        return frozenset(
            factor for factor, effects in enumerate(self.main_effects) if any(effects)
        )

    @property
    def active_interactions(self) -> FrozenSet[Pair]:
        """FrozenSet[Tuple[:obj:`int`, :obj:`int`]]: Factor pairs with a nonzero table."""
        return frozenset(self.interactions)

    def satisfies_heredity(self) -> bool:
        """Whether every active interaction has at least one active parent."""
        active = self.active_main
        return all(l in active or m in active for l, m in self.interactions)

    def predict(self, runs: Any) -> np.ndarray:
        """Vectorized evaluation of an ``n x p`` matrix of 1-based level indices.

        Raises:
            InvalidSettingError: If the shape or a level does not fit the model.
        """
        runs = np.asarray(runs, dtype=np.int64)
        if runs.ndim == 1:
            runs = runs.reshape(1, -1)
        if runs.shape[1] != self.p:
            raise InvalidSettingError(
                f"Got {runs.shape[1]} factors, the model was fitted on {self.p}"
            )
        if np.any(runs < 1) or np.any(runs > np.asarray(self.levels)):
            raise InvalidSettingError("A level is outside of the model's level profile")
        index = runs - 1
        values = np.full(runs.shape[0], self.intercept)
        for factor, effects in enumerate(self.main_effects):
            values += np.asarray(effects)[index[:, factor]]
        for (l, m), table in self.interactions.items():
            values += np.asarray(table)[index[:, l], index[:, m]]
        return values

    def to_dict(self) -> Dict[str, Any]:
        """Serializes the model to a JSON compatible dictionary."""
        return {
            "levels": list(self.levels),
            "intercept": self.intercept,
            "main_effects": [list(effects) for effects in self.main_effects],
            "interactions": [
                {"factors": [l, m], "table": [list(row) for row in table]}
                for (l, m), table in sorted(self.interactions.items())
            ],
            "lambda": None if np.isinf(self.lam) else self.lam,
            "interaction_lambda": (
                None if np.isinf(self.interaction_lam) else self.interaction_lam
            ),
            "constant": self.constant,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SurrogateModel":
        """Inverse of :meth:`to_dict`."""
        return cls(
            levels=tuple(int(n) for n in data["levels"]),
            intercept=float(data["intercept"]),
            main_effects=tuple(
                tuple(float(value) for value in effects) for effects in data["main_effects"]
            ),
            interactions={
                (int(entry["factors"][0]), int(entry["factors"][1])): tuple(
                    tuple(float(value) for value in row) for row in entry["table"]
                )
                for entry in data.get("interactions", ())
            },
            lam=float("inf") if data.get("lambda") is None else float(data["lambda"]),
            constant=bool(data.get("constant", False)),
            interaction_lam=(
                float("inf")
                if data.get("interaction_lambda") is None
                else float(data["interaction_lambda"])
            ),
        )


class _Encoder:
    """Sum-to-zero deviation coding of main effects and their pairwise products."""

    def __init__(self, levels: Sequence[int]):
        self.levels = tuple(int(n) for n in levels)
        # level j < N maps to the unit vector e_j, level N to the all -1 vector
        self.codings = [
            np.vstack([np.eye(n - 1), -np.ones((1, n - 1))]) for n in self.levels
        ]
        self.offsets = np.concatenate([[0], np.cumsum([n - 1 for n in self.levels])])
        self.column_factor = np.repeat(np.arange(len(self.levels)), np.diff(self.offsets))

    @property
    def width(self) -> int:
        return int(self.offsets[-1])

    def main(self, runs: np.ndarray) -> np.ndarray:
        blocks = [coding[runs[:, l] - 1] for l, coding in enumerate(self.codings)]
        return np.hstack(blocks) if blocks else np.zeros((runs.shape[0], 0))

    def pair(self, runs: np.ndarray, l: int, m: int) -> np.ndarray:
        left = self.codings[l][runs[:, l] - 1]
        right = self.codings[m][runs[:, m] - 1]
        return (left[:, :, None] * right[:, None, :]).reshape(runs.shape[0], -1)

    def pair_width(self, l: int, m: int) -> int:
        return (self.levels[l] - 1) * (self.levels[m] - 1)


@dataclass
class _Coefficients:
    intercept: float
    main: np.ndarray
    pairs: Dict[Pair, np.ndarray]

    def to_model(
        self, encoder: _Encoder, lam: float, interaction_lam: float
    ) -> SurrogateModel:
        main_effects = tuple(
            tuple(
                float(value)
                for value in coding @ self.main[encoder.offsets[l] : encoder.offsets[l + 1]]
            )
            for l, coding in enumerate(encoder.codings)
        )
        interactions = {}
        for (l, m), coefficients in self.pairs.items():
            if not np.any(coefficients):
                continue
            block = coefficients.reshape(encoder.levels[l] - 1, encoder.levels[m] - 1)
            table = encoder.codings[l] @ block @ encoder.codings[m].T
            interactions[(l, m)] = tuple(tuple(float(value) for value in row) for row in table)
        return SurrogateModel(
            encoder.levels,
            float(self.intercept),
            main_effects,
            interactions,
            lam,
            interaction_lam=interaction_lam,
        )


def _is_constant(y: np.ndarray) -> bool:
    return bool(np.ptp(y) <= EPSILON * max(1.0, float(np.max(np.abs(y)))))


def _lasso(columns: np.ndarray, target: np.ndarray, lambdas: np.ndarray, config: LassoConfig):
    if columns.shape[1] == 0:
        return np.zeros((0, len(lambdas)))
    with warnings.catch_warnings():
        # the smallest penalty levels may stop at max_iter
        warnings.simplefilter("ignore", ConvergenceWarning)
        _, coefficients, _ = lasso_path(
            columns, target, alphas=lambdas, tol=config.tol, max_iter=config.max_iter
        )
    return coefficients


def _standardize(columns: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    center = columns.mean(axis=0)
    centered = columns - center
    norms = np.linalg.norm(centered, axis=0)
    keep = norms > _NULL_COLUMN * np.sqrt(max(columns.shape[0], 1))
    return centered[:, keep] / norms[keep], center, norms, keep


@dataclass
class _PairBlock:
    """Interaction columns of the eligible pairs, residualized against the main-effect span."""

    pairs: List[Pair]
    projection: np.ndarray
    norms: np.ndarray
    keep: np.ndarray
    scaled: np.ndarray

    def bounds(self, encoder: _Encoder) -> np.ndarray:
        widths = [encoder.pair_width(l, m) for l, m in self.pairs]
        return np.concatenate([[0], np.cumsum(widths)]).astype(int)


class _Blocks:
    """Standardized main-effect columns of one data set and the part of ``y`` outside their
    span.

    The residualized interaction columns are orthogonal to every main-effect column, so the
    joint least squares loss splits into a main-effect lasso on ``y`` and an interaction
    lasso on :attr:`orthogonal`. Each part gets its own penalty level.
    """

    def __init__(self, encoder: _Encoder, runs: np.ndarray, y: np.ndarray):
        self.encoder = encoder
        self.runs = runs
        self.y_mean = float(y.mean())
        self.y_centered = y - self.y_mean
        raw_main = encoder.main(runs)
        self.scaled, self.center, norms, self.keep = _standardize(raw_main)
        self.norms = norms[self.keep]
        self.column_factor = encoder.column_factor[self.keep]
        self.span = np.column_stack([np.ones(y.shape[0]), raw_main[:, self.keep]])
        orthogonal = y - self.span @ np.linalg.lstsq(self.span, y, rcond=None)[0]
        if np.linalg.norm(orthogonal) <= _NULL_RESPONSE * np.linalg.norm(self.y_centered):
            orthogonal = np.zeros_like(orthogonal)
        self.orthogonal = orthogonal

    def main_path(self, lambdas: np.ndarray, config: LassoConfig) -> np.ndarray:
        """Weights of the kept raw main-effect columns, one column per penalty level."""
        return _lasso(self.scaled, self.y_centered, lambdas, config) / self.norms[:, None]

    def survivors(self, weights: np.ndarray) -> FrozenSet[int]:
        return frozenset(self.column_factor[weights != 0].tolist())

    def main_rows(self, runs: np.ndarray) -> np.ndarray:
        return self.encoder.main(runs)[:, self.keep] - self.center[self.keep]

    def pair_block(self, survivors: FrozenSet[int]) -> _PairBlock:
        encoder = self.encoder
        pairs = [
            (l, m)
            for l, m in combinations(range(len(encoder.levels)), 2)
            if (l in survivors or m in survivors) and encoder.pair_width(l, m) > 0
        ]
        if not pairs:
            return _PairBlock(
                [],
                np.zeros((self.span.shape[1], 0)),
                np.zeros(0),
                np.zeros(0, dtype=bool),
                np.zeros((self.runs.shape[0], 0)),
            )
        raw = np.hstack([encoder.pair(self.runs, l, m) for l, m in pairs])
        projection = np.linalg.lstsq(self.span, raw, rcond=None)[0]
        residual = raw - self.span @ projection
        norms = np.linalg.norm(residual, axis=0)
        keep = norms > _NULL_COLUMN * np.maximum(np.linalg.norm(raw, axis=0), 1.0)
        return _PairBlock(pairs, projection, norms, keep, residual[:, keep] / norms[keep])

    def pair_rows(self, block: _PairBlock, runs: np.ndarray) -> np.ndarray:
        """Residualized interaction columns evaluated at other rows."""
        if not block.pairs:
            return np.zeros((runs.shape[0], 0))
        raw = np.hstack([self.encoder.pair(runs, l, m) for l, m in block.pairs])
        span = np.column_stack([np.ones(runs.shape[0]), self.encoder.main(runs)[:, self.keep]])
        return raw - span @ block.projection

    def pair_path(
        self, block: _PairBlock, lambdas: np.ndarray, config: LassoConfig
    ) -> np.ndarray:
        """Weights of the raw interaction columns; an infinite penalty level gives zeros."""
        weights = np.zeros((len(block.keep), len(lambdas)))
        finite = np.isfinite(lambdas)
        if block.scaled.shape[1] and np.any(finite) and np.any(self.orthogonal):
            fitted = _lasso(block.scaled, self.orthogonal, lambdas[finite], config)
            weights[np.ix_(block.keep, finite)] = fitted / block.norms[block.keep][:, None]
        return weights

    def coefficients(
        self, main_weights: np.ndarray, block: _PairBlock, pair_weights: np.ndarray
    ) -> _Coefficients:
        # the residualized columns are Z - S G, fold -S G back into intercept and mains
        folded = block.projection @ pair_weights
        intercept = self.y_mean - self.center[self.keep] @ main_weights - folded[0]
        main = np.zeros(self.encoder.width)
        main[self.keep] = main_weights - folded[1:]
        bounds = block.bounds(self.encoder)
        return _Coefficients(
            float(intercept),
            main,
            {
                pair: pair_weights[bounds[position] : bounds[position + 1]].copy()
                for position, pair in enumerate(block.pairs)
            },
        )

    def interaction_grid(self, config: LassoConfig) -> np.ndarray:
        """Descending interaction penalties, led by an infinite one that keeps every pair
        out."""
        block = self.pair_block(frozenset(range(len(self.encoder.levels))))
        if block.scaled.shape[1] == 0 or not np.any(self.orthogonal):
            return np.array([np.inf])
        top = float(np.max(np.abs(block.scaled.T @ self.orthogonal))) / self.runs.shape[0]
        if top <= 0:
            return np.array([np.inf])
        return np.concatenate(
            [[np.inf], np.geomspace(top, top * config.lambda_ratio, config.n_lambdas)]
        )


def _lambda_max(encoder: _Encoder, runs: np.ndarray, y: np.ndarray) -> float:
    if _is_constant(y):
        return 0.0
    scaled = _standardize(encoder.main(runs))[0]
    if scaled.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(scaled.T @ (y - y.mean()))) / y.shape[0])


def _intercept_only(
    encoder: _Encoder, value: float, lam: float, constant: bool = False
) -> SurrogateModel:
    zeros = tuple((0.0,) * n for n in encoder.levels)
    return SurrogateModel(encoder.levels, value, zeros, {}, lam, constant)


def _canonical(obs: ObservationSet) -> Tuple[np.ndarray, np.ndarray]:
    keys = np.column_stack([obs.runs, obs.responses]).T[::-1]
    order = np.lexsort(keys)
    return obs.runs[order], obs.responses[order]


def _levels_of(obs: ObservationSet, levels: Optional[Sequence[int]]) -> Tuple[int, ...]:
    levels = tuple(int(n) for n in (levels if levels is not None else obs.levels))
    if len(levels) != obs.design.n_factors:
        raise ValueError("levels must have one entry per factor")
    return levels


def lambda_grid(
    obs: ObservationSet,
    config: Optional[LassoConfig] = None,
    levels: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Descending log-spaced penalty levels from the smallest one that zeros every effect.

    Returns an empty array for constant responses.
    """
    config = config or LassoConfig()
    encoder = _Encoder(_levels_of(obs, levels))
    runs, y = _canonical(obs)
    top = _lambda_max(encoder, runs, y)
    if top <= 0:
        return np.zeros(0)
    return np.geomspace(top, top * config.lambda_ratio, config.n_lambdas)




def _splitter(n: int, config: LassoConfig, seed: int) -> Any:
    if n < config.loo_below:
        return LeaveOneOut()
    return KFold(n_splits=min(config.cv_folds, n), shuffle=True, random_state=seed % 2**32)


def _cv_errors(
    encoder: _Encoder,
    runs: np.ndarray,
    y: np.ndarray,
    main_lambdas: np.ndarray,
    pair_lambdas: np.ndarray,
    config: LassoConfig,
    seed: int,
) -> np.ndarray:
    """Mean squared held-out error, rows by main-effect and columns by interaction penalty."""
    squared = np.zeros((len(main_lambdas), len(pair_lambdas)))
    for train, test in _splitter(y.shape[0], config, seed).split(runs):
        held_out = y[test]
        if _is_constant(y[train]):
            squared += np.sum((held_out - y[train].mean()) ** 2)
            continue
        blocks = _Blocks(encoder, runs[train], y[train])
        main_weights = blocks.main_path(main_lambdas, config)
        main_fit = blocks.y_mean + blocks.main_rows(runs[test]) @ main_weights

        groups: Dict[FrozenSet[int], List[int]] = {}
        for index in range(len(main_lambdas)):
            groups.setdefault(blocks.survivors(main_weights[:, index]), []).append(index)
        for survivors, indices in groups.items():
            block = blocks.pair_block(survivors)
            pair_fit = blocks.pair_rows(block, runs[test]) @ blocks.pair_path(
                block, pair_lambdas, config
            )
            residual = main_fit[:, indices, None] + pair_fit[:, None, :] - held_out[:, None, None]
            squared[indices] += np.sum(residual**2, axis=0)
    return squared / y.shape[0]


def fit(
    obs: ObservationSet,
    cv_folds: Optional[int] = None,
    seed: int = 0,
    *,
    config: Optional[LassoConfig] = None,
    lam: Optional[float] = None,
    levels: Optional[Sequence[int]] = None,
) -> SurrogateModel:
    """Fits main effects and weak-heredity two-factor interactions.

    The rows are put into a canonical order first, so the result does not depend on the
    order of the data. Without ``lam``, the main-effect and the interaction penalty level are
    chosen together by cross-validation; interactions may stay out entirely when they do
    not predict held-out runs.

    Args:
        obs (:class:`atmkit.factor_space.ObservationSet`): Training data.
        cv_folds (:obj:`int`, optional): Overrides :attr:`LassoConfig.cv_folds`.
        seed (:obj:`int`, optional): Seed of the fold assignment.
        config (:class:`LassoConfig`, optional): Fit settings.
        lam (:obj:`float`, optional): Fixed positive penalty level of both stages; skips
            cross-validation.
        levels (Sequence[:obj:`int`], optional): Level profile. Defaults to ``obs.levels``.

    Returns:
        :class:`SurrogateModel`: Intercept-only and flagged as constant for zero-variance
        responses.
    """
    config = config or LassoConfig()
    if cv_folds is not None:
        config = replace(config, cv_folds=cv_folds)
    encoder = _Encoder(_levels_of(obs, levels))
    runs, y = _canonical(obs)
    top = _lambda_max(encoder, runs, y)
    if top <= 0:
        logger.debug("Constant response %.6g, fitting the intercept only", float(y.mean()))
        return _intercept_only(encoder, float(y.mean()), float("inf"), constant=True)

    blocks = _Blocks(encoder, runs, y)
    if lam is not None:
        if not lam > 0:
            raise ValueError(f"lam must be positive, got {lam}")
        main_lam = pair_lam = float(lam)
    else:
        main_lambdas = np.geomspace(top, top * config.lambda_ratio, config.n_lambdas)
        pair_lambdas = blocks.interaction_grid(config)
        errors = _cv_errors(encoder, runs, y, main_lambdas, pair_lambdas, config, seed)
        # argmin returns the first, i.e. largest, of tied penalty levels
        row, column = np.unravel_index(int(np.argmin(errors)), errors.shape)
        main_lam, pair_lam = float(main_lambdas[row]), float(pair_lambdas[column])
        logger.debug(
            "Cross-validation chose lambda %.4g from [%.4g, %.4g] and interaction lambda %.4g",
            main_lam,
            main_lambdas[-1],
            main_lambdas[0],
            pair_lam,
        )

    if main_lam >= top:
        return _intercept_only(encoder, float(y.mean()), main_lam)
    main_weights = blocks.main_path(np.array([main_lam]), config)[:, 0]
    block = blocks.pair_block(blocks.survivors(main_weights))
    pair_weights = blocks.pair_path(block, np.array([pair_lam]), config)[:, 0]
    return blocks.coefficients(main_weights, block, pair_weights).to_model(
        encoder, main_lam, pair_lam
    )


def evaluate(model: SurrogateModel, setting: Setting) -> float:
    """Model value at one setting.

    Raises:
        InvalidSettingError: If the setting does not fit the model's space.
    """
    if len(setting) != model.p:
        raise InvalidSettingError(f"Got {len(setting)} factors, the model has {model.p}")
    return float(model.predict([setting])[0])


def predict(model: SurrogateModel, runs: Any) -> np.ndarray:
    """Model values at every row of ``runs``."""
    return model.predict(runs)


def interaction_strength(model: SurrogateModel) -> float:
    """Absolute interaction mass relative to absolute main-effect mass."""
    interactions = sum(float(np.abs(table).sum()) for table in model.interactions.values())
    main = sum(float(np.abs(effects).sum()) for effects in model.main_effects)
    return interactions / (main + EPSILON)
