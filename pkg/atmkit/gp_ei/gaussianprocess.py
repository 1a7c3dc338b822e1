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
"""This module contains Gaussian process models over discrete settings.

Ordinal factors enter the correlation through squared differences of their level
positions, nominal factors through a mismatch indicator; mixed spaces combine both in one
exponent. Hyperparameters maximize the profile likelihood, with the constant mean and the
process variance profiled out.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import Bounds, minimize

from atmkit.factor_space import FactorKind, ObservationSet, Setting

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12
"""Process variance used for constant data."""

# diagonal jitter ladder, relative to the unit diagonal of a correlation matrix
_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
_PENALTY = 1e25
_CHUNK = 4096

KindsLike = Sequence[Union[FactorKind, str]]


class FactorizationError(np.linalg.LinAlgError):
    """Raised when a covariance matrix stays indefinite after the largest jitter.

    Attributes:
        condition (:obj:`float`): Condition number of the matrix without jitter.
        jitter (:obj:`float`): Largest diagonal jitter tried.
    """

    def __init__(self, message: str, condition: float, jitter: float):
        super().__init__(message)
        self.condition = condition
        self.jitter = jitter


@dataclass(frozen=True)
class GpConfig:
    """Settings of :func:`fit_gp` and the EI batch selection.

    Args:
        n_starts (:obj:`int`, optional): Multistart count. Defaults to 10.
        max_iter (:obj:`int`, optional): Nelder-Mead iterations per start. Defaults to 500.
        theta_bounds (Tuple[:obj:`float`, :obj:`float`], optional): Length-scale bounds.
        nugget_bounds (Tuple[:obj:`float`, :obj:`float`], optional): Bounds of the nugget
            relative to the process variance.
        nugget (:obj:`float`, optional): Fixed relative nugget; ``0`` gives an
            interpolating model. Defaults to fitting it.
        candidate_cap (:obj:`int`, optional): Largest number of EI candidates; bigger
            spaces are sampled. Defaults to ``10**5``.
        physical_distances (:obj:`bool`, optional): Whether ordinal distances use the
            physical level values of the space when it has them. Defaults to
            :obj:`False`, i.e. level indices.
    """

    n_starts: int = 10
    max_iter: int = 500
    theta_bounds: Tuple[float, float] = (1e-6, 1e3)
    nugget_bounds: Tuple[float, float] = (1e-8, 10.0)
    nugget: Optional[float] = None
    candidate_cap: int = 100_000
    physical_distances: bool = False

    def __post_init__(self) -> None:
        if self.n_starts < 1 or self.max_iter < 1:
            raise ValueError("n_starts and max_iter must be positive")
        for name in ("theta_bounds", "nugget_bounds"):
            low, high = getattr(self, name)
            if not 0 < low < high:
                raise ValueError(f"{name} must satisfy 0 < low < high")
        if self.nugget is not None and self.nugget < 0:
            raise ValueError("nugget must be nonnegative")
        if self.candidate_cap < 1:
            raise ValueError("candidate_cap must be positive")


@dataclass(frozen=True)
class Posterior:
    """Conditional mean and standard deviation at one setting."""

    mean: float
    sd: float


def _kinds(kinds: KindsLike, p: int) -> Tuple[FactorKind, ...]:
    kinds = tuple(FactorKind(kind) for kind in kinds)
    if len(kinds) != p:
        raise ValueError(f"Expected {p} factor kinds, got {len(kinds)}")
    return kinds


def _levels(obs: ObservationSet) -> Tuple[int, ...]:
    return tuple(obs.levels) or tuple(int(n) for n in obs.runs.max(axis=0))


def _coordinates(
    levels: Sequence[int], positions: Optional[Sequence[Sequence[float]]]
) -> Tuple[Tuple[float, ...], ...]:
    if positions is None:
        return tuple(tuple(float(x) for x in range(1, n + 1)) for n in levels)
    coordinates = tuple(tuple(float(x) for x in values) for values in positions)
    if len(coordinates) != len(levels) or any(
        len(values) != n for values, n in zip(coordinates, levels)
    ):
        raise ValueError("positions must hold one value per level and factor")
    return coordinates


def _exponent(
    left: np.ndarray,
    right: np.ndarray,
    theta: Sequence[float],
    kinds: Sequence[FactorKind],
    coordinates: Sequence[Sequence[float]],
) -> np.ndarray:
    exponent = np.zeros((left.shape[0], right.shape[0]))
    for factor, (weight, kind) in enumerate(zip(theta, kinds)):
        if weight == 0:
            continue
        if kind == FactorKind.NOMINAL:
            distance = (left[:, factor, None] != right[None, :, factor]).astype(float)
        else:
            positions = np.asarray(coordinates[factor])
            difference = (
                positions[left[:, factor] - 1][:, None] - positions[right[:, factor] - 1][None, :]
            )
            distance = difference**2
        exponent += weight * distance
    return exponent


def correlation_matrix(
    left: Any,
    right: Any,
    theta: Sequence[float],
    kinds: KindsLike,
    positions: Optional[Sequence[Sequence[float]]] = None,
) -> np.ndarray:
    """Correlations ``exp(-sum theta_l d_l)`` between two sets of settings."""
    left = np.atleast_2d(np.asarray(left, dtype=np.int64))
    right = np.atleast_2d(np.asarray(right, dtype=np.int64))
    kinds = _kinds(kinds, left.shape[1])
    if positions is None:
        positions = _coordinates(np.maximum(left.max(axis=0), right.max(axis=0)), None)
    coordinates = [np.asarray(values, dtype=float) for values in positions]
    return np.exp(-_exponent(left, right, theta, kinds, coordinates))


def _factorize(matrix: np.ndarray) -> Tuple[Tuple[np.ndarray, bool], float]:
    identity = np.eye(matrix.shape[0])
    for jitter in _JITTERS:
        try:
            return cho_factor(matrix + jitter * identity, lower=True), jitter
        except np.linalg.LinAlgError:
            logger.debug("Cholesky failed with jitter %.1e", jitter)
    with np.errstate(divide="ignore", invalid="ignore"):
        condition = float(np.linalg.cond(matrix))
    raise FactorizationError(
        f"Covariance matrix is not positive definite (condition number {condition:.3g}, "
        f"jitter up to {_JITTERS[-1]:.0e})",
        condition,
        _JITTERS[-1],
    )


def _profile(
    runs: np.ndarray,
    y: np.ndarray,
    kinds: Sequence[FactorKind],
    coordinates: Sequence[Sequence[float]],
    theta: Sequence[float],
    ratio: float,
) -> Tuple[float, float, float]:
    """Profile log-likelihood with the maximizing mean and variance."""
    n = y.shape[0]
    matrix = np.exp(-_exponent(runs, runs, theta, kinds, coordinates)) + ratio * np.eye(n)
    factor, _ = _factorize(matrix)
    ones = np.ones(n)
    mean = float(ones @ cho_solve(factor, y)) / float(ones @ cho_solve(factor, ones))
    residual = y - mean
    variance = max(float(residual @ cho_solve(factor, residual)) / n, VARIANCE_FLOOR)
    log_determinant = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    loglik = -0.5 * (n * math.log(2 * math.pi * variance) + log_determinant + n)
    return loglik, mean, variance


def log_likelihood(
    obs: ObservationSet,
    kinds: KindsLike,
    theta: Sequence[float],
    nugget_ratio: float,
    positions: Optional[Sequence[Sequence[float]]] = None,
) -> float:
    """Profile log-likelihood of ``(theta, nugget_ratio)`` on ``obs``.

    Raises:
        FactorizationError: If the covariance matrix cannot be factorized.
    """
    kinds = _kinds(kinds, obs.design.n_factors)
    coordinates = _coordinates(_levels(obs), positions)
    return _profile(obs.runs, obs.responses, kinds, coordinates, theta, nugget_ratio)[0]


@dataclass(frozen=True, eq=False)
class GpModel:
    """A Gaussian process conditioned on training data.

    The covariance is ``variance * R + nugget * I`` with the correlation ``R`` of
    :func:`correlation_matrix`. Use :func:`fit_gp` or :func:`condition` to build one.

    Attributes:
        loglik (:obj:`float`): Log-likelihood of the training data under the model.
        jitter (:obj:`float`): Diagonal jitter the factorization needed, relative to the
            variance.
        starts (Tuple[Tuple[:obj:`float`, :obj:`float`]]): Log-likelihood at every
            multistart initialization and after its local search.
    """

    levels: Tuple[int, ...]
    kinds: Tuple[FactorKind, ...]
    mean: float
    variance: float
    theta: Tuple[float, ...]
    nugget: float
    runs: np.ndarray
    responses: np.ndarray
    positions: Tuple[Tuple[float, ...], ...]
    constant: bool = False
    starts: Tuple[Tuple[float, float], ...] = ()
    loglik: float = field(init=False)
    jitter: float = field(init=False)
    _factor: Tuple[np.ndarray, bool] = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)
    _exact: Dict[Setting, float] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.variance <= 0:
            raise ValueError("variance must be positive")
        if self.nugget < 0 or any(value < 0 for value in self.theta):
            raise ValueError("theta and nugget must be nonnegative")
        runs = np.array(self.runs, dtype=np.int64, copy=True)
        responses = np.array(self.responses, dtype=float, copy=True).reshape(-1)
        runs.setflags(write=False)
        responses.setflags(write=False)
        object.__setattr__(self, "runs", runs)
        object.__setattr__(self, "responses", responses)
        object.__setattr__(self, "theta", tuple(float(value) for value in self.theta))

        n = responses.shape[0]
        ratio = self.nugget / self.variance
        matrix = np.exp(
            -_exponent(runs, runs, self.theta, self.kinds, self.positions)
        ) + ratio * np.eye(n)
        factor, jitter = _factorize(matrix)
        residual = responses - self.mean
        weights = cho_solve(factor, residual)
        log_determinant = 2.0 * float(np.sum(np.log(np.diag(factor[0])))) + n * math.log(
            self.variance
        )
        loglik = -0.5 * (
            float(residual @ weights) / self.variance
            + log_determinant
            + n * math.log(2 * math.pi)
        )
        exact: Dict[Setting, float] = {}
        if self.nugget == 0:
            totals: Dict[Setting, Tuple[float, int]] = {}
            for row, value in zip(runs, responses):
                key = tuple(int(x) for x in row)
                total, count = totals.get(key, (0.0, 0))
                totals[key] = (total + float(value), count + 1)
            exact = {key: total / count for key, (total, count) in totals.items()}
        object.__setattr__(self, "loglik", loglik)
        object.__setattr__(self, "jitter", jitter)
        object.__setattr__(self, "_factor", factor)
        object.__setattr__(self, "_weights", weights)
        object.__setattr__(self, "_exact", exact)

    @property
    def p(self) -> int:
        """:obj:`int`: Number of factors."""
        return len(self.levels)

    @property
    def n(self) -> int:
        """:obj:`int`: Number of training points."""
        return int(self.responses.shape[0])

    def covariance(self, left: Setting, right: Setting) -> float:
        """Prior covariance of two settings, without the nugget."""
        exponent = _exponent(
            np.asarray([left], dtype=np.int64),
            np.asarray([right], dtype=np.int64),
            self.theta,
            self.kinds,
            self.positions,
        )
        return float(self.variance * np.exp(-exponent[0, 0]))

    def posterior_many(self, runs: Any) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior means and standard deviations of the latent function at ``runs``.

        With a zero nugget, training settings return their observed value (averaged over
        duplicates) and a standard deviation of 0.
        """
        runs = np.atleast_2d(np.asarray(runs, dtype=np.int64))
        if runs.shape[1] != self.p:
            raise ValueError(f"Expected {self.p} factors, got {runs.shape[1]}")
        means = np.empty(runs.shape[0])
        sds = np.empty(runs.shape[0])
        lower = self._factor[0]
        for start in range(0, runs.shape[0], _CHUNK):
            chunk = runs[start : start + _CHUNK]
            cross = np.exp(-_exponent(chunk, self.runs, self.theta, self.kinds, self.positions))
            means[start : start + _CHUNK] = self.mean + cross @ self._weights
            solved = solve_triangular(lower, cross.T, lower=True, check_finite=False)
            variance = self.variance * (1.0 - np.sum(solved**2, axis=0))
            sds[start : start + _CHUNK] = np.sqrt(np.maximum(variance, 0.0))
        if self._exact:
            for index, row in enumerate(runs):
                value = self._exact.get(tuple(int(x) for x in row))
                if value is not None:
                    means[index] = value
                    sds[index] = 0.0
        return means, sds

    def with_observation(self, setting: Setting, value: float) -> "GpModel":
        """The same hyperparameters conditioned on one more observation."""
        return replace(
            self,
            runs=np.vstack([self.runs, np.asarray(setting, dtype=np.int64)]),
            responses=np.append(self.responses, float(value)),
            starts=(),
        )

    def to_frame(self) -> pd.DataFrame:
        """One row ``theta_1..theta_p,sigma2,nugget,loglik``."""
        row: Dict[str, float] = {f"theta_{i + 1}": value for i, value in enumerate(self.theta)}
        row.update(sigma2=self.variance, nugget=self.nugget, loglik=self.loglik)
        return pd.DataFrame([row])


def covariance(left: Setting, right: Setting, model: GpModel) -> float:
    """Prior covariance of two settings under ``model``."""
    return model.covariance(left, right)


def posterior(model: GpModel, setting: Setting) -> Posterior:
    """Posterior mean and standard deviation at one setting.

    Raises:
        FactorizationError: If the training covariance could not be factorized.
    """
    means, sds = model.posterior_many([setting])
    return Posterior(float(means[0]), float(sds[0]))


def condition(
    obs: ObservationSet,
    kinds: KindsLike,
    mean: float,
    variance: float,
    theta: Sequence[float],
    nugget: float,
    positions: Optional[Sequence[Sequence[float]]] = None,
) -> GpModel:
    """Builds a model from given hyperparameters, ``nugget`` in absolute variance units."""
    return GpModel(
        levels=_levels(obs),
        kinds=_kinds(kinds, obs.design.n_factors),
        mean=float(mean),
        variance=float(variance),
        theta=tuple(theta),
        nugget=float(nugget),
        runs=obs.runs,
        responses=obs.responses,
        positions=_coordinates(_levels(obs), positions),
    )


def fit_gp(
    obs: ObservationSet,
    kinds: KindsLike,
    seed: int = 0,
    config: Optional[GpConfig] = None,
    positions: Optional[Sequence[Sequence[float]]] = None,
) -> GpModel:
    """Maximum likelihood fit of length scales and nugget.

    Responses are standardized internally; the first start sits at ``theta = 0.1`` with a
    small nugget, the others are drawn uniformly in log space. The best of all starts and
    their local optima is kept.

    Args:
        obs (:class:`atmkit.factor_space.ObservationSet`): At least 3 observations.
        kinds (Sequence[:class:`atmkit.factor_space.FactorKind`]): One kind per factor.
        seed (:obj:`int`, optional): Seed of the multistart draws.
        config (:class:`GpConfig`, optional): Search settings.
        positions (Sequence[Sequence[:obj:`float`]], optional): Ordinal positions per level
            and factor. Defaults to the level indices.

    Returns:
        :class:`GpModel`: Flagged :attr:`GpModel.constant` for zero-variance data.
    """
    config = config or GpConfig()
    kinds = _kinds(kinds, obs.design.n_factors)
    coordinates = _coordinates(_levels(obs), positions)
    if obs.n < 3:
        raise ValueError(f"Fitting a process needs at least 3 observations, got {obs.n}")
    y = obs.responses
    p = obs.design.n_factors
    center = float(y.mean())
    scale = float(y.std())
    if scale <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        logger.debug("Constant response %.6g, using the variance floor", center)
        return GpModel(
            levels=_levels(obs),
            kinds=kinds,
            mean=center,
            variance=VARIANCE_FLOOR,
            theta=(1.0,) * p,
            nugget=0.0,
            runs=obs.runs,
            responses=y,
            positions=coordinates,
            constant=True,
        )
    standardized = (y - center) / scale

    fixed = config.nugget
    lower = [math.log(config.theta_bounds[0])] * p
    upper = [math.log(config.theta_bounds[1])] * p
    if fixed is None:
        lower.append(math.log(config.nugget_bounds[0]))
        upper.append(math.log(config.nugget_bounds[1]))

    def decode(params: np.ndarray) -> Tuple[np.ndarray, float]:
        ratio = fixed if fixed is not None else float(np.exp(params[p]))
        return np.exp(params[:p]), ratio

    def negative(params: np.ndarray) -> float:
        theta, ratio = decode(params)
        try:
            return -_profile(obs.runs, standardized, kinds, coordinates, theta, ratio)[0]
        except FactorizationError:
            return _PENALTY

    rng = np.random.default_rng(seed)
    starts = rng.uniform(lower, upper, size=(config.n_starts, len(lower)))
    starts[0, :p] = math.log(0.1)
    if fixed is None:
        starts[0, p] = float(np.clip(math.log(1e-6), lower[p], upper[p]))
    bounds = Bounds(lower, upper)

    offset = obs.n * math.log(scale)
    trace = []
    best_value, best_params = np.inf, starts[0]
    for start in starts:
        initial = negative(start)
        result = minimize(
            negative,
            start,
            method="Nelder-Mead",
            bounds=bounds,
            options={"maxiter": config.max_iter, "xatol": 1e-4, "fatol": 1e-8},
        )
        trace.append((-initial - offset, -float(result.fun) - offset))
        for value, params in ((initial, start), (float(result.fun), result.x)):
            if value < best_value:
                best_value, best_params = value, np.asarray(params, dtype=float)

    theta, ratio = decode(best_params)
    _, mean, variance = _profile(obs.runs, standardized, kinds, coordinates, theta, ratio)
    variance *= scale**2
    logger.debug(
        "Process fit over %d starts: theta %s, relative nugget %.3g, log-likelihood %.6g",
        config.n_starts,
        np.array2string(theta, precision=3),
        ratio,
        -best_value - offset,
    )
    return GpModel(
        levels=_levels(obs),
        kinds=kinds,
        mean=center + scale * mean,
        variance=variance,
        theta=tuple(float(value) for value in theta),
        nugget=ratio * variance,
        runs=obs.runs,
        responses=y,
        positions=coordinates,
        starts=tuple(trace),
    )
