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
"""This module contains the continuous test functions used to build discrete benchmarks."""
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np


class IncompatibleDimensionError(ValueError):
    """Raised when a test function does not support the requested dimension."""


@dataclass(frozen=True)
class ContinuousObjective:
    """A vectorized function on a box.

    Args:
        name (:obj:`str`): Short identifier.
        bounds (Sequence[Tuple[:obj:`float`, :obj:`float`]]): ``(lo, hi)`` per coordinate.
        function (Callable): Maps an ``(m, p)`` array of points to ``m`` values.
    """

    name: str
    bounds: Tuple[Tuple[float, float], ...]
    function: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self) -> None:
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        for lo, hi in bounds:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"Invalid bounds ({lo}, {hi})")
        object.__setattr__(self, "bounds", bounds)

    @property
    def p(self) -> int:
        """:obj:`int`: Dimension."""
        return len(self.bounds)

    @property
    def ranges(self) -> np.ndarray:
        """:class:`numpy.ndarray`: ``hi - lo`` per coordinate."""
        return np.array([hi - lo for lo, hi in self.bounds])

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.p:
            raise ValueError(f"Expected {self.p} coordinates, got {points.shape[1]}")
        return np.asarray(self.function(points), dtype=float).reshape(-1)

    def __call__(self, point: Sequence[float]) -> float:
        return float(self.evaluate_many(np.asarray([point], dtype=float))[0])


def friedman(x: np.ndarray) -> np.ndarray:
    return (
        10 * np.sin(np.pi * x[:, 0] * x[:, 1])
        + 20 * (x[:, 2] - 0.5) ** 2
        + 10 * x[:, 3]
        + 5 * x[:, 4]
    )


def detpep10(x: np.ndarray) -> np.ndarray:
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    return (
        4 * (x1 - 2 + 8 * x2 - 8 * x2**2) ** 2
        + (3 - 4 * x2) ** 2
        + 16 * np.sqrt(x3 + 1) * (2 * x3 - 1) ** 2
        + 30 * np.log1p(x3)
    )


def _decay(x: np.ndarray, power: float) -> np.ndarray:
    # exp(-2 / x^power) tends to 0 as x goes to 0
    out = np.zeros_like(x)
    positive = x > 0
    out[positive] = np.exp(-2.0 / x[positive] ** power)
    return out


def detpep10e(x: np.ndarray) -> np.ndarray:
    first, second, third = x[:, 0::3], x[:, 1::3], x[:, 2::3]
    terms = (
        _decay(first, 1.75)
        + _decay(second, 1.5)
        + _decay(third, 1.25)
        + 0.01 * first * second * third
    )
    return 100 * terms.sum(axis=1)


def camel6(x: np.ndarray) -> np.ndarray:
    u, v = x[:, 0::2], x[:, 1::2]
    # this variant has a linear 2.1 term
    return ((4 - 2.1 * u + u**4 / 3) * u**2 + u * v + (-4 + 4 * v**2) * v**2).sum(axis=1)


def shubert(x: np.ndarray) -> np.ndarray:
    p = x.shape[1]
    i = np.arange(1, 6)
    sums = (i * np.cos((i + 1) * x[..., None] + i)).sum(axis=-1)
    return (np.prod(sums, axis=1) + 0.01 * np.prod(x, axis=1)) / 10.0**p


def _check_p(name: str, p: int, valid: bool, rule: str) -> None:
    if not valid:
        raise IncompatibleDimensionError(f"{name} needs {rule}, got p={p}")


def _friedman(p: int) -> ContinuousObjective:
    _check_p("friedman", p, p == 5, "p = 5")
    return ContinuousObjective("friedman", ((0.0, 1.0),) * p, friedman)


def _detpep10(p: int) -> ContinuousObjective:
    _check_p("detpep10", p, p == 3, "p = 3")
    return ContinuousObjective("detpep10", ((0.0, 1.0),) * p, detpep10)


def _detpep10e(p: int) -> ContinuousObjective:
    _check_p("detpep10e", p, p >= 3 and p % 3 == 0, "p divisible by 3")
    return ContinuousObjective("detpep10e", ((0.0, 1.0),) * p, detpep10e)


def _camel6(p: int) -> ContinuousObjective:
    _check_p("camel6", p, p >= 2 and p % 2 == 0, "an even p")
    return ContinuousObjective("camel6", ((-2.0, 2.0), (-1.0, 1.0)) * (p // 2), camel6)


def _shubert(p: int) -> ContinuousObjective:
    _check_p("shubert", p, p >= 1, "p >= 1")
    return ContinuousObjective("shubert", ((-10.0, 10.0),) * p, shubert)


BUILTINS: Dict[str, Tuple[Callable[[int], ContinuousObjective], Optional[int]]] = {
    "friedman": (_friedman, 5),
    "detpep10": (_detpep10, 3),
    "detpep10e": (_detpep10e, 9),
    "camel6": (_camel6, 8),
    "shubert": (_shubert, 10),
}
"""Builtin test functions with their default dimension."""


def builtin(name: str, p: Optional[int] = None) -> ContinuousObjective:
    """One of the builtin test functions.

    Args:
        name (:obj:`str`): ``friedman``, ``detpep10``, ``detpep10e``, ``camel6`` or
            ``shubert``.
        p (:obj:`int`, optional): Dimension. Defaults to the usual one of the function.

    Raises:
        ValueError: If the name is unknown.
        IncompatibleDimensionError: If the function does not exist in dimension ``p``.
    """
    try:
        factory, default = BUILTINS[name.lower()]
    except KeyError as exc:
        raise ValueError(
            f"Unknown objective {name!r}, expected one of {', '.join(sorted(BUILTINS))}"
        ) from exc
    return factory(default if p is None else int(p))
