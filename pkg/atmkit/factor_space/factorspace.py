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
"""This module contains the discrete feasible space, designs and observation sets."""
import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_CAP = 10**7
"""Largest space :func:`enumerate_settings` walks through unless told otherwise."""

Setting = Tuple[int, ...]
"""One level index per factor, 1-based."""


class CapacityError(ValueError):
    """Raised when a space is too large to be enumerated under the active cap."""


class EmptySliceError(LookupError):
    """Raised when no run has the requested factor at the requested level."""


class InvalidSettingError(ValueError):
    """Raised when a setting does not fit the space it is used with."""


class FactorKind(str, Enum):
    """Whether the levels of a factor carry an ordering."""

    ORDINAL = "ordinal"
    NOMINAL = "nominal"


class DesignProvenance(str, Enum):
    """Where the runs of a :class:`Design` came from."""

    CATALOG_OA = "catalog-OA"
    PERMUTED_OA = "permuted-OA"
    BALANCED_RANDOM = "balanced-random"
    EXTERNAL = "external"


@dataclass(frozen=True)
class FactorSpec:
    """A single discrete factor.

    Args:
        num_levels (:obj:`int`): Number of levels, at least 2.
        kind (:class:`FactorKind`, optional): Ordinal or nominal. Defaults to ordinal.
        physical_values (Sequence[:obj:`float`], optional): Physical value for each level.
        units (:obj:`str`, optional): Free-form units of the physical values.
    """

    num_levels: int
    kind: FactorKind = FactorKind.ORDINAL
    physical_values: Optional[Tuple[float, ...]] = None
    units: str = ""

    def __post_init__(self) -> None:
        if isinstance(self.num_levels, bool) or not isinstance(
            self.num_levels, (int, np.integer)
        ):
            raise TypeError("num_levels must be an integer")
        if self.num_levels < 2:
            raise ValueError(f"A factor needs at least 2 levels, got {self.num_levels}")
        object.__setattr__(self, "num_levels", int(self.num_levels))
        object.__setattr__(self, "kind", FactorKind(self.kind))
        if self.physical_values is not None:
            values = tuple(float(value) for value in self.physical_values)
            if len(values) != self.num_levels:
                raise ValueError(
                    f"Expected {self.num_levels} physical values, got {len(values)}"
                )
            object.__setattr__(self, "physical_values", values)


@dataclass(frozen=True)
class FactorSpace:
    """The feasible set ``[N_1] x ... x [N_p]`` together with per-factor metadata."""

    factors: Tuple[FactorSpec, ...]

    def __post_init__(self) -> None:
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("A factor space needs at least one factor")
        for factor in factors:
            if not isinstance(factor, FactorSpec):
                raise TypeError("factors must be FactorSpec instances")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def uniform(
        cls, p: int, num_levels: int, kind: FactorKind = FactorKind.ORDINAL
    ) -> "FactorSpace":
        """Builds a space of ``p`` factors sharing the same number of levels."""
        if p < 1:
            raise ValueError("p must be positive")
        return cls(tuple(FactorSpec(num_levels, kind) for _ in range(p)))

    @classmethod
    def from_levels(
        cls,
        levels: Sequence[int],
        kinds: Optional[Sequence[Union[str, FactorKind]]] = None,
    ) -> "FactorSpace":
        """Builds a space from a level profile and optional per-factor kinds."""
        if kinds is None:
            kinds = [FactorKind.ORDINAL] * len(levels)
        if len(kinds) != len(levels):
            raise ValueError("levels and kinds must have the same length")
        return cls(tuple(FactorSpec(int(n), FactorKind(k)) for n, k in zip(levels, kinds)))

    @property
    def p(self) -> int:
        """:obj:`int`: Number of factors."""
        return len(self.factors)

    @property
    def levels(self) -> Tuple[int, ...]:
        """Tuple[:obj:`int`]: The level profile ``(N_1, ..., N_p)``."""
        return tuple(factor.num_levels for factor in self.factors)

    @property
    def kinds(self) -> Tuple[FactorKind, ...]:
        """Tuple[:class:`FactorKind`]: The kind of every factor."""
        return tuple(factor.kind for factor in self.factors)

    @property
    def cardinality(self) -> int:
        """:obj:`int`: Exact number of settings. Python integers do not overflow."""
        return math.prod(self.levels)

    def is_valid(self, setting: Sequence[int]) -> bool:
        """Tells whether ``setting`` is a member of this space."""
        if len(setting) != self.p:
            return False
        return all(1 <= int(x) <= n for x, n in zip(setting, self.levels))

    def validate_setting(self, setting: Sequence[int]) -> Setting:
        """Returns ``setting`` as a tuple of ints.

        Raises:
            InvalidSettingError: If the length or any level index is out of range.
        """
        if len(setting) != self.p:
            raise InvalidSettingError(
                f"Setting has {len(setting)} entries, the space has {self.p} factors"
            )
        for position, (value, num_levels) in enumerate(zip(setting, self.levels)):
            if not 1 <= int(value) <= num_levels:
                raise InvalidSettingError(
                    f"Level {value} of factor {position} is outside 1..{num_levels}"
                )
        return tuple(int(value) for value in setting)

    def physical(self, setting: Sequence[int]) -> Tuple[float, ...]:
        """Maps level indices to physical values.

        Raises:
            ValueError: If a factor has no physical values attached.
        """
        setting = self.validate_setting(setting)
        values = []
        for position, (value, factor) in enumerate(zip(setting, self.factors)):
            if factor.physical_values is None:
                raise ValueError(f"Factor {position} has no physical values")
            values.append(factor.physical_values[value - 1])
        return tuple(values)

    def to_dict(self) -> Dict[str, Any]:
        """Serializes the space to a JSON compatible dictionary."""
        return {
            "factors": [
                {
                    "num_levels": factor.num_levels,
                    "kind": factor.kind.value,
                    "physical_values": (
                        list(factor.physical_values)
                        if factor.physical_values is not None
                        else None
                    ),
                    "units": factor.units,
                }
                for factor in self.factors
            ]
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FactorSpace":
        """Inverse of :meth:`to_dict`."""
        return cls(
            tuple(
                FactorSpec(
                    int(entry["num_levels"]),
                    FactorKind(entry.get("kind", FactorKind.ORDINAL)),
                    entry.get("physical_values"),
                    entry.get("units", ""),
                )
                for entry in data["factors"]
            )
        )


def enumerate_settings(
    space: FactorSpace, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[Setting]:
    """Yields every setting of ``space`` exactly once, in lexicographic order.

    Args:
        space (:class:`FactorSpace`): The space to walk through.
        cap (:obj:`int`, optional): Largest cardinality accepted.

    Raises:
        CapacityError: If the cardinality of the space exceeds ``cap``.
    """
    if space.cardinality > cap:
        raise CapacityError(
            f"The space has {space.cardinality} settings, more than the cap of {cap}"
        )
    return itertools.product(*(range(1, n + 1) for n in space.levels))


def full_factorial(space: FactorSpace, cap: int = DEFAULT_ENUMERATION_CAP) -> "Design":
    """All settings of ``space`` as a design, in lexicographic order."""
    if space.cardinality > cap:
        raise CapacityError(
            f"The space has {space.cardinality} settings, more than the cap of {cap}"
        )
    grids = np.indices(space.levels).reshape(space.p, -1).T + 1
    logger.debug("Full factorial over %s has %d runs", space.levels, grids.shape[0])
    return Design(grids, DesignProvenance.CATALOG_OA, space.levels)


def _frozen_int_matrix(runs: Any) -> np.ndarray:
    array = np.array(runs, dtype=np.int64, copy=True)
    if array.ndim == 1:
        array = array.reshape(1, -1)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Design:
    """An ``n x p`` matrix of 1-based level indices.

    Args:
        runs: Anything :func:`numpy.array` turns into an integer matrix.
        provenance (:class:`DesignProvenance`, optional): Origin of the runs.
        levels (Sequence[:obj:`int`], optional): Level profile the runs were drawn over.
            Defaults to the column maxima.
    """

    runs: np.ndarray
    provenance: DesignProvenance = DesignProvenance.EXTERNAL
    levels: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        runs = _frozen_int_matrix(self.runs)
        if runs.ndim != 2 or runs.shape[0] < 1 or runs.shape[1] < 1:
            raise ValueError("A design needs at least one run and one factor")
        if runs.min() < 1:
            raise InvalidSettingError("Level indices are 1-based")
        object.__setattr__(self, "runs", runs)
        object.__setattr__(self, "provenance", DesignProvenance(self.provenance))
        if self.levels is None:
            levels = tuple(int(value) for value in runs.max(axis=0))
        else:
            levels = tuple(int(value) for value in self.levels)
            if len(levels) != runs.shape[1]:
                raise ValueError("levels must have one entry per column")
            if np.any(runs.max(axis=0) > np.asarray(levels)):
                raise InvalidSettingError("A run uses a level outside of the level profile")
        object.__setattr__(self, "levels", levels)

    @property
    def n_runs(self) -> int:
        """:obj:`int`: Number of runs ``n``."""
        return int(self.runs.shape[0])

    @property
    def n_factors(self) -> int:
        """:obj:`int`: Number of factors ``p``."""
        return int(self.runs.shape[1])

    def settings(self) -> List[Setting]:
        """The runs as a list of tuples."""
        return [tuple(int(value) for value in row) for row in self.runs]

    def validate_against(self, space: FactorSpace) -> None:
        """Checks that every run is a valid setting of ``space``.

        Raises:
            InvalidSettingError: If the shape or a level does not fit.
        """
        if self.n_factors != space.p:
            raise InvalidSettingError(
                f"Design has {self.n_factors} columns, the space has {space.p} factors"
            )
        if np.any(self.runs > np.asarray(space.levels)):
            raise InvalidSettingError("Design uses levels outside of the space")

    def stack(self, other: "Design") -> "Design":
        """Appends the runs of ``other`` below the runs of this design."""
        if other.n_factors != self.n_factors:
            raise ValueError("Cannot stack designs with a different number of factors")
        provenance = (
            self.provenance
            if self.provenance == other.provenance
            else DesignProvenance.EXTERNAL
        )
        levels = tuple(max(a, b) for a, b in zip(self.levels or (), other.levels or ()))
        return Design(np.vstack([self.runs, other.runs]), provenance, levels)

    def to_frame(self) -> pd.DataFrame:
        """The runs as a data frame with columns ``f1..fp``."""
        return pd.DataFrame(self.runs, columns=[f"f{i + 1}" for i in range(self.n_factors)])

    def to_csv(self, path: Union[str, Path, None] = None) -> Optional[str]:
        """Writes the CSV dialect ``f1,...,fp``. Returns the text if ``path`` is ``None``."""
        return self.to_frame().to_csv(path, index=False)

    @classmethod
    def from_csv(
        cls,
        path: Union[str, Path],
        levels: Optional[Sequence[int]] = None,
        provenance: DesignProvenance = DesignProvenance.EXTERNAL,
    ) -> "Design":
        """Reads a design from the CSV dialect. A ``y`` column, if any, is ignored."""
        frame = _read_frame(path)
        return cls(frame[_factor_columns(frame)].to_numpy(), provenance, levels)

    def to_dict(self) -> Dict[str, Any]:
        """Serializes the design to a JSON compatible dictionary."""
        return {
            "runs": self.runs.tolist(),
            "provenance": self.provenance.value,
            "levels": list(self.levels or ()),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Design":
        """Inverse of :meth:`to_dict`."""
        return cls(data["runs"], DesignProvenance(data["provenance"]), data.get("levels"))


def _read_frame(path: Union[str, Path]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ValueError(f"Could not read CSV file {path}: {exc}") from exc
    return frame


def _factor_columns(frame: pd.DataFrame) -> List[str]:
    columns = [column for column in frame.columns if column != "y"]
    expected = [f"f{i + 1}" for i in range(len(columns))]
    if not columns or columns != expected:
        raise ValueError(f"Expected header f1..fp[,y], got {','.join(map(str, frame.columns))}")
    for column in columns:
        if not pd.api.types.is_integer_dtype(frame[column]):
            raise ValueError(f"Column {column} must hold integer level indices")
    return columns


@dataclass(frozen=True)
class ObservationSet:
    """Responses aligned one-to-one with the runs of a :class:`Design`.

    Args:
        design (:class:`Design`): The evaluated runs.
        responses: One finite value per run.
        noise_sd (:obj:`float`, optional): Known observation noise, if any.
    """

    design: Design
    responses: np.ndarray
    noise_sd: Optional[float] = None

    def __post_init__(self) -> None:
        if not isinstance(self.design, Design):
            raise TypeError("design must be a Design")
        responses = np.array(self.responses, dtype=float, copy=True).reshape(-1)
        if responses.shape[0] != self.design.n_runs:
            raise ValueError(
                f"Got {responses.shape[0]} responses for {self.design.n_runs} runs"
            )
        if not np.all(np.isfinite(responses)):
            raise ValueError("Responses must be finite")
        responses.setflags(write=False)
        object.__setattr__(self, "responses", responses)
        if self.noise_sd is not None:
            if self.noise_sd < 0:
                raise ValueError("noise_sd must be nonnegative")
            object.__setattr__(self, "noise_sd", float(self.noise_sd))

    @property
    def n(self) -> int:
        """:obj:`int`: Number of observations."""
        return self.design.n_runs

    @property
    def runs(self) -> np.ndarray:
        """:class:`numpy.ndarray`: Shortcut for ``design.runs``."""
        return self.design.runs

    @property
    def levels(self) -> Tuple[int, ...]:
        """Tuple[:obj:`int`]: Shortcut for ``design.levels``."""
        return self.design.levels or ()

    def best(self) -> Tuple[Setting, float]:
        """The earliest run with the smallest response and that response."""
        index = int(np.argmin(self.responses))
        return tuple(int(x) for x in self.runs[index]), float(self.responses[index])

    def restrict(
        self, mask: np.ndarray, levels: Optional[Sequence[int]] = None
    ) -> "ObservationSet":
        """Keeps the runs selected by the boolean ``mask``, in their original order."""
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise EmptySliceError("The restriction keeps no runs")
        design = Design(
            self.runs[mask],
            self.design.provenance,
            self.design.levels if levels is None else levels,
        )
        return ObservationSet(design, self.responses[mask], self.noise_sd)

    def extend(self, other: "ObservationSet") -> "ObservationSet":
        """Appends the observations of ``other``."""
        return ObservationSet(
            self.design.stack(other.design),
            np.concatenate([self.responses, other.responses]),
            self.noise_sd if self.noise_sd is not None else other.noise_sd,
        )

    def to_frame(self) -> pd.DataFrame:
        """The observations as a data frame with columns ``f1..fp,y``."""
        frame = self.design.to_frame()
        frame["y"] = self.responses
        return frame

    def to_csv(self, path: Union[str, Path, None] = None) -> Optional[str]:
        """Writes the CSV dialect ``f1,...,fp,y``. Returns the text if ``path`` is ``None``."""
        return self.to_frame().to_csv(path, index=False)

    @classmethod
    def from_csv(
        cls, path: Union[str, Path], levels: Optional[Sequence[int]] = None
    ) -> "ObservationSet":
        """Reads observations from the CSV dialect.

        Raises:
            ValueError: If the header is malformed or the ``y`` column is missing.
        """
        frame = _read_frame(path)
        if "y" not in frame.columns:
            raise ValueError("Observation CSV needs a y column")
        design = Design(
            frame[_factor_columns(frame)].to_numpy(), DesignProvenance.EXTERNAL, levels
        )
        return cls(design, frame["y"].to_numpy(dtype=float))

    def to_dict(self) -> Dict[str, Any]:
        """Serializes the observations to a JSON compatible dictionary."""
        return {
            "design": self.design.to_dict(),
            "responses": self.responses.tolist(),
            "noise_sd": self.noise_sd,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ObservationSet":
        """Inverse of :meth:`to_dict`."""
        return cls(Design.from_dict(data["design"]), data["responses"], data.get("noise_sd"))


def project_marginal(obs: ObservationSet, factor: int, level: int) -> np.ndarray:
    """Responses of all runs whose ``factor`` is at ``level``, in design order.

    Args:
        obs (:class:`ObservationSet`): The data.
        factor (:obj:`int`): 0-based factor position.
        level (:obj:`int`): 1-based level index.

    Raises:
        IndexError: If ``factor`` is not a column of the design.
        EmptySliceError: If no run has ``factor`` at ``level``.
    """
    if not 0 <= factor < obs.design.n_factors:
        raise IndexError(f"Factor {factor} is outside 0..{obs.design.n_factors - 1}")
    values = obs.responses[obs.runs[:, factor] == level]
    if values.size == 0:
        raise EmptySliceError(f"No run has factor {factor} at level {level}")
    return values

