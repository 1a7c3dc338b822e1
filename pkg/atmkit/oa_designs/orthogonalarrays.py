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
"""This module contains the construction, randomization and verification of orthogonal
arrays used as stagewise designs."""
import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from atmkit.factor_space import Design, DesignProvenance

from .galois import (
    galois_field,
    gf2_multiply,
    gf2_power,
    max_binary_degree,
    paley_hadamard,
    paley_order_supported,
)

logger = logging.getLogger(__name__)

CATALOG_PATH = Path(__file__).parent / "catalog"
MAX_FACTORS = 32
MAX_LEVELS = 9
DEFAULT_MAX_RUNS = 4096
_FIELD_ORDERS = (2, 3, 4, 5, 7, 8, 9)
_TOLERANCE = 1e-9

SeedLike = Union[None, int, Sequence[int], np.random.SeedSequence, np.random.Generator]
"""Anything :func:`numpy.random.default_rng` accepts."""


class UnsupportedProfileError(ValueError):
    """Raised when no array can be produced for a level profile."""


class AugmentScheme(str, Enum):
    """How :func:`augment` enlarges a stage design."""

    DOUBLE_THIS_STAGE = "double-this-stage"
    NONE = "none"


@dataclass(frozen=True)
class OaRequest:
    """What :func:`smallest_oa` should build.

    Factors with a single level are allowed and come back as constant columns, which is
    what late SEL stages need.

    Args:
        level_profile (Sequence[:obj:`int`]): ``N_l`` for every factor.
        strength (:obj:`int`, optional): 1 or 2. Defaults to 2.
        max_runs (:obj:`int`, optional): Largest acceptable run size.
        allow_fallback (:obj:`bool`, optional): Whether a balanced random design may be
            returned when no construction fits. Defaults to :obj:`True`.
    """

    level_profile: Tuple[int, ...]
    strength: int = 2
    max_runs: Optional[int] = None
    allow_fallback: bool = True

    def __post_init__(self) -> None:
        profile = tuple(int(n) for n in self.level_profile)
        if not profile:
            raise ValueError("The level profile must not be empty")
        if len(profile) > MAX_FACTORS:
            raise UnsupportedProfileError(f"At most {MAX_FACTORS} factors are supported")
        if any(n < 1 or n > MAX_LEVELS for n in profile):
            raise UnsupportedProfileError(f"Levels must lie in 1..{MAX_LEVELS}, got {profile}")
        if self.strength < 1:
            raise ValueError("strength must be at least 1")
        if self.strength > 2:
            raise UnsupportedProfileError("Only strength 1 and 2 arrays can be constructed")
        if self.max_runs is not None and self.max_runs < 1:
            raise ValueError("max_runs must be positive")
        object.__setattr__(self, "level_profile", profile)


@dataclass(frozen=True)
class OaReport:
    """Outcome of :func:`verify_oa`."""

    ok: bool
    worst_imbalance: float


@dataclass(frozen=True)
class CatalogArray:
    """An array shipped as a text resource under ``catalog/``."""

    name: str
    design: Design
    strength: int


@dataclass(frozen=True)
class _DifferenceScheme:
    name: str
    rows: np.ndarray
    modulus: int


@dataclass(frozen=True)
class _Candidate:
    """A construction able to produce ``runs`` rows over a pool of columns.

    ``build`` receives column indices into ``pool`` and returns 0-based levels.
    """

    runs: int
    pool: Tuple[int, ...]
    build: Callable[[Sequence[int]], np.ndarray]
    label: str
    priority: int


def _read_resource(path: Path) -> Tuple[Dict[str, str], np.ndarray]:
    headers: Dict[str, str] = {}
    rows: List[List[int]] = []
    with path.open(encoding="UTF-8") as file:
        for line in file:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition(":")
                if sep:
                    headers[key.strip()] = value.strip()
                continue
            rows.append([int(token) for token in line.split()])
    if not rows or len({len(row) for row in rows}) != 1:
        raise ValueError(f"Malformed catalog resource {path.name}")
    return headers, np.array(rows, dtype=np.int64)


@lru_cache(maxsize=None)
def _load_catalog() -> Tuple[Tuple[CatalogArray, ...], Tuple[_DifferenceScheme, ...]]:
    arrays = []
    schemes = []
    for path in sorted(CATALOG_PATH.glob("*.txt")):
        headers, rows = _read_resource(path)
        kind = headers.get("kind", "orthogonal-array")
        name = headers.get("name", path.stem)
        if kind == "difference-scheme":
            schemes.append(_DifferenceScheme(name, rows, int(headers["modulus"])))
        else:
            levels = tuple(int(n) for n in headers["levels"].split())
            design = Design(rows, DesignProvenance.CATALOG_OA, levels)
            arrays.append(CatalogArray(name, design, int(headers.get("strength", 2))))
        logger.debug("Loaded catalog resource %s (%s)", name, kind)
    return tuple(arrays), tuple(schemes)


def catalog_arrays() -> Tuple[CatalogArray, ...]:
    """The arrays shipped as text resources, with their declared strength."""
    return _load_catalog()[0]


def _parity(values: np.ndarray) -> np.ndarray:
    parity = np.zeros_like(values)
    while np.any(values):
        parity ^= values & 1
        values = values >> 1
    return parity


def _projective_points(q: int, k: int) -> Iterator[Tuple[int, ...]]:
    """Nonzero vectors of GF(q)^k whose first nonzero coordinate is 1."""
    for vector in itertools.product(range(q), repeat=k):
        leading = next((value for value in vector if value), 0)
        if leading == 1:
            yield vector


def _rao_hamming(q: int, k: int) -> _Candidate:
    field = galois_field(q)
    runs = q**k
    columns = (runs - 1) // (q - 1)

    def build(selected: Sequence[int]) -> np.ndarray:
        points = list(itertools.islice(_projective_points(q, k), max(selected) + 1))
        rows = np.array(list(itertools.product(range(q), repeat=k)), dtype=np.int64)
        out = np.zeros((runs, len(selected)), dtype=np.int64)
        for position, column in enumerate(selected):
            value = np.zeros(runs, dtype=np.int64)
            for coordinate, coefficient in enumerate(points[column]):
                if coefficient:
                    value = field.add[value, field.mul[coefficient, rows[:, coordinate]]]
            out[:, position] = value
        return out

    return _Candidate(runs, (q,) * columns, build, f"rao-hamming GF({q})^{k}", 1)


@lru_cache(maxsize=None)
def line_spread(k: int) -> Tuple[Tuple[int, int, int], ...]:
    """Pairwise disjoint lines of the binary projective space of dimension ``k - 1``.

    Points are the nonzero ``k``-bit masks; a line ``(a, b, a ^ b)`` is a 2-dimensional
    subspace without its zero vector. Even ``k`` gives a complete spread from the
    cube roots of unity in GF(2**k). Odd ``k`` pairs up the points outside a hyperplane
    through an orthomorphism of GF(2**(k - 2)) and recurses into the hyperplane.
    """
    if k < 2:
        return ()
    if k in (2, 3):
        return ((1, 2, 3),)
    if k % 2 == 0:
        omega = gf2_power(2, (2**k - 1) // 3, k)
        omega_squared = gf2_multiply(omega, omega, k)
        seen = set()
        lines = []
        for point in range(1, 2**k):
            if point in seen:
                continue
            line = (point, gf2_multiply(point, omega, k), gf2_multiply(point, omega_squared, k))
            seen.update(line)
            lines.append(line)
        return tuple(lines)
    degree = k - 2
    middle_bit = 1 << degree
    top_bit = 1 << (degree + 1)
    lines = []
    for value in range(2**degree):
        image = gf2_multiply(2, value, degree)
        first = top_bit | value
        second = top_bit | middle_bit | (value ^ image)
        lines.append((first, second, first ^ second))
    return tuple(lines) + line_spread(degree)


def _grouped_binary(k: int) -> _Candidate:
    """4-level columns from the lines of a spread, 2-level columns from the rest."""
    lines = line_spread(k)
    covered = {point for line in lines for point in line}
    singles = [point for point in range(1, 2**k) if point not in covered]
    runs = 2**k

    def build(selected: Sequence[int]) -> np.ndarray:
        rows = np.arange(runs, dtype=np.int64)
        out = np.zeros((runs, len(selected)), dtype=np.int64)
        for position, column in enumerate(selected):
            if column < len(lines):
                first, second, _ = lines[column]
                out[:, position] = 2 * _parity(rows & first) + _parity(rows & second)
            else:
                out[:, position] = _parity(rows & singles[column - len(lines)])
        return out

    pool = (4,) * len(lines) + (2,) * len(singles)
    return _Candidate(runs, pool, build, f"grouped binary 2^{k}", 2)


def _paley(order: int) -> _Candidate:
    def build(selected: Sequence[int]) -> np.ndarray:
        hadamard = paley_hadamard(order)
        hadamard = hadamard * hadamard[:, [0]]
        return (hadamard[:, [column + 1 for column in selected]] < 0).astype(np.int64)

    return _Candidate(order, (2,) * (order - 1), build, f"plackett-burman {order}", 3)


def _catalog_candidate(array: CatalogArray) -> _Candidate:
    def build(selected: Sequence[int]) -> np.ndarray:
        return np.asarray(array.design.runs[:, list(selected)]) - 1

    return _Candidate(array.design.n_runs, array.design.levels or (), build, array.name, 0)


def _kronecker_sum(scheme: _DifferenceScheme, k: int) -> _Candidate:
    """Adds every row of a difference scheme to every run of a Rao-Hamming array."""
    base = _rao_hamming(scheme.modulus, k) if k > 1 else None
    base_columns = len(base.pool) if base else 1
    width = scheme.rows.shape[1]
    runs = scheme.modulus**k * scheme.rows.shape[0]
    field = galois_field(scheme.modulus)

    def build(selected: Sequence[int]) -> np.ndarray:
        if base is None:
            left = np.arange(scheme.modulus, dtype=np.int64).reshape(-1, 1)
        else:
            left = base.build(range(base_columns))
        out = np.zeros((runs, len(selected)), dtype=np.int64)
        for position, column in enumerate(selected):
            base_column, scheme_column = divmod(column, width)
            out[:, position] = field.add[
                np.repeat(left[:, base_column], scheme.rows.shape[0]),
                np.tile(scheme.rows[:, scheme_column], left.shape[0]),
            ]
        return out

    pool = (scheme.modulus,) * (base_columns * width)
    return _Candidate(runs, pool, build, f"{scheme.name} + OA({scheme.modulus}^{k})", 1)


def _full_factorial(profile: Tuple[int, ...]) -> _Candidate:
    def build(selected: Sequence[int]) -> np.ndarray:
        grid = np.indices(profile).reshape(len(profile), -1).T
        return grid[:, list(selected)]

    return _Candidate(math.prod(profile), profile, build, "full factorial", 5)


def _cyclic(profile: Tuple[int, ...]) -> _Candidate:
    runs = math.lcm(*profile)

    def build(selected: Sequence[int]) -> np.ndarray:
        rows = np.arange(runs, dtype=np.int64)
        return np.stack([rows % profile[column] for column in selected], axis=1)

    return _Candidate(runs, profile, build, "cyclic strength-1", 0)


def _product(
    left: _Candidate,
    left_columns: Sequence[int],
    right: _Candidate,
    right_columns: Sequence[int],
) -> _Candidate:
    pool = tuple(left.pool[c] for c in left_columns) + tuple(right.pool[c] for c in right_columns)

    def build(selected: Sequence[int]) -> np.ndarray:
        first = left.build(left_columns)
        second = right.build(right_columns)
        crossed = np.hstack(
            [np.repeat(first, second.shape[0], axis=0), np.tile(second, (first.shape[0], 1))]
        )
        return crossed[:, list(selected)]

    return _Candidate(
        left.runs * right.runs, pool, build, f"({left.label}) x ({right.label})", 4
    )


def _assign(profile: Sequence[int], pool: Sequence[int]) -> Optional[List[int]]:
    """Maps every factor to a distinct pool column with as many levels or a multiple."""
    used = set()
    assignment: List[int] = [0] * len(profile)
    for factor in sorted(range(len(profile)), key=lambda i: -profile[i]):
        wanted = profile[factor]
        chosen = next(
            (j for j, size in enumerate(pool) if j not in used and size == wanted), None
        )
        if chosen is None:
            options = [
                (size, j) for j, size in enumerate(pool) if j not in used and size % wanted == 0
            ]
            if not options:
                return None
            chosen = min(options)[1]
        used.add(chosen)
        assignment[factor] = chosen
    return assignment


def _base_candidates(max_runs: int) -> List[_Candidate]:
    candidates = [_catalog_candidate(array) for array in catalog_arrays()]
    for q in _FIELD_ORDERS:
        k = 2
        while q**k <= max_runs:
            candidates.append(_rao_hamming(q, k))
            k += 1
    for k in range(4, max_binary_degree() + 1):
        if 2**k <= max_runs:
            candidates.append(_grouped_binary(k))
    for order in range(12, max_runs + 1, 4):
        if paley_order_supported(order):
            candidates.append(_paley(order))
    for scheme in _load_catalog()[1]:
        k = 1
        while scheme.modulus**k * scheme.rows.shape[0] <= max_runs:
            candidates.append(_kronecker_sum(scheme, k))
            k += 1
    return candidates


@lru_cache(maxsize=None)
def _cached_base_candidates(max_runs: int) -> Tuple[_Candidate, ...]:
    return tuple(_base_candidates(max_runs))


@lru_cache(maxsize=1024)
def _best_candidate(
    profile: Tuple[int, ...], strength: int, max_runs: int
) -> Optional[Tuple[_Candidate, Tuple[int, ...]]]:
    """The smallest construction hosting ``profile``, with its column assignment."""
    floor = 1 + sum(n - 1 for n in profile) if strength >= 2 else max(profile)
    candidates = [c for c in _cached_base_candidates(max_runs) if c.runs >= floor]
    candidates.append(_full_factorial(profile))
    if strength == 1:
        candidates.append(_cyclic(profile))
    distinct = sorted(set(profile))
    if len(distinct) > 1:
        for size in range(1, len(distinct) // 2 + 1):
            for group in itertools.combinations(distinct, size):
                left_profile = tuple(n for n in profile if n in group)
                right_profile = tuple(n for n in profile if n not in group)
                left = _best_candidate(left_profile, strength, max_runs)
                right = _best_candidate(right_profile, strength, max_runs)
                if left is not None and right is not None:
                    candidates.append(_product(left[0], left[1], right[0], right[1]))
    candidates.sort(key=lambda candidate: (candidate.runs, candidate.priority))
    for candidate in candidates:
        if candidate.runs > max_runs:
            break
        assignment = _assign(profile, candidate.pool)
        if assignment is not None:
            return candidate, tuple(assignment)
    return None


def _balanced_random(profile: Sequence[int], seed: Sequence[int]) -> np.ndarray:
    floor = 1 + sum(n - 1 for n in profile)
    step = math.lcm(*profile)
    runs = step * math.ceil(floor / step)
    rng = np.random.default_rng(list(seed))
    return np.stack(
        [rng.permutation(np.tile(np.arange(n), runs // n)) for n in profile], axis=1
    )


def _balanced_random_size(profile: Sequence[int]) -> int:
    floor = 1 + sum(n - 1 for n in profile)
    step = math.lcm(*profile)
    return step * math.ceil(floor / step)


def smallest_oa(request: OaRequest) -> Design:
    """The smallest array the construction set offers for ``request``.

    Resolution order: catalog arrays and algebraic constructions (Rao-Hamming over
    GF(q), 4-level grouping of binary fractions, Plackett-Burman, Kronecker sums with
    difference schemes), level collapsing ``s -> N`` for ``N`` dividing ``s``, products of
    two arrays for mixed profiles, the full factorial, and finally a column-balanced
    random design flagged as :attr:`DesignProvenance.BALANCED_RANDOM`.

    The result is deterministic for a given profile.

    Args:
        request (:class:`OaRequest`): The level profile and limits.

    Returns:
        :class:`atmkit.factor_space.Design`: Rows in 1-based level indices.

    Raises:
        UnsupportedProfileError: If nothing fits and the fallback is disabled or too large.
    """
    profile = request.level_profile
    max_runs = request.max_runs or DEFAULT_MAX_RUNS
    active = [index for index, n in enumerate(profile) if n > 1]
    if not active:
        single = np.ones((1, len(profile)), dtype=np.int64)
        return Design(single, DesignProvenance.CATALOG_OA, profile)
    sub_profile = tuple(profile[index] for index in active)
    found = _best_candidate(sub_profile, request.strength, max_runs)
    if found is not None:
        candidate, assignment = found
        columns = candidate.build(assignment)
        sub_runs = columns % np.asarray(sub_profile)
        provenance = DesignProvenance.CATALOG_OA
        logger.debug(
            "Profile %s served by %s with %d runs", profile, candidate.label, candidate.runs
        )
    else:
        size = _balanced_random_size(sub_profile)
        if not request.allow_fallback or size > max_runs:
            raise UnsupportedProfileError(f"No orthogonal array available for profile {profile}")
        logger.warning("No orthogonal array for profile %s, using %d balanced runs", profile, size)
        sub_runs = _balanced_random(sub_profile, sub_profile)
        provenance = DesignProvenance.BALANCED_RANDOM
    runs = np.ones((sub_runs.shape[0], len(profile)), dtype=np.int64)
    runs[:, active] = sub_runs + 1
    return Design(runs, provenance, profile)


def design_size(level_profile: Sequence[int], max_runs: Optional[int] = None) -> int:
    """Run size :func:`smallest_oa` would return, without building the array."""
    request = OaRequest(tuple(level_profile), max_runs=max_runs)
    sub_profile = tuple(n for n in request.level_profile if n > 1)
    if not sub_profile:
        return 1
    found = _best_candidate(sub_profile, request.strength, max_runs or DEFAULT_MAX_RUNS)
    if found is None:
        return _balanced_random_size(sub_profile)
    return found[0].runs


def randomize(design: Design, seed: SeedLike) -> Design:
    """Relabels every column by an independent uniform permutation and shuffles the rows.

    Args:
        design (:class:`atmkit.factor_space.Design`): The array to randomize.
        seed: Anything :func:`numpy.random.default_rng` accepts.
    """
    rng = np.random.default_rng(seed)
    levels = design.levels or ()
    relabelled = np.empty_like(design.runs)
    for column, num_levels in enumerate(levels):
        permutation = rng.permutation(num_levels) + 1
        relabelled[:, column] = permutation[design.runs[:, column] - 1]
    relabelled = relabelled[rng.permutation(design.n_runs)]
    provenance = (
        DesignProvenance.PERMUTED_OA
        if design.provenance == DesignProvenance.CATALOG_OA
        else design.provenance
    )
    return Design(relabelled, provenance, levels)


def verify_oa(
    design: Design, strength: int = 2, levels: Optional[Sequence[int]] = None
) -> OaReport:
    """Checks level balance (strength 1) and level-pair balance (strength 2).

    Args:
        design (:class:`atmkit.factor_space.Design`): The array to check.
        strength (:obj:`int`, optional): 1 or 2. Defaults to 2.
        levels (Sequence[:obj:`int`], optional): Level profile. Defaults to ``design.levels``.

    Returns:
        :class:`OaReport`: ``worst_imbalance`` is the largest deviation of a count from its
        ideal value ``n / N_l`` or ``n / (N_l * N_m)``.
    """
    if strength not in (1, 2):
        raise ValueError("strength must be 1 or 2")
    profile = tuple(levels if levels is not None else design.levels or ())
    runs = design.runs - 1
    n = design.n_runs
    worst = 0.0
    for column, num_levels in enumerate(profile):
        counts = np.bincount(runs[:, column], minlength=num_levels)
        worst = max(worst, float(np.max(np.abs(counts - n / num_levels))))
    if strength == 2:
        for first, second in itertools.combinations(range(len(profile)), 2):
            cells = profile[first] * profile[second]
            codes = runs[:, first] * profile[second] + runs[:, second]
            counts = np.bincount(codes, minlength=cells)
            worst = max(worst, float(np.max(np.abs(counts - n / cells))))
    return OaReport(worst <= _TOLERANCE, 0.0 if worst <= _TOLERANCE else worst)


def augment(
    design: Design,
    scheme: AugmentScheme = AugmentScheme.DOUBLE_THIS_STAGE,
    seed: SeedLike = None,
) -> Design:
    """Enlarges a stage design according to ``scheme``.

    ``double-this-stage`` stacks the design with an independently randomized copy.
    """
    scheme = AugmentScheme(scheme)
    if scheme == AugmentScheme.NONE:
        return design
    copy = randomize(design, seed)
    provenance = (
        DesignProvenance.BALANCED_RANDOM
        if design.provenance == DesignProvenance.BALANCED_RANDOM
        else DesignProvenance.PERMUTED_OA
    )
    return Design(np.vstack([design.runs, copy.runs]), provenance, design.levels)
