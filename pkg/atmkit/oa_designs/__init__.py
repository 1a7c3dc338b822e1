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
"""This module contains orthogonal array construction, randomization and verification."""

from .orthogonalarrays import (
    DEFAULT_MAX_RUNS,
    AugmentScheme,
    CatalogArray,
    OaReport,
    OaRequest,
    SeedLike,
    UnsupportedProfileError,
    augment,
    catalog_arrays,
    design_size,
    line_spread,
    randomize,
    smallest_oa,
    verify_oa,
)

__all__ = [
    "DEFAULT_MAX_RUNS",
    "AugmentScheme",
    "CatalogArray",
    "OaReport",
    "OaRequest",
    "SeedLike",
    "UnsupportedProfileError",
    "augment",
    "catalog_arrays",
    "design_size",
    "line_spread",
    "randomize",
    "smallest_oa",
    "verify_oa",
]
