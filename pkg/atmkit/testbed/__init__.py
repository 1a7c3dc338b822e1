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
"""This module contains benchmark objectives, the brute-force oracle and the MC checker."""

from .functions import (
    BUILTINS,
    ContinuousObjective,
    IncompatibleDimensionError,
    builtin,
    camel6,
    detpep10,
    detpep10e,
    friedman,
    shubert,
)
from .objectives import (
    DiscretizedObjective,
    McReport,
    McWitness,
    OracleResult,
    ProbeScheme,
    add_noise,
    brute_force,
    check_mc,
    discretize,
    full_table,
    mid_levels,
    probe_offsets,
    random_additive,
    robust_wrap,
    tabulated,
)

__all__ = [
    "BUILTINS",
    "ContinuousObjective",
    "DiscretizedObjective",
    "IncompatibleDimensionError",
    "McReport",
    "McWitness",
    "OracleResult",
    "ProbeScheme",
    "add_noise",
    "brute_force",
    "builtin",
    "camel6",
    "check_mc",
    "detpep10",
    "detpep10e",
    "discretize",
    "friedman",
    "full_table",
    "mid_levels",
    "probe_offsets",
    "random_additive",
    "robust_wrap",
    "shubert",
    "tabulated",
]
