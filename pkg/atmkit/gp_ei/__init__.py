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
"""This module contains Gaussian process surrogates and batch expected improvement."""

from .expectedimprovement import (
    BatchSelection,
    EiRun,
    EiStage,
    candidate_runs,
    expected_improvement,
    expected_improvement_values,
    run_ei,
    select_batch,
    sel_stage_sizes,
)
from .gaussianprocess import (
    VARIANCE_FLOOR,
    FactorizationError,
    GpConfig,
    GpModel,
    Posterior,
    condition,
    correlation_matrix,
    covariance,
    fit_gp,
    log_likelihood,
    posterior,
)

__all__ = [
    "BatchSelection",
    "EiRun",
    "EiStage",
    "FactorizationError",
    "GpConfig",
    "GpModel",
    "Posterior",
    "VARIANCE_FLOOR",
    "candidate_runs",
    "condition",
    "correlation_matrix",
    "covariance",
    "expected_improvement",
    "expected_improvement_values",
    "fit_gp",
    "log_likelihood",
    "posterior",
    "run_ei",
    "sel_stage_sizes",
    "select_batch",
]
