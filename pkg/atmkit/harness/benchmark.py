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
"""This module contains the seeded benchmark harness.

An experiment runs every method on ``replications`` fresh copies of a discretized test
function. Replication ``r`` uses seed ``base_seed + r`` for every method, so all methods of
one replication start from the same initial array. Predicted settings are always scored
without noise.
"""
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

import atmkit
from atmkit.alpha_tuner import DEFAULT_COMMON_GRID, TuneConfig
from atmkit.factor_space import FactorKind
from atmkit.gp_ei import run_ei, sel_stage_sizes
from atmkit.sel_engine import (
    AugmentationScheme,
    PredictMethod,
    SelConfig,
    SelMethod,
    SelState,
    absorb,
    predict,
    run_sel,
    suggest_batch,
)
from atmkit.testbed import (
    DiscretizedObjective,
    IncompatibleDimensionError,
    builtin,
    discretize,
)

logger = logging.getLogger(__name__)

RAW_COLUMNS = ["method", "stage", "rep", "n", "pred_f", "pred_setting", "alpha_vec", "wall_ms"]
SUMMARY_COLUMNS = ["method", "stage", "n", "mean_f", "median_f", "count", "failures"]
SINGLE_STAGE_METHODS = ("am", "pw", "atm-fixed")
SEL_METHODS = ("sel.mean", "sel.min", "sel.atm")
EI_METHODS = ("ei.ord", "ei.nom", "ei.mix")
_FIXED_PREFIX = "atm-fixed-"
_VERSIONED = ("numpy", "scipy", "pandas", "scikit-learn")


class SpecError(ValueError):
    """Raised for an invalid experiment spec.

    Attributes:
        field (:obj:`str`): The offending key.
    """

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _expand_methods(methods: Sequence[str], alpha_grid: Sequence[float]) -> Tuple[str, ...]:
    expanded: List[str] = []
    for method in methods:
        method = method.strip().lower()
        if method == "atm-fixed":
            expanded.extend(f"{_FIXED_PREFIX}{alpha:g}" for alpha in alpha_grid)
        elif method.startswith(_FIXED_PREFIX):
            try:
                alpha = float(method[len(_FIXED_PREFIX) :])
            except ValueError as exc:
                raise SpecError("methods", f"bad percentage in {method!r}") from exc
            if not 0 <= alpha <= 1:
                raise SpecError("methods", f"percentage of {method!r} is outside [0, 1]")
            expanded.append(f"{_FIXED_PREFIX}{alpha:g}")
        elif method in ("am", "pw") + SEL_METHODS + EI_METHODS:
            expanded.append(method)
        else:
            raise SpecError("methods", f"unknown method {method!r}")
    if len(set(expanded)) != len(expanded):
        raise SpecError("methods", "methods must not repeat")
    return tuple(expanded)


def _as_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _as_list(value: Any) -> List[str]:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return [str(item) for item in value]


@dataclass(frozen=True)
class ExperimentSpec:
    """One benchmark experiment.

    Args:
        objective (:obj:`str`): Builtin test function name.
        methods (Sequence[:obj:`str`]): Any of ``am``, ``pw``, ``atm-fixed`` (one method per
            entry of ``alpha_grid``), ``atm-fixed-<alpha>``, ``sel.mean``, ``sel.min``,
            ``sel.atm``, ``ei.ord``, ``ei.nom`` and ``ei.mix``.
        p (:obj:`int`, optional): Dimension. Defaults to the usual one of the function.
        levels (:obj:`int`, optional): Levels per factor. Defaults to 4.
        t_elim (:obj:`int`, optional): SEL eliminations, which also fixes the EI stages.
        replications (:obj:`int`, optional): Defaults to 30.
        noise_sd (:obj:`float`, optional): Observation noise. Defaults to 0.
        augmentation (:class:`atmkit.sel_engine.AugmentationScheme`, optional): Stage
            multipliers.
        base_seed (:obj:`int`, optional): Replication ``r`` uses ``base_seed + r``.
        output (:obj:`str`, optional): Output directory.
        alpha_grid (Sequence[:obj:`float`], optional): Percentages swept by ``atm-fixed``.
        workers (:obj:`int`, optional): Processes running replications.
        timing (:obj:`bool`, optional): Whether wall times are recorded. With
            :obj:`False` every ``wall_ms`` is 0 and reruns are byte-identical.
        candidate_count (:obj:`int`, optional): Percentage vectors scored by the tuner.
        exclude_dead_runs (:obj:`bool`, optional): SEL dead-run toggle.
    """

    objective: str
    methods: Tuple[str, ...]
    p: Optional[int] = None
    levels: int = 4
    t_elim: int = 2
    replications: int = 30
    noise_sd: float = 0.0
    augmentation: AugmentationScheme = AugmentationScheme.ALL_X1
    base_seed: int = 0
    output: Optional[str] = None
    alpha_grid: Tuple[float, ...] = DEFAULT_COMMON_GRID
    workers: int = 1
    timing: bool = True
    candidate_count: int = 200
    exclude_dead_runs: bool = True
    expanded_methods: Tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        try:
            function = builtin(self.objective, self.p)
        except IncompatibleDimensionError as exc:
            raise SpecError("p", str(exc)) from exc
        except ValueError as exc:
            raise SpecError("objective", str(exc)) from exc
        object.__setattr__(self, "p", function.p)
        if isinstance(self.methods, str):
            object.__setattr__(self, "methods", tuple(_as_list(self.methods)))
        if not self.methods:
            raise SpecError("methods", "at least one method is needed")
        alpha_grid = tuple(float(alpha) for alpha in self.alpha_grid)
        if not alpha_grid or any(not 0 <= alpha <= 1 for alpha in alpha_grid):
            raise SpecError("alpha_grid", "percentages must lie in [0, 1]")
        object.__setattr__(self, "alpha_grid", alpha_grid)
        object.__setattr__(
            self, "expanded_methods", _expand_methods(self.methods, alpha_grid)
        )
        for name, low in (("levels", 2), ("t_elim", 0), ("replications", 1), ("workers", 1)):
            if getattr(self, name) < low:
                raise SpecError(name, f"must be at least {low}")
        if self.t_elim > self.levels - 1:
            raise SpecError("t_elim", "cannot eliminate more levels than a factor has")
        if self.noise_sd < 0:
            raise SpecError("noise_sd", "must be nonnegative")
        if self.candidate_count < 2:
            raise SpecError("candidate_count", "must be at least 2")
        try:
            object.__setattr__(self, "augmentation", AugmentationScheme(self.augmentation))
        except ValueError as exc:
            raise SpecError("augmentation", str(exc)) from exc

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentSpec":
        """Builds a spec from string or typed values.

        Raises:
            SpecError: For unknown keys and malformed values.
        """
        converters = {
            "objective": str,
            "methods": lambda value: tuple(_as_list(value)),
            "p": int,
            "levels": int,
            "t_elim": int,
            "replications": int,
            "noise_sd": float,
            "augmentation": str,
            "base_seed": int,
            "output": str,
            "alpha_grid": lambda value: tuple(float(item) for item in _as_list(value)),
            "workers": int,
            "timing": _as_bool,
            "candidate_count": int,
            "exclude_dead_runs": _as_bool,
        }
        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            if key not in converters:
                raise SpecError(key, "unknown key")
            if value is None:
                continue
            try:
                kwargs[key] = converters[key](value)
            except (TypeError, ValueError) as exc:
                raise SpecError(key, f"malformed value {value!r}") from exc
        for key in ("objective", "methods"):
            if key not in kwargs:
                raise SpecError(key, "missing")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentSpec":
        """Reads a flat ``key = value`` file; ``#`` starts a comment."""
        data: Dict[str, str] = {}
        text = Path(path).read_text(encoding="utf-8")
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, separator, value = line.partition("=")
            key = key.strip()
            if not separator or not key:
                raise SpecError(key or f"line {number}", f"expected key = value on line {number}")
            if key in data:
                raise SpecError(key, "given twice")
            data[key] = value.strip()
        return cls.from_mapping(data)

    def to_mapping(self) -> Dict[str, Any]:
        """Canonical JSON compatible form, the input of the spec hash."""
        return {
            "objective": self.objective,
            "methods": list(self.methods),
            "p": self.p,
            "levels": self.levels,
            "t_elim": self.t_elim,
            "replications": self.replications,
            "noise_sd": self.noise_sd,
            "augmentation": self.augmentation.value,
            "base_seed": self.base_seed,
            "output": self.output,
            "alpha_grid": list(self.alpha_grid),
            "workers": self.workers,
            "timing": self.timing,
            "candidate_count": self.candidate_count,
            "exclude_dead_runs": self.exclude_dead_runs,
        }

    def digest(self) -> str:
        """sha256 of the canonical spec, leaving out where results go and how fast."""
        mapping = self.to_mapping()
        for key in ("output", "workers"):
            mapping.pop(key)
        text = json.dumps(mapping, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def seed(self, rep: int) -> int:
        """Seed of replication ``rep``."""
        return self.base_seed + rep

    def make_objective(self, rep: int) -> DiscretizedObjective:
        """A fresh objective for one method of one replication."""
        return discretize(
            builtin(self.objective, self.p),
            self.levels,
            noise_sd=self.noise_sd,
            seed=self.seed(rep),
        )

    def sel_config(self, rep: int, method: SelMethod = SelMethod.ATM) -> SelConfig:
        """SEL settings of replication ``rep``."""
        return SelConfig(
            method=method,
            tune=TuneConfig(candidate_count=self.candidate_count),
            exclude_dead_runs=self.exclude_dead_runs,
            augmentation=self.augmentation,
            seed=self.seed(rep),
        )


@dataclass(frozen=True)
class MethodTrace:
    """Stage results of one method in one replication."""

    stages: Tuple[Tuple[int, int, Tuple[int, ...], Optional[Tuple[float, ...]]], ...]
    eval_count: int


def _single_stage(
    spec: ExperimentSpec, rep: int, method: str, objective: DiscretizedObjective
) -> MethodTrace:
    config = spec.sel_config(rep)
    state, design = suggest_batch(SelState.start(objective.space), config)
    state = absorb(state, objective.evaluate_many(design.runs))
    if method == "am":
        prediction = predict(state, PredictMethod.MEAN, config)
    elif method == "pw":
        prediction = predict(state, PredictMethod.PW, config)
    else:
        alpha = float(method[len(_FIXED_PREFIX) :])
        alphas = (alpha,) * objective.space.p
        prediction = predict(state, PredictMethod.ATM, config, alphas)
    alphas = None if prediction.alphas is None else prediction.alphas.alphas
    return MethodTrace(((0, state.n, prediction.setting, alphas),), objective.eval_count)


def _sel(
    spec: ExperimentSpec, rep: int, method: str, objective: DiscretizedObjective
) -> MethodTrace:
    config = spec.sel_config(rep, SelMethod(method.split(".", 1)[1]))
    run = run_sel(objective, config, spec.t_elim)
    stages = tuple(
        (record.stage, record.n, record.prediction, record.alphas) for record in run.records
    )
    return MethodTrace(stages, objective.eval_count)


def _ei(
    spec: ExperimentSpec, rep: int, method: str, objective: DiscretizedObjective
) -> MethodTrace:
    space = objective.space
    if method == "ei.ord":
        kinds: Sequence[FactorKind] = (FactorKind.ORDINAL,) * space.p
    elif method == "ei.nom":
        kinds = (FactorKind.NOMINAL,) * space.p
    else:
        kinds = space.kinds
    config = spec.sel_config(rep)
    sizes = sel_stage_sizes(space.levels, spec.t_elim, config)
    run = run_ei(objective, kinds, sizes, seed=spec.seed(rep), sel_config=config)
    stages = tuple((record.stage, record.n, record.prediction, None) for record in run.records)
    return MethodTrace(stages, objective.eval_count)


def run_method(spec: ExperimentSpec, rep: int, method: str) -> MethodTrace:
    """Runs one method of one replication on a fresh objective.

    Raises:
        RuntimeError: If the reported budget differs from the evaluation count.
    """
    objective = spec.make_objective(rep)
    if method in SEL_METHODS:
        trace = _sel(spec, rep, method, objective)
    elif method in EI_METHODS:
        trace = _ei(spec, rep, method, objective)
    else:
        trace = _single_stage(spec, rep, method, objective)
    if trace.stages[-1][1] != trace.eval_count:
        raise RuntimeError(
            f"{method} reported {trace.stages[-1][1]} runs but evaluated {trace.eval_count}"
        )
    return trace


def _format(values: Optional[Sequence[Any]]) -> str:
    if values is None:
        return ""
    return ";".join(f"{value:g}" if isinstance(value, float) else str(value) for value in values)


def run_replication(
    spec: ExperimentSpec, rep: int
) -> Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]:
    """Raw rows and failures of one replication, methods in spec order."""
    rows: List[Dict[str, Any]] = []
    failures: List[Dict[str, Any]] = []
    for method in spec.expanded_methods:
        started = time.perf_counter()
        try:
            trace = run_method(spec, rep, method)
        except Exception as exc:  # pylint: disable=broad-except
            logger.warning("%s failed in replication %d: %s", method, rep, exc)
            failures.append(
                {"method": method, "rep": rep, "kind": type(exc).__name__, "message": str(exc)}
            )
            continue
        wall_ms = (time.perf_counter() - started) * 1000 if spec.timing else 0.0
        scorer = spec.make_objective(rep)
        for stage, n, setting, alphas in trace.stages:
            rows.append(
                {
                    "method": method,
                    "stage": stage,
                    "rep": rep,
                    "n": n,
                    "pred_f": scorer.noiseless(setting),
                    "pred_setting": _format(setting),
                    "alpha_vec": _format(alphas),
                    "wall_ms": round(wall_ms, 3),
                }
            )
    logger.info("Replication %d of %s done", rep, spec.objective)
    return rows, failures


def summarize(
    raw: pd.DataFrame, failures: Optional[Sequence[Mapping[str, Any]]] = None
) -> pd.DataFrame:
    """Mean and median noiseless value per method and stage.

    ``failures`` counts the failed replications of each method and is repeated on every
    stage row of that method.
    """
    counts: Dict[str, int] = {}
    for failure in failures or ():
        counts[failure["method"]] = counts.get(failure["method"], 0) + 1
    if raw.empty:
        empty = {"stage": 0, "n": 0, "mean_f": np.nan, "median_f": np.nan, "count": 0}
        return pd.DataFrame(
            [dict(empty, method=method, failures=count) for method, count in counts.items()],
            columns=SUMMARY_COLUMNS,
        )
    summary = (
        raw.groupby(["method", "stage"], sort=False)
        .agg(
            n=("n", "max"),
            mean_f=("pred_f", "mean"),
            median_f=("pred_f", "median"),
            count=("pred_f", "size"),
        )
        .reset_index()
    )
    summary["failures"] = summary["method"].map(counts).fillna(0).astype(int)
    return summary[SUMMARY_COLUMNS]


def _versions() -> Dict[str, str]:
    versions = {"atmkit": atmkit.__version__}
    for package in _VERSIONED:
        try:
            versions[package] = version(package)
        except PackageNotFoundError:
            versions[package] = "unknown"
    return versions


@dataclass(frozen=True)
class ExperimentResult:
    """Everything an experiment produced."""

    raw: pd.DataFrame
    summary: pd.DataFrame
    failures: Tuple[Dict[str, Any], ...]
    manifest: Dict[str, Any]

    def write(self, directory: Union[str, Path]) -> Path:
        """Writes ``raw.csv``, ``summary.csv`` and ``manifest.json`` into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.raw.to_csv(directory / "raw.csv", index=False)
        self.summary.to_csv(directory / "summary.csv", index=False)
        with open(directory / "manifest.json", "w", encoding="utf-8") as handle:
            json.dump(self.manifest, handle, indent=2, sort_keys=True)
            handle.write("\n")
        return directory


def run_experiment(
    spec: ExperimentSpec, output: Union[str, Path, None] = None
) -> ExperimentResult:
    """Runs every method for every replication and writes the results.

    A failing method is logged, counted and skipped; the other methods and replications
    go on. Results do not depend on ``spec.workers``.

    Args:
        spec (:class:`ExperimentSpec`): The experiment.
        output (:obj:`str` | :obj:`pathlib.Path`, optional): Output directory. Defaults to
            ``spec.output``; nothing is written if both are unset.
    """
    logger.info(
        "Running %s (p=%d, %d levels) with %s over %d replications",
        spec.objective,
        spec.p,
        spec.levels,
        ", ".join(spec.expanded_methods),
        spec.replications,
    )
    reps = range(spec.replications)
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as executor:
            outcomes = list(executor.map(run_replication, [spec] * len(reps), reps))
    else:
        outcomes = [run_replication(spec, rep) for rep in reps]

    order = {method: index for index, method in enumerate(spec.expanded_methods)}
    rows = [row for rep_rows, _ in outcomes for row in rep_rows]
    rows.sort(key=lambda row: (order[row["method"]], row["rep"], row["stage"]))
    failures = tuple(failure for _, rep_failures in outcomes for failure in rep_failures)
    raw = pd.DataFrame(rows, columns=RAW_COLUMNS)
    summary = summarize(raw, failures)
    manifest = {
        "spec": spec.to_mapping(),
        "spec_sha256": spec.digest(),
        "methods": list(spec.expanded_methods),
        "seeds": [spec.seed(rep) for rep in reps],
        "versions": _versions(),
        "failures": list(failures),
    }
    if failures:
        logger.warning("%d method runs failed", len(failures))
    result = ExperimentResult(raw, summary, failures, manifest)
    target = output if output is not None else spec.output
    if target is not None:
        result.write(target)
        logger.info("Results written to %s", target)
    return result
