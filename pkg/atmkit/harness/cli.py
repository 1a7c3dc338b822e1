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
"""This module contains the ``atmkit`` command line interface.

Every failure ends in one line ``error: kind=<class> message=<text>`` on stderr. The exit
status is 2 for invalid input or a protocol violation and 1 when ``oa verify`` finds an
array that is not orthogonal.
"""
import argparse
import logging
import re
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import pandas as pd

import atmkit
from atmkit.alpha_tuner import TuneConfig, tune_alpha
from atmkit.factor_space import Design, FactorSpace, ObservationSet
from atmkit.harness.benchmark import ExperimentSpec, run_experiment
from atmkit.oa_designs import OaRequest, randomize, smallest_oa, verify_oa
from atmkit.sel_engine import (
    AugmentationScheme,
    PredictMethod,
    SelConfig,
    SelMethod,
    SelSession,
)
from atmkit.testbed import brute_force, builtin, discretize

logger = logging.getLogger(__name__)

_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
_PROFILE_TERM = re.compile(r"^(\d+)(?:\^(\d+))?$")


class VerificationFailed(Exception):
    """Raised when ``oa verify`` rejects an array."""


def parse_profile(text: str) -> Tuple[int, ...]:
    """Parses level profiles like ``4^9``, ``2^1 3^7`` or ``3,3,4``."""
    levels: List[int] = []
    for term in re.split(r"[\s,]+", text.strip()):
        if not term:
            continue
        match = _PROFILE_TERM.match(term)
        if match is None:
            raise ValueError(f"profile: cannot parse {term!r}")
        count = int(match.group(2)) if match.group(2) else 1
        levels.extend([int(match.group(1))] * count)
    if not levels:
        raise ValueError("profile: empty level profile")
    return tuple(levels)


def parse_alphas(text: Optional[str]) -> Optional[Tuple[float, ...]]:
    """Parses ``0.1;0.5;1`` (commas work too)."""
    if text is None:
        return None
    try:
        return tuple(float(item) for item in re.split(r"[;,]", text) if item.strip())
    except ValueError as exc:
        raise ValueError(f"alphas: cannot parse {text!r}") from exc


def _join(values: Optional[Sequence[object]]) -> str:
    if values is None:
        return "-"
    items = []
    for value in values:
        if value is None:
            items.append("-")
        elif isinstance(value, float):
            items.append(f"{value:g}")
        else:
            items.append(str(value))
    return ";".join(items)


def _emit(text: Optional[str], output: Optional[Path]) -> None:
    if output is None:
        sys.stdout.write(text or "")
    else:
        output.write_text(text or "", encoding="utf-8")


def _bench_run(args: argparse.Namespace) -> int:
    spec = ExperimentSpec.from_file(args.spec)
    if args.workers is not None:
        spec = replace(spec, workers=args.workers)
    result = run_experiment(spec, args.output)
    sys.stdout.write(result.summary.to_csv(index=False))
    return 0


def _oa_gen(args: argparse.Namespace) -> int:
    design = smallest_oa(
        OaRequest(parse_profile(args.profile), strength=args.strength, max_runs=args.max_runs)
    )
    if args.seed is not None:
        design = randomize(design, args.seed)
    logger.info("%d runs (%s)", design.n_runs, design.provenance.value)
    _emit(design.to_csv(), args.output)
    return 0


def _oa_verify(args: argparse.Namespace) -> int:
    levels = parse_profile(args.profile) if args.profile else None
    design = Design.from_csv(args.csv, levels)
    report = verify_oa(design, args.strength, levels)
    sys.stdout.write(f"ok={report.ok} worst_imbalance={report.worst_imbalance:g}\n")
    if not report.ok:
        raise VerificationFailed(
            f"{args.csv} is not an orthogonal array of strength {args.strength}"
        )
    return 0


def _oracle(args: argparse.Namespace) -> int:
    objective = discretize(builtin(args.objective, args.p), args.levels)
    result = brute_force(objective, keep_table=args.table is not None)
    if args.table is not None:
        result.to_csv(args.table)
    sys.stdout.write(f"value={result.value:.6g} setting={_join(result.setting)}\n")
    return 0


def _session_init(args: argparse.Namespace) -> int:
    kinds = args.kinds.split(",") if args.kinds else None
    space = FactorSpace.from_levels(parse_profile(args.profile), kinds)
    config = SelConfig(
        method=SelMethod(args.method),
        tune=TuneConfig(candidate_count=args.candidates),
        exclude_dead_runs=not args.keep_dead_runs,
        augmentation=AugmentationScheme(args.augmentation),
        seed=args.seed,
        max_runs=args.max_runs,
    )
    SelSession.init(args.state, space, config, overwrite=args.overwrite)
    sys.stdout.write(f"levels={_join(space.levels)} method={config.method.value}\n")
    return 0


def _session_suggest(args: argparse.Namespace) -> int:
    design = SelSession.open(args.state).suggest()
    _emit(design.to_csv(), args.output)
    return 0


def _session_observe(args: argparse.Namespace) -> int:
    frame = pd.read_csv(args.responses)
    if "y" not in frame.columns:
        raise ValueError(f"y: column missing in {args.responses}")
    n = SelSession.open(args.state).observe(frame["y"].to_numpy(dtype=float))
    sys.stdout.write(f"n={n}\n")
    return 0


def _session_eliminate(args: argparse.Namespace) -> int:
    record = SelSession.open(args.state).eliminate(parse_alphas(args.alphas))
    sys.stdout.write(
        f"stage={record.stage} n={record.n} alphas={_join(record.alphas)} "
        f"eliminated={_join(record.eliminated)}\n"
    )
    return 0


def _session_predict(args: argparse.Namespace) -> int:
    prediction = SelSession.open(args.state).predict(args.method, parse_alphas(args.alphas))
    alphas = None if prediction.alphas is None else prediction.alphas.alphas
    sys.stdout.write(f"setting={_join(prediction.setting)} alphas={_join(alphas)}\n")
    return 0


def _tune_alpha(args: argparse.Namespace) -> int:
    levels = parse_profile(args.profile) if args.profile else None
    obs = ObservationSet.from_csv(args.observations, levels)
    config = TuneConfig(candidate_count=args.candidates, seed=args.seed, workers=args.workers)
    result = tune_alpha(obs, config, levels)
    if args.diagnostics is not None:
        result.diagnostics.to_csv(args.diagnostics)
    sys.stdout.write(
        f"alphas={_join(result.alphas.alphas)} mean={result.alphas.mean:.4g} "
        f"setting={_join(result.setting)} value={result.value:.6g}\n"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    """The ``atmkit`` argument parser."""
    parser = argparse.ArgumentParser(
        prog="atmkit", description="Robust discrete black-box optimization toolkit"
    )
    parser.add_argument("--version", action="version", version=atmkit.__version__)
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    commands = parser.add_subparsers(dest="command", required=True)

    bench = commands.add_parser("bench", help="benchmark experiments")
    bench_commands = bench.add_subparsers(dest="action", required=True)
    bench_run = bench_commands.add_parser("run", help="run an experiment spec file")
    bench_run.add_argument("spec", type=Path)
    bench_run.add_argument("--output", type=Path, help="output directory")
    bench_run.add_argument("--workers", type=int)
    bench_run.set_defaults(handler=_bench_run)

    oa = commands.add_parser("oa", help="orthogonal arrays")
    oa_commands = oa.add_subparsers(dest="action", required=True)
    oa_gen = oa_commands.add_parser("gen", help="print the smallest array for a profile")
    oa_gen.add_argument("--profile", required=True, help="e.g. 4^9 or '2^1 3^7'")
    oa_gen.add_argument("--strength", type=int, default=2)
    oa_gen.add_argument("--max-runs", type=int)
    oa_gen.add_argument("--seed", type=int, help="randomize levels and rows")
    oa_gen.add_argument("--output", type=Path)
    oa_gen.set_defaults(handler=_oa_gen)
    oa_verify = oa_commands.add_parser("verify", help="check the balance of a CSV array")
    oa_verify.add_argument("csv", type=Path)
    oa_verify.add_argument("--strength", type=int, default=2)
    oa_verify.add_argument("--profile", help="level profile, defaults to column maxima")
    oa_verify.set_defaults(handler=_oa_verify)

    oracle = commands.add_parser("oracle", help="brute-force minimum of a test function")
    oracle.add_argument("objective")
    oracle.add_argument("--p", type=int)
    oracle.add_argument("--levels", type=int, default=4)
    oracle.add_argument("--table", type=Path, help="write every setting and value as CSV")
    oracle.set_defaults(handler=_oracle)

    session = commands.add_parser("session", help="ask/tell SEL against a state file")
    session_commands = session.add_subparsers(dest="action", required=True)
    init = session_commands.add_parser("init", help="create a state file")
    init.add_argument("state", type=Path)
    init.add_argument("--profile", required=True)
    init.add_argument("--kinds", help="comma separated ordinal/nominal per factor")
    init.add_argument("--method", choices=[m.value for m in SelMethod], default="atm")
    init.add_argument("--seed", type=int, default=0)
    init.add_argument(
        "--augmentation", choices=[a.value for a in AugmentationScheme], default="all-x1"
    )
    init.add_argument("--keep-dead-runs", action="store_true")
    init.add_argument("--max-runs", type=int)
    init.add_argument("--candidates", type=int, default=200)
    init.add_argument("--overwrite", action="store_true")
    init.set_defaults(handler=_session_init)
    suggest = session_commands.add_parser("suggest", help="print the next batch as CSV")
    suggest.add_argument("state", type=Path)
    suggest.add_argument("--output", type=Path)
    suggest.set_defaults(handler=_session_suggest)
    observe = session_commands.add_parser("observe", help="absorb a CSV with a y column")
    observe.add_argument("state", type=Path)
    observe.add_argument("responses", type=Path)
    observe.set_defaults(handler=_session_observe)
    eliminate = session_commands.add_parser("eliminate", help="drop one level per factor")
    eliminate.add_argument("state", type=Path)
    eliminate.add_argument("--alphas", help="fixed percentages, e.g. 0.3;0.3;1")
    eliminate.set_defaults(handler=_session_eliminate)
    predict = session_commands.add_parser("predict", help="print the predicted setting")
    predict.add_argument("state", type=Path)
    predict.add_argument("--method", choices=[m.value for m in PredictMethod])
    predict.add_argument("--alphas")
    predict.set_defaults(handler=_session_predict)

    tune = commands.add_parser("tune-alpha", help="tune percentages on observations")
    tune.add_argument("observations", type=Path, help="CSV with f1..fp and y")
    tune.add_argument("--profile", help="level profile, defaults to column maxima")
    tune.add_argument("--seed", type=int, default=0)
    tune.add_argument("--candidates", type=int, default=200)
    tune.add_argument("--workers", type=int, default=1)
    tune.add_argument("--diagnostics", type=Path, help="write every candidate score as CSV")
    tune.set_defaults(handler=_tune_alpha)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Runs the command line and returns the exit status."""
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=_LOG_FORMAT, stream=sys.stderr)
    try:
        return args.handler(args)
    except VerificationFailed as exc:
        sys.stderr.write(f"error: kind={type(exc).__name__} message={exc}\n")
        return 1
    except (ValueError, LookupError, RuntimeError, TypeError, OSError) as exc:
        message = " ".join(str(exc).split())
        sys.stderr.write(f"error: kind={type(exc).__name__} message={message}\n")
        return 2
