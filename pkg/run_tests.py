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
"""Helper script to run the test suites of the atmkit subpackages.

Subpackages import each other, so every suite is run with the requirements of all the
subpackages it reaches, and a change to one subpackage also reruns the suites of the
subpackages built on top of it.
"""
import os
import re
import subprocess  # nosec
import sys
from argparse import ArgumentParser
from functools import lru_cache
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Set

from pygit2 import Repository

root_path = Path(__file__).parent.resolve()
package_path = root_path / "atmkit"
test_path = root_path / "tests"

subpackage_names = sorted(
    path.name for path in package_path.iterdir() if path.is_dir() and path.name != "__pycache__"
)

_IMPORT = re.compile(r"^\s*(?:from|import)\s+atmkit\.(\w+)", re.MULTILINE)


def _imported_subpackages(paths: Iterable[Path]) -> Set[str]:
    found = set()
    for path in paths:
        found.update(_IMPORT.findall(path.read_text(encoding="utf-8")))
    return found & set(subpackage_names)


@lru_cache(maxsize=None)
def reachable(name: str) -> FrozenSet[str]:
    """The subpackage itself and every subpackage its sources import, transitively."""
    seen = {name}
    pending = [name]
    while pending:
        current = pending.pop()
        for other in _imported_subpackages((package_path / current).glob("*.py")):
            if other not in seen:
                seen.add(other)
                pending.append(other)
    return frozenset(seen)


def suite_subpackages(name: str) -> FrozenSet[str]:
    """Everything the test suite of ``name`` needs installed, shared fixtures included."""
    direct = _imported_subpackages([test_path / f"test_{name}.py", test_path / "conftest.py"])
    return frozenset().union(reachable(name), *(reachable(other) for other in direct))


def dependents(changed: Iterable[str]) -> List[str]:
    """The changed subpackages plus all subpackages whose suites reach one of them."""
    changed = set(changed)
    return [name for name in subpackage_names if suite_subpackages(name) & changed]


def get_changed_subpackage_names() -> List[str]:
    """Subpackages touched by the diff against the main branch, with their dependents"""
    repo = Repository(root_path)
    main_branch = repo.lookup_branch("main")
    if main_branch is None:
        raise RuntimeError("Can't find `main` branch to compare to.")

    changed = set()
    for patch in repo.diff(a=main_branch):
        for filepath in (patch.delta.old_file.path, patch.delta.new_file.path):
            parts = Path(filepath).parts
            if len(parts) > 1 and parts[0] == "atmkit" and parts[1] in subpackage_names:
                changed.add(parts[1])
            elif len(parts) == 2 and parts[0] == "tests":
                if parts[1] == "conftest.py":
                    return list(subpackage_names)
                match = re.fullmatch(r"test_(\w+)\.py", parts[1])
                if match and match.group(1) in subpackage_names:
                    changed.add(match.group(1))
    return dependents(changed)


def run_tests(changed: bool, names: List[str], benchmark: bool) -> int:
    """Install the requirements each suite reaches and run the suites one by one"""
    if changed:
        names = get_changed_subpackage_names()
    elif not names:
        names = subpackage_names

    env: Dict[str, str] = dict(os.environ)
    if benchmark:
        env["TEST_BENCHMARK"] = "true"

    exit_code = 0
    for name in names:
        requirements = [
            argument
            for other in sorted(suite_subpackages(name))
            for argument in ("-r", str(package_path / other / "requirements.txt"))
        ]
        try:
            subprocess.check_call(  # nosec
                [sys.executable, "-m", "pip", "install", *requirements]
            )
            subprocess.check_call(  # nosec
                [
                    "pytest",
                    "-v",
                    str(test_path / f"test_{name}.py"),
                    f"--junitxml=./.test-reports/test_{name}.xml",
                ],
                env=env,
            )
        except subprocess.CalledProcessError as exc:
            exit_code = exc.returncode

    return exit_code


if __name__ == "__main__":
    parser = ArgumentParser(
        description=(
            "Helper script to run the test suites of atmkit. If neither --changed nor --names "
            "is given, all test suites are run."
        )
    )
    group = parser.add_mutually_exclusive_group()
    group.add_argument(
        "-c",
        "--changed",
        dest="changed",
        action="store_true",
        default=False,
        help=(
            "Only run the suites of subpackages that differ from the main branch and of the "
            "subpackages that import them."
        ),
    )
    group.add_argument(
        "-n",
        "--names",
        dest="names",
        default=[],
        nargs="*",
        help="Names of the subpackages to test.",
        choices=subpackage_names,
    )
    parser.add_argument(
        "-b",
        "--benchmark",
        dest="benchmark",
        action="store_true",
        default=False,
        help="Also run the replication studies, which take several minutes.",
    )

    args = parser.parse_args()
    sys.exit(run_tests(changed=args.changed, names=args.names, benchmark=args.benchmark))
