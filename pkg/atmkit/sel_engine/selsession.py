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
"""This module contains the file-backed ask/tell session around the SEL engine."""
import json
import os
from logging import getLogger
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from atmkit.factor_space import Design, FactorSpace, ObservationSet

from .selengine import (
    Prediction,
    PredictMethod,
    ProtocolError,
    SelConfig,
    SelState,
    StageRecord,
    absorb,
    eliminate,
    predict,
    suggest_batch,
)

STATE_FORMAT = 1
"""Version of the session file layout."""


class SelSession:
    """A SEL session persisted to a JSON state file after every transition.

    Use :meth:`init` to create the file and :meth:`open` to continue from it, so that
    physical experiments can be run between batches.

    Args:
        path (:obj:`str` | :class:`pathlib.Path`): Location of the state file.
        state (:class:`atmkit.sel_engine.SelState`): Current snapshot.
        config (:class:`atmkit.sel_engine.SelConfig`): Settings used for every step.
    """

    def __init__(self, path: Union[str, Path], state: SelState, config: SelConfig):
        self.path = Path(path)
        self.state = state
        self.config = config
        self.logger = getLogger(__name__)

    @classmethod
    def init(
        cls,
        path: Union[str, Path],
        space: FactorSpace,
        config: Optional[SelConfig] = None,
        overwrite: bool = False,
    ) -> "SelSession":
        """Creates a fresh session file.

        Raises:
            ProtocolError: If the file exists and ``overwrite`` is not set.
        """
        path = Path(path)
        if path.exists() and not overwrite:
            raise ProtocolError(f"Session file {path} already exists")
        session = cls(path, SelState.start(space), config or SelConfig())
        session.save()
        return session

    @classmethod
    def open(cls, path: Union[str, Path]) -> "SelSession":
        """Loads a session file.

        Raises:
            ProtocolError: If there is no session at ``path``.
            ValueError: If the file is not a valid session document.
        """
        path = Path(path)
        if not path.is_file():
            raise ProtocolError(f"No session at {path}; run init first")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            if data.get("format") != STATE_FORMAT:
                raise ValueError(f"Unsupported session format {data.get('format')!r}")
            state = SelState.from_dict(data["state"])
            config = SelConfig.from_dict(data["config"])
            return cls(path, state, config)
        except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
            raise ValueError(f"Malformed session file {path}: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        """The document written to the state file."""
        return {
            "format": STATE_FORMAT,
            "config": self.config.to_dict(),
            "state": self.state.to_dict(),
        }

    def save(self) -> None:
        """Writes the state file, replacing it atomically."""
        self.logger.debug("Saving session at stage %d to %s", self.state.stage, self.path)
        temporary = self.path.with_name(self.path.name + ".tmp")
        temporary.write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")
        os.replace(temporary, self.path)

    def suggest(self) -> Design:
        """Suggests the next batch and stores it as pending."""
        self.state, design = suggest_batch(self.state, self.config)
        self.save()
        return design

    def observe(self, responses: Union[ObservationSet, Sequence[float], np.ndarray]) -> int:
        """Absorbs the responses of the pending batch. Returns the number of observations."""
        self.state = absorb(self.state, responses)
        self.save()
        return self.state.n

    def eliminate(self, alphas: Optional[Sequence[float]] = None) -> StageRecord:
        """Eliminates one level per factor and returns the stage record."""
        self.state = eliminate(self.state, self.config, alphas)
        self.save()
        return self.state.history[-1]

    def predict(
        self,
        method: Union[PredictMethod, str, None] = None,
        alphas: Optional[Sequence[float]] = None,
    ) -> Prediction:
        """Predicts the minimizer from the current data; the state file is not changed."""
        return predict(self.state, method, self.config, alphas)
