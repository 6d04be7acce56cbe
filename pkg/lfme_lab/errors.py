#!/usr/bin/env python3
"""
Errors

Exception hierarchy shared by every lfme_lab module. Library code raises these;
only the command line layer turns them into exit codes.
"""

from typing import Optional


class LfmeError(Exception):
    """Root of all lfme_lab errors."""


class ValidationError(LfmeError, ValueError):
    """Input violates a documented invariant."""


class ManifestParseError(ValidationError):
    """Malformed line in a class-count manifest."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DatasetFormatError(ValidationError):
    """Dataset file is empty, truncated or carries an unknown version."""


class ShapeError(ValidationError):
    """Array shapes do not chain or match."""


class SplitError(ValidationError):
    """Thresholds or subsets do not form a valid cardinality split."""


class ScheduleError(ValidationError):
    """Weight schedule called outside its domain."""


class ConfigError(ValidationError):
    """Run configuration is malformed or inconsistent."""


class EvaluationError(LfmeError):
    """Accuracy requested over an empty set of instances."""


class MissingArtifactError(LfmeError):
    """A pipeline stage needs artifacts that an earlier stage produces."""

    def __init__(self, message: str, stage: Optional[str] = None):
        if stage:
            message = f"{message} (run {stage} first)"
        super().__init__(message)
        self.stage = stage


class StaleArtifactError(MissingArtifactError):
    """An artifact exists but was produced under a different config."""


class StageError(LfmeError):
    """Error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
