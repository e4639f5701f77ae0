"""Exception types. Each carries a stable ``code`` used by the CLI."""

from __future__ import annotations


class LevySheError(Exception):
    code = "ERROR"
    exit_status = 4


class ConditionViolated(LevySheError):
    code = "CONDITION_VIOLATED"
    exit_status = 3


class Divergent(LevySheError):
    code = "DIVERGENT"
    exit_status = 3


class InfiniteIntensity(LevySheError):
    code = "INFINITE_INTENSITY"
    exit_status = 3


class SupInfinite(ConditionViolated):
    code = "SUP_INFINITE"


class Unclassified(LevySheError):
    code = "UNCLASSIFIED"
    exit_status = 4


class BracketViolation(LevySheError):
    code = "BRACKET_VIOLATION"
    exit_status = 4


class NumericFailure(LevySheError):
    code = "NUMERIC_FAILURE"
    exit_status = 4


class ConfigInvalid(LevySheError):
    code = "CONFIG_INVALID"
    exit_status = 2
