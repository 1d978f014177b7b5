from typing import Any, Iterable, List, Optional


__all__ = [
    'DaieError', 'SupportMismatch', 'AbsoluteContinuityViolation', 'ZeroEvidence', 'UnknownAction', 'InvalidModel',
    'InvalidDistribution', 'NegativeEvidence', 'InvalidOpinion', 'DegenerateBaseRate', 'ParseError',
    'DuplicateNormId', 'UnknownActionLabel', 'UnknownAtom', 'UnknownStakeholder', 'EmptyCandidateSet',
    'UnmappedAction', 'InvalidGridStep', 'ConfigError', 'NoPermittedAction', 'NonFiniteObjective'
]


class DaieError(Exception):
    pass


class SupportMismatch(DaieError, ValueError):
    pass


class AbsoluteContinuityViolation(DaieError, ValueError):
    pass


class ZeroEvidence(DaieError, ValueError):
    pass


class UnknownAction(DaieError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ''


class InvalidModel(DaieError, ValueError):
    pass


class InvalidDistribution(DaieError, ValueError):
    pass


class NegativeEvidence(DaieError, ValueError):
    pass


class InvalidOpinion(DaieError, ValueError):
    pass


class DegenerateBaseRate(DaieError, ValueError):
    pass


class ParseError(DaieError, ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0, expected: Iterable[str] = ()):
        self.line = line
        self.column = column
        self.expected = frozenset(expected)
        self.message = message
        detail = f'{message} (line {line}, column {column})'

        if self.expected:
            detail += f'; expected one of: {", ".join(sorted(self.expected))}'

        super().__init__(detail)


class DuplicateNormId(DaieError, ValueError):
    pass


class UnknownActionLabel(DaieError, ValueError):
    pass


class UnknownAtom(DaieError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ''


class UnknownStakeholder(DaieError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ''


class EmptyCandidateSet(DaieError, ValueError):
    pass


class UnmappedAction(DaieError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ''


class InvalidGridStep(DaieError, ValueError):
    pass


class ConfigError(DaieError, ValueError):
    def __init__(self, diagnostics: List[str], path: Optional[str] = None):
        self.diagnostics = list(diagnostics)
        self.path = path
        head = f'{path}: ' if path else ''
        super().__init__(head + '; '.join(self.diagnostics[:20]))


class NoPermittedAction(DaieError, RuntimeError):
    def __init__(self, message: str, verdicts: Any = None, day: Optional[int] = None):
        self.verdicts = verdicts
        self.day = day
        super().__init__(message)


class NonFiniteObjective(DaieError, ArithmeticError):
    def __init__(self, message: str, parameter: Optional[str] = None):
        self.parameter = parameter
        super().__init__(message)
