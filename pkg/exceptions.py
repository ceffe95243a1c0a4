# Filename: exceptions.py
# Role: Error hierarchy shared by the services and the CLI

from typing import List, Optional


class AnalysisError(Exception):
    """Base class for every error raised by the numerics services."""


class AlignmentError(AnalysisError):
    """Vectors, weights or matrices are not index-aligned."""


class ContractViolation(AnalysisError):
    """An operation was called on input that breaks its precondition."""


class BranchError(AnalysisError):
    """A multivalued weight was evaluated on its branch cut."""


class EvaluationError(AnalysisError):
    """A transform target coincides with a quadrature node."""


class DomainError(AnalysisError):
    """A point lies outside the domain of a map."""


class StructureFieldError(AnalysisError):
    """A structure field returned a matrix of norm above its bound."""


class DegreeUndefinedError(AnalysisError):
    """The boundary trace is too far from the triangle boundary."""


class ConvergenceError(AnalysisError):
    def __init__(self, message: str, history: Optional[List[float]] = None, ratio: Optional[float] = None):
        super().__init__(message)
        self.history = list(history or [])
        self.ratio = ratio


class ConfigError(AnalysisError):
    def __init__(self, message: str, keys: Optional[List[str]] = None):
        super().__init__(message)
        self.keys = list(keys or [])
