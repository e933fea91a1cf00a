"""Exception hierarchy shared across the forecasting pipeline."""


class SearchcastError(Exception):
    """Base class; ``stage`` names the pipeline stage that raised."""

    stage = "pipeline"


class NotAState(SearchcastError, KeyError):
    stage = "geo"

    def __str__(self):
        return Exception.__str__(self)


class ParseError(SearchcastError, ValueError):
    stage = "ingest"

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class OrderError(SearchcastError, ValueError):
    stage = "ingest"


class GapError(SearchcastError, ValueError):
    stage = "ingest"

    def __init__(self, geo, date):
        super().__init__(f"missing interior date {date} for {geo}")
        self.geo = geo
        self.date = date


class IncompleteWeek(SearchcastError, ValueError):
    stage = "ingest"


class EmptyPanel(SearchcastError, ValueError):
    stage = "preprocess"


class SeriesTooShort(SearchcastError, ValueError):
    stage = "preprocess"


class InsufficientHistory(SearchcastError, ValueError):
    stage = "model"


class InvalidPenalty(SearchcastError, ValueError):
    stage = "solver"


class InvalidInput(SearchcastError, ValueError):
    stage = "solver"


class InsufficientRows(SearchcastError, ValueError):
    stage = "solver"


class SingularDesign(SearchcastError, ValueError):
    stage = "solver"


class NumericalFailure(SearchcastError, ArithmeticError):
    stage = "argox"


class ConstraintDegenerate(NumericalFailure):
    pass


class EmptyEvaluation(SearchcastError, ValueError):
    stage = "evaluate"


class ConfigError(SearchcastError, ValueError):
    stage = "config"


class IoError(SearchcastError, OSError):
    stage = "report"
