"""Exception hierarchy shared by every stage of the pipeline."""


class MetalcastError(Exception):
    """Base class for all engine errors."""


class ParseError(MetalcastError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class IntegrityError(MetalcastError):
    """Vintage structure is inconsistent (ordering, gaps, duplicated dates)."""


class FirstReleaseError(IntegrityError):
    """Two vintages disagree on an observation that should be frozen."""


class DomainError(MetalcastError, ValueError):
    """Input outside the mathematical domain of an operation (e.g. log of 0)."""


class CoverageError(MetalcastError):
    """A required date or horizon is not covered by the available data."""


class MissingVintageError(CoverageError):
    pass


class InsufficientDataError(MetalcastError):
    pass


class RankError(MetalcastError):
    """Design matrix is rank deficient."""


class SamplerError(MetalcastError):
    pass


class DegenerateColumnError(MetalcastError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"column {column!r} has zero variance")


class DimensionError(MetalcastError, ValueError):
    pass


class ConfigError(MetalcastError):
    pass


class IncompleteFanError(MetalcastError):
    pass


class DegenerateTestError(MetalcastError):
    """Loss differential has no variation; the test is undefined."""


class EmptySampleError(MetalcastError, ValueError):
    pass


class ModelError(MetalcastError):
    """Wraps a failure with the variable or model that produced it."""

    def __init__(self, tag: str, cause: Exception):
        self.tag = tag
        self.cause = cause
        super().__init__(f"[{tag}] {type(cause).__name__}: {cause}")
