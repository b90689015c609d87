"""Exception hierarchy shared by every stage of the pipeline."""


class SprintError(Exception):
    """Base class for all errors raised by sprint_ir."""


class InvalidInputError(SprintError, ValueError):
    """An operation received values outside its domain."""


class IndexBuildError(SprintError):
    pass


class SegmentLoadError(SprintError):
    """A persisted segment is missing, truncated, corrupt or of another version."""


class ParseError(SprintError, ValueError):
    """A data file could not be parsed. Carries the 1-based line number."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class ConfigError(SprintError, ValueError):
    pass
