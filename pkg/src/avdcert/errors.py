"""Exception types shared across the package."""


class AvdcertError(Exception):
    """Base class for all errors raised by this package."""


class NotSpdError(AvdcertError):
    """A matrix expected to be symmetric positive-definite is not."""


class DomainError(AvdcertError):
    """A point lies outside the domain, or an input violates a precondition."""


class FormatError(AvdcertError):
    """A mesh or sites file failed strict parsing."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateMeshError(AvdcertError):
    """A simplex has (near-)zero volume or a metric value is unusable."""


class PipelineError(AvdcertError):
    """A certification stage failed; the message names the stage."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage} stage: {cause}")
        self.stage = stage
