"""Exception hierarchy shared by every stage of the registration pipeline."""


class HybridFusionError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(HybridFusionError, ValueError):
    pass


class MetricError(HybridFusionError, ValueError):
    pass


class PatchLookupError(HybridFusionError, KeyError):
    pass


class DescriptorError(HybridFusionError, ValueError):
    pass


class SimilarityError(HybridFusionError, ValueError):
    """Raised when a correlation is undefined (zero-variance descriptor)."""


class GeometryError(HybridFusionError, ValueError):
    """Degenerate candidate geometry, e.g. a patch centroid on the GNSS origin."""


class BoundaryError(HybridFusionError, ValueError):
    pass


class EmptyResultError(BoundaryError):
    """Ground removal left nothing; callers skip the patch."""


class GridError(HybridFusionError, ValueError):
    """No NDT cell reached the minimum point count."""


class FusionError(HybridFusionError, ValueError):
    pass


class PipelineFailure(HybridFusionError):
    """No patch produced an accepted transform.

    ``counts`` carries the per-stage survivor counts for diagnostics.
    """

    def __init__(self, message, counts=None):
        super().__init__(message)
        self.counts = dict(counts or {})


class ParseError(HybridFusionError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFormatError(ParseError):
    pass


class ConfigError(HybridFusionError, ValueError):
    pass


class WriteError(HybridFusionError, OSError):
    pass
