"""Exception hierarchy shared by all modules.

Usage errors (bad arguments, missing flags) are handled by the CLI layer;
everything below signals a problem with the *data* being processed and maps
to exit code 2 in batch mode.
"""


class TdoaDtbError(Exception):
    """Base class for all data-level errors raised by this package."""


class ParseError(TdoaDtbError):
    """Malformed input file. Carries file path and 1-based line number."""

    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class UnknownNode(TdoaDtbError):
    """An observation or lookup references a node id that is not known."""


class UnitError(TdoaDtbError):
    """Values are implausible for the declared unit mode."""


class OutOfRange(TdoaDtbError):
    """Requested time lies outside the reference trajectory span."""


class ReferenceMissing(TdoaDtbError):
    """An epoch lacks the reference node needed to form single differences."""


class EmptySession(TdoaDtbError):
    """No epochs available where at least one was required."""


class MixedReference(TdoaDtbError):
    """DTB samples with differing reference nodes were aggregated together."""


class WindowTooSmall(TdoaDtbError):
    """Detrending window does not cover the sample spacing."""


class NoRsrp(TdoaDtbError):
    """Operation needs received-power values but none are present."""


class FitError(TdoaDtbError):
    """Noise-model fit is degenerate or violates model constraints."""


class TooFewNodes(TdoaDtbError):
    """Fewer nodes than the operation requires."""


class NegativeDt(TdoaDtbError):
    """Filter propagation was asked to step backwards in time."""


class SingularGeometry(TdoaDtbError):
    """Rover coincides with a node; range partials are undefined."""


class NoOverlap(TdoaDtbError):
    """Track and reference trajectory share no common time span."""


class EmptyTrack(TdoaDtbError):
    """Metric requested on a track with no epochs."""


class InsufficientResiduals(TdoaDtbError):
    """Not enough residuals for the requested degrees of freedom."""


class InvalidScenario(TdoaDtbError):
    """Synthetic scenario configuration is inconsistent."""
