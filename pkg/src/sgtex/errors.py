"""Exception types shared across the package."""


class SgtexError(Exception):
    """Base class for all package errors."""


class ContractViolation(SgtexError):
    """An argument broke a documented precondition (e.g. non-unit vector)."""


class DegenerateLobeError(SgtexError):
    """SG product collapsed to a constant function (antipodal axes, equal sharpness).

    ``constant`` holds the per-channel value of that constant function.
    """

    def __init__(self, constant):
        super().__init__("degenerate SG product: zero resultant sharpness")
        self.constant = constant


class UnknownLabelError(SgtexError):
    """Semantic label id outside the material table."""


class BackFaceError(SgtexError):
    """View direction below the surface horizon (omega_o . n <= 0)."""


class EmptyRegionError(SgtexError):
    """A semantic label with zero member pixels where at least one is required."""


class EmptyInputError(SgtexError):
    """An operation that needs a non-empty collection got an empty one."""


class EmptySceneError(SgtexError):
    """Scene has no usable triangles."""


class ZeroCoverageError(SgtexError):
    """A view-dependent operation found no mesh coverage in the view."""


class DivergenceError(SgtexError):
    """Optimization produced a non-finite loss."""

    def __init__(self, iteration: int):
        super().__init__(f"loss became non-finite at iteration {iteration}")
        self.iteration = iteration


class EmptyCloudError(SgtexError):
    """Point-cloud metric called with an empty cloud."""


class ResolutionMismatchError(SgtexError):
    """Two images that must share a resolution do not."""


class SegmenterUnavailableError(SgtexError):
    """The requested segmenter/painter backend is not registered or reachable."""
