"""Exception hierarchy.

Every failure raised by the library derives from :class:`C2CalibError`.
Geometric failures (exit code 2 in the CLI) derive from
:class:`GeometryError`; optimizer failures (exit code 3) from
:class:`OptimizationError`; malformed inputs (exit code 1) from
:class:`InputError`.
"""


class C2CalibError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InputError(C2CalibError, ValueError):
    """Malformed or schema-invalid input."""

    exit_code = 1


class GeometryError(C2CalibError):
    """A geometric degeneracy prevented the computation."""

    exit_code = 2


class OptimizationError(C2CalibError):
    exit_code = 3


# core geometry
class DegenerateProjection(GeometryError):
    """Point at or behind the camera plane."""


class DegenerateConfiguration(GeometryError):
    """A DLT design matrix lost rank, or the two views share a center."""


class SingularCamera(GeometryError):
    """Left 3x3 block of a camera matrix is singular."""


class BehindCamera(GeometryError):
    """Triangulated point fails the cheirality test."""


# single-view corner recovery
class NoRealSolution(GeometryError):
    """The elimination quadratic has complex roots."""


class NonPositiveDepth(GeometryError):
    """A recovered point lies at or behind the camera center."""


class DegenerateImages(GeometryError):
    """Vertex images are coincident or otherwise unusable."""


class NearDegenerate(GeometryError):
    """Corner legs are (nearly) coplanar, so convexity is undefined."""


class ConvexityMismatch(GeometryError):
    """No admissible root carries the requested convexity label."""


# transfer chain
class RayParallelToPlane(GeometryError):
    """A viewing ray lies in a face plane (the face passes through the center)."""


# face inference
class NotAHomology(GeometryError):
    """Composed face homographies lack the repeated-eigenvalue structure."""


class InconsistentLegs(GeometryError):
    """The three leg lines do not meet in a common point."""


# benchmark / reconstruction
class VisibilityFailure(GeometryError):
    """A synthetic scene puts points outside an image or behind a device."""


class FitDegenerate(GeometryError):
    """Sphere fit is not determined by the supplied points."""


class InsufficientPoints(GeometryError):
    pass


class EmptyOutput(GeometryError):
    """Every correspondence was rejected during reconstruction."""


class AllEvaluationsFailed(OptimizationError):
    """Every objective evaluation returned infinity."""
