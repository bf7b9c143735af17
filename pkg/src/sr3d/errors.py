"""Error taxonomy shared by the library and the CLI.

Exit codes are part of the CLI contract: 0 success, 2 validation,
3 geometry, 4 empty region.
"""


class Sr3dError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(Sr3dError):
    """Malformed or inconsistent input: manifests, schemas, shapes, poses."""

    exit_code = 2


class GeometryError(Sr3dError):
    """Geometric computation cannot proceed (e.g. no valid points)."""

    exit_code = 3


class EmptyRegionError(Sr3dError):
    """A region prompt resolved to zero token cells in every frame."""

    exit_code = 4
