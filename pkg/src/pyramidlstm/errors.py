"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array shapes or channel counts do not line up."""


class BoundsError(IndexError):
    """An index lies outside the extent of an axis."""


class FormatError(ValueError):
    """A binary file is malformed. ``field`` names the offending header field."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ConfigError(ValueError):
    """Invalid run configuration. ``field`` is ``section.key`` when known."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class CoverageError(ValueError):
    """Stitching left at least one voxel without any contributing tile."""

    def __init__(self, message, voxel=None):
        super().__init__(message)
        self.voxel = voxel
