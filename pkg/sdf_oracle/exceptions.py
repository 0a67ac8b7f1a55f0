from cofie.exceptions import CofieError


class NoSurfaceInVoxel(CofieError):
    """The requested voxel does not intersect the mesh."""


class SampleFormatError(CofieError):
    """SampleSet file is truncated, has a bad magic or an unsupported version."""
