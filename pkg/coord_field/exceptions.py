from cofie.exceptions import CofieError


class DegenerateCell(CofieError):
    """Gradient covariance of a cell has rank 0; the frame falls back to world axes."""


class FieldFormatError(CofieError):
    """FieldFile is truncated, has a bad magic or an unsupported version."""
