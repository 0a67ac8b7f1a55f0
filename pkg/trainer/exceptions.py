from cofie.exceptions import CofieError


class ConfigMismatch(CofieError):
    """Shapes, fields and model configuration do not fit together."""


class NonFiniteLoss(CofieError):
    """Training produced a NaN or infinite loss and was aborted."""


class VersionMismatch(CofieError):
    """Checkpoint written by an unsupported format version."""
