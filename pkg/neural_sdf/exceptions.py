from cofie.exceptions import CofieError


class ShapeMismatch(CofieError):
    """Array shapes disagree with the layer or model configuration."""
