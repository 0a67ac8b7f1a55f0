from cofie.exceptions import CofieError


class EmptySet(CofieError):
    """A point set or an extracted surface is empty."""
