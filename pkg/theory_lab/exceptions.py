from cofie.exceptions import CofieError


class RankDeficient(CofieError):
    """Least-squares design matrix does not have full column rank."""
