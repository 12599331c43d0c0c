"""Exception and warning types shared across the package."""


class OrderBookError(ValueError):
    """Invalid order book content (negative volume, off-grid price)."""


class OffGridPrice(OrderBookError):
    pass


class NoIntersection(RuntimeError):
    """Supply never covers demand on the price grid."""


class EmptyMarket(RuntimeError):
    """Both sides of the book are empty."""


class MissingData(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing data"


class NoReference(LookupError):
    pass


class MissingHistory(LookupError):
    pass


class MalformedRow(ValueError):
    def __init__(self, path, line, reason):
        self.path = str(path)
        self.line = line
        self.reason = reason
        super().__init__(f"{self.path}:{line}: {reason}")


class DimensionMismatch(ValueError):
    pass


class Diverged(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


class RankDeficientWarning(UserWarning):
    pass
