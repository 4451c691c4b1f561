class NumericsError(RuntimeError):
    """A run produced non-finite values or drifted past a hard tolerance."""
