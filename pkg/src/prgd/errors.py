class NumericalError(RuntimeError):
    """A numerical routine failed to meet its accuracy or finiteness contract."""
