"""Exception hierarchy shared by the modeling, relaxation and parsing layers."""


class ModelingError(ValueError):
    """Invalid problem data: dimension mismatch, bad sparsity pattern, missing bounds."""


class OrderError(ValueError):
    """Relaxation order below the minimum admissible order."""


class ParseError(ValueError):
    """Problem-file or SDPA-file parse failure.

    ``kind`` is a short machine-readable tag (``undeclared``, ``exponent``,
    ``division``, ``empty-objective``, ``clique``, ``syntax``, ...); ``line`` and ``col``
    are 1-based and may be ``None`` when not applicable.
    """

    def __init__(self, message, kind="syntax", line=None, col=None):
        self.kind = kind
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = f"line {line}"
            if col is not None:
                where += f", col {col}"
            where += ": "
        super().__init__(where + message)


class RipWarning(UserWarning):
    """Clique ordering violates the running intersection property."""
