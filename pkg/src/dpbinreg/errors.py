"""Exception hierarchy shared by the library and the command line tool."""


class DPBinRegError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(DPBinRegError, ValueError):
    """A parameter is outside its admissible set."""


class NumericalDegeneracyError(DPBinRegError, ArithmeticError):
    """A computation lost positive definiteness or underflowed to zero mass."""

    def __init__(self, message, atom=None, iteration=None):
        self.atom = atom
        self.iteration = iteration
        parts = [message]
        if atom is not None:
            parts.append(f"atom={atom}")
        if iteration is not None:
            parts.append(f"iteration={iteration}")
        super().__init__(" ".join(parts))


class DataError(DPBinRegError, ValueError):
    """Input data could not be ingested."""


class ConfigError(DPBinRegError, ValueError):
    """Run configuration is invalid."""
