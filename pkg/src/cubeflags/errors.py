"""Shared exception types, mapped to CLI exit codes by cubeflags.cli."""


class CubeflagsError(Exception):
    """Base class for library errors."""


class DimensionMismatchError(CubeflagsError, ValueError):
    """Operands live in different ambient dimensions."""


class CapacityError(CubeflagsError, RuntimeError):
    """A size guard would be exceeded (cube too large, set too big, ...)."""


class EnumerationLimitError(CapacityError):
    """Subflag enumeration exceeded the per-level candidate cap."""

    def __init__(self, level: int, count: int, cap: int):
        self.level = level
        self.count = count
        self.cap = cap
        super().__init__(
            f"subflag enumeration at level {level} exceeded {cap} candidate "
            f"spaces (reached {count})"
        )


class InvalidChildError(CubeflagsError, ValueError):
    """Requested child genotype is not dominated by the consolidation."""


class NumericInstabilityError(CubeflagsError, ArithmeticError):
    """A computed quantity violated a proven a-priori bound."""


class DegenerateParametersError(CubeflagsError, ArithmeticError):
    """Threshold back-substitution hit a degenerate or non-descending pivot."""
