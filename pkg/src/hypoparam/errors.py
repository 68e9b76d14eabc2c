"""Exception types raised across the package."""

from __future__ import annotations


class HypoparamError(Exception):
    """Base class for all library errors."""


class ConfigError(HypoparamError, ValueError):
    """Invalid configuration; ``problems`` lists every violated constraint."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class InsufficientDataError(HypoparamError, ValueError):
    pass


class DegenerateDataError(HypoparamError, ValueError):
    pass


class EstimateOutOfDomainError(HypoparamError, ValueError):
    """A fitted quantity fell outside its admissible domain."""

    def __init__(self, message, raw_value):
        self.raw_value = raw_value
        super().__init__(f"{message} (raw value {raw_value!r})")


class DegeneracyError(HypoparamError, ValueError):
    pass


class InvalidRootError(HypoparamError, ValueError):
    pass


class NonCausalError(HypoparamError, ValueError):
    pass


class NumericOverflowError(HypoparamError, ArithmeticError):
    def __init__(self, index):
        self.index = int(index)
        super().__init__(f"non-finite value at index {self.index}")


class InstabilityError(HypoparamError, ArithmeticError):
    def __init__(self, step):
        self.step = int(step)
        super().__init__(f"trajectory diverged at step {self.step}")
