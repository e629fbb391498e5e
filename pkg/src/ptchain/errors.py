"""Exception hierarchy.

Each error carries an ``exit_code`` used by the command-line front end:
2 for configuration problems, 3 for numerical failures, 4 for resource caps.
"""


class PTChainError(Exception):
    exit_code = 3


class InvalidSpec(PTChainError, ValueError):
    exit_code = 2


class DimensionMismatch(PTChainError, ValueError):
    exit_code = 2


class ConfigParse(PTChainError, ValueError):
    exit_code = 2


class RootSolveFailure(PTChainError, ArithmeticError):
    pass


class DegenerateModes(PTChainError, ArithmeticError):
    pass


class StepTooLarge(PTChainError, ArithmeticError):
    pass


class InsufficientData(PTChainError, ValueError):
    pass


class NoCrossings(PTChainError, ValueError):
    pass


class UndersampledRecord(PTChainError, ValueError):
    pass


class EigensolveFailure(PTChainError, ArithmeticError):
    pass


class MatchingAmbiguous(PTChainError, ArithmeticError):
    pass


class CombinatorialOverflow(PTChainError, MemoryError):
    exit_code = 4


class GridTooLarge(PTChainError, MemoryError):
    exit_code = 4


class DimensionCap(PTChainError, MemoryError):
    exit_code = 4
