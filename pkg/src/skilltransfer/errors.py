"""Exception hierarchy.

Errors fall in three families that the CLI maps to exit codes:
input problems (2), numerical failures (3) and the grasp filter
coming up empty (4).
"""


class SkillTransferError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class InputError(SkillTransferError, ValueError):
    exit_code = 2


class NumericalError(SkillTransferError, ArithmeticError):
    exit_code = 3


# input side
class ParseError(InputError):
    pass


class EmptyMesh(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class EmptyScene(InputError):
    pass


class NonUnitRotation(InputError):
    pass


class InvalidThreshold(InputError):
    pass


class TooShort(InputError):
    pass


class BasisTooSmall(InputError):
    pass


class BundleInconsistent(InputError):
    pass


# numerical side
class NumericalDegeneracy(NumericalError):
    pass


class SolverFailure(NumericalError):
    pass


class DegenerateSpectrum(NumericalError):
    pass


class RankDeficiency(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class DegenerateSupport(NumericalError):
    pass


class NoFeasibleGrasp(SkillTransferError):
    exit_code = 4


class StageError(SkillTransferError):
    """Wraps a failure inside the imitation pipeline with the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
