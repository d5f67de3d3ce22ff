"""Exception hierarchy.

Every error carries a stable class name; the CLI prints it verbatim and maps
the base class to an exit code.
"""


class TsInterpError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 4


class UsageError(TsInterpError):
    exit_code = 2


class ConflictError(TsInterpError):
    exit_code = 3


# --- timebase -------------------------------------------------------------

class ImportFailure(UsageError):
    pass


class NonMonotonicTimestamps(ImportFailure):
    pass


class OffGridTimestamp(ImportFailure):
    pass


class MissingComponent(ImportFailure):
    pass


class NonNumericValue(ImportFailure):
    pass


class InvalidTask(UsageError):
    pass


class EmptyTask(UsageError):
    pass


class OutOfRange(UsageError):
    pass


class DegenerateSplit(UsageError):
    pass


# --- tensorcore -----------------------------------------------------------

class ShapeMismatch(TsInterpError):
    pass


class NonPositiveDilation(ShapeMismatch):
    pass


class NotScalar(TsInterpError):
    pass


# --- architectures --------------------------------------------------------

class UnknownArchitecture(UsageError):
    pass


class IncompatibleHyperparams(UsageError):
    pass


class StateShapeMismatch(TsInterpError):
    pass


class NotStateful(TsInterpError):
    pass


class DuplicateName(ConflictError):
    pass


class ContractViolation(UsageError):
    def __init__(self, check, message=""):
        self.check = check
        super().__init__(f"{check}: {message}" if message else check)


# --- trainer / interpreter ------------------------------------------------

class NonFiniteLoss(TsInterpError):
    pass


class EmptyTrainSplit(UsageError):
    pass


class UnknownSplit(UsageError):
    pass


class NonFiniteGradient(TsInterpError):
    pass


class KTooLarge(TsInterpError):
    pass


class EmptyResults(TsInterpError):
    pass


class IOFailure(TsInterpError):
    pass


# --- experiment -----------------------------------------------------------

class ConfigError(UsageError):
    pass


class AlreadyExists(ConflictError):
    pass


class Locked(ConflictError):
    pass


class MissingArtifact(UsageError):
    pass


class ReceptiveFieldWarning(UserWarning):
    pass


class DisconnectedLeafWarning(UserWarning):
    pass
