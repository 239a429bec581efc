"""Exception hierarchy.

ValidationError subclasses map to CLI exit code 1, RuntimeFailure to exit
code 2.
"""


class AteError(Exception):
    pass


class ValidationError(AteError):
    pass


class RuntimeFailure(AteError):
    pass


# corpus
class MissingAnnotation(ValidationError):
    pass


class DuplicateDocumentId(ValidationError):
    pass


class EncodingError(ValidationError):
    pass


class UnknownDomain(ValidationError):
    pass


class OverlappingSplit(ValidationError):
    pass


class WrongDomainCount(ValidationError):
    pass


# tagger
class BackendUnavailable(RuntimeFailure):
    pass


class EmptyTraining(ValidationError):
    pass


class NotFitted(RuntimeFailure):
    pass


# decode
class EmptyTerm(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


# evaluate
class EmptyGold(ValidationError):
    pass


# ensemble
class SplitMismatch(ValidationError):
    pass


class InsufficientRuns(ValidationError):
    pass


# runner
class ConfigError(ValidationError):
    pass


class DuplicateRun(ValidationError):
    pass


class EmptyLedger(ValidationError):
    pass
