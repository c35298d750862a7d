"""Exception hierarchy.

Two families matter to callers: :class:`DataError` (the input is malformed or
incomplete) and :class:`NumericError` (the input is well formed but the
requested quantity cannot be computed from it). The CLI maps them to distinct
exit codes.
"""


class MRError(Exception):
    """Base class for all toolkit errors."""


class DataError(MRError):
    pass


class NumericError(MRError):
    pass


class ParseError(DataError):
    """Fatal problem with an input file (missing column, no rows, strict-mode row)."""


class HarmonizationError(DataError):
    pass


class ConfigError(DataError):
    pass


class MissingLDEntry(DataError):
    pass


class ExposureSERequired(DataError):
    pass


class ConfounderLabelsRequired(DataError):
    pass


class NullInstrument(NumericError):
    pass


class ZeroDenominator(NumericError):
    pass


class InsufficientInstruments(NumericError):
    pass


class NoStrengthSpread(NumericError):
    pass


class DegenerateExposure(NumericError):
    pass


class CollinearInstruments(NumericError):
    pass


class NoFirstStageSignal(NumericError):
    pass


class UndefinedEstimand(NumericError):
    pass


class IrrelevantInstrument(NumericError):
    pass


class FormulaPreconditionError(NumericError):
    pass


class UnstableSelection(NumericError):
    pass


class NoRelevantInstruments(NumericError):
    """Soft failure of relevance screening; ``dataset`` holds the (empty) result."""

    def __init__(self, message, dataset=None):
        super().__init__(message)
        self.dataset = dataset
