"""Exception taxonomy shared across the engine.

Every error carries a stable ``code`` token so the HTTP layer and the CLI
can map failures to status / exit codes without matching on message text.
Exit code convention: 1 caller error, 2 data error, 3 store error.
"""


class EnvNetError(Exception):
    code = "internal"
    exit_code = 1

    def __init__(self, message: str = "", **detail):
        super().__init__(message or self.__class__.__name__)
        self.detail = detail


class CallerError(EnvNetError):
    exit_code = 1


class DataError(EnvNetError):
    exit_code = 2


class StoreError(EnvNetError):
    exit_code = 3


# -- store ------------------------------------------------------------------

class NotAStore(StoreError):
    code = "not_a_store"


class CorruptManifest(StoreError):
    code = "corrupt_manifest"


class StoreWriteFailure(StoreError):
    code = "store_write_failure"


# -- lookups / caller input -------------------------------------------------

class UnknownChannel(CallerError):
    code = "unknown_channel"


class UnknownDeployment(CallerError):
    code = "unknown_deployment"


class UnknownVariable(CallerError):
    code = "unknown_variable"


class UnknownUpload(CallerError):
    code = "unknown_upload"


class UnsortedInput(CallerError):
    code = "unsorted_input"


class InvertedRange(CallerError):
    code = "inverted_range"


class EmptySpec(CallerError):
    code = "empty_spec"


class EmptyPoints(CallerError):
    code = "empty_points"


class BadParams(CallerError):
    code = "bad_params"


class NoCalibration(CallerError):
    code = "no_calibration"


class UnknownDialect(CallerError):
    code = "unknown_dialect"


class AmbiguousDialect(CallerError):
    code = "ambiguous_dialect"


class MissingHeader(CallerError):
    code = "missing_header"


# -- data-dependent outcomes ------------------------------------------------

class DuplicateUpload(DataError):
    code = "duplicate_upload"


class PolarDayNight(DataError):
    code = "polar_day_night"


class InsufficientDays(DataError):
    code = "insufficient_days"


class OverlapAfterShift(DataError):
    code = "overlap_after_shift"


class NightOrDegenerate(DataError):
    code = "night_or_degenerate"
