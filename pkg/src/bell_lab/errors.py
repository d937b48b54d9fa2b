class BellLabError(ValueError):
    """Base class for all domain errors raised by bell_lab."""


class InvalidMomentsError(BellLabError):
    pass


class InvalidDistributionError(BellLabError):
    pass


class ZeroProbabilityConditionError(BellLabError):
    pass


class UndefinedConditionalError(BellLabError):
    pass


class NotExchangeableError(BellLabError):
    pass


class WrongModelKindError(BellLabError):
    pass


class MissingEntryError(BellLabError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class CorrelationRangeError(BellLabError):
    pass


class TooManySettingsError(BellLabError):
    pass


class WrongArityError(BellLabError):
    pass


class NoDataError(BellLabError):
    pass


class ModelFileError(BellLabError):
    pass
