"""Exception hierarchy shared by all ost modules."""


class OstError(Exception):
    """Base class for every error raised by this package."""


class FormatError(OstError):
    """A binary or JSON artifact does not conform to its on-disk format."""


class ValidationError(OstError):
    """A domain object violates one of its invariants."""


class DegenerateInputError(OstError):
    """An input is mathematically unusable (zero-norm row, empty pool)."""


class NumericError(OstError):
    """A numeric routine left the representable range (underflow/overflow)."""


class SizeError(OstError):
    """An instance exceeds a deliberate size guard."""


class ConfigurationError(OstError):
    """Required references or settings are missing."""


class TransportError(OstError):
    """A remote endpoint could not be reached after retries."""


class GenerationError(OstError):
    """The language model never produced a parseable response."""


class ParseError(OstError):
    """A response could not be split into the requested list of items."""

    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response
