"""Exception types shared across the toolkit."""


class RvqtokError(Exception):
    """Base class for all toolkit errors."""


class EmptyInput(RvqtokError):
    """An operation received an empty buffer, corpus, or list."""


class InvalidSample(RvqtokError):
    """Audio contains non-finite or otherwise unusable samples."""


class InvalidConfig(RvqtokError):
    """A configuration value violates its documented range."""


class ShapeMismatch(RvqtokError):
    """Two arrays that must agree in shape (or analysis config) do not."""


class InvalidStream(RvqtokError):
    """An interleaved stream violates its structural invariants."""


class MalformedWire(RvqtokError):
    """A serialized token sequence cannot be parsed back into a stream."""


class InsufficientData(RvqtokError):
    """Too few aligned pairs to assemble the requested record."""


class IndexOutOfRange(RvqtokError):
    """A token index exceeds the table or codebook it addresses."""


class ScorerError(RvqtokError):
    """A scorer failed or returned values outside its contract."""
