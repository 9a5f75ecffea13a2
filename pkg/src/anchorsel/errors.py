"""Exception types shared across the toolkit.

Every error carries a human-readable message naming the offending field,
sample, or file so CLI users can act on it without a stack trace.
"""


class AnchorselError(Exception):
    """Base class for all toolkit errors."""


# --- tensor / bank file format ---

class BadMagic(AnchorselError):
    pass


class TruncatedPayload(AnchorselError):
    pass


class DimOverflow(AnchorselError):
    pass


class IoFailure(AnchorselError):
    pass


class VersionMismatch(AnchorselError):
    pass


# --- manifest ---

class DuplicateId(AnchorselError):
    pass


class MissingField(AnchorselError):
    pass


class UnresolvablePath(AnchorselError):
    pass


class InvalidValue(AnchorselError):
    """A field is present but violates its declared range or type."""


# --- array contracts ---

class ShapeMismatch(AnchorselError):
    pass


class CategoryOutOfRange(AnchorselError):
    pass


class MissingMap(AnchorselError):
    def __init__(self, sample_id: str, which: str):
        super().__init__(f"sample {sample_id!r} has no {which} map")
        self.sample_id = sample_id
        self.which = which


# --- clustering ---

class TooFewSamples(AnchorselError):
    pass


# --- selection ---

class MissingInput(AnchorselError):
    def __init__(self, metric: str, sample_id: str, what: str):
        super().__init__(f"metric {metric!r} needs {what} for sample {sample_id!r}")
        self.metric = metric
        self.sample_id = sample_id


class NotNormalized(AnchorselError):
    pass


class ZeroProbability(AnchorselError):
    pass


# --- losses ---

class NoValidPixels(AnchorselError):
    pass


# --- augmentation ---

class NoCandidates(AnchorselError):
    pass


class EmptyRange(AnchorselError):
    pass


class RectOutOfBounds(AnchorselError):
    pass


class NoCopyableClasses(AnchorselError):
    pass
