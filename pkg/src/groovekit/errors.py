"""Exception types shared across the toolkit."""


class GrooveKitError(Exception):
    """Base class for all groovekit errors."""


class MalformedHeader(GrooveKitError):
    """MIDI data does not start with a valid header chunk."""


class UnsupportedFormat(GrooveKitError):
    """SMF format 2 or SMPTE time division; not supported."""


class TruncatedChunk(GrooveKitError):
    """A chunk or event runs past the end of the available bytes."""


class ShapeMismatch(GrooveKitError):
    """Operands do not share the required matrix shape."""


class EmptyTrainingSet(GrooveKitError):
    """A retrieval or fitting operation received no training windows."""


class NonFiniteLoss(GrooveKitError):
    """Training produced NaN or infinity; aborted with diagnostics."""


class UntrainedModel(GrooveKitError):
    """Inference was requested from parameters that were never trained."""


class EmptyIntersection(GrooveKitError):
    """No hits are shared between prediction and ground truth."""


class DegenerateStd(GrooveKitError):
    """A fitted standard deviation collapsed below tolerance."""


class InsufficientGroup(GrooveKitError):
    """A metrical position group has fewer than two notes."""


class DataError(GrooveKitError):
    """Corpus, manifest or checkpoint content is missing or invalid."""
