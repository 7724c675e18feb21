"""Exception types raised across the package.

Every error is a subclass of :class:`EntitopicError` so callers can catch
library failures with a single except clause while tests pin the precise
subclass.
"""


class EntitopicError(Exception):
    """Base class for all library errors."""


class EmptyInput(EntitopicError):
    """Input text or document is empty after trimming."""


class SequenceTooLong(EntitopicError):
    """Token sequence exceeds the configured maximum length."""


class UnknownLanguage(EntitopicError):
    """Language id is not present in the configured language set."""


class ShapeError(EntitopicError):
    """Tensor or matrix dimensions do not match the expected shapes."""


class DegenerateEmbedding(EntitopicError):
    """An embedding with zero norm was passed where cosine geometry is needed."""


class EmptyPool(EntitopicError):
    """Sampling was requested from an empty candidate pool."""


class EmptySupport(EntitopicError):
    """No support examples exist for the requested entity type."""


class EmptyBank(EntitopicError):
    """The prototype bank holds no prototypes."""


class InvalidEmissions(EntitopicError):
    """Emission scores contain NaN or infinite values."""


class IllegalGoldSequence(EntitopicError):
    """A gold tag sequence violates the transition constraint mask."""


class InfeasibleMask(EntitopicError):
    """No tag sequence is feasible under the constraint mask."""


class EmptyCorpus(EntitopicError):
    """Topic model training received a corpus with an empty vocabulary."""


class NotEnoughWords(EntitopicError):
    """A coherence metric needs at least two words per topic."""


class NotFitted(EntitopicError):
    """Statistics were used before being fitted on training data."""


class NotEnoughTypes(EntitopicError):
    """Fewer entity types are available than the episode requires."""


class InsufficientData(EntitopicError):
    """The dataset cannot fill an episode for a sampled entity type."""


class DictionaryMissing(EntitopicError):
    """A bilingual dictionary required for round-trip translation is absent."""


class NonFiniteGradient(EntitopicError):
    """A gradient passed to the optimizer contains NaN or infinite entries."""


class NotADistribution(EntitopicError):
    """A vector expected to be a probability distribution is not normalized."""


class InvalidWeight(EntitopicError):
    """A loss weight is negative."""


class EmptySequence(EntitopicError):
    """An operation needs at least one unmasked token."""


class ConfigError(EntitopicError):
    """Configuration file violates the schema; message carries the field path."""


class CheckpointError(EntitopicError):
    """A checkpoint file is missing, corrupt, or version-incompatible."""
