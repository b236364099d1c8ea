"""Exception hierarchy shared across the toolkit."""


class BcAlignError(Exception):
    """Base class for all toolkit errors."""


# --- transcript parsing ---

class MalformedMarker(BcAlignError):
    """Structural misuse of a notation marker (speaker token mid-turn, misplaced braces, ...)."""


class UnbalancedOverlap(BcAlignError):
    """Overlap marker without its required counterpart, within or across turns."""


class NonAlternatingSpeakers(BcAlignError):
    """Two consecutive turns carry the same speaker."""


class InsufficientDialogues(BcAlignError):
    """Too few dialogues to assign train/val/test splits."""


# --- audio / prosody ---

class EmptySignal(BcAlignError):
    """Waveform contains no samples."""


class EmptyInput(BcAlignError):
    """An operation that needs at least one element received none."""


class DimensionMismatch(BcAlignError):
    """Vector or matrix dimensions disagree with what was declared or required."""


# --- n-gram LM ---

class EmptyCorpus(BcAlignError):
    """No non-empty token stream was provided for training."""


class NoSamples(BcAlignError):
    """Perplexity requested over an empty sample set."""


# --- feature store ---

class BadSchema(BcAlignError):
    """A record does not conform to the expected JSONL schema."""


class NonFiniteValue(BcAlignError):
    """A vector contains NaN or infinity."""


class DuplicateId(BcAlignError):
    """Two records share an id within the same feature kind."""


class InvalidConfig(BcAlignError):
    """Configuration values outside their allowed domain."""


# --- model ---

class MissingModality(BcAlignError):
    """The active modality requires a feature that was not supplied."""


class CountMismatch(BcAlignError):
    """Paired collections have different lengths."""


class EmptySplit(BcAlignError):
    """A required dataset split contains no samples."""


class NonFiniteLoss(BcAlignError):
    """Training produced a NaN/inf loss; aborted with diagnostics."""


class VersionMismatch(BcAlignError):
    """A serialized artifact declares an unsupported format version."""


class CorruptFile(BcAlignError):
    """A serialized artifact cannot be decoded."""


# --- evaluation ---

class UnknownId(BcAlignError):
    """An id referenced by a judgment or stimulus set has no embedding."""


class MissingGroundTruth(BcAlignError):
    """A matching stimulus set lacks its ground-truth index."""


class UnknownLexeme(BcAlignError):
    """A lexeme outside the active lexicon."""


class SingularSystem(BcAlignError):
    """The ridge normal equations are singular (only reachable at alpha = 0)."""


# --- explorer export ---

class MissingProbe(BcAlignError):
    """Export requested a probe dimension that was not fitted."""


class MissingFeature(BcAlignError):
    """A sample lacks a vector or prosodic field required for export."""
