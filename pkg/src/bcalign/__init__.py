"""bcalign: align dialogue contexts with backchannel realizations in a shared
embedding space, and evaluate the space against retrieval, similarity,
matching, and affective-probe protocols."""

__version__ = "0.1.0"

from .corpus import DEFAULT_LEXICON  # noqa: F401
