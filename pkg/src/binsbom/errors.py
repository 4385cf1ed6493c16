"""Exception types shared across the toolkit.

Validation problems subclass ValueError, I/O problems subclass OSError, and
external-encoder protocol problems subclass RuntimeError so callers can catch
by broad category or by exact type.
"""


class IoError(OSError):
    """A path could not be read or written."""


class InvalidPattern(ValueError):
    """A version-string pattern failed to compile as a regular expression."""


class MetadataMismatch(ValueError):
    """Package metadata is inconsistent (version not contained in package name)."""


class InsufficientProducts(ValueError):
    """Negative pairs were requested but fewer than two distinct products exist."""


class InsufficientClasses(ValueError):
    """A zero-shot split needs strictly more distinct products than k_classes."""


class MalformedLine(ValueError):
    """A JSONL line could not be parsed; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyCorpus(ValueError):
    """Vocabulary training was given no usable text."""


class LossySequence(ValueError):
    """A token sequence containing [UNK] cannot be detokenized."""


class ZeroVector(ValueError):
    """Cosine similarity is undefined for a zero-norm vector."""


class DimensionMismatch(ValueError):
    """Two vectors (or an endpoint response) disagree on embedding dimension."""


class ProtocolError(RuntimeError):
    """An external encoder endpoint sent a frame that violates the wire protocol."""


class EndpointUnavailable(RuntimeError):
    """An external encoder endpoint could not be started or reached."""


class EmptyDataset(ValueError):
    """Training was requested on an empty pair list."""


class NonFiniteLoss(RuntimeError):
    """Training produced a non-finite loss; carries the offending step index."""

    def __init__(self, step: int, message: str = ""):
        detail = message or "loss became non-finite"
        super().__init__(f"step {step}: {detail}")
        self.step = step


class EmptyInput(ValueError):
    """Metrics were requested on an empty score list."""


class DegenerateLabels(ValueError):
    """ROC AUC needs at least one positive and one negative label."""


class DuplicateProduct(ValueError):
    """A product index was given the same product name twice."""


class EmptyProductList(ValueError):
    """A product index was given no product names."""


class FeedParseError(ValueError):
    """A CVE feed file line is malformed."""
