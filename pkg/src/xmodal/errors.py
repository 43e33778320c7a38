"""Exception hierarchy. Every user-facing failure maps to one class here;
the CLI prints ``error: <ClassName>: <message>`` and exits 1."""


class XmodalError(Exception):
    """Base class for all expected failure modes."""


# -- feature store ----------------------------------------------------------

class ZeroVector(XmodalError):
    """Vector has zero (or underflowed) Euclidean norm."""


class IoError(XmodalError):
    """File could not be read or written."""


class DimensionMismatch(XmodalError):
    """Vector or matrix dimension disagrees with the declared D."""


class BadMagic(XmodalError):
    """File does not start with the XMFS magic bytes."""


class UnsupportedVersion(XmodalError):
    """Store format version is not understood."""


class CorruptRecord(XmodalError):
    """Declared record count disagrees with the body length."""


class NonFiniteValue(XmodalError):
    """A stored coordinate is NaN or infinite."""


# -- episodes ---------------------------------------------------------------

class InsufficientSamples(XmodalError):
    """A class lacks enough candidate records for the requested split."""


class UnmatchedClass(XmodalError):
    """A matching entry does not resolve in a store manifest."""


class MissingFold(XmodalError):
    """Requested fold is absent from the store's fold map."""


class MissingClassInModality(XmodalError):
    """An extra store provides no usable record for an episode class."""


# -- classifier heads -------------------------------------------------------

class MissingClassText(XmodalError):
    """No text view available for a class under the template policy."""


class ShapeMismatch(XmodalError):
    """Two states disagree in weight shape."""


class ClassOrderMismatch(XmodalError):
    """Two states disagree in class id ordering."""


class ScaleMismatch(XmodalError):
    """Two states disagree in logit scale."""


# -- training ---------------------------------------------------------------

class UnknownLabel(XmodalError):
    """Batch label is not among the classifier's classes."""


class EmptyTrainset(XmodalError):
    """No training samples to batch."""


class EmptyGrid(XmodalError):
    """Grid search invoked with an empty grid."""


# -- augmentation -----------------------------------------------------------

class BadTemplate(XmodalError):
    """Template does not contain exactly one '{cls}' placeholder."""


class MissingView(XmodalError):
    """A requested view record is absent from the store."""

    def __init__(self, sample_id: int, view_id: int):
        super().__init__(f"sample {sample_id} has no view {view_id}")
        self.sample_id = sample_id
        self.view_id = view_id


# -- evaluation -------------------------------------------------------------

class EmptyTestSet(XmodalError):
    """Evaluation invoked on an empty test set."""


class ClassVocabularyMismatch(XmodalError):
    """Target test classes do not map into the classifier's vocabulary."""


class DegenerateCovariance(XmodalError):
    """All points identical; principal components undefined."""
