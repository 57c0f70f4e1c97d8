"""Exception hierarchy for rxnshingle."""


class RxnShingleError(Exception):
    """Base class for all package errors."""


class SmilesError(RxnShingleError, ValueError):
    """A SMILES or reaction SMILES string could not be parsed."""

    def __init__(self, message, smiles=None, position=None):
        self.smiles = smiles
        self.position = position
        if smiles is not None and position is not None:
            message = f"{message} at position {position} in {smiles!r}"
        elif smiles is not None:
            message = f"{message} in {smiles!r}"
        super().__init__(message)


class EmptyInput(SmilesError):
    pass


class UnmatchedRingBond(SmilesError):
    pass


class UnbalancedParen(SmilesError):
    pass


class UnknownElement(SmilesError):
    pass


class MissingArrow(SmilesError):
    pass


class EmptyProductSide(SmilesError):
    pass


class EmptyReactantSide(SmilesError):
    pass


class InvalidGraph(RxnShingleError, ValueError):
    """A molecular graph violates its structural invariants."""


class EmptyDataset(RxnShingleError, ValueError):
    pass


class DegenerateSplit(RxnShingleError, ValueError):
    pass


class LengthMismatch(RxnShingleError, ValueError):
    pass


class ShapeMismatch(RxnShingleError, ValueError):
    pass


class NonFiniteValue(RxnShingleError, FloatingPointError):
    pass


class NotScalar(RxnShingleError, ValueError):
    pass


class DetachedTensor(RxnShingleError, ValueError):
    pass


class KTooLarge(RxnShingleError, ValueError):
    pass


class LabelOutOfRange(RxnShingleError, ValueError):
    pass


class NonFiniteLoss(RxnShingleError, FloatingPointError):
    pass


class MissingColumn(RxnShingleError, ValueError):
    pass


class ParseError(RxnShingleError, ValueError):
    """A dataset row failed to load; carries the 1-based row number."""

    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class CheckpointError(RxnShingleError, ValueError):
    pass


class UnknownAtomBucket(UserWarning):
    """An atom fell outside the embedding vocabulary and was mapped to the OOV row."""
