"""Exception hierarchy shared by every aisprop module.

All library errors derive from :class:`AisPropError`.  Errors caused by bad
input data additionally derive from :class:`DataError` so the command-line
layer can map them onto a stable exit code.
"""

from __future__ import annotations


class AisPropError(Exception):
    """Base class for all aisprop errors."""


class DataError(AisPropError, ValueError):
    """Input data (a string, file or array) violates a contract."""


# --- SMILES parsing -------------------------------------------------------


class SmilesError(DataError):
    """A SMILES string could not be turned into a molecule.

    Attributes:
        smiles: the offending input (may be truncated for display).
        position: character offset where the problem was detected, if known.
    """

    def __init__(self, message: str, smiles: str = "", position: int | None = None):
        self.smiles = smiles
        self.position = position
        where = f" at position {position}" if position is not None else ""
        shown = smiles if len(smiles) <= 80 else smiles[:77] + "..."
        super().__init__(f"{message}{where} in {shown!r}" if smiles else message)


class SmilesSyntaxError(SmilesError):
    """Unbalanced brackets/parentheses, unknown element, dangling bond..."""


class RingClosureError(SmilesError):
    """A ring-closure label is unmatched or closes onto an illegal partner."""


class ValenceError(SmilesError):
    """Bond orders around an atom exceed every allowed valence."""


# --- tokens, vocabularies and files ---------------------------------------


class MalformedToken(DataError):
    """An AIS token cannot be inverted to a legal SMILES atom."""


class UnknownElement(DataError):
    """An element symbol is missing from the atomic mass table."""


class EmptyCorpus(DataError):
    """No token sequences were supplied."""


class FormatError(DataError):
    """A file does not follow its documented format."""


class MissingColumn(DataError):
    """A CSV file lacks a column named in the column map."""


class ConfigError(DataError):
    """A configuration is invalid; ``problems`` lists every issue found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


class VocabMismatch(DataError):
    """Records or a model were built against a different vocabulary."""


# --- numerics ---------------------------------------------------------------


class EmptyInput(DataError):
    """An operation that needs at least one element received none."""


class LengthMismatch(DataError):
    """Paired vectors have different lengths."""


class ZeroVariance(DataError):
    """R^2 is undefined because every true value is identical."""


class EmptyBatch(EmptyInput):
    """A loss was requested on an empty batch."""


class ShapeMismatch(DataError):
    """Array shapes disagree with the model configuration."""


class StaleCache(AisPropError):
    """Backward was called with a cache whose inputs or parameters changed."""


class NonFiniteGradient(AisPropError, FloatingPointError):
    """An optimizer step received NaN or infinite gradients."""


class DivergedError(AisPropError, FloatingPointError):
    """Training loss became non-finite."""
