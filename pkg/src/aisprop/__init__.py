"""SMILES parsing, Atom-in-SMILES tokenization and stacked sequence regressors."""

__version__ = "0.1.0"
