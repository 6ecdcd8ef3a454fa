"""Molecular weight from a parsed molecule."""

from __future__ import annotations

from aisprop.elements import ATOMIC_WEIGHTS, HYDROGEN_MASS
from aisprop.errors import UnknownElement
from aisprop.molgraph import Molecule, parse_smiles


def mol_weight(m: Molecule | str) -> float:
    """Average molecular mass in g/mol.

    An atom with an isotope label contributes its integer mass number
    instead of the standard atomic weight.  Every explicit or implicit
    hydrogen adds 1.008.
    """
    if isinstance(m, str):
        m = parse_smiles(m)
    total = 0.0
    for atom in m.atoms:
        if atom.isotope:
            total += float(atom.isotope)
        else:
            try:
                total += ATOMIC_WEIGHTS[atom.element]
            except KeyError:
                raise UnknownElement(f"no standard atomic weight for {atom.element}") from None
        total += HYDROGEN_MASS * atom.total_h
    return total
