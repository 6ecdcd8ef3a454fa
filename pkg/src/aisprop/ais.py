"""Atom-in-SMILES (AIS) tokenization.

Every atom of a SMILES string becomes one token ``[central;ring;neighbors]``:

* ``central`` -- the atom symbol (lowercase when aromatic) with isotope
  prefix, hydrogen count, charge and chirality, e.g. ``CH2``, ``NH3+``,
  ``CH@@``, ``13CH4``;
* ``ring`` -- ``R`` when the atom lies on a cycle, ``!R`` otherwise;
* ``neighbors`` -- the symbols of all bonded non-hydrogen atoms, sorted,
  concatenated without separators.

Branches, bonds, ring-closure labels and dots are kept verbatim as
structural tokens, so the token stream maps back onto the source string.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, Union

from aisprop.elements import AROMATIC_ELEMENTS, BARE_AROMATIC, ELEMENTS, ORGANIC_SUBSET
from aisprop.errors import MalformedToken, SmilesError, ValenceError
from aisprop.molgraph import (
    Atom,
    Chirality,
    bond_order_sum,
    bracket_symbol,
    format_charge,
    format_hcount,
    implicit_hydrogen_count,
    lex_smiles,
    parse_smiles,
)

__all__ = [
    "AisSequence",
    "AtomToken",
    "StructuralToken",
    "ais_to_smiles",
    "neighbor_sort_key",
    "parse_ais_line",
    "parse_ais_token",
    "smiles_atom_tokenize",
    "smiles_to_ais",
]

# Neighbor symbols outside this set are wrapped in braces so that the
# concatenated neighbor field stays uniquely decodable ("Co" vs "C" + "o").
_PLAIN_NEIGHBORS = frozenset(ORGANIC_SUBSET | BARE_AROMATIC)


def neighbor_sort_key(symbol: str) -> tuple[str, bool]:
    """Alphabetical, with a lowercase (aromatic) symbol after its uppercase twin."""
    return symbol.lower(), symbol[:1].islower()


def _render_neighbor(symbol: str) -> str:
    return symbol if symbol in _PLAIN_NEIGHBORS else "{" + symbol + "}"


@dataclass(frozen=True)
class StructuralToken:
    symbol: str

    def render(self) -> str:
        return self.symbol


@dataclass(frozen=True)
class AtomToken:
    """One atom in AIS form.  ``neighbors`` is normalized to sorted order."""

    element: str
    aromatic: bool = False
    hcount: int = 0
    charge: int = 0
    isotope: int | None = None
    chirality: Chirality = Chirality.NONE
    in_ring: bool = False
    neighbors: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.neighbors, key=neighbor_sort_key))
        if ordered != self.neighbors:
            object.__setattr__(self, "neighbors", ordered)

    @property
    def symbol(self) -> str:
        return self.element.lower() if self.aromatic else self.element

    @property
    def central(self) -> str:
        iso = str(self.isotope) if self.isotope else ""
        return (f"{iso}{self.symbol}{format_hcount(self.hcount)}"
                f"{format_charge(self.charge)}{self.chirality.value}")

    @property
    def ring_flag(self) -> str:
        return "R" if self.in_ring else "!R"

    def render(self) -> str:
        nbrs = "".join(_render_neighbor(n) for n in self.neighbors)
        return f"[{self.central};{self.ring_flag};{nbrs}]"


AisToken = Union[AtomToken, StructuralToken]


@dataclass(frozen=True)
class AisSequence:
    tokens: tuple[AisToken, ...]
    source_smiles: str = ""

    def render(self) -> list[str]:
        return [t.render() for t in self.tokens]

    def to_line(self) -> str:
        """Single-line, space-separated on-disk form."""
        return " ".join(self.render())

    @property
    def atom_tokens(self) -> list[AtomToken]:
        return [t for t in self.tokens if isinstance(t, AtomToken)]


def smiles_to_ais(s: str) -> AisSequence:
    """Convert a SMILES string to its AIS token sequence."""
    mol = parse_smiles(s)
    tokens: list[AisToken] = []
    atom_idx = 0
    for lex in lex_smiles(mol.source):
        if lex.kind != "atom":
            tokens.append(StructuralToken(lex.text))
            continue
        atom = mol.atoms[atom_idx]
        atom_idx += 1
        nbrs = tuple(mol.atoms[j].symbol for j in mol.neighbors(atom.index)
                     if mol.atoms[j].element != "H")
        tokens.append(AtomToken(
            element=atom.element,
            aromatic=atom.aromatic,
            hcount=atom.total_h,
            charge=atom.formal_charge,
            isotope=atom.isotope,
            chirality=atom.chirality,
            in_ring=atom.in_ring,
            neighbors=nbrs,
        ))
    return AisSequence(tuple(tokens), mol.source)


# ---------------------------------------------------------------------------
# Decoding

_TOKEN = re.compile(r"\[(?P<central>[^;\[\]]+);(?P<ring>R|!R);(?P<nbrs>[^;\[\]]*)\]")
_CENTRAL = re.compile(
    r"(?P<isotope>\d+)?(?P<symbol>[A-Z][a-z]?|se|as|[bcnops])"
    r"(?P<hcount>H\d*)?(?P<charge>[+-]\d*)?(?P<chiral>@@|@)?"
)
_NEIGHBOR = re.compile(r"\{(?P<braced>[A-Za-z]{1,2})\}|(?P<plain>Cl|Br|[BCNOPSFI]|[bcnops])")
_STRUCTURAL = re.compile(r"[()\-=#:/\\.]|\d|%\d\d")


def _check_symbol(sym: str, text: str) -> tuple[str, bool]:
    element = sym.capitalize()
    aromatic = sym.islower()
    if element not in ELEMENTS:
        raise MalformedToken(f"unknown element {sym!r} in token {text!r}")
    if aromatic and element not in AROMATIC_ELEMENTS:
        raise MalformedToken(f"element {element} cannot be aromatic in token {text!r}")
    return element, aromatic


def parse_ais_token(text: str) -> AisToken:
    """Inverse of ``render`` for a single token string."""
    if _STRUCTURAL.fullmatch(text):
        return StructuralToken(text)
    m = _TOKEN.fullmatch(text)
    if m is None:
        raise MalformedToken(f"not an AIS token: {text!r}")
    c = _CENTRAL.fullmatch(m["central"])
    if c is None:
        raise MalformedToken(f"malformed central atom {m['central']!r} in {text!r}")
    element, aromatic = _check_symbol(c["symbol"], text)
    hc = c["hcount"]
    hcount = 0 if hc is None else (int(hc[1:]) if len(hc) > 1 else 1)
    ch = c["charge"]
    charge = 0 if ch is None else (1 if ch[0] == "+" else -1) * (int(ch[1:]) if len(ch) > 1 else 1)
    isotope = int(c["isotope"]) if c["isotope"] else None
    chir = Chirality(c["chiral"]) if c["chiral"] else Chirality.NONE

    nbrs: list[str] = []
    pos, raw = 0, m["nbrs"]
    while pos < len(raw):
        nm = _NEIGHBOR.match(raw, pos)
        if nm is None:
            raise MalformedToken(f"cannot read neighbors {raw!r} in {text!r}")
        sym = nm["braced"] or nm["plain"]
        if nm["braced"] and sym in _PLAIN_NEIGHBORS:
            raise MalformedToken(f"needless braces around {sym!r} in {text!r}")
        _check_symbol(sym, text)
        nbrs.append(sym)
        pos = nm.end()
    if [neighbor_sort_key(n) for n in nbrs] != sorted(neighbor_sort_key(n) for n in nbrs):
        raise MalformedToken(f"neighbors out of canonical order in {text!r}")
    return AtomToken(element, aromatic, hcount, charge, isotope, chir, m["ring"] == "R", tuple(nbrs))


def parse_ais_line(line: str) -> AisSequence:
    """Read the space-separated on-disk form back into a sequence."""
    return AisSequence(tuple(parse_ais_token(t) for t in line.split()))


def _token_atom(tok: AtomToken) -> Atom:
    return Atom(index=0, element=tok.element, aromatic=tok.aromatic,
                formal_charge=tok.charge, isotope=tok.isotope,
                chirality=tok.chirality, explicit_h=tok.hcount)


def _bare_candidate(tok: AtomToken) -> bool:
    if tok.charge or tok.isotope or tok.chirality is not Chirality.NONE:
        return False
    if tok.aromatic:
        return tok.symbol in BARE_AROMATIC
    return tok.element in ORGANIC_SUBSET


def ais_to_smiles(seq: AisSequence | Sequence[AisToken | str]) -> str:
    """Rebuild SMILES from AIS tokens alone.

    Each atom token becomes a bare organic-subset symbol when the default
    valence model reproduces its hydrogen count in context, and a bracket
    atom otherwise.  ``source_smiles`` is never consulted.

    Raises:
        MalformedToken: a token is unreadable or the rebuilt string is not
            valid SMILES.
    """
    raw = seq.tokens if isinstance(seq, AisSequence) else seq
    tokens = [parse_ais_token(t) if isinstance(t, str) else t for t in raw]
    atom_pos = [i for i, t in enumerate(tokens) if isinstance(t, AtomToken)]
    pieces = [bracket_symbol(_token_atom(t), t.hcount) if isinstance(t, AtomToken) else t.symbol
              for t in tokens]
    try:
        skeleton = parse_smiles("".join(pieces))
    except SmilesError as exc:
        raise MalformedToken(f"tokens do not form valid SMILES: {exc}") from exc
    for atom_idx, pos in enumerate(atom_pos):
        tok = tokens[pos]
        assert isinstance(tok, AtomToken)
        if not _bare_candidate(tok):
            continue
        try:
            h = implicit_hydrogen_count(tok.element, tok.aromatic, bond_order_sum(skeleton, atom_idx))
        except ValenceError:
            continue
        if h == tok.hcount:
            pieces[pos] = tok.symbol
    return "".join(pieces)


def smiles_atom_tokenize(s: str) -> list[str]:
    """Atom-level SMILES tokens; bracket atoms and ``%nn`` labels stay whole."""
    mol = parse_smiles(s)
    return [lex.text for lex in lex_smiles(mol.source)]
