"""SMILES parsing into molecular graphs.

The parser is a single left-to-right pass over a lexical token stream.  It
builds atoms in source order, resolves ring closures and branches, then
derives implicit hydrogen counts from the default-valence table and ring
membership from a bridge search.

Aromaticity is taken as written (lowercase symbols); no perception or
kekulization happens here.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Sequence

from aisprop.elements import (
    AROMATIC_ELEMENTS,
    BARE_AROMATIC,
    DEFAULT_VALENCES,
    ELEMENTS,
    ORGANIC_SUBSET,
)
from aisprop.errors import RingClosureError, SmilesSyntaxError, ValenceError

__all__ = [
    "Atom",
    "Bond",
    "BondOrder",
    "Chirality",
    "Lexeme",
    "Molecule",
    "build_molecule",
    "compute_implicit_hydrogens",
    "implicit_hydrogen_count",
    "lex_smiles",
    "parse_smiles",
    "perceive_rings",
    "write_smiles",
]


class Chirality(enum.Enum):
    NONE = ""
    ANTICLOCKWISE = "@"
    CLOCKWISE = "@@"


class BondOrder(enum.Enum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def valence(self) -> int:
        """Contribution to the valence sum; aromatic bonds count as one."""
        return 1 if self is BondOrder.AROMATIC else self.value


_BOND_SYMBOLS = {
    "-": BondOrder.SINGLE,
    "/": BondOrder.SINGLE,
    "\\": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
}


@dataclass(frozen=True)
class Atom:
    index: int
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    isotope: int | None = None
    chirality: Chirality = Chirality.NONE
    explicit_h: int | None = None
    implicit_h: int = 0
    in_ring: bool = False
    atom_class: int | None = None

    @property
    def bracket(self) -> bool:
        return self.explicit_h is not None

    @property
    def total_h(self) -> int:
        return (self.explicit_h or 0) + self.implicit_h

    @property
    def symbol(self) -> str:
        """Element symbol with aromaticity encoded by case."""
        return self.element.lower() if self.aromatic else self.element


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE
    in_ring: bool = False
    stereo: str | None = None  # "/" or "\\" as written

    def other(self, i: int) -> int:
        return self.b if i == self.a else self.a


@dataclass(frozen=True)
class Molecule:
    """Attributed molecular graph.

    ``token_spans[i]`` is the ``(start, end)`` slice of ``source`` holding the
    symbol of atom ``i``.  Molecules built programmatically have an empty
    ``source`` and no spans.
    """

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    source: str = ""
    token_spans: tuple[tuple[int, int], ...] = ()

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        """Bond indices incident to each atom, in bond creation order."""
        adj: list[list[int]] = [[] for _ in self.atoms]
        for k, bond in enumerate(self.bonds):
            adj[bond.a].append(k)
            adj[bond.b].append(k)
        return tuple(tuple(x) for x in adj)

    def neighbors(self, i: int) -> list[int]:
        return [self.bonds[k].other(i) for k in self.adjacency[i]]

    def bond_between(self, i: int, j: int) -> Bond | None:
        for k in self.adjacency[i]:
            if self.bonds[k].other(i) == j:
                return self.bonds[k]
        return None

    @property
    def num_heavy_atoms(self) -> int:
        return sum(1 for a in self.atoms if a.element != "H")


# ---------------------------------------------------------------------------
# Lexer


@dataclass(frozen=True)
class Lexeme:
    """One lexical unit of a SMILES string.

    ``kind`` is one of ``atom``, ``bond``, ``open``, ``close``, ``ring``, ``dot``.
    """

    kind: str
    text: str
    start: int
    end: int


_BRACKET_ATOM = re.compile(
    r"\[(?P<isotope>\d+)?"
    r"(?P<symbol>[A-Z][a-z]?|se|as|[bcnops])"
    r"(?P<chiral>@@|@)?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>\+{2,}|-{2,}|[+-]\d*)?"
    r"(?::(?P<cls>\d+))?\]"
)

_UNSUPPORTED = {
    "*": "wildcard atoms are not supported",
    "$": "quadruple bonds are not supported",
    ">": "reaction SMILES are not supported",
}


def lex_smiles(s: str) -> list[Lexeme]:
    """Split a SMILES string into lexemes; bracket atoms are single lexemes."""
    out: list[Lexeme] = []
    i, n = 0, len(s)
    while i < n:
        ch = s[i]
        if ch == "[":
            j = s.find("]", i + 1)
            if j < 0:
                raise SmilesSyntaxError("unclosed '['", s, i)
            out.append(Lexeme("atom", s[i : j + 1], i, j + 1))
            i = j + 1
        elif ch in "CB" and s.startswith(("Cl", "Br"), i):
            out.append(Lexeme("atom", s[i : i + 2], i, i + 2))
            i += 2
        elif ch in ORGANIC_SUBSET or ch in BARE_AROMATIC:
            out.append(Lexeme("atom", ch, i, i + 1))
            i += 1
        elif ch in _BOND_SYMBOLS:
            out.append(Lexeme("bond", ch, i, i + 1))
            i += 1
        elif ch == "(":
            out.append(Lexeme("open", ch, i, i + 1))
            i += 1
        elif ch == ")":
            out.append(Lexeme("close", ch, i, i + 1))
            i += 1
        elif ch.isdigit() and ch.isascii():
            out.append(Lexeme("ring", ch, i, i + 1))
            i += 1
        elif ch == "%":
            digits = s[i + 1 : i + 3]
            if len(digits) != 2 or not (digits.isascii() and digits.isdigit()):
                raise SmilesSyntaxError("'%' must be followed by two digits", s, i)
            out.append(Lexeme("ring", s[i : i + 3], i, i + 3))
            i += 3
        elif ch == ".":
            out.append(Lexeme("dot", ch, i, i + 1))
            i += 1
        elif ch in _UNSUPPORTED:
            raise SmilesSyntaxError(_UNSUPPORTED[ch], s, i)
        else:
            raise SmilesSyntaxError(f"unexpected character {ch!r}", s, i)
    return out


def _parse_charge(text: str | None) -> int:
    if not text:
        return 0
    sign = 1 if text[0] == "+" else -1
    rest = text[1:]
    if not rest:
        return sign
    if rest.isdigit():
        return sign * int(rest)
    return sign * len(text)  # "++" / "---"


def _atom_from_lexeme(lex: Lexeme, index: int, s: str) -> Atom:
    text = lex.text
    if text[0] != "[":
        return Atom(index=index, element=text.capitalize() if len(text) == 1 else text,
                    aromatic=text.islower())
    m = _BRACKET_ATOM.fullmatch(text)
    if m is None:
        raise SmilesSyntaxError(f"malformed bracket atom {text!r}", s, lex.start)
    sym = m["symbol"]
    aromatic = sym.islower()
    element = sym.capitalize()
    if element not in ELEMENTS:
        raise SmilesSyntaxError(f"unknown element {sym!r}", s, lex.start)
    if aromatic and element not in AROMATIC_ELEMENTS:
        raise SmilesSyntaxError(f"element {element} cannot be aromatic", s, lex.start)
    hcount = m["hcount"]
    explicit_h = 0 if hcount is None else (int(hcount[1:]) if len(hcount) > 1 else 1)
    if element == "H" and explicit_h:
        raise SmilesSyntaxError("a hydrogen atom cannot carry hydrogens", s, lex.start)
    isotope = int(m["isotope"]) if m["isotope"] else None
    if isotope == 0:
        raise SmilesSyntaxError("isotope mass number must be positive", s, lex.start)
    chir = Chirality(m["chiral"]) if m["chiral"] else Chirality.NONE
    cls = int(m["cls"]) if m["cls"] else None
    return Atom(index=index, element=element, aromatic=aromatic,
                formal_charge=_parse_charge(m["charge"]), isotope=isotope,
                chirality=chir, explicit_h=explicit_h, atom_class=cls)


# ---------------------------------------------------------------------------
# Parser


def _coerce_input(s: str | bytes) -> str:
    if isinstance(s, (bytes, bytearray)):
        try:
            s = bytes(s).decode("ascii")
        except UnicodeDecodeError as exc:
            raise SmilesSyntaxError("SMILES must be ASCII", "", exc.start) from None
    if not isinstance(s, str):
        raise SmilesSyntaxError(f"expected a string, got {type(s).__name__}")
    if not s:
        raise SmilesSyntaxError("empty SMILES string")
    if not s.isascii():
        pos = next(i for i, c in enumerate(s) if not c.isascii())
        raise SmilesSyntaxError("SMILES must be ASCII", s.encode("ascii", "replace").decode(), pos)
    return s


def _build_graph(s: str) -> tuple[list[Atom], list[Bond], list[tuple[int, int]]]:
    lexemes = lex_smiles(s)
    atoms: list[Atom] = []
    bonds: list[Bond] = []
    spans: list[tuple[int, int]] = []
    bonded: set[tuple[int, int]] = set()

    prev: int | None = None
    pending: Lexeme | None = None
    branches: list[int] = []
    open_rings: dict[str, tuple[int, Lexeme | None, int]] = {}
    last_kind = "dot"  # start behaves like the beginning of a component

    def add_bond(a: int, b: int, sym: Lexeme | None, pos: int) -> None:
        key = (min(a, b), max(a, b))
        if key in bonded:
            raise RingClosureError("duplicate bond between the same two atoms", s, pos)
        if sym is not None:
            order = _BOND_SYMBOLS[sym.text]
            stereo = sym.text if sym.text in "/\\" else None
        elif atoms[a].aromatic and atoms[b].aromatic:
            order, stereo = BondOrder.AROMATIC, None
        else:
            order, stereo = BondOrder.SINGLE, None
        bonded.add(key)
        bonds.append(Bond(a, b, order, stereo=stereo))

    for lex in lexemes:
        kind = lex.kind
        if kind == "atom":
            idx = len(atoms)
            atoms.append(_atom_from_lexeme(lex, idx, s))
            spans.append((lex.start, lex.end))
            if prev is not None:
                add_bond(prev, idx, pending, lex.start)
            elif pending is not None:
                raise SmilesSyntaxError("bond symbol without a preceding atom", s, pending.start)
            prev, pending = idx, None
        elif kind == "bond":
            if pending is not None:
                raise SmilesSyntaxError("two consecutive bond symbols", s, lex.start)
            if prev is None:
                raise SmilesSyntaxError("bond symbol without a preceding atom", s, lex.start)
            pending = lex
        elif kind == "open":
            if prev is None or pending is not None or last_kind == "open":
                raise SmilesSyntaxError("branch must follow an atom", s, lex.start)
            branches.append(prev)
        elif kind == "close":
            if not branches:
                raise SmilesSyntaxError("unbalanced ')'", s, lex.start)
            if pending is not None:
                raise SmilesSyntaxError("dangling bond symbol before ')'", s, pending.start)
            if last_kind == "open":
                raise SmilesSyntaxError("empty branch", s, lex.start)
            prev = branches.pop()
        elif kind == "ring":
            if prev is None or last_kind == "open":
                raise SmilesSyntaxError("ring label must follow an atom", s, lex.start)
            label = lex.text.lstrip("%")
            if label in open_rings:
                partner, first_bond, _ = open_rings.pop(label)
                if partner == prev:
                    raise RingClosureError(f"ring {lex.text} closes onto its own atom", s, lex.start)
                sym = pending if pending is not None else first_bond
                if (pending is not None and first_bond is not None
                        and _BOND_SYMBOLS[pending.text] is not _BOND_SYMBOLS[first_bond.text]):
                    raise RingClosureError(f"conflicting bond orders on ring {lex.text}", s, lex.start)
                add_bond(partner, prev, sym, lex.start)
            else:
                open_rings[label] = (prev, pending, lex.start)
            pending = None
        else:  # dot
            if pending is not None:
                raise SmilesSyntaxError("dangling bond symbol before '.'", s, pending.start)
            if branches:
                raise SmilesSyntaxError("'.' inside a branch", s, lex.start)
            if prev is None:
                raise SmilesSyntaxError("empty component", s, lex.start)
            prev = None
        last_kind = kind

    if pending is not None:
        raise SmilesSyntaxError("dangling bond symbol at end of string", s, pending.start)
    if branches:
        raise SmilesSyntaxError("unbalanced '('", s)
    if open_rings:
        label, (_, _, pos) = next(iter(open_rings.items()))
        raise RingClosureError(f"ring label {label} is never closed", s, pos)
    if prev is None:
        raise SmilesSyntaxError("empty component", s, len(s))
    return atoms, bonds, spans


def parse_smiles(s: str | bytes) -> Molecule:
    """Parse a SMILES string into a :class:`Molecule`.

    Atoms appear in the order their symbols occur in ``s``.  Implicit
    hydrogens and ring flags are resolved before returning.

    Raises:
        SmilesSyntaxError: malformed input of any kind.
        RingClosureError: unmatched or illegal ring-closure labels.
        ValenceError: an atom's bonds exceed its maximum valence.
    """
    s = _coerce_input(s)
    atoms, bonds, spans = _build_graph(s)
    mol = Molecule(tuple(atoms), tuple(bonds), s, tuple(spans))
    return perceive_rings(compute_implicit_hydrogens(mol))


# ---------------------------------------------------------------------------
# Hydrogens


def implicit_hydrogen_count(element: str, aromatic: bool, bond_sum: int) -> int:
    """Implicit hydrogens of a bare organic-subset atom.

    ``bond_sum`` adds up bond orders with aromatic bonds counted as one.  The
    smallest allowed valence that fits ``bond_sum`` is used.  An aromatic atom
    donates one more electron to its ring, so it gets one hydrogen fewer; the
    count is clamped at zero (pyrrole-type N, furan O).

    Raises:
        ValenceError: ``bond_sum`` is larger than the highest allowed valence.
    """
    valences = DEFAULT_VALENCES.get(element)
    if valences is None:
        raise ValenceError(f"{element} is not an organic-subset element")
    for v in valences:
        if v >= bond_sum:
            return max(0, v - bond_sum - (1 if aromatic else 0))
    raise ValenceError(f"{element} with bond order sum {bond_sum} exceeds valence {valences[-1]}")


def bond_order_sum(mol: Molecule, i: int) -> int:
    return sum(mol.bonds[k].order.valence for k in mol.adjacency[i])


def compute_implicit_hydrogens(m: Molecule) -> Molecule:
    """Return ``m`` with ``implicit_h`` filled in for every bare atom.

    Bracket atoms keep ``implicit_h == 0``.
    """
    new_atoms = []
    for atom in m.atoms:
        if atom.bracket:
            new_atoms.append(replace(atom, implicit_h=0) if atom.implicit_h else atom)
            continue
        try:
            h = implicit_hydrogen_count(atom.element, atom.aromatic, bond_order_sum(m, atom.index))
        except ValenceError as exc:
            pos = m.token_spans[atom.index][0] if m.token_spans else None
            raise ValenceError(f"atom {atom.index} ({atom.symbol}): {exc}", m.source, pos) from None
        new_atoms.append(replace(atom, implicit_h=h))
    return replace(m, atoms=tuple(new_atoms))


# ---------------------------------------------------------------------------
# Rings


def _bridges(n_atoms: int, edges: Sequence[tuple[int, int]]) -> set[int]:
    """Indices of bridge edges, by iterative low-link DFS."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n_atoms)]
    for k, (a, b) in enumerate(edges):
        adj[a].append((b, k))
        adj[b].append((a, k))
    disc = [-1] * n_atoms
    low = [0] * n_atoms
    bridges: set[int] = set()
    clock = 0
    for root in range(n_atoms):
        if disc[root] >= 0:
            continue
        disc[root] = low[root] = clock
        clock += 1
        # frame: (vertex, edge used to enter it, next adjacency position)
        stack = [(root, -1, 0)]
        while stack:
            v, via, pos = stack[-1]
            if pos < len(adj[v]):
                stack[-1] = (v, via, pos + 1)
                w, k = adj[v][pos]
                if k == via:
                    continue
                if disc[w] < 0:
                    disc[w] = low[w] = clock
                    clock += 1
                    stack.append((w, k, 0))
                else:
                    low[v] = min(low[v], disc[w])
            else:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[v])
                    if low[v] > disc[parent]:
                        bridges.add(via)
    return bridges


def perceive_rings(m: Molecule) -> Molecule:
    """Flag ring bonds (non-bridges) and ring atoms (incident to a ring bond)."""
    bridges = _bridges(len(m.atoms), [(b.a, b.b) for b in m.bonds])
    ring_atoms: set[int] = set()
    new_bonds = []
    for k, bond in enumerate(m.bonds):
        in_ring = k not in bridges
        if in_ring:
            ring_atoms.update((bond.a, bond.b))
        new_bonds.append(bond if bond.in_ring == in_ring else replace(bond, in_ring=in_ring))
    new_atoms = tuple(
        a if a.in_ring == (a.index in ring_atoms) else replace(a, in_ring=a.index in ring_atoms)
        for a in m.atoms
    )
    return replace(m, atoms=new_atoms, bonds=tuple(new_bonds))


# ---------------------------------------------------------------------------
# Construction and writing


def build_molecule(atoms: Iterable[Atom], bonds: Iterable[Bond]) -> Molecule:
    """Assemble a molecule from programmatic atoms and bonds.

    Atom indices are reassigned to list order; hydrogens and rings are
    recomputed.  The result has no ``source``.
    """
    atom_list = [replace(a, index=i) for i, a in enumerate(atoms)]
    bond_list = list(bonds)
    seen: set[tuple[int, int]] = set()
    for b in bond_list:
        if b.a == b.b:
            raise ValueError(f"self-bond on atom {b.a}")
        if not (0 <= b.a < len(atom_list) and 0 <= b.b < len(atom_list)):
            raise ValueError(f"bond ({b.a}, {b.b}) refers to a missing atom")
        key = (min(b.a, b.b), max(b.a, b.b))
        if key in seen:
            raise ValueError(f"duplicate bond {key}")
        seen.add(key)
    mol = Molecule(tuple(atom_list), tuple(bond_list))
    return perceive_rings(compute_implicit_hydrogens(mol))


def format_charge(charge: int) -> str:
    if charge == 0:
        return ""
    sign = "+" if charge > 0 else "-"
    return sign if abs(charge) == 1 else f"{sign}{abs(charge)}"


def format_hcount(h: int) -> str:
    return "" if h == 0 else ("H" if h == 1 else f"H{h}")


def bracket_symbol(atom: Atom, hcount: int) -> str:
    """Full bracket form in OpenSMILES order: isotope, symbol, chirality, H, charge."""
    iso = str(atom.isotope) if atom.isotope else ""
    cls = f":{atom.atom_class}" if atom.atom_class is not None else ""
    return (f"[{iso}{atom.symbol}{atom.chirality.value}{format_hcount(hcount)}"
            f"{format_charge(atom.formal_charge)}{cls}]")


def _needs_bracket(atom: Atom) -> bool:
    if atom.bracket or atom.formal_charge or atom.isotope or atom.atom_class is not None:
        return True
    if atom.chirality is not Chirality.NONE:
        return True
    if atom.aromatic:
        return atom.symbol not in BARE_AROMATIC
    return atom.element not in ORGANIC_SUBSET


def _bond_text(mol: Molecule, bond: Bond) -> str:
    if bond.stereo:
        return bond.stereo
    both_aromatic = mol.atoms[bond.a].aromatic and mol.atoms[bond.b].aromatic
    if bond.order is BondOrder.SINGLE:
        return "-" if both_aromatic else ""
    if bond.order is BondOrder.AROMATIC:
        return "" if both_aromatic else ":"
    return "=" if bond.order is BondOrder.DOUBLE else "#"


def _ring_label(n: int) -> str:
    return str(n) if n < 10 else f"%{n:02d}"


def write_smiles(m: Molecule) -> str:
    """Serialize a molecule.

    Parsed molecules return their source verbatim.  Programmatic molecules
    are written by depth-first traversal from the lowest-index atom of each
    component, visiting neighbors in index order.
    """
    if m.source:
        return m.source
    n = len(m.atoms)
    visited = [False] * n
    children: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    ring_opens: list[list[int]] = [[] for _ in range(n)]
    ring_closes: list[list[int]] = [[] for _ in range(n)]
    used: set[int] = set()
    roots: list[int] = []

    for root in range(n):
        if visited[root]:
            continue
        roots.append(root)
        visited[root] = True
        order = [root]
        stack = [(root, iter(sorted(m.adjacency[root], key=lambda k: m.bonds[k].other(root))))]
        while stack:
            v, it = stack[-1]
            for k in it:
                if k in used:
                    continue
                used.add(k)
                w = m.bonds[k].other(v)
                if visited[w]:
                    # back edge: w is an ancestor of v
                    ring_opens[w].append(k)
                    ring_closes[v].append(k)
                    continue
                visited[w] = True
                children[v].append((w, k))
                order.append(w)
                stack.append((w, iter(sorted(m.adjacency[w], key=lambda j, w=w: m.bonds[j].other(w)))))
                break
            else:
                stack.pop()

    out: list[str] = []
    free_labels: list[int] = []
    next_label = 1
    label_of: dict[int, int] = {}

    def emit_atom(v: int) -> None:
        nonlocal next_label
        atom = m.atoms[v]
        out.append(bracket_symbol(atom, atom.total_h) if _needs_bracket(atom) else atom.symbol)
        for k in ring_closes[v]:
            lab = label_of.pop(k)
            out.append(_ring_label(lab))
            free_labels.append(lab)
            free_labels.sort()
        for k in ring_opens[v]:
            if free_labels:
                lab = free_labels.pop(0)
            else:
                lab, next_label = next_label, next_label + 1
            label_of[k] = lab
            out.append(_bond_text(m, m.bonds[k]) + _ring_label(lab))

    for ci, root in enumerate(roots):
        if ci:
            out.append(".")
        work: list[object] = [(root, None)]
        while work:
            item = work.pop()
            if isinstance(item, str):
                out.append(item)
                continue
            v, k = item  # type: ignore[misc]
            if k is not None:
                out.append(_bond_text(m, m.bonds[k]))
            emit_atom(v)
            kids = children[v]
            if not kids:
                continue
            work.append(kids[-1])
            for child in reversed(kids[:-1]):
                work.extend([")", child, "("])
    return "".join(out)
