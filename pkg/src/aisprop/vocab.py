"""Token vocabularies with frequency counts and reserved special tokens."""

from __future__ import annotations

import hashlib
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from aisprop.errors import EmptyCorpus, FormatError

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
SPECIALS: tuple[str, ...] = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = range(4)


@dataclass(frozen=True)
class Vocabulary:
    """Bidirectional token/id map.  Ids ``0..3`` are the special tokens."""

    token_of: tuple[str, ...]
    freq: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.token_of[: len(SPECIALS)] != SPECIALS:
            raise FormatError("vocabulary must start with the special tokens " + ", ".join(SPECIALS))
        if len(set(self.token_of)) != len(self.token_of):
            raise FormatError("vocabulary contains duplicate tokens")

    @property
    def id_of(self) -> dict[str, int]:
        ids = self.__dict__.get("_id_of")
        if ids is None:
            ids = {t: i for i, t in enumerate(self.token_of)}
            object.__setattr__(self, "_id_of", ids)
        return ids

    @property
    def specials(self) -> tuple[str, ...]:
        return SPECIALS

    def __len__(self) -> int:
        return len(self.token_of)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    @property
    def num_regular(self) -> int:
        """Size excluding the special tokens."""
        return len(self.token_of) - len(SPECIALS)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self.token_of == other.token_of and dict(self.freq) == dict(other.freq)

    def __hash__(self) -> int:
        return hash(self.token_of)

    def fingerprint(self) -> str:
        """SHA-256 over the serialized form; identifies a vocabulary in manifests."""
        return hashlib.sha256(self.to_tsv().encode("utf-8")).hexdigest()

    def encode(self, tokens: Sequence[str], max_len: int) -> tuple[list[int], int]:
        """``BOS tokens EOS``, truncated to ``max_len`` and then padded.

        Returns the id list and its length before padding.
        """
        if max_len < 2:
            raise ValueError("max_len must be at least 2")
        id_of = self.id_of
        ids = [BOS_ID] + [id_of.get(t, UNK_ID) for t in tokens] + [EOS_ID]
        ids = ids[:max_len]
        length = len(ids)
        return ids + [PAD_ID] * (max_len - length), length

    def decode(self, ids: Sequence[int]) -> list[str]:
        """Drop specials and map ids back to tokens."""
        return [self.token_of[i] for i in ids if i >= len(SPECIALS)]

    def to_tsv(self) -> str:
        rows = [f"{tok}\t{i}\t{self.freq.get(tok, 0)}" for i, tok in enumerate(self.token_of)]
        return "\n".join(rows) + "\n"


def encode(v: Vocabulary, tokens: Sequence[str], max_len: int) -> tuple[list[int], int]:
    return v.encode(tokens, max_len)


def build_vocab(corpus: Iterable[Sequence[str] | str], min_count: int = 1) -> Vocabulary:
    """Count tokens and assign ids by descending frequency, ties alphabetical.

    Each corpus item is either a token list or a space-separated line.

    Raises:
        EmptyCorpus: the corpus yields no sequences at all.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    n_seq = 0
    for seq in corpus:
        n_seq += 1
        counts.update(seq.split() if isinstance(seq, str) else seq)
    if n_seq == 0:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    for special in SPECIALS:
        counts.pop(special, None)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(SPECIALS + tuple(kept), {t: counts[t] for t in kept})


def save_vocab(v: Vocabulary, path: str | os.PathLike) -> None:
    """Write ``token<TAB>id<TAB>freq`` lines, specials first."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(v.to_tsv(), encoding="utf-8")
    os.replace(tmp, path)


def load_vocab(path: str | os.PathLike) -> Vocabulary:
    tokens: list[str] = []
    freq: dict[str, int] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not UTF-8 text") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
        tok, idx, count = parts
        try:
            idx_i, count_i = int(idx), int(count)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: id and frequency must be integers") from None
        if idx_i != len(tokens) or not tok:
            raise FormatError(f"{path}:{lineno}: ids must be dense and ordered")
        tokens.append(tok)
        if tok not in SPECIALS:
            freq[tok] = count_i
    if len(tokens) < len(SPECIALS):
        raise FormatError(f"{path}: missing special tokens")
    return Vocabulary(tuple(tokens), freq)
