import pytest
from hypothesis import given
from hypothesis import strategies as st

from aisprop.errors import EmptyCorpus, FormatError
from aisprop.vocab import (
    BOS_ID, EOS_ID, PAD_ID, SPECIALS, UNK_ID, Vocabulary, build_vocab, encode, load_vocab, save_vocab,
)

CORPUS = [["C", "C", "O"], ["C", "N"], ["O", "C"]]


class TestBuild:
    def test_specials_first_then_frequency(self):
        v = build_vocab(CORPUS)
        assert v.token_of[:4] == SPECIALS
        assert v.token_of[4:] == ("C", "O", "N")
        assert v.freq == {"C": 4, "O": 2, "N": 1}

    def test_ties_break_alphabetically(self):
        assert build_vocab([["b", "a", "c"]]).token_of[4:] == ("a", "b", "c")

    def test_min_count(self):
        v = build_vocab(CORPUS, min_count=2)
        assert v.num_regular == 2 and "N" not in v

    def test_string_lines_are_split(self):
        assert build_vocab(["C C O", "C N"]).freq["C"] == 3

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            build_vocab([])

    def test_corpus_of_empty_sequences_gives_specials_only(self):
        assert build_vocab([[]]).num_regular == 0

    def test_bad_min_count(self):
        with pytest.raises(ValueError):
            build_vocab(CORPUS, min_count=0)

    @given(st.lists(st.lists(st.sampled_from("abcdefgh"), max_size=8), min_size=1, max_size=20))
    def test_ids_are_bijective(self, corpus):
        v = build_vocab(corpus)
        assert len(set(v.token_of)) == len(v)
        assert all(v.id_of[t] == i for i, t in enumerate(v.token_of))
        counts = [v.freq[t] for t in v.token_of[4:]]
        assert counts == sorted(counts, reverse=True)


class TestEncode:
    def test_bos_eos_and_padding(self):
        v = build_vocab(CORPUS)
        ids, n = v.encode(["C", "O"], max_len=6)
        assert ids == [BOS_ID, v.id_of["C"], v.id_of["O"], EOS_ID, PAD_ID, PAD_ID]
        assert n == 4

    def test_unknown_token(self):
        v = build_vocab(CORPUS)
        assert encode(v, ["Xe"], 4)[0][1] == UNK_ID

    def test_truncation(self):
        v = build_vocab(CORPUS)
        ids, n = v.encode(["C"] * 10, max_len=5)
        assert len(ids) == 5 and n == 5 and ids[0] == BOS_ID

    def test_decode_drops_specials(self):
        v = build_vocab(CORPUS)
        ids, _ = v.encode(["N", "C"], 8)
        assert v.decode(ids) == ["N", "C"]


class TestPersistence:
    def test_round_trip(self, tmp_path):
        v = build_vocab(CORPUS)
        save_vocab(v, tmp_path / "v.tsv")
        again = load_vocab(tmp_path / "v.tsv")
        assert again == v and again.fingerprint() == v.fingerprint()

    def test_fingerprint_changes_with_content(self):
        assert build_vocab(CORPUS).fingerprint() != build_vocab(CORPUS + [["S"]]).fingerprint()

    @pytest.mark.parametrize("text", ["<pad>\t0\t0\n", "<pad>\t0\n", "<pad>\tx\t0\n",
                                      "<pad>\t0\t0\n<unk>\t1\t0\n<bos>\t2\t0\n<eos>\t4\t0\n"])
    def test_malformed_files(self, tmp_path, text):
        p = tmp_path / "bad.tsv"
        p.write_text(text)
        with pytest.raises(FormatError):
            load_vocab(p)

    def test_specials_required(self):
        with pytest.raises(FormatError):
            Vocabulary(("a", "b"))
