from collections import Counter

import numpy as np
import pytest

from hicom.tokenizer import PAD_ID, UNK_ID, EmptyVocabError, TokenTable, Vocabulary, build_vocab, pre_tokenize


def test_frequency_order():
    v = build_vocab(["a a b"], max_size=10)
    assert v.size == 4 and v.encode("a b") == [2, 3]


def test_tie_broken_lexicographically():
    v = build_vocab(["zeta alpha"])
    assert v.encode("alpha zeta") == [2, 3]


def test_matches_counting_oracle():
    rng = np.random.default_rng(0)
    corpus = [" ".join(f"t{x}" for x in rng.zipf(1.5, rng.integers(1, 30)) % 500) for _ in range(1000)]
    v = build_vocab(corpus, max_size=100, min_freq=2)
    counts = Counter(w for doc in corpus for w in doc.split())
    expected = [w for w, c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])) if c >= 2][:98]
    assert [v.encode(w)[0] for w in expected] == list(range(2, 2 + len(expected)))
    assert v.size == 2 + len(expected)


def test_unknown_maps_to_unk():
    assert build_vocab(["a"]).encode("b") == [UNK_ID]


def test_empty_vocab_rejected():
    with pytest.raises(EmptyVocabError):
        build_vocab(["", "   "])
    with pytest.raises(EmptyVocabError):
        build_vocab(["a"], min_freq=2)
    with pytest.raises(ValueError):
        build_vocab(["a"], max_size=2)


def test_vocab_round_trip(tmp_path):
    v = build_vocab(["x y y z"])
    v.save(tmp_path / "v.jsonl")
    assert Vocabulary.load(tmp_path / "v.jsonl").token_to_id == v.token_to_id


def test_padding_and_truncation():
    v = build_vocab(["glass tumblers a b c d e f"])
    table = pre_tokenize(["Glass Tumblers", "", "a b c d e f glass tumblers"], v, 5)
    assert table[0].mask.tolist() == [1, 1, 0, 0, 0]
    assert table[0].ids[2:].tolist() == [PAD_ID] * 3
    assert table[1].mask.tolist() == [0] * 5
    assert table[2].ids.tolist() == v.encode("a b c d e") and table[2].mask.all()


def test_token_table_round_trip(tmp_path):
    v = build_vocab(["p q r"])
    t = pre_tokenize(["p q", "r", ""], v, 4)
    t.save(tmp_path / "t.bin")
    u = TokenTable.load(tmp_path / "t.bin")
    assert np.array_equal(t.ids, u.ids) and np.array_equal(t.mask, u.mask)
