import io

import numpy as np
import pytest

from jointnlu.corpus import Corpus, Utterance
from jointnlu.embeddings import (
    ContextualStore,
    EmbeddingFormatError,
    EmbeddingTable,
    MissingContextualVector,
    dump_contextual_bytes,
    load_contextual,
    load_embedding_text,
    oov_report,
    save_contextual,
)


def load(text, **kw):
    return load_embedding_text(io.StringIO(text), **kw)


def test_two_line_file():
    t = load("a 1.0 2.0\nb 3.0 4.0\n")
    assert t.dim == 2
    assert len(t) == 2
    vec, oov = t.lookup("b")
    assert vec.tolist() == [3.0, 4.0]
    assert not oov


def test_fasttext_header_skipped():
    rows = "".join(f"w{i} " + " ".join(["0.5"] * 300) + "\n" for i in range(3))
    t = load("2000000 300\n" + rows)
    assert t.dim == 300
    assert len(t) == 3
    assert "2000000" not in t


def test_dimension_mismatch_reports_line():
    good = "a " + " ".join(["1"] * 300) + "\n"
    bad = "b " + " ".join(["1"] * 299) + "\n"
    with pytest.raises(EmbeddingFormatError, match="line 2"):
        load(good + bad)


def test_expected_dim_enforced():
    with pytest.raises(EmbeddingFormatError, match="line 1"):
        load("a 1 2 3\n", expected_dim=2)


def test_non_numeric_component():
    with pytest.raises(EmbeddingFormatError, match="non-numeric"):
        load("a 1.0 x\n")


def test_duplicate_last_wins():
    t = load("a 1 1\na 2 2\n")
    assert t.lookup("a")[0].tolist() == [2.0, 2.0]
    assert t.duplicates == 1


def test_lookup_lowercase_fallback_and_zero_oov():
    t = load("pittsburgh 1 2\n")
    vec, oov = t.lookup("Pittsburgh")
    assert vec.tolist() == [1.0, 2.0] and not oov
    vec, oov = t.lookup("boston")
    assert vec.tolist() == [0.0, 0.0] and oov


def test_lookup_vectors_are_read_only():
    t = load("a 1 2\n")
    with pytest.raises(ValueError):
        t.lookup("a")[0][0] = 5.0
    with pytest.raises(ValueError):
        t.lookup("zz")[0][0] = 5.0


def _corpus(*token_lists):
    return Corpus(tuple(Utterance(i, tuple(ts), ("O",) * len(ts), "x") for i, ts in enumerate(token_lists)))


def test_oov_report_counts_occurrences():
    t = load("a 1\nb 1\n")
    assert oov_report(t, _corpus(["a", "b"], ["B"]))["oov_rate"] == 0.0
    empty = EmbeddingTable([], np.zeros((0, 3)))
    assert oov_report(empty, _corpus(["a", "b"]))["oov_rate"] == 1.0
    # 2 of 4 occurrences covered; counting oracle below
    corpus = _corpus(["a", "x"], ["x", "b"])
    rep = oov_report(t, corpus)
    brute = sum(tok not in ("a", "b") for u in corpus for tok in u.tokens) / 4
    assert rep["oov_rate"] == brute == 0.5
    assert rep["oov_tokens"] == ["x"]


def _store():
    rng = np.random.default_rng(0)
    return ContextualStore(4, {(0, 0): rng.random(4).astype(np.float32),
                               (0, 1): rng.random(4).astype(np.float32),
                               (7, 3): rng.random(4).astype(np.float32)})


def test_contextual_roundtrip():
    s = _store()
    buf = io.BytesIO()
    save_contextual(s, buf)
    blob = buf.getvalue()
    again = load_contextual(io.BytesIO(blob))
    assert again.dim == 4
    assert again.entries.keys() == s.entries.keys()
    for k in s.entries:
        assert np.array_equal(again.get(*k), s.entries[k])
    assert dump_contextual_bytes(again) == blob


def test_contextual_header_layout():
    blob = dump_contextual_bytes(_store())
    assert blob[:4] == b"CTXV"
    assert blob[4] == 1
    assert int.from_bytes(blob[5:9], "little") == 4
    assert int.from_bytes(blob[9:17], "little") == 3
    assert len(blob) == 17 + 3 * (4 + 2 + 4 * 4)


def test_contextual_lookup_and_missing_key():
    s = _store()
    assert np.array_equal(s.get(0, 0), s.entries[(0, 0)])
    with pytest.raises(MissingContextualVector, match="missing contextual vector"):
        s.get(5, 2)


def test_contextual_truncated():
    blob = dump_contextual_bytes(_store())
    with pytest.raises(EmbeddingFormatError, match="truncated"):
        load_contextual(io.BytesIO(blob[:-1]))
    with pytest.raises(EmbeddingFormatError, match="truncated"):
        load_contextual(io.BytesIO(blob[:10]))


def test_contextual_version_mismatch():
    blob = bytearray(dump_contextual_bytes(_store()))
    blob[4] = 2
    with pytest.raises(EmbeddingFormatError, match="version"):
        load_contextual(io.BytesIO(bytes(blob)))


def test_contextual_record_length_disagrees_with_header():
    # header says dim 768 but the single record carries 767 floats
    import struct
    blob = struct.pack("<4sBIQ", b"CTXV", 1, 768, 1) + struct.pack("<IH", 0, 0) + b"\0" * (767 * 4)
    with pytest.raises(EmbeddingFormatError):
        load_contextual(io.BytesIO(blob))
    blob = struct.pack("<4sBIQ", b"CTXV", 1, 768, 1) + struct.pack("<IH", 0, 0) + b"\0" * (769 * 4)
    with pytest.raises(EmbeddingFormatError):
        load_contextual(io.BytesIO(blob))


def test_contextual_vectors_for_utterance():
    s = _store()
    u = Utterance(0, ("a", "b"), ("O", "O"), "x")
    assert s.vectors_for(u).shape == (2, 4)
    with pytest.raises(MissingContextualVector):
        s.vectors_for(Utterance(0, ("a", "b", "c"), ("O",) * 3, "x"))
