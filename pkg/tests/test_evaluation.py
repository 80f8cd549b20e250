import json

import numpy as np
import pytest
from helpers import brute_force_prf, brute_force_spans, memorization_corpus, random_embeddings, random_tag_pairs
from hypothesis import given
from hypothesis import strategies as st

from jointnlu.corpus import build_vocabularies
from jointnlu.evaluation import Span, decode_spans, encode_spans, entity_f1, evaluate, intent_accuracy
from jointnlu.model import ModelConfig, build

TAGS = ["O", "B-a", "I-a", "B-b", "I-b"]


def test_decode_all_outside():
    assert decode_spans(["O", "O", "O"]) == []


def test_decode_examples():
    assert decode_spans(["B-city", "I-city", "O", "B-date"]) == [Span("city", 0, 1), Span("date", 3, 3)]
    assert decode_spans(["I-city", "B-city"]) == [Span("city", 0, 0), Span("city", 1, 1)]
    for tags in (["B-city", "I-city", "O", "B-date"], ["I-city", "B-city"]):
        assert {(s.type, s.start, s.end) for s in decode_spans(tags)} == brute_force_spans(tags)


@given(st.lists(st.sampled_from(TAGS), min_size=1, max_size=20))
def test_decode_agrees_with_enumeration(tags):
    assert {(s.type, s.start, s.end) for s in decode_spans(tags)} == brute_force_spans(tags)


@st.composite
def span_sets(draw):
    # alternating gaps and span widths; the sequence length is their sum
    pieces = draw(st.lists(st.tuples(st.integers(0, 2), st.integers(1, 4), st.sampled_from("xyz")), max_size=5))
    spans, i = [], 0
    for gap, width, typ in pieces:
        i += gap
        spans.append(Span(typ, i, i + width - 1))
        i += width
    return spans, i + draw(st.integers(1, 2))


@given(span_sets())
def test_encode_decode_roundtrip(case):
    spans, n = case
    assert decode_spans(encode_spans(spans, n)) == spans


def test_f1_perfect_and_empty():
    gold = [["B-a", "I-a", "O"], ["O", "B-b"]]
    s = entity_f1(gold, gold)
    assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)
    s = entity_f1([["O"] * 3, ["O"] * 2], gold)
    assert s.recall == 0.0 and s.f1 == 0.0


def test_f1_partial_counts():
    gold = [["B-a", "I-a", "O", "B-b"]]
    pred = [["B-a", "O", "O", "B-b"]]
    s = entity_f1(pred, gold)
    assert s.counts == {"gold_spans": 2, "pred_spans": 2, "matched": 1}
    assert s.f1 == pytest.approx(0.5)
    assert s.per_type["b"]["f1"] == 1.0 and s.per_type["a"]["f1"] == 0.0
    assert s.token_level["precision"] == pytest.approx(2 / 2)
    assert s.token_level["recall"] == pytest.approx(2 / 3)


def test_f1_alignment_mismatch():
    with pytest.raises(ValueError):
        entity_f1([["O"]], [["O", "O"]])
    with pytest.raises(ValueError):
        entity_f1([["O"]], [])


def test_f1_matches_brute_force_on_random_pairs():
    pairs = random_tag_pairs(300, seed=1)
    pred, gold = [p for p, _ in pairs], [g for _, g in pairs]
    s = entity_f1(pred, gold)
    matched, n_pred, n_gold = brute_force_prf(pred, gold)
    assert s.counts == {"gold_spans": n_gold, "pred_spans": n_pred, "matched": matched}


@given(st.lists(st.tuples(st.lists(st.sampled_from(TAGS), min_size=3, max_size=3),
                          st.lists(st.sampled_from(TAGS), min_size=3, max_size=3)), min_size=1, max_size=5))
def test_f1_symmetry_and_bounds(pairs):
    pred, gold = [p for p, _ in pairs], [g for _, g in pairs]
    a, b = entity_f1(pred, gold), entity_f1(gold, pred)
    assert a.precision == b.recall and a.recall == b.precision
    for v in (a.precision, a.recall, a.f1):
        assert 0.0 <= v <= 1.0
    assert a.counts["matched"] <= min(a.counts["gold_spans"], a.counts["pred_spans"])


def test_intent_accuracy():
    assert intent_accuracy(["a", "b"], ["a", "b"]) == 1.0
    assert intent_accuracy(["a", "b"], ["c", "d"]) == 0.0
    gold = ["x"] * 893
    pred = ["x"] * 855 + ["y"] * 38
    assert intent_accuracy(pred, gold) == pytest.approx(855 / 893)
    assert abs(855 / 893 - 0.9575) < 1e-4
    with pytest.raises(ValueError):
        intent_accuracy([], [])


def test_evaluate_empty_corpus_rejected():
    from jointnlu.corpus import Corpus
    c = memorization_corpus()
    m = build(ModelConfig(word_dim=8, hidden=4), build_vocabularies(c))
    with pytest.raises(ValueError):
        evaluate(m, Corpus(()), random_embeddings(c, 8))


def test_uniform_intent_head_predicts_first_class():
    c = memorization_corpus()
    v = build_vocabularies(c)
    m = build(ModelConfig(variant="time_distributed", word_dim=8, hidden=4), v)
    m.params["intent_head.weight"].data[:] = 0
    m.params["intent_head.bias"].data[:] = 0
    report = evaluate(m, c, random_embeddings(c, 8))
    first = v.id_to_intent[0]
    assert report.intent_accuracy == sum(u.intent == first for u in c) / len(c)


def test_report_json_schema():
    c = memorization_corpus()
    m = build(ModelConfig(word_dim=8, hidden=4), build_vocabularies(c))
    d = json.loads(json.dumps(evaluate(m, c, random_embeddings(c, 8)).to_dict()))
    assert set(d) == {"intent_accuracy", "slot", "counts"}
    assert {"precision", "recall", "f1", "per_type"} <= set(d["slot"])
    assert {"gold_spans", "pred_spans", "matched"} <= set(d["counts"])
    for v in (d["intent_accuracy"], d["slot"]["precision"], d["slot"]["recall"], d["slot"]["f1"]):
        assert 0.0 <= v <= 1.0


def test_unseen_gold_labels_count_as_misses():
    from jointnlu.corpus import Corpus, Utterance
    c = memorization_corpus()
    m = build(ModelConfig(word_dim=8, hidden=4), build_vocabularies(c))
    odd = Corpus((Utterance(0, ("boston",), ("B-never_seen",), "never_seen_intent"),))
    r = evaluate(m, odd, random_embeddings(c, 8))
    assert r.intent_accuracy == 0.0
    assert r.slot.counts["matched"] == 0
