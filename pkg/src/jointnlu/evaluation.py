"""Intent accuracy and conlleval-style entity F1."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import OUTSIDE, split_tag


@dataclass(frozen=True, order=True)
class Span:
    type: str
    start: int
    end: int  # inclusive

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError(f"invalid span bounds {self.start}..{self.end}")


def decode_spans(tags: Sequence[str]) -> list[Span]:
    """Chunk an IOB sequence the way conlleval does.

    A chunk opens on ``B-X``, or on ``I-X`` when the previous tag is ``O``,
    the sequence start, or of another type.  It closes before ``O``, any
    ``B-`` tag, or an ``I-`` tag of another type.
    """
    spans = []
    cur_type, cur_start = None, 0
    for i, tag in enumerate(tags):
        prefix, typ = split_tag(tag)
        continues = prefix == "I" and typ == cur_type
        if cur_type is not None and not continues:
            spans.append(Span(cur_type, cur_start, i - 1))
            cur_type = None
        if prefix != OUTSIDE and not continues:
            cur_type, cur_start = typ, i
    if cur_type is not None:
        spans.append(Span(cur_type, cur_start, len(tags) - 1))
    return spans


def encode_spans(spans: Sequence[Span], length: int) -> list[str]:
    """Inverse of :func:`decode_spans` for non-overlapping spans."""
    tags = [OUTSIDE] * length
    for s in spans:
        if s.end >= length:
            raise ValueError(f"span {s} exceeds sequence length {length}")
        if any(t != OUTSIDE for t in tags[s.start:s.end + 1]):
            raise ValueError(f"span {s} overlaps another span")
        tags[s.start] = f"B-{s.type}"
        for i in range(s.start + 1, s.end + 1):
            tags[i] = f"I-{s.type}"
    return tags


def _prf(matched: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    p = matched / n_pred if n_pred else 0.0
    r = matched / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


@dataclass
class SlotScores:
    precision: float
    recall: float
    f1: float
    per_type: dict[str, dict] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    token_level: dict[str, float] = field(default_factory=dict)


def entity_f1(pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]) -> SlotScores:
    """Micro-averaged exact-span precision/recall/F1 over a corpus.

    Also reports a clearly separate token-level score over non-``O`` tags.
    """
    if len(pred) != len(gold):
        raise ValueError(f"alignment mismatch: {len(pred)} predicted vs {len(gold)} gold utterances")
    n_gold = n_pred = n_match = 0
    t_gold: Counter = Counter()
    t_pred: Counter = Counter()
    t_match: Counter = Counter()
    tok_gold = tok_pred = tok_match = 0
    for i, (p_tags, g_tags) in enumerate(zip(pred, gold)):
        if len(p_tags) != len(g_tags):
            raise ValueError(f"alignment mismatch in utterance {i}: {len(p_tags)} vs {len(g_tags)} tags")
        p_spans = set(decode_spans(p_tags))
        g_spans = set(decode_spans(g_tags))
        both = p_spans & g_spans
        n_pred += len(p_spans)
        n_gold += len(g_spans)
        n_match += len(both)
        t_pred.update(s.type for s in p_spans)
        t_gold.update(s.type for s in g_spans)
        t_match.update(s.type for s in both)
        for pt, gt in zip(p_tags, g_tags):
            tok_pred += pt != OUTSIDE
            tok_gold += gt != OUTSIDE
            tok_match += pt == gt != OUTSIDE
    p, r, f = _prf(n_match, n_pred, n_gold)
    per_type = {}
    for typ in sorted(set(t_gold) | set(t_pred)):
        tp, tr, tf = _prf(t_match[typ], t_pred[typ], t_gold[typ])
        per_type[typ] = {"precision": tp, "recall": tr, "f1": tf,
                         "gold": t_gold[typ], "pred": t_pred[typ], "matched": t_match[typ]}
    tp_, tr_, tf_ = _prf(tok_match, tok_pred, tok_gold)
    return SlotScores(
        p, r, f, per_type,
        {"gold_spans": n_gold, "pred_spans": n_pred, "matched": n_match},
        {"precision": tp_, "recall": tr_, "f1": tf_},
    )


def intent_accuracy(pred: Sequence[str], gold: Sequence[str]) -> float:
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gold)} gold labels")
    if not gold:
        raise ValueError("intent_accuracy of an empty list")
    return sum(p == g for p, g in zip(pred, gold)) / len(gold)


@dataclass
class MetricsReport:
    intent_accuracy: float
    slot: SlotScores
    n_utterances: int = 0

    @property
    def slot_f1(self) -> float:
        return self.slot.f1

    @property
    def slot_precision(self) -> float:
        return self.slot.precision

    @property
    def slot_recall(self) -> float:
        return self.slot.recall

    def to_dict(self) -> dict:
        return {
            "intent_accuracy": self.intent_accuracy,
            "slot": {
                "precision": self.slot.precision,
                "recall": self.slot.recall,
                "f1": self.slot.f1,
                "per_type": self.slot.per_type,
                "token_level": self.slot.token_level,
            },
            "counts": {**self.slot.counts, "utterances": self.n_utterances},
        }


def evaluate(model, corpus, embeddings, batch_size: int = 64) -> MetricsReport:
    """Predict every utterance in eval mode and score both tasks.

    Gold labels the model has never seen simply count as misses.
    """
    from .model import predict_batch

    if not len(corpus):
        raise ValueError("cannot evaluate on an empty corpus")
    utts = list(corpus)
    preds = []
    for i in range(0, len(utts), batch_size):
        preds.extend(predict_batch(model, utts[i:i + batch_size], embeddings))
    slot = entity_f1([p.tags for p in preds], [u.tags for u in utts])
    acc = intent_accuracy([p.intent for p in preds], [u.intent for u in utts])
    return MetricsReport(acc, slot, len(utts))
