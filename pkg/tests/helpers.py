"""Synthetic fixtures shared by the test modules."""
from __future__ import annotations

import numpy as np

from jointnlu.corpus import Corpus, Utterance
from jointnlu.embeddings import ContextualStore, EmbeddingTable

# Every token carries the same tag wherever it occurs, so even a context-free
# per-step network can fit the tags exactly.  Intents are signalled by
# keywords ("flights", "fare", "ground").
_RAW = [
    ("flight_info", "what flights are available from pittsburgh to baltimore on thursday morning",
     "O O O O O B-from_city O B-to_city O B-depart_date B-depart_time"),
    ("flight_info", "show me flights from boston to atlanta", "O O O O B-from_city O B-to_city"),
    ("flight_info", "list flights from denver to dallas on monday", "O O O B-from_city O B-to_city O B-depart_date"),
    ("flight_info", "i need flights from new york to san francisco friday evening",
     "O O O O B-from_city I-from_city O B-to_city I-to_city B-depart_date B-depart_time"),
    ("flight_info", "flights from pittsburgh to atlanta afternoon", "O O B-from_city O B-to_city B-depart_time"),
    ("flight_info", "are there flights to dallas on thursday", "O O O O B-to_city O B-depart_date"),
    ("flight_info", "morning flights from denver", "B-depart_time O O B-from_city"),
    ("flight_info", "flights to baltimore", "O O B-to_city"),
    ("airfare", "what is the fare from boston to baltimore", "O O O O O B-from_city O B-to_city"),
    ("airfare", "fare from new york to dallas on monday",
     "O O B-from_city I-from_city O B-to_city O B-depart_date"),
    ("airfare", "how much is the cheapest fare to atlanta", "O O O O O O O B-to_city"),
    ("airfare", "show the fare from denver to san francisco",
     "O O O O B-from_city O B-to_city I-to_city"),
    ("airfare", "fare to dallas friday morning", "O O B-to_city B-depart_date B-depart_time"),
    ("airfare", "cheapest fare from pittsburgh", "O O O B-from_city"),
    ("ground_service", "ground transportation in baltimore", "O O O B-to_city"),
    ("ground_service", "what ground transportation is there in atlanta", "O O O O O O B-to_city"),
    ("ground_service", "ground transportation in dallas on monday evening",
     "O O O B-to_city O B-depart_date B-depart_time"),
    ("ground_service", "show me ground transportation in san francisco", "O O O O O B-to_city I-to_city"),
    ("ground_service", "i need ground transportation thursday afternoon",
     "O O O O B-depart_date B-depart_time"),
    ("ground_service", "ground transportation please", "O O O"),
]

PITTSBURGH_SENTENCE = _RAW[0][1]


def memorization_corpus() -> Corpus:
    utts = []
    for i, (intent, text, tags) in enumerate(_RAW):
        tokens, tag_list = text.split(), tags.split()
        assert len(tokens) == len(tag_list), text
        utts.append(Utterance(i, tuple(tokens), tuple(tag_list), intent))
    return Corpus(tuple(utts), "memorization")


def random_embeddings(corpus: Corpus, dim: int = 50, seed: int = 0) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    vocab = list(dict.fromkeys(t for u in corpus for t in u.tokens))
    return EmbeddingTable(vocab, rng.normal(0, 1, size=(len(vocab), dim)), source_name="random")


def random_contextual(corpus: Corpus, dim: int = 16, seed: int = 0) -> ContextualStore:
    rng = np.random.default_rng(seed)
    entries = {}
    for u in corpus:
        for i in range(len(u)):
            entries[(u.id, i)] = rng.normal(0, 1, size=dim).astype(np.float32)
    return ContextualStore(dim, entries)


def tiny_corpus() -> Corpus:
    return Corpus((
        Utterance(0, ("from", "Boston", "to", "LA"), ("O", "B-city", "O", "B-city"), "flight"),
        Utterance(1, ("fare", "1230", "U.S."), ("O", "B-num", "I-num"), "airfare"),
    ), "tiny")


def brute_force_spans(tags) -> set[tuple[str, int, int]]:
    """Every (type, start, end) interval that forms a conlleval chunk, by enumeration.

    An interval [s, e] of type X is a chunk iff tag s opens an X chunk, every
    tag in (s, e] is I-X, and tag e + 1 (if any) is not I-X.
    """
    def kind(t):
        return ("O", "") if t == "O" else (t[0], t[2:])

    n = len(tags)
    found = set()
    for s in range(n):
        p, x = kind(tags[s])
        if p == "O":
            continue
        opens = p == "B" or s == 0 or kind(tags[s - 1])[1] != x or kind(tags[s - 1])[0] == "O"
        if not opens:
            continue
        for e in range(s, n):
            if e > s and tags[e] != f"I-{x}":
                break
            if e + 1 == n or tags[e + 1] != f"I-{x}":
                found.add((x, s, e))
    return found


def brute_force_prf(pred, gold) -> tuple[int, int, int]:
    """(matched, predicted, gold) span counts by explicit per-utterance set matching."""
    matched = n_pred = n_gold = 0
    for i, (p, g) in enumerate(zip(pred, gold)):
        ps = {(i,) + s for s in brute_force_spans(p)}
        gs = {(i,) + s for s in brute_force_spans(g)}
        n_pred += len(ps)
        n_gold += len(gs)
        matched += sum(1 for s in ps if s in gs)
    return matched, n_pred, n_gold


def random_tag_pairs(n: int, seed: int, types=("a", "b", "c", "d"), max_len: int = 15):
    rng = np.random.default_rng(seed)
    alphabet = ["O"] + [f"{p}-{t}" for t in types for p in "BI"]
    pairs = []
    for _ in range(n):
        length = int(rng.integers(1, max_len + 1))
        pairs.append(([alphabet[i] for i in rng.integers(len(alphabet), size=length)],
                      [alphabet[i] for i in rng.integers(len(alphabet), size=length)]))
    return pairs
