"""Reading, writing and splitting IOB-tagged intent corpora.

Two on-disk formats are understood:

``native``
    Records separated by a blank line.  The first line of a record is
    ``#intent<TAB><label>``, each following line is ``<token><TAB><tag>``.

``ctf``
    The CNTK text format used by the public ATIS distribution.  One token
    occurrence per line, grouped by a leading numeric sequence id.  The word,
    intent and slot tag are the ``|#`` comments that follow the ``S0``, ``S1``
    and ``S2`` fields.  ``BOS``/``EOS`` sentinels are dropped.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

import numpy as np

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1
OUTSIDE = "O"

_TAG_RE = re.compile(r"^(?:O|[BI]-.+)$")
_SENTINELS = frozenset({"BOS", "EOS"})


class CorpusFormatError(ValueError):
    """Raised for malformed corpus input; carries the offending line number."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


def is_valid_tag(tag: str) -> bool:
    return bool(_TAG_RE.match(tag))


def split_tag(tag: str) -> tuple[str, str]:
    """Return ``(prefix, type)``; ``("O", "")`` for the outside tag."""
    if tag == OUTSIDE:
        return OUTSIDE, ""
    return tag[0], tag[2:]


@dataclass(frozen=True)
class Utterance:
    id: int
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    intent: str

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"utterance id must be non-negative, got {self.id}")
        if not self.tokens:
            raise ValueError("empty utterance")
        if len(self.tokens) != len(self.tags):
            raise ValueError(
                f"utterance {self.id}: {len(self.tokens)} tokens but {len(self.tags)} tags"
            )
        for tok in self.tokens:
            if not tok:
                raise ValueError(f"utterance {self.id}: empty token")
        for tag in self.tags:
            if not is_valid_tag(tag):
                raise ValueError(f"utterance {self.id}: malformed tag {tag!r}")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Corpus:
    utterances: tuple[Utterance, ...]
    name: str = "corpus"

    def __post_init__(self):
        ids = [u.id for u in self.utterances]
        if len(set(ids)) != len(ids):
            raise ValueError(f"corpus {self.name!r}: duplicate utterance ids")

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self) -> Iterator[Utterance]:
        return iter(self.utterances)

    def __getitem__(self, i: int) -> Utterance:
        return self.utterances[i]

    def stats(self) -> dict[str, int]:
        """Counts in the spirit of a dataset table: utterances, tokens, entity spans."""
        from .evaluation import decode_spans

        return {
            "utterances": len(self.utterances),
            "tokens": sum(len(u) for u in self.utterances),
            "tagged_tokens": sum(t != OUTSIDE for u in self.utterances for t in u.tags),
            "entities": sum(len(decode_spans(u.tags)) for u in self.utterances),
            "intents": len({u.intent for u in self.utterances}),
        }


# ---------------------------------------------------------------- parsing


def parse_corpus(reader: TextIO | Iterable[str], format: str = "native", name: str = "corpus") -> Corpus:
    if format == "native":
        records = _parse_native(reader)
    elif format == "ctf":
        records = _parse_ctf(reader)
    else:
        raise ValueError(f"unknown corpus format {format!r} (expected 'native' or 'ctf')")
    utterances = []
    for i, (lineno, tokens, tags, intent) in enumerate(records):
        try:
            utterances.append(Utterance(i, tuple(tokens), tuple(tags), intent))
        except ValueError as exc:
            raise CorpusFormatError(str(exc), lineno) from None
    if not utterances:
        raise CorpusFormatError("no utterances")
    return Corpus(tuple(utterances), name)


def _parse_native(reader) -> Iterator[tuple[int, list, list, str]]:
    intent = None
    start = 0
    tokens: list[str] = []
    tags: list[str] = []
    lineno = 0
    for lineno, raw in enumerate(reader, 1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            if intent is not None:
                yield _finish_native(start, tokens, tags, intent)
            intent, tokens, tags = None, [], []
            continue
        fields = line.split("\t")
        if intent is None:
            if len(fields) != 2 or fields[0] != "#intent" or not fields[1]:
                raise CorpusFormatError("expected '#intent<TAB><label>' at start of record", lineno)
            intent, start = fields[1], lineno
            continue
        if len(fields) != 2:
            raise CorpusFormatError(f"expected '<token><TAB><tag>', got {line!r}", lineno)
        token, tag = fields
        if not token:
            raise CorpusFormatError("empty token", lineno)
        if not is_valid_tag(tag):
            raise CorpusFormatError(f"malformed tag {tag!r}", lineno)
        tokens.append(token)
        tags.append(tag)
    if intent is not None:
        yield _finish_native(start, tokens, tags, intent)


def _finish_native(start, tokens, tags, intent):
    if not tokens:
        raise CorpusFormatError("empty utterance", start)
    return start, tokens, tags, intent


def _ctf_comments(line: str) -> tuple[str, dict[str, str]]:
    parts = line.split("|")
    seq_id = parts[0].strip()
    comments: dict[str, str] = {}
    for field_, nxt in zip(parts[1:], parts[2:]):
        key = field_.split(None, 1)[0] if field_.strip() else ""
        if key in ("S0", "S1", "S2") and nxt.startswith("#"):
            comments[key] = nxt[1:].strip()
    return seq_id, comments


def _parse_ctf(reader) -> Iterator[tuple[int, list, list, str]]:
    current = None
    start = 0
    tokens: list[str] = []
    tags: list[str] = []
    intent = None

    def finish():
        if intent is None:
            raise CorpusFormatError(f"sequence {current}: no intent (S1) field", start)
        if not tokens:
            raise CorpusFormatError(f"sequence {current}: empty utterance", start)
        if len(tokens) != len(tags):
            raise CorpusFormatError(f"sequence {current}: token/tag count mismatch", start)
        return start, list(tokens), list(tags), intent

    for lineno, raw in enumerate(reader, 1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        seq_id, comments = _ctf_comments(line)
        if not seq_id.isdigit():
            raise CorpusFormatError(f"expected numeric sequence id, got {seq_id!r}", lineno)
        if seq_id != current:
            if current is not None:
                yield finish()
            current, start, tokens, tags, intent = seq_id, lineno, [], [], None
        if "S1" in comments:
            intent = comments["S1"]
        word = comments.get("S0")
        tag = comments.get("S2")
        if word is None:
            raise CorpusFormatError("missing S0 word comment", lineno)
        if tag is None:
            raise CorpusFormatError("missing S2 slot comment", lineno)
        if not is_valid_tag(tag):
            raise CorpusFormatError(f"malformed tag {tag!r}", lineno)
        if word in _SENTINELS:
            continue
        tokens.append(word)
        tags.append(tag)
    if current is not None:
        yield finish()


def serialize_native(corpus: Corpus) -> str:
    blocks = []
    for u in corpus:
        lines = [f"#intent\t{u.intent}"]
        lines.extend(f"{tok}\t{tag}" for tok, tag in zip(u.tokens, u.tags))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def write_native(corpus: Corpus, writer: TextIO) -> None:
    writer.write(serialize_native(corpus))


def read_corpus(path, format: str | None = None) -> Corpus:
    """Open ``path`` and parse it; the format defaults to ``ctf`` for ``*.ctf`` files."""
    path = str(path)
    if format is None:
        format = "ctf" if path.endswith(".ctf") else "native"
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh, format, name=path)


# ---------------------------------------------------------------- IOB


def validate_iob(tags) -> list[str]:
    """Accept a tag sequence as-is.

    Dangling ``I-X`` tags (at the start, after ``O`` or after another type)
    are legal and open a new span, as in conlleval.  Nothing is rewritten.
    """
    tags = list(tags)
    for tag in tags:
        if not is_valid_tag(tag):
            raise ValueError(f"malformed tag {tag!r}")
    return tags


# ---------------------------------------------------------------- vocabularies


def _index(labels: Iterable[str]) -> dict[str, int]:
    out: dict[str, int] = {}
    for label in labels:
        if label not in out:
            out[label] = len(out)
    return out


@dataclass
class Vocabularies:
    token_to_id: dict[str, int] = field(default_factory=dict)
    char_to_id: dict[str, int] = field(default_factory=dict)
    slot_to_id: dict[str, int] = field(default_factory=dict)
    intent_to_id: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.id_to_slot = list(self.slot_to_id)
        self.id_to_intent = list(self.intent_to_id)
        for name in ("token_to_id", "char_to_id", "slot_to_id", "intent_to_id"):
            m = getattr(self, name)
            if sorted(m.values()) != list(range(len(m))):
                raise ValueError(f"{name}: indices must be dense and contiguous from 0")
        if OUTSIDE not in self.slot_to_id:
            raise ValueError("slot map must contain 'O'")

    def token_id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def char_id(self, ch: str) -> int:
        return self.char_to_id.get(ch, UNK_ID)

    def to_dict(self) -> dict[str, list[str]]:
        return {
            "tokens": list(self.token_to_id),
            "chars": list(self.char_to_id),
            "slots": list(self.slot_to_id),
            "intents": list(self.intent_to_id),
        }

    @classmethod
    def from_dict(cls, d: dict[str, list[str]]) -> "Vocabularies":
        return cls(_index(d["tokens"]), _index(d["chars"]), _index(d["slots"]), _index(d["intents"]))


def build_vocabularies(train: Corpus) -> Vocabularies:
    if not len(train):
        raise ValueError("cannot build vocabularies from an empty corpus")
    tokens = [PAD, UNK]
    chars = [PAD, UNK]
    slots = [OUTSIDE]
    intents = []
    for u in train:
        tokens.extend(u.tokens)
        for tok in u.tokens:
            chars.extend(tok)
        slots.extend(u.tags)
        intents.append(u.intent)
    return Vocabularies(_index(tokens), _index(chars), _index(slots), _index(intents))


# ---------------------------------------------------------------- splitting


def split_validation(train: Corpus, fraction: float = 0.1, seed: int = 0) -> tuple[Corpus, Corpus]:
    """Seeded random hold-out of ``round(fraction * n)`` utterances.

    Both parts keep the original file order and the original ids.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(train)
    n_val = int(math.floor(fraction * n + 0.5))
    if n_val < 1 or n_val >= n:
        raise ValueError(f"fraction {fraction} of {n} utterances leaves an empty split")
    perm = np.random.default_rng(seed).permutation(n)
    held = set(perm[:n_val].tolist())
    rest = tuple(u for i, u in enumerate(train) if i not in held)
    val = tuple(u for i, u in enumerate(train) if i in held)
    return Corpus(rest, f"{train.name}/train"), Corpus(val, f"{train.name}/validation")
