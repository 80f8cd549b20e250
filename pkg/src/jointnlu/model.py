"""The two joint intent/slot architectures.

Both variants share the per-token input stack::

    x_t = [frozen word vector ; char-CNN(max over time) ; 6 word-shape flags]

``recurrent``
    masked biLSTM over ``x``; the slot head reads each step's
    ``[h_fwd ; h_bwd]``, the intent head reads the two final states.

``time_distributed``
    one dense-relu-dense-relu network applied independently at every step;
    the slot head reads each step, the intent head reads the masked mean.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import BinaryIO, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import LSTMParams, Tensor
from .corpus import OUTSIDE, Utterance, Vocabularies
from .evaluation import decode_spans
from .features import N_FLAGS, char_encode, word_flags

VARIANTS = ("recurrent", "time_distributed")
TASKS = ("joint", "intent", "ner")
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelConfig:
    variant: str = "recurrent"
    word_dim: int = 100
    char_emb_dim: int = 25
    char_filters: int = 30
    char_width: int = 3
    max_char_len: int = 20
    flags_dim: int = N_FLAGS
    hidden: int = 100
    dropout_rate: float = 0.5
    slot_loss_weight: float = 1.0
    intent_loss_weight: float = 1.0
    init_seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("word_dim", "char_emb_dim", "char_filters", "char_width", "max_char_len", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.flags_dim != N_FLAGS:
            raise ValueError(f"flags_dim is fixed at {N_FLAGS}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.slot_loss_weight < 0 or self.intent_loss_weight < 0:
            raise ValueError("loss weights must be >= 0")

    @property
    def input_dim(self) -> int:
        return self.word_dim + self.char_filters + self.flags_dim

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


# ---------------------------------------------------------------- batches


@dataclass
class EncodedUtterance:
    words: np.ndarray  # [T, word_dim] float32
    chars: np.ndarray  # [T, max_char_len] int64
    char_lens: np.ndarray  # [T]
    flags: np.ndarray  # [T, 6]
    slots: np.ndarray  # [T], -1 for labels outside the vocabulary
    intent: int  # -1 when unknown


def encode_utterance(utt: Utterance, vocabs: Vocabularies, embeddings, max_char_len: int) -> EncodedUtterance:
    words = np.asarray(embeddings.vectors_for(utt))
    if words.shape != (len(utt), embeddings.dim):
        raise ValueError(f"utterance {utt.id}: word vectors have shape {words.shape}")
    encs = [char_encode(t, vocabs, max_char_len) for t in utt.tokens]
    return EncodedUtterance(
        words=words,
        chars=np.stack([e.ids for e in encs]),
        char_lens=np.array([e.true_len for e in encs], dtype=np.int64),
        flags=np.stack([word_flags(t) for t in utt.tokens]),
        slots=np.array([vocabs.slot_to_id.get(t, -1) for t in utt.tags], dtype=np.int64),
        intent=vocabs.intent_to_id.get(utt.intent, -1),
    )


@dataclass
class Batch:
    ids: list[int]
    words: np.ndarray  # [B, T, word_dim]
    chars: np.ndarray  # [B, T, L]
    char_lens: np.ndarray  # [B, T]
    flags: np.ndarray  # [B, T, 6]
    mask: np.ndarray  # [B, T] 1.0 on real tokens
    slot_targets: np.ndarray  # [B, T], -1 on padding / unknown labels
    intent_targets: np.ndarray  # [B], -1 for unknown labels

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1).astype(np.int64)


def collate(ids: Sequence[int], encoded: Sequence[EncodedUtterance], dtype=np.float32) -> Batch:
    """Pad a group of encoded utterances to the group's longest sequence and word."""
    B = len(encoded)
    T = max(len(e.slots) for e in encoded)
    L = max(1, max(int(e.char_lens.max()) for e in encoded))
    wd = encoded[0].words.shape[1]
    words = np.zeros((B, T, wd), dtype=dtype)
    chars = np.zeros((B, T, L), dtype=np.int64)
    char_lens = np.zeros((B, T), dtype=np.int64)
    flags = np.zeros((B, T, N_FLAGS), dtype=dtype)
    mask = np.zeros((B, T), dtype=dtype)
    slots = np.full((B, T), -1, dtype=np.int64)
    intents = np.array([e.intent for e in encoded], dtype=np.int64)
    for b, e in enumerate(encoded):
        n = len(e.slots)
        words[b, :n] = e.words
        chars[b, :n] = e.chars[:, :L]
        char_lens[b, :n] = e.char_lens
        flags[b, :n] = e.flags
        mask[b, :n] = 1
        slots[b, :n] = e.slots
    return Batch(list(ids), words, chars, char_lens, flags, mask, slots, intents)


# ---------------------------------------------------------------- model


@dataclass
class Entity:
    type: str
    start: int
    end: int
    text: str


@dataclass
class Prediction:
    intent: str
    entities: list[Entity] = field(default_factory=list)
    tags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"intent": self.intent, "entities": [asdict(e) for e in self.entities], "tags": self.tags}


def _param_shapes(config: ModelConfig, n_chars: int, n_slots: int, n_intents: int) -> dict[str, tuple[int, ...]]:
    c = config
    shapes = {
        "char_embedding": (n_chars, c.char_emb_dim),
        "char_conv.kernel": (c.char_width, c.char_emb_dim, c.char_filters),
        "char_conv.bias": (c.char_filters,),
    }
    D, h = c.input_dim, c.hidden
    if c.variant == "recurrent":
        for d in ("lstm_fwd", "lstm_bwd"):
            shapes[f"{d}.weight"] = (D + h, 4 * h)
            shapes[f"{d}.bias"] = (4 * h,)
        feat = 2 * h
    else:
        shapes["mlp1.weight"] = (D, h)
        shapes["mlp1.bias"] = (h,)
        shapes["mlp2.weight"] = (h, h)
        shapes["mlp2.bias"] = (h,)
        feat = h
    shapes["slot_head.weight"] = (feat, n_slots)
    shapes["slot_head.bias"] = (n_slots,)
    shapes["intent_head.weight"] = (feat, n_intents)
    shapes["intent_head.bias"] = (n_intents,)
    return shapes


def closed_form_parameter_count(config: ModelConfig, n_chars: int, n_slots: int, n_intents: int,
                                task: str = "joint") -> int:
    """Trainable parameter count written out term by term.

    recurrent:        V*e + (w*e*F + F) + 2*((D + h)*4h + 4h) + (2h*K + K) + (2h*M + M)
    time_distributed: V*e + (w*e*F + F) + (D*h + h) + (h*h + h) + (h*K + K) + (h*M + M)

    with D = word_dim + F + 6.  ``task`` drops the unused head.
    """
    c = config
    V, e, w, F, h = n_chars, c.char_emb_dim, c.char_width, c.char_filters, c.hidden
    D = c.word_dim + F + N_FLAGS
    char_part = V * e + w * e * F + F
    if c.variant == "recurrent":
        body = 2 * ((D + h) * 4 * h + 4 * h)
        feat = 2 * h
    else:
        body = D * h + h + h * h + h
        feat = h
    slot_head = feat * n_slots + n_slots
    intent_head = feat * n_intents + n_intents
    if task == "intent":
        slot_head = 0
    elif task == "ner":
        intent_head = 0
    return char_part + body + slot_head + intent_head


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    if len(shape) == 3:
        width, cin, cout = shape
        fan_in, fan_out = width * cin, width * cout
    else:
        fan_in, fan_out = shape
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class JointModel:
    def __init__(self, config: ModelConfig, vocabs: Vocabularies, params: dict[str, Tensor]):
        self.config = config
        self.vocabs = vocabs
        self.params = params
        expected = _param_shapes(config, len(vocabs.char_to_id), self.n_slots, self.n_intents)
        if list(expected) != list(params):
            raise ValueError(f"parameter names {list(params)} do not match {list(expected)}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ValueError(f"parameter {name!r} has shape {params[name].shape}, expected {shape}")

    @property
    def n_slots(self) -> int:
        return len(self.vocabs.slot_to_id)

    @property
    def n_intents(self) -> int:
        return len(self.vocabs.intent_to_id)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            p.data[...] = state[k]

    def astype(self, dtype) -> "JointModel":
        params = {k: Tensor(p.data.astype(dtype), requires_grad=True, name=k) for k, p in self.params.items()}
        return JointModel(self.config, self.vocabs, params)

    def copy(self) -> "JointModel":
        return self.astype(self.dtype)

    def _dense(self, x, name: str) -> Tensor:
        return ad.add_bias(ad.matmul(x, self.params[f"{name}.weight"]), self.params[f"{name}.bias"])

    def _lstm(self, direction: str) -> LSTMParams:
        return LSTMParams(self.params[f"{direction}.weight"], self.params[f"{direction}.bias"])

    def forward(self, batch: Batch, train_mode: bool = False,
                rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
        """Return ``(slot_logits [B, T, n_slots], intent_logits [B, n_intents])``."""
        c = self.config
        mask = batch.mask
        B, T = mask.shape
        lengths = mask.sum(axis=1)
        if (batch.words.shape != (B, T, c.word_dim) or batch.chars.shape[:2] != (B, T)
                or batch.flags.shape != (B, T, N_FLAGS)):
            raise ad.ShapeError(
                f"forward: batch words {batch.words.shape}, chars {batch.chars.shape}, "
                f"flags {batch.flags.shape}, mask {mask.shape}, word_dim {c.word_dim}"
            )
        prefix = np.arange(T)[None, :] < lengths[:, None]
        if np.any(lengths < 1) or not np.array_equal(prefix, mask > 0):
            raise ValueError("forward: mask must mark a non-empty prefix of every row")
        if np.any((batch.char_lens > 0) != prefix):
            raise ValueError("forward: mask disagrees with token positions")
        dtype = self.dtype
        rate = c.dropout_rate

        L = batch.chars.shape[2]
        char_ids = batch.chars.reshape(B * T, L)
        char_mask = np.arange(L)[None, :] < batch.char_lens.reshape(B * T, 1)
        emb = ad.mask_time(ad.embedding_gather(self.params["char_embedding"], char_ids), char_mask)
        conv = ad.conv1d_over_time(emb, self.params["char_conv.kernel"], self.params["char_conv.bias"])
        char_feat = ad.reshape(ad.max_pool_over_time(conv, char_mask), (B, T, c.char_filters))

        x = ad.concat_last_axis(Tensor(batch.words.astype(dtype, copy=False)), char_feat,
                                Tensor(batch.flags.astype(dtype, copy=False)))
        x = ad.dropout(x, rate, train_mode, rng)

        if c.variant == "recurrent":
            seq, (h_fwd, h_bwd) = ad.bilstm(x, mask, self._lstm("lstm_fwd"), self._lstm("lstm_bwd"))
            seq = ad.dropout(seq, rate, train_mode, rng)
            sentence = ad.dropout(ad.concat_last_axis(h_fwd, h_bwd), rate, train_mode, rng)
        else:
            hid = ad.relu(self._dense(x, "mlp1"))
            seq = ad.relu(self._dense(hid, "mlp2"))
            seq = ad.dropout(seq, rate, train_mode, rng)
            sentence = ad.masked_mean_over_time(seq, mask)
        return self._dense(seq, "slot_head"), self._dense(sentence, "intent_head")


def build(config: ModelConfig, vocabs: Vocabularies, dtype=np.float32) -> JointModel:
    """Glorot-uniform weights from ``config.init_seed``; zero biases except LSTM forget gates (1.0)."""
    rng = np.random.default_rng(config.init_seed)
    shapes = _param_shapes(config, len(vocabs.char_to_id), len(vocabs.slot_to_id), len(vocabs.intent_to_id))
    params = {}
    for name, shape in shapes.items():
        if len(shape) == 1:
            data = np.zeros(shape)
            if name.startswith("lstm_"):
                h = shape[0] // 4
                data[h:2 * h] = 1.0
        else:
            data = _glorot(rng, shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True, name=name)
    return JointModel(config, vocabs, params)


def head_names(task: str) -> tuple[str, ...]:
    if task == "intent":
        return ("slot_head.weight", "slot_head.bias")
    if task == "ner":
        return ("intent_head.weight", "intent_head.bias")
    if task == "joint":
        return ()
    raise ValueError(f"task must be one of {TASKS}, got {task!r}")


def count_parameters(model: JointModel, task: str = "joint") -> int:
    """Total trainable coordinates; the head a single-task run ignores is left out."""
    skip = head_names(task)
    return sum(p.size for k, p in model.params.items() if k not in skip)


def joint_loss(slot_logits, intent_logits, gold_slots, gold_intent, mask,
               weights: tuple[float, float] = (1.0, 1.0)) -> Tensor:
    """``w_slot * mean token CE + w_intent * mean utterance CE``.

    Tokens whose gold slot is ``-1`` and utterances whose gold intent is
    ``-1`` are excluded.  A term whose weight is zero is not computed.
    """
    w_slot, w_intent = weights
    mask = np.asarray(mask)
    gold_slots = np.asarray(gold_slots)
    gold_intent = np.asarray(gold_intent)
    if mask.sum() == 0:
        raise ValueError("joint_loss: empty mask")
    terms = []
    if w_slot:
        slot_mask = (mask > 0) & (gold_slots >= 0)
        terms.append(ad.scale(ad.masked_cross_entropy(slot_logits, gold_slots, slot_mask), w_slot))
    if w_intent:
        terms.append(ad.scale(ad.masked_cross_entropy(intent_logits, gold_intent, gold_intent >= 0), w_intent))
    if not terms:
        raise ValueError("joint_loss: both loss weights are zero")
    return terms[0] if len(terms) == 1 else ad.add(*terms)


# ---------------------------------------------------------------- prediction


def _as_utterance(u) -> Utterance:
    if isinstance(u, Utterance):
        return u
    tokens = tuple(u)
    return Utterance(0, tokens, (OUTSIDE,) * len(tokens), "")


def entities_from_tags(tokens: Sequence[str], tags: Sequence[str]) -> list[Entity]:
    return [Entity(s.type, s.start, s.end, " ".join(tokens[s.start:s.end + 1])) for s in decode_spans(tags)]


def predict_batch(model: JointModel, utterances: Sequence, embeddings) -> list[Prediction]:
    utts = [_as_utterance(u) for u in utterances]
    if not utts:
        return []
    encoded = [encode_utterance(u, model.vocabs, embeddings, model.config.max_char_len) for u in utts]
    batch = collate([u.id for u in utts], encoded, dtype=model.dtype)
    slot_logits, intent_logits = model.forward(batch, train_mode=False)
    # np.argmax returns the lowest index on ties
    slot_ids = slot_logits.data.argmax(axis=-1)
    intent_ids = intent_logits.data.argmax(axis=-1)
    out = []
    for b, u in enumerate(utts):
        tags = [model.vocabs.id_to_slot[i] for i in slot_ids[b, :len(u)]]
        out.append(Prediction(model.vocabs.id_to_intent[intent_ids[b]], entities_from_tags(u.tokens, tags), tags))
    return out


def predict(model: JointModel, utterance, embeddings) -> Prediction:
    """Greedy per-token argmax decoded into conlleval spans, plus the argmax intent."""
    utt = _as_utterance(utterance)
    return predict_batch(model, [utt], embeddings)[0]


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(model: JointModel, writer: BinaryIO) -> None:
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "vocabularies": model.vocabs.to_dict(),
        "params": [{"name": k, "shape": list(p.shape)} for k, p in model.params.items()],
    }
    writer.write(json.dumps(manifest, ensure_ascii=False).encode("utf-8"))
    writer.write(b"\0")
    for p in model.params.values():
        writer.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def load_checkpoint(reader: BinaryIO, expected_variant: str | None = None) -> JointModel:
    blob = reader.read()
    head, sep, body = blob.partition(b"\0")
    if not sep:
        raise CheckpointError("checkpoint has no manifest separator")
    try:
        manifest = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint manifest: {exc}") from None
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {manifest.get('format_version')!r}")
    try:
        config = ModelConfig.from_dict(manifest["config"])
        vocabs = Vocabularies.from_dict(manifest["vocabularies"])
        entries = manifest["params"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid checkpoint manifest: {exc}") from None
    if expected_variant is not None and config.variant != expected_variant:
        raise CheckpointError(f"checkpoint holds a {config.variant!r} model, expected {expected_variant!r}")
    expected = _param_shapes(config, len(vocabs.char_to_id), len(vocabs.slot_to_id), len(vocabs.intent_to_id))
    listed = {e["name"]: tuple(e["shape"]) for e in entries}
    if [e["name"] for e in entries] != list(expected) or listed != expected:
        raise CheckpointError("checkpoint parameter list disagrees with its embedded config")
    total = sum(int(np.prod(s)) for s in expected.values())
    if len(body) != 4 * total:
        raise CheckpointError(f"checkpoint body holds {len(body)} bytes, expected {4 * total}")
    flat = np.frombuffer(body, dtype="<f4")
    params = {}
    offset = 0
    for name, shape in expected.items():
        n = int(np.prod(shape))
        params[name] = Tensor(flat[offset:offset + n].astype(np.float32).reshape(shape), requires_grad=True, name=name)
        offset += n
    return JointModel(config, vocabs, params)


def save_model(model: JointModel, path) -> None:
    buf = io.BytesIO()
    save_checkpoint(model, buf)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path, expected_variant: str | None = None) -> JointModel:
    with open(path, "rb") as fh:
        return load_checkpoint(fh, expected_variant)
