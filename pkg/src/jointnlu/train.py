"""Mini-batch training with dropout, gradient clipping and early stopping."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import AdamState, Tape, adam_step, backward, clip_global_norm
from .corpus import Corpus, Vocabularies
from .model import (
    Batch,
    EncodedUtterance,
    JointModel,
    collate,
    encode_utterance,
    joint_loss,
)

log = logging.getLogger(__name__)

CLIP_NORM = 5.0


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 2
    shuffle_seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    slot_loss_weight: float | None = None  # None: take the model config's weight
    intent_loss_weight: float | None = None
    clip_norm: float = CLIP_NORM

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int = -1
    slot_loss_weight: float = 1.0
    intent_loss_weight: float = 1.0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def val_losses(self) -> list[float]:
        return [r.val_loss for r in self.records]

    @property
    def train_losses(self) -> list[float]:
        return [r.train_loss for r in self.records]

    def to_jsonl(self) -> str:
        lines = []
        for r in self.records:
            rec = asdict(r)
            rec["slot_loss_weight"] = self.slot_loss_weight
            rec["intent_loss_weight"] = self.intent_loss_weight
            lines.append(json.dumps(rec))
        return "".join(line + "\n" for line in lines)


class EarlyStopping:
    """Best-so-far tracker.  Only a strictly lower loss counts as improvement;
    stop once ``patience + 1`` epochs in a row have failed to improve."""

    def __init__(self, patience: int = 2):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = -1
        self.bad_epochs = 0
        self.epoch = -1

    def update(self, loss: float) -> bool:
        """Record one epoch's validation loss; return True if it is the new best."""
        self.epoch += 1
        if loss < self.best:
            self.best, self.best_epoch, self.bad_epochs = loss, self.epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs > self.patience


def simulate_early_stopping(val_losses: Sequence[float], patience: int = 2,
                            max_epochs: int | None = None) -> tuple[int, int, bool]:
    """Replay a loss sequence; returns ``(last epoch run, best_epoch, stopped_early)``."""
    stopper = EarlyStopping(patience)
    limit = len(val_losses) if max_epochs is None else min(max_epochs, len(val_losses))
    for epoch in range(limit):
        stopper.update(val_losses[epoch])
        if stopper.should_stop:
            return epoch, stopper.best_epoch, True
    return limit - 1, stopper.best_epoch, False


# ---------------------------------------------------------------- batching


def encode_corpus(corpus: Corpus, vocabs: Vocabularies, embeddings, max_char_len: int) -> list[EncodedUtterance]:
    return [encode_utterance(u, vocabs, embeddings, max_char_len) for u in corpus]


def make_batches(corpus: Corpus, vocabs: Vocabularies, embeddings, batch_size: int, seed: int = 0,
                 epoch: int = 0, shuffle: bool = True, max_char_len: int = 20, dtype=np.float32,
                 encoded: Sequence[EncodedUtterance] | None = None) -> list[Batch]:
    """Shuffle (seeded by ``(seed, epoch)``), group and pad.

    Each batch is padded to its own longest utterance.
    """
    if not len(corpus):
        raise ValueError("make_batches: empty corpus")
    if encoded is None:
        encoded = encode_corpus(corpus, vocabs, embeddings, max_char_len)
    order = np.arange(len(corpus))
    if shuffle:
        order = np.random.default_rng([seed, epoch]).permutation(len(corpus))
    ids = [u.id for u in corpus]
    batches = []
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        batches.append(collate([ids[i] for i in idx], [encoded[i] for i in idx], dtype=dtype))
    return batches


# ---------------------------------------------------------------- loop


def _weights(model: JointModel, config: TrainConfig) -> tuple[float, float]:
    ws = model.config.slot_loss_weight if config.slot_loss_weight is None else config.slot_loss_weight
    wi = model.config.intent_loss_weight if config.intent_loss_weight is None else config.intent_loss_weight
    return ws, wi


def batch_loss(model: JointModel, batch: Batch, weights, train_mode: bool = False, rng=None):
    slot_logits, intent_logits = model.forward(batch, train_mode=train_mode, rng=rng)
    return joint_loss(slot_logits, intent_logits, batch.slot_targets, batch.intent_targets, batch.mask, weights)


def dataset_loss(model: JointModel, batches: Sequence[Batch], weights) -> float:
    """Utterance-weighted mean loss in eval mode (dropout off)."""
    total = 0.0
    n = 0
    for b in batches:
        total += float(batch_loss(model, b, weights).data) * b.size
        n += b.size
    return total / n


def train_epoch(model: JointModel, batches: Sequence[Batch], weights, state: AdamState,
                rng: np.random.Generator, clip_norm: float = CLIP_NORM) -> float:
    params = {k: p.data for k, p in model.params.items()}
    total = 0.0
    n = 0
    for b in batches:
        with Tape() as tape:
            loss = batch_loss(model, b, weights, train_mode=True, rng=rng)
        grads = backward(loss, tape, wrt=model.params.values())
        named = {k: grads[p] for k, p in model.params.items()}
        clip_global_norm(named, clip_norm)
        adam_step(params, named, state)
        total += float(loss.data) * b.size
        n += b.size
    return total / n


def fit(model: JointModel, train: Corpus, val: Corpus, embeddings, config: TrainConfig | None = None,
        on_epoch=None, early_stopping: bool = True) -> tuple[JointModel, TrainHistory]:
    """Train until the validation loss stops improving; restore the best epoch's weights.

    ``model`` is updated in place and also returned.  ``on_epoch`` (optional)
    is called with each :class:`EpochRecord`.
    """
    config = config or TrainConfig()
    if not len(val):
        raise ValueError("fit: empty validation set")
    if not len(train):
        raise ValueError("fit: empty training set")
    weights = _weights(model, config)
    mcl = model.config.max_char_len
    dtype = model.dtype
    train_enc = encode_corpus(train, model.vocabs, embeddings, mcl)
    val_batches = make_batches(val, model.vocabs, embeddings, config.batch_size, shuffle=False,
                               max_char_len=mcl, dtype=dtype)
    state = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, epsilon=config.epsilon)
    rng = np.random.default_rng([config.shuffle_seed, 1])
    stopper = EarlyStopping(config.patience)
    history = TrainHistory(slot_loss_weight=weights[0], intent_loss_weight=weights[1])
    best_state = model.state_dict()

    for epoch in range(config.max_epochs):
        t0 = time.perf_counter()
        batches = make_batches(train, model.vocabs, embeddings, config.batch_size, config.shuffle_seed, epoch,
                               max_char_len=mcl, dtype=dtype, encoded=train_enc)
        train_loss = train_epoch(model, batches, weights, state, rng, config.clip_norm)
        val_loss = dataset_loss(model, val_batches, weights)
        record = EpochRecord(epoch, train_loss, val_loss, time.perf_counter() - t0)
        history.records.append(record)
        log.info("epoch %d  train %.4f  val %.4f  %.1fs", epoch, train_loss, val_loss, record.seconds)
        if on_epoch is not None:
            on_epoch(record)
        if stopper.update(val_loss):
            best_state = model.state_dict()
        if early_stopping and stopper.should_stop:
            history.stopped_early = True
            break

    history.best_epoch = stopper.best_epoch
    model.load_state_dict(best_state)
    return model, history


def fit_single_task(model: JointModel, train: Corpus, val: Corpus, embeddings, config: TrainConfig | None = None,
                    task: str = "intent", **kwargs) -> tuple[JointModel, TrainHistory]:
    """``fit`` with the other head's loss weight forced to zero (task ``intent`` or ``ner``)."""
    if task not in ("intent", "ner"):
        raise ValueError(f"task must be 'intent' or 'ner', got {task!r}")
    config = config or TrainConfig()
    ws, wi = _weights(model, config)
    if task == "intent":
        ws = 0.0
    else:
        wi = 0.0
    cfg = TrainConfig(**{**asdict(config), "slot_loss_weight": ws, "intent_loss_weight": wi})
    return fit(model, train, val, embeddings, cfg, **kwargs)


def epoch_timer(history: TrainHistory | Sequence[float]) -> float:
    """Mean wall-clock seconds per recorded epoch."""
    seconds = [r.seconds for r in history.records] if isinstance(history, TrainHistory) else list(history)
    if not seconds:
        raise ValueError("epoch_timer: no epochs recorded")
    return sum(seconds) / len(seconds)
