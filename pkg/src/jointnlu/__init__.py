"""Joint intent classification and IOB slot filling."""
from .corpus import Corpus, Utterance, Vocabularies, build_vocabularies, parse_corpus, read_corpus, split_validation
from .embeddings import ContextualStore, EmbeddingTable, load_contextual, load_embedding_text
from .evaluation import MetricsReport, decode_spans, entity_f1, evaluate, intent_accuracy
from .model import JointModel, ModelConfig, Prediction, build, count_parameters, load_checkpoint, predict, save_checkpoint
from .train import TrainConfig, TrainHistory, fit, fit_single_task

__version__ = "0.1.0"
