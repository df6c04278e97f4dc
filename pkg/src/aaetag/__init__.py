"""Taggers, an LLM annotation harness and bias regressions for two AAE
grammatical features: Habitual Be and Multiple Negation."""

from .dataset import HABITUAL_BE, MULTIPLE_NEGATION, Dataset, Record, load_dataset
from .habitual import HabitualModel, extract_be_context, predict_habitual, train_habitual
from .metrics import ClassificationReport, score
from .negation import tag_multiple_negation
from .pos import tag_pos
from .text import Sentence, segment_clauses, tokenize

__version__ = "0.1.0"

__all__ = [
    "HABITUAL_BE",
    "MULTIPLE_NEGATION",
    "ClassificationReport",
    "Dataset",
    "HabitualModel",
    "Record",
    "Sentence",
    "extract_be_context",
    "load_dataset",
    "predict_habitual",
    "score",
    "segment_clauses",
    "tag_multiple_negation",
    "tag_pos",
    "tokenize",
    "train_habitual",
]
