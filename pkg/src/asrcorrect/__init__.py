"""Context-aware correction of ASR errors in task-oriented voice dialogue."""

from .dialogue import DialogueSnapshot, Intent, IntentLabel, State
from .pipeline import CorrectionOutcome, Corrector, PipelineConfig, correct
from .rerank import NBestList
from .retrieval import SearchIndex, TaskEntry, build_index, load_index, save_index

__all__ = [
    "CorrectionOutcome",
    "Corrector",
    "DialogueSnapshot",
    "Intent",
    "IntentLabel",
    "NBestList",
    "PipelineConfig",
    "SearchIndex",
    "State",
    "TaskEntry",
    "build_index",
    "correct",
    "load_index",
    "save_index",
]
