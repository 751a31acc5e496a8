"""Dictionary-driven finance event extraction and multimodal stock movement
prediction, with a synthetic-data harness."""

__version__ = "0.1.0"

from .corpus import AnnotatedNews, parse_corpus
from .dictionary import EventDictionary, load_dictionary, validate_dictionary
from .extraction import EventFrame, RoleLabelSequence, coverage_stats, extract, extract_spo
from .harness import Metrics, TrainSettings, evaluate, evaluate_ensemble, mcc, split_temporal, train
from .market import MinuteBar, MovementSample, TradeCalendar, TradeWindowTensor, movement_label, time_bucket
from .models import ModelBundle, ModelConfig, ensemble_predict, multitask_loss
from .synth import SynthConfig, generate, load_dataset, save_dataset

__all__ = [
    "AnnotatedNews",
    "EventDictionary",
    "EventFrame",
    "Metrics",
    "MinuteBar",
    "ModelBundle",
    "ModelConfig",
    "MovementSample",
    "RoleLabelSequence",
    "SynthConfig",
    "TradeCalendar",
    "TradeWindowTensor",
    "TrainSettings",
    "coverage_stats",
    "ensemble_predict",
    "evaluate",
    "evaluate_ensemble",
    "extract",
    "extract_spo",
    "generate",
    "load_dataset",
    "load_dictionary",
    "mcc",
    "movement_label",
    "multitask_loss",
    "parse_corpus",
    "save_dataset",
    "split_temporal",
    "time_bucket",
    "train",
    "validate_dictionary",
]
