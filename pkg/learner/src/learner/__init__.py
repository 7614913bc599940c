"""Sequence-model harness for the differential-system token datasets.

Consumes the generator's artifacts only (TSV shards, ``.meta.jsonl``
sidecars, the vocabulary file, and the ``dynsys`` CLI for ground truth);
never imports generator code.
"""

from .data import (
    BOS,
    EOS,
    PAD,
    Dataset,
    WireError,
    format_float,
    load_dataset,
    load_vocab,
    meta_path,
    parse_float,
    parse_float_list,
    read_degrees,
    read_meta,
    read_pairs,
    round_floats,
    shard_task,
)
from .metrics import (
    METRICS,
    EvalReport,
    OracleMismatch,
    assert_oracle_grounded,
    closed_loop_flags,
    evaluate,
    evaluate_predictions,
    oracle_agreement,
    predict,
)
from .model import ModelConfig, Seq2Seq, greedy_decode, load_checkpoint, save_checkpoint
from .ngram import NGramModel, featurize, fit_pairs, ngram_baseline
from .training import TrainingDiverged, TrainResult, exact_match, tensorize, train

__version__ = "0.1.0"
__all__ = [name for name in dir() if not name.startswith("_")]
