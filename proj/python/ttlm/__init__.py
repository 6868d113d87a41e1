"""Tensor-train language models and their recurrent equivalents."""

from ._ttlm import (
    CELL_KINDS,
    DEFAULT_ENTRY_CAP,
    CapExceededError,
    CheckpointError,
    ConfigError,
    DataError,
    DivergenceError,
    Error,
    IndexError,
    LanguageModel,
    NumericError,
    ShapeError,
    TTCores,
    Vocabulary,
    build_vocab,
    conditional_bruteforce,
    conditional_recursive,
    core_from_secondorder,
    cores_from_hadamard,
    decode,
    encode,
    evaluate_ppl,
    load_checkpoint,
    materialize_A,
    phi_of_sequence,
    run_checks,
    score_bruteforce,
    score_recursive,
    secondorder_from_core,
    train,
    tt_element,
    unigram_entropy_ppl,
    zipf_corpus,
)

__all__ = [name for name in dir() if not name.startswith("_")]
