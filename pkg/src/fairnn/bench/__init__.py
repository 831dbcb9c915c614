"""Benchmark harness comparing fair neighbor samplers by total variation distance."""

from .datasets import (
    SynthData,
    SynthSpec,
    load_dataset,
    load_fvecs,
    load_idx_images,
    load_text_embeddings,
    synth_generate,
)
from .experiment import (
    ALGORITHMS,
    ExperimentConfig,
    ResultRow,
    compute_Mq,
    query_view,
    run_algorithm,
    run_experiment,
    tvd,
)

__all__ = [
    "ALGORITHMS", "ExperimentConfig", "ResultRow", "SynthData", "SynthSpec",
    "compute_Mq", "load_dataset", "load_fvecs", "load_idx_images", "load_text_embeddings",
    "query_view", "run_algorithm", "run_experiment", "synth_generate", "tvd",
]
