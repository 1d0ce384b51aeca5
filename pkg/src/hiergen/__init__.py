"""hiergen: hierarchical label-path generation for typed-document proposals.

A small numpy autodiff engine trains a two-level transformer encoder
plus a label-sequence transformer decoder that walks a discipline
taxonomy top-down, stopping at the right granularity, optionally
conditioned on expert-provided ancestor labels.
"""

from .autodiff import Adam, Tensor
from .blocks import BlockConfig, DecoderBlock, EncoderBlock, MultiHeadAttention, PositionalEmbedding
from .checkpoint import CheckpointError, FingerprintMismatch, load_checkpoint, save_checkpoint
from .corpus import (
    Document,
    GeneratorConfig,
    Proposal,
    Vocabulary,
    build_vocabulary,
    encode_proposal,
    generate_synthetic,
    import_embeddings,
    load_corpus,
    save_corpus,
    tokenize,
)
from .evaluation import (
    MetricsReport,
    evaluate,
    expert_knowledge_sweep,
    f1_scores,
    hierarchy_dependency,
    path_sensitivity,
    write_report,
)
from .model import ModelConfig, Prediction, ProposalClassifier
from .taxonomy import (
    LabelNode,
    LabelPath,
    Taxonomy,
    TaxonomyError,
    classify_result,
    load_taxonomy,
)
from .training import TrainConfig, TrainingDiverged, train

__version__ = "0.1.0"
