"""Open-set streaming social event detection.

A graph-attention message encoder is pre-trained on an initial labeled
block with a pairwise contrastive objective plus an orthogonality
constraint on class centroids, then fine-tuned on each later unlabeled
block using pseudo labels derived from similarity distributions against
the known-event reference set.
"""

__version__ = "0.1.0"

from .ingest import (
    BlockStream,
    CorpusFeatures,
    CorpusFormatError,
    MessageRecord,
    build_features,
    load_corpus,
    parse_messages,
    save_corpus,
    serialize_messages,
    split_blocks,
)
from .seeds import derive_seed, rng_for

__all__ = [
    "BlockStream",
    "CorpusFeatures",
    "CorpusFormatError",
    "MessageRecord",
    "build_features",
    "derive_seed",
    "load_corpus",
    "parse_messages",
    "rng_for",
    "save_corpus",
    "serialize_messages",
    "split_blocks",
    "__version__",
]
