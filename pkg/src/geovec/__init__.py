"""Similarity search and retrieval evaluation for remote-sensing image embeddings.

The package turns dense image embeddings into compact binary codes, indexes
both representations for fast nearest-neighbour queries, and scores retrieval
quality and latency. Core pieces:

- :mod:`geovec.vecstore` - embedding matrices, dataset manifests, file formats
- :mod:`geovec.compress` - sign binarization, group-mean hashing, LSH
- :mod:`geovec.metrics`  - distance kernels for float vectors and bit codes
- :mod:`geovec.index`    - exhaustive and inverted-file (IVF) indexes
- :mod:`geovec.evalkit`  - label-overlap relevance and mAP@k evaluation
- :mod:`geovec.benchkit` - synthetic data generation and latency benchmarks
- :mod:`geovec.cli`      - the `geovec` command wiring it all together
"""

from .errors import (
    ConfigError,
    CorruptionError,
    EvaluationError,
    FormatError,
    GeovecError,
    ResourceError,
    StorageError,
    ValidationError,
)
from .vecstore import (
    DatasetManifest,
    Dtype,
    EmbeddingMatrix,
    ManifestRecord,
    QueryDatabasePair,
    Split,
    load_manifest,
    read_embeddings,
    save_manifest,
    select_pair,
    write_embeddings,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CorruptionError",
    "DatasetManifest",
    "Dtype",
    "EmbeddingMatrix",
    "EvaluationError",
    "FormatError",
    "GeovecError",
    "ManifestRecord",
    "QueryDatabasePair",
    "ResourceError",
    "Split",
    "StorageError",
    "ValidationError",
    "load_manifest",
    "read_embeddings",
    "save_manifest",
    "select_pair",
    "write_embeddings",
    "__version__",
]
