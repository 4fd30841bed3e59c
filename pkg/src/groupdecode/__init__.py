"""Group-level neural decoding on multi-channel time series.

Dilated-convolution classifiers with learned subject embeddings, the
train/finetune/leave-one-subject-out experiment matrix, and a permutation
feature importance suite, all runnable at desk scale on synthetic data
with planted class structure.
"""

__version__ = "0.1.0"

from .dataio import (
    ChannelLayout,
    DatasetFormatError,
    EpochedDataset,
    SyntheticSpec,
    generate_synthetic,
    neighbourhood,
    read_dataset,
    ring_layout,
    write_dataset,
)
from .stats import (
    accuracy,
    confidence_interval,
    pearson_r,
    sign_test,
    wilcoxon_signed_rank,
)

__all__ = [
    "ChannelLayout",
    "DatasetFormatError",
    "EpochedDataset",
    "SyntheticSpec",
    "generate_synthetic",
    "neighbourhood",
    "read_dataset",
    "ring_layout",
    "write_dataset",
    "accuracy",
    "confidence_interval",
    "pearson_r",
    "sign_test",
    "wilcoxon_signed_rank",
    "__version__",
]
