from .functional import (
    adaptive_gcn_forward,
    gcn_forward,
    sample_similarity_graphs,
    stc_attention,
    tcn_forward,
)
from .network import (
    AgeNetwork,
    ForwardTrace,
    ModelConfig,
    Variant,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "AgeNetwork",
    "ForwardTrace",
    "ModelConfig",
    "Variant",
    "count_parameters",
    "load_checkpoint",
    "save_checkpoint",
    "gcn_forward",
    "adaptive_gcn_forward",
    "sample_similarity_graphs",
    "stc_attention",
    "tcn_forward",
]
