"""Self-adapting video semantic segmentation.

Predict each frame with a per-pixel classifier, harvest confidently
estimated regions into pseudo-label maps, fine-tune the model on them
(whole-video or streaming), and fuse the two output sequences by
flow-consistent dynamic programming.
"""

from ._kernels import NUMBA_ENABLED
from .batch import BatchResult, SelfAdaptingDataset, WindowState, flush_window, run_batch
from .combine import (
    BATCH,
    ONLINE,
    CombineConfig,
    SelectionSequence,
    consistency_score,
    object_overlap,
    overlap_tables,
    select_from_tables,
    select_models,
)
from .config import PipelineConfig, make_config
from .errors import (
    ConfigurationError,
    ContractViolation,
    EvaluationError,
    MalformedResponse,
    NormalizationError,
    ProtocolError,
    ProtocolTimeout,
    SceneSpecError,
    VidadaptError,
)
from .evalio import IoUReport, class_iou, evaluate_video, refine_morphological
from .flow import estimate_flow, read_flo, warp_labels, write_flo
from .labels import IGNORE_LABEL, ClassCatalog
from .model import (
    FEATURE_DIM,
    ModelParameters,
    ReferenceSegmenter,
    TrainConfig,
    argmax_labels,
    extract_features,
    frame_features,
    load_params,
    masked_cross_entropy,
    predict,
    save_params,
    sgd_fine_tune,
)
from .online import MemoryEntry, OnlineMemory, OnlineResult, run_online
from .protocol import ExternalSegmenter, LoopbackServer, ProtocolClient
from .selection import (
    CandidateMaps,
    Region,
    SelectionThresholds,
    WeakLabelSet,
    build_candidate_maps,
    connected_components,
    map_confidence,
    region_confidence,
)
from .synth import (
    AmbiguityRange,
    ObjectSpec,
    SceneSpec,
    default_scene,
    generate_video,
    pretrain_reference_model,
)

__version__ = "0.1.0"
