"""Hybrid-masking kernels for few-shot segmentation experiments.

The library operates on precomputed feature maps: it provides input,
feature, and hybrid masking, cosine correlation volumes, masked-average
prototypes with a cosine-threshold predictor, episodic sampling with a
synthetic generator, and IoU metrics.
"""

from .arrayio import read_array_file, read_mask_file, write_array_file, write_mask_file
from .correlation import (
    CorrelationTensor,
    HypercorrelationPyramid,
    build_hypercorrelation,
    cosine_correlation,
)
from .episodes import (
    Episode,
    EpisodeItem,
    EpisodeManifest,
    FoldSpec,
    SynthSpec,
    SyntheticEpisode,
    build_folds,
    default_scheme,
    generate_synthetic_episode,
    load_manifest,
    sample_episodes,
    save_manifest,
    synthesize_dataset,
)
from .errors import (
    ArrayFileError,
    MalformedHeaderError,
    ManifestError,
    ShapeMismatchError,
    TruncatedPayloadError,
    UnsupportedElementTypeError,
)
from .evaluation import EvalOptions, evaluate_manifest, sweep_thresholds
from .masking import (
    MaskMode,
    MaskedFeatures,
    feature_mask,
    hybrid_mask,
    hybrid_mask_stack,
    im_features,
    input_mask,
)
from .metrics import MetricAccumulator, accumulate, fb_iou, merge, miou, per_class_iou
from .prototype import (
    Prototype,
    average_prototypes,
    cosine_map,
    map_prototype,
    predict_mask,
    predict_mask_multilayer,
    upsample_prediction,
)
from .tensor import (
    BinaryMask,
    FeatureStack,
    Tensor,
    broadcast_mask,
    hadamard,
    resize_bilinear,
)

__version__ = "0.1.0"
