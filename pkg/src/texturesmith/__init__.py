"""Region-aware texture synthesis.

Gram-matrix feature statistics are matched under gradient descent through a
small convolutional network with hand-written forward/backward passes; a
dense-CRF mean-field segmenter splits the content image into regions so each
region can receive its own style before the results are feather-composited.
"""

from .compositing import (
    FeatherParams,
    RegionStyle,
    RegionSynthesisResult,
    composite,
    feather_mask,
    normalize_soft_masks,
    per_region_synthesize,
)
from .config import PipelineConfig, emit_config, parse_config
from .errors import (
    BadMagicError,
    ChannelChainError,
    ConfigError,
    FormatError,
    NumericalError,
    PipelineError,
    ShapeError,
    TextureSmithError,
    TruncatedStreamError,
    UnsupportedVersionError,
)
from .imageio import load_binary_mask, load_image, save_image, save_mask
from .network import (
    ActivationTrace,
    LayerKind,
    LayerSpec,
    NetworkSpec,
    avgpool_backward,
    avgpool_forward,
    conv2d_backward_input,
    conv2d_forward,
    load_weights,
    network_backward,
    network_forward,
    relu_backward,
    relu_forward,
    save_weights,
    seeded_test_network,
)
from .pipeline import RunReport, cache_descriptor, run_pipeline
from .segmentation import (
    PairwiseParams,
    color_model_unary,
    extract_region_masks,
    load_unary,
    meanfield_init,
    meanfield_step,
    run_crf,
    save_unary,
)
from .synthesis import (
    InitMode,
    LossSample,
    SynthesisConfig,
    init_image,
    synthesis_step,
    synthesize,
    write_trace_csv,
)
from .texture import (
    GramEntry,
    GramSet,
    default_style_layers,
    flatten_features,
    gram,
    layer_loss,
    layer_loss_gradient,
    parse_gram_set,
    serialize_gram_set,
    style_descriptor,
    total_loss,
)

__version__ = "0.1.0"
