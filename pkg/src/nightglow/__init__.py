"""APSF glow synthesis and nighttime haze enhancement operators."""

from nightglow.apsf import (
    Apsf1D,
    ApsfParams,
    LegendreLUT,
    apsf_kernel_2d,
    apsf_series,
    apsf_weights,
    legendre_eval,
    lut_cache,
)
from nightglow.enhance import EnhanceParams, attention_map, gamma_enhance
from nightglow.errors import (
    CacheInvalidError,
    ConvergenceError,
    DegenerateKernelError,
    ImageFormatError,
    ImageIOError,
    NightglowError,
    NumericError,
    ParameterError,
)
from nightglow.glow import (
    GlowRecipe,
    GlowResult,
    alpha_from_lightsz,
    batch_render,
    convolve2d,
    render_glow,
)
from nightglow.gradops import (
    BilateralParams,
    ConvSpec,
    bilateral_filter,
    consistency_metrics,
    edge_map,
    gradient_conv,
    texture_map,
)
from nightglow.imgio import clamp01, load_image, max_channel, save_image
from nightglow.lightsource import (
    LightSourceResult,
    MattingConfig,
    detect_light_sources,
    matting_refine,
    threshold_mask,
)
from nightglow.metrics import psnr, ssim

__version__ = "0.1.0"
