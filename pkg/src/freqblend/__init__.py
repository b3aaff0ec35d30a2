"""freqblend: frequency-domain face blending.

Partitions images into semantic / structural / noise frequency components
with a small trainable parsing network, blends the structural component of
fake images into real ones to synthesize frequency-faithful pseudo-fakes,
and ships the spectrum analytics used to motivate and validate the split.
"""

from .bands import (
    DistributionTriple,
    PriorMasks,
    make_prior_masks,
    normalize_triple,
    parse_components,
    select_component,
)
from .blending import (
    BlendConfig,
    SpatialBlendParams,
    augment,
    freq_blend,
    spatial_pseudo_fake,
    synth_corpus,
)
from .dct import dct2, dct2_vjp, idct2, idct2_vjp
from .losses import (
    BandEnergyScorer,
    LossWeights,
    SpectralIdentityFeatures,
    band_energy_scorer_train,
    build_blend_sets,
    loss_ad,
    loss_ff,
    loss_pi,
    loss_qa,
    total_loss,
)
from .network import ParserModel, backward, forward, init_model, normalize_input
from .spectrum import (
    AggregateFrequencyMap,
    SpectrumProfile,
    accumulate_frequency,
    azimuthal_profile,
    difference_heatmap,
    difference_profile,
    log_profile,
)
from .training import (
    AdamState,
    TrainConfig,
    adam_step,
    grad_check,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
