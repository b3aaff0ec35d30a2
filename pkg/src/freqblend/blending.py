"""Deployment pipeline: frequency blending of real/fake pairs, a lightweight
self-blending pseudo-fake generator, the alpha augmentation policy, and the
synthetic corpus used for desk-scale experiments.

The frequency blend takes the semantic and noise components from the real
image and the structural component from the fake image, with all three
probability maps computed from the fake image's frequency map:

    out = idct2( F_r * p_sem + F_f * p_str + F_r * p_noi )

Self-blending composites a slightly jittered copy of an image back into
itself through a blurred elliptical mask, leaving subtle boundary and color
artifacts like spatial face-blending pipelines do.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .bands import DistributionTriple, PriorMasks, normalize_triple, select_component
from .dct import dct2, idct2
from .network import ParserModel, forward

__all__ = [
    "BlendConfig",
    "SpatialBlendParams",
    "AugmentedSample",
    "freq_blend",
    "spatial_pseudo_fake",
    "augment",
    "synth_corpus",
]


@dataclass
class BlendConfig:
    alpha: float = 0.2
    clamp_output: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass
class SpatialBlendParams:
    """Jitter ranges for self-blending; deliberately subtle."""

    mask_type: str = "ellipse"
    translate_frac: float = 0.03          # of image width
    scale_range: tuple[float, float] = (0.97, 1.03)
    rotate_deg: float = 2.0
    brightness: float = 0.05
    contrast: float = 0.05
    blur_sigma: tuple[float, float] = (0.5, 2.0)  # pixels

    def __post_init__(self):
        if self.scale_range[0] > self.scale_range[1]:
            raise ValueError(f"scale range is inverted: {self.scale_range}")
        if self.blur_sigma[0] > self.blur_sigma[1]:
            raise ValueError(f"blur sigma range is inverted: {self.blur_sigma}")


@dataclass
class AugmentedSample:
    image: np.ndarray
    label: int                # 0 = fake, matching the scorer convention
    freq_blended: bool
    mask: np.ndarray


def _resolve_triple(parser, x_f: np.ndarray) -> DistributionTriple:
    if isinstance(parser, ParserModel):
        triple, _ = forward(parser, dct2(x_f))
        return triple
    if isinstance(parser, PriorMasks):
        return parser.as_triple()
    if isinstance(parser, DistributionTriple):
        return parser
    raise TypeError(f"expected ParserModel, PriorMasks or DistributionTriple, got {type(parser)!r}")


def freq_blend(x_r: np.ndarray, x_f: np.ndarray, parser, normalize: bool = False,
               clamp: bool = True) -> np.ndarray:
    """Blend the fake image's structural component into the real image.

    ``parser`` may be a trained model (maps computed from the fake face),
    prior masks, or an explicit triple. ``normalize`` forces the maps to
    sum to one before blending; ``clamp`` clips the result to [0, 255].
    """
    x_r = np.asarray(x_r, dtype=np.float64)
    x_f = np.asarray(x_f, dtype=np.float64)
    if x_r.shape != x_f.shape:
        raise ValueError(f"image shapes differ: {x_r.shape} vs {x_f.shape}")
    triple = _resolve_triple(parser, x_f)
    if normalize:
        triple = normalize_triple(triple)
    f_r = dct2(x_r)
    f_f = dct2(x_f)
    blended = (
        select_component(f_r, triple.p_sem)
        + select_component(f_f, triple.p_str)
        + select_component(f_r, triple.p_noi)
    )
    out = idct2(blended)
    if clamp:
        out = np.clip(out, 0.0, 255.0)
    return out


def _ellipse_mask(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    # generous blob, like a face-region mask relative to a face crop
    cy = rng.uniform(0.35, 0.65) * (h - 1)
    cx = rng.uniform(0.35, 0.65) * (w - 1)
    ay = rng.uniform(0.3, 0.5) * h
    ax = rng.uniform(0.3, 0.5) * w
    theta = rng.uniform(0.0, np.pi)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    y0 = yy - cy
    x0 = xx - cx
    yr = np.cos(theta) * y0 - np.sin(theta) * x0
    xr = np.sin(theta) * y0 + np.cos(theta) * x0
    return ((yr / ay) ** 2 + (xr / ax) ** 2 <= 1.0).astype(np.float64)


def spatial_pseudo_fake(x: np.ndarray, params: SpatialBlendParams,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Self-blend: composite an affine- and color-jittered copy of the image
    into itself through a blurred blob mask. Returns (composite, mask)."""
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[:2]

    # draw order is fixed: geometry, color, mask, blur
    tx = rng.uniform(-1.0, 1.0) * params.translate_frac * w
    ty = rng.uniform(-1.0, 1.0) * params.translate_frac * w
    scale = rng.uniform(*params.scale_range)
    theta = np.deg2rad(rng.uniform(-params.rotate_deg, params.rotate_deg))
    bright = rng.uniform(-params.brightness, params.brightness)
    contr = rng.uniform(-params.contrast, params.contrast)
    mask = _ellipse_mask(h, w, rng)
    sigma = rng.uniform(*params.blur_sigma)

    jit = x
    if tx != 0.0 or ty != 0.0 or scale != 1.0 or theta != 0.0:
        # output -> input mapping: rotate by -theta, divide by scale
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        minv = np.array([[cos_t, sin_t], [-sin_t, cos_t]]) / scale
        center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
        offset = center - minv @ (center + np.array([ty, tx]))
        jit = np.stack(
            [
                ndimage.affine_transform(x[:, :, c], minv, offset=offset, order=1, mode="nearest")
                for c in range(x.shape[2])
            ],
            axis=2,
        )
    if bright != 0.0:
        jit = jit * (1.0 + bright)
    if contr != 0.0:
        mean = jit.mean()
        jit = mean + (jit - mean) * (1.0 + contr)
    if sigma > 0.0:
        mask = ndimage.gaussian_filter(mask, sigma)

    out = mask[:, :, None] * jit + (1.0 - mask[:, :, None]) * x
    return out, mask


def augment(
    x_r: np.ndarray,
    model: ParserModel | None,
    cfg: BlendConfig,
    params: SpatialBlendParams,
    rng: np.random.Generator,
) -> AugmentedSample:
    """Produce one labeled fake from a real image.

    A spatial pseudo-fake is always generated; with probability alpha it is
    additionally passed through the frequency blend. alpha = 0 therefore
    never touches the parser (``model`` may be None) and alpha = 1 runs it
    for every sample.
    """
    sp, mask = spatial_pseudo_fake(x_r, params, rng)
    use_freq = rng.random() < cfg.alpha
    if use_freq:
        image = freq_blend(x_r, sp, model, clamp=cfg.clamp_output)
    else:
        image = sp
    return AugmentedSample(image=image, label=0, freq_blended=use_freq, mask=mask)


def _synth_scene(size: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth random scene: per-channel Gaussian blobs plus noise whose
    power falls off like 1/f^2, normalized to [0, 255]."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size, 3))
    for ch in range(3):
        n_blobs = int(rng.integers(3, 9))
        for _ in range(n_blobs):
            amp = rng.uniform(0.3, 1.0)
            cy = rng.uniform(0, size - 1)
            cx = rng.uniform(0, size - 1)
            sig = rng.uniform(size / 12.0, size / 4.0)
            img[:, :, ch] += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sig**2))
    # coefficient amplitude ~ 1/(1+r) gives ~1/f^2 power decay
    i = np.arange(size, dtype=np.float64)
    r = np.hypot(i[:, None], i[None, :])
    coeff = rng.standard_normal((size, size, 3)) / (1.0 + r)[:, :, None]
    coeff[0, 0, :] = 0.0
    noise = idct2(coeff)
    noise_scale = 0.15 * img.std() / max(noise.std(), 1e-12)
    img = img + noise_scale * noise
    lo, hi = img.min(), img.max()
    if hi <= lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo) * 255.0


def synth_corpus(n: int, size: int, seed: int,
                 params: SpatialBlendParams | None = None) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Generate n real scenes and their spatial pseudo-fakes, deterministic
    in the seed via per-image RNG streams."""
    if n < 2:
        raise ValueError(f"corpus needs at least 2 images, got {n}")
    if size % 16 != 0:
        raise ValueError(f"size must be divisible by 16, got {size}")
    if params is None:
        params = SpatialBlendParams()
    children = np.random.SeedSequence(seed).spawn(n)
    real, fake = [], []
    for child in children:
        rng = np.random.default_rng(child)
        scene = _synth_scene(size, rng)
        sp, _ = spatial_pseudo_fake(scene, params, rng)
        real.append(scene)
        fake.append(sp)
    return real, fake
