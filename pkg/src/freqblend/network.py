"""The frequency parsing network: a shared convolutional encoder and three
independent upsampling decoders that turn a frequency map into per-position
probability maps for the semantic, structural and noise components.

Architecture (base width c, input (h, w, 3) with h, w divisible by 16):

* encoder: four 3x3 convolutions, stride 2, padding 1, widths
  [c, 2c, 4c, 8c], each followed by LeakyReLU(0.2); spatial dims shrink 16x.
* each decoder: four blocks of [3x3 conv (stride 1) -> depth-to-space x2 ->
  LeakyReLU(0.2)], conv output widths [16c, 8c, 4c, 4] so the upsampled
  widths are [4c, 2c, c, 1]; the last block skips the LeakyReLU and applies
  a sigmoid, restoring the full h x w resolution.

Raw DCT coefficients span several orders of magnitude, so the network input
(and only the input; component selection elsewhere uses raw coefficients) is
compressed through sign(v) * log10(1 + |v|).

Forward and backward are pure functions of (model, input); the backward pass
is hand-derived reverse mode through sigmoid, LeakyReLU, the depth-to-space
permutation and the convolutions.
"""

from dataclasses import dataclass, field

import numpy as np

from .bands import COMPONENT_NAMES, DistributionTriple
from .kernels import conv3x3_backward, conv3x3_forward, depth_to_space, space_to_depth

__all__ = [
    "ConvParams",
    "ParserModel",
    "ForwardCache",
    "init_model",
    "normalize_input",
    "forward",
    "backward",
    "leaky_relu",
    "forward_call_count",
    "reset_forward_call_count",
]

LEAKY_SLOPE = 0.2

_FORWARD_CALLS = 0


def forward_call_count() -> int:
    """Number of forward passes since the last reset (test instrumentation)."""
    return _FORWARD_CALLS


def reset_forward_call_count() -> None:
    global _FORWARD_CALLS
    _FORWARD_CALLS = 0


@dataclass
class ConvParams:
    weights: np.ndarray  # (out_ch, in_ch, 3, 3)
    bias: np.ndarray     # (out_ch,)
    stride: int = 1
    padding: int = 1


@dataclass
class ParserModel:
    encoder: list[ConvParams]
    decoders: dict[str, list[ConvParams]]
    base_width: int

    def named_tensors(self) -> dict[str, np.ndarray]:
        """All parameters keyed by a stable group name (update targets)."""
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.encoder):
            out[f"enc{i}.w"] = layer.weights
            out[f"enc{i}.b"] = layer.bias
        for name in COMPONENT_NAMES:
            for i, layer in enumerate(self.decoders[name]):
                out[f"{name}{i}.w"] = layer.weights
                out[f"{name}{i}.b"] = layer.bias
        return out

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.named_tensors().items()}


@dataclass
class ForwardCache:
    """Intermediate tensors recorded by a forward pass for backprop."""

    model: ParserModel
    enc_inputs: list[np.ndarray] = field(default_factory=list)
    enc_pre: list[np.ndarray] = field(default_factory=list)
    dec_inputs: dict[str, list[np.ndarray]] = field(default_factory=dict)
    dec_pre: dict[str, list[np.ndarray]] = field(default_factory=dict)
    dec_out: dict[str, np.ndarray] = field(default_factory=dict)


def _encoder_widths(c: int) -> list[tuple[int, int]]:
    return [(3, c), (c, 2 * c), (2 * c, 4 * c), (4 * c, 8 * c)]


def _decoder_widths(c: int) -> list[tuple[int, int]]:
    # conv output widths are 4x the post-rearrangement widths [4c, 2c, c, 1]
    return [(8 * c, 16 * c), (4 * c, 8 * c), (2 * c, 4 * c), (c, 4)]


def init_model(c: int = 8, seed: int = 0) -> ParserModel:
    """He-style fan-in Gaussian weights, zero biases, deterministic in seed."""
    if c < 1:
        raise ValueError(f"base width must be >= 1, got {c}")
    rng = np.random.default_rng(seed)

    def conv(in_ch: int, out_ch: int, stride: int) -> ConvParams:
        fan_in = in_ch * 9
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_ch, in_ch, 3, 3))
        return ConvParams(weights=w, bias=np.zeros(out_ch), stride=stride)

    encoder = [conv(i, o, stride=2) for i, o in _encoder_widths(c)]
    decoders = {
        name: [conv(i, o, stride=1) for i, o in _decoder_widths(c)]
        for name in COMPONENT_NAMES
    }
    return ParserModel(encoder=encoder, decoders=decoders, base_width=c)


def normalize_input(freq: np.ndarray) -> np.ndarray:
    """Signed log compression of DCT coefficients: sign(v) * log10(1 + |v|)."""
    freq = np.asarray(freq, dtype=np.float64)
    return np.sign(freq) * np.log10(1.0 + np.abs(freq))


def leaky_relu(v: np.ndarray) -> np.ndarray:
    return np.where(v > 0.0, v, LEAKY_SLOPE * v)


def _leaky_grad(v: np.ndarray) -> np.ndarray:
    return np.where(v > 0.0, 1.0, LEAKY_SLOPE)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def forward(model: ParserModel, freq: np.ndarray, record: bool = False):
    """Run the parsing network on a frequency tensor.

    Returns (DistributionTriple, ForwardCache or None). The cache is
    produced only when ``record`` is set and is required by :func:`backward`.
    """
    global _FORWARD_CALLS
    _FORWARD_CALLS += 1

    freq = np.asarray(freq, dtype=np.float64)
    in_ch = model.encoder[0].weights.shape[1]
    if freq.ndim != 3 or freq.shape[2] != in_ch:
        raise ValueError(f"expected (h, w, {in_ch}) input, got shape {freq.shape}")
    h, w = freq.shape[:2]
    if h % 16 != 0 or w % 16 != 0:
        raise ValueError(f"spatial dims must be divisible by 16, got {h}x{w}")
    if not np.all(np.isfinite(freq)):
        raise ValueError("frequency tensor contains non-finite values")

    cache = ForwardCache(model=model) if record else None

    a = np.ascontiguousarray(np.moveaxis(normalize_input(freq), 2, 0))
    for layer in model.encoder:
        z = conv3x3_forward(a, layer.weights, layer.bias, layer.stride)
        if record:
            cache.enc_inputs.append(a)
            cache.enc_pre.append(z)
        a = leaky_relu(z)
    encoded = a

    maps = {}
    for name in COMPONENT_NAMES:
        u = encoded
        if record:
            cache.dec_inputs[name] = []
            cache.dec_pre[name] = []
        for blk, layer in enumerate(model.decoders[name]):
            z = conv3x3_forward(u, layer.weights, layer.bias, layer.stride)
            if record:
                cache.dec_inputs[name].append(u)
                cache.dec_pre[name].append(z)
            t = depth_to_space(z)
            u = leaky_relu(t) if blk < 3 else _sigmoid(t)
        p = u[0]
        if record:
            cache.dec_out[name] = p
        maps[name] = p

    triple = DistributionTriple(p_sem=maps["sem"], p_str=maps["str"], p_noi=maps["noi"])
    return triple, cache


def backward(model: ParserModel, cache: ForwardCache, grad_maps: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of a scalar loss w.r.t. every parameter.

    ``grad_maps`` holds the loss gradient w.r.t. each output map, keyed by
    component name; missing keys are treated as zero. The cache must come
    from a recording forward pass on the same model instance.
    """
    if cache is None or cache.model is not model:
        raise ValueError("cache is missing or was recorded for a different model")

    grads = model.zero_grads()
    g_encoded = None

    for name in COMPONENT_NAMES:
        gm = grad_maps.get(name)
        if gm is None:
            continue
        p = cache.dec_out[name]
        g = (gm * p * (1.0 - p))[None, :, :]  # through the sigmoid
        for blk in range(3, -1, -1):
            layer = model.decoders[name][blk]
            z = cache.dec_pre[name][blk]
            if blk < 3:
                g = g * _leaky_grad(depth_to_space(z))
            gz = space_to_depth(g)
            dx, dw, db = conv3x3_backward(cache.dec_inputs[name][blk], layer.weights, gz, layer.stride)
            grads[f"{name}{blk}.w"] += dw
            grads[f"{name}{blk}.b"] += db
            g = dx
        g_encoded = g if g_encoded is None else g_encoded + g

    if g_encoded is None:
        return grads

    g = g_encoded
    for l in range(3, -1, -1):
        layer = model.encoder[l]
        g = g * _leaky_grad(cache.enc_pre[l])
        dx, dw, db = conv3x3_backward(cache.enc_inputs[l], layer.weights, g, layer.stride)
        grads[f"enc{l}.w"] += dw
        grads[f"enc{l}.b"] += db
        g = dx
    return grads
