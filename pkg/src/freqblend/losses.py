"""Training objectives for the parsing network and the pluggable surrogate
models they score against.

Four losses shape the three probability maps without any ground truth:

* facial fidelity: the semantic rendering must preserve the feature
  vector of the original image;
* authenticity: images reassembled without fake structural content must
  score real, images containing fake structural content must score fake;
* quality: dropping the noise component must not change the image;
* prior/integrity: maps stay near the three-band priors and sum to one.

All squared-norm reductions are per-element means so the loss weights
keep their meaning across image sizes. The feature extractor and
authenticity scorer are interfaces; the provided implementations are
small differentiable stand-ins (a low-frequency DCT fingerprint and a
logistic regression over azimuthal band energies).
"""

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.stats import rankdata

from .bands import DistributionTriple, PriorMasks, select_component
from .dct import dct2, idct2
from .spectrum import default_bins, radial_bin_grid

__all__ = [
    "FeatureExtractor",
    "AuthenticityScorer",
    "LossWeights",
    "BlendSets",
    "loss_ff",
    "loss_ad",
    "loss_qa",
    "loss_pi",
    "build_blend_sets",
    "total_loss",
    "TotalLossResult",
    "SpectralIdentityFeatures",
    "BandEnergyScorer",
    "band_energy_scorer_train",
    "roc_auc",
]

_P_MIN = 1e-12


class FeatureExtractor(Protocol):
    """Differentiable image-to-feature map standing in for a face recognizer."""

    def evaluate(self, image: np.ndarray) -> np.ndarray: ...

    def vjp(self, image: np.ndarray, upstream: np.ndarray) -> np.ndarray: ...


class AuthenticityScorer(Protocol):
    """Probability that an image is real (label 1 = real, 0 = fake)."""

    def score(self, image: np.ndarray) -> float: ...

    def vjp(self, image: np.ndarray, upstream: float) -> np.ndarray: ...


@dataclass
class LossWeights:
    """Weights for the four loss terms (defaults 1/12, 1, 1e-3, 1/4)."""

    ff: float = 1.0 / 12.0
    ad: float = 1.0
    qa: float = 1e-3
    pi: float = 0.25

    def __post_init__(self):
        for name, v in (("ff", self.ff), ("ad", self.ad), ("qa", self.qa), ("pi", self.pi)):
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and non-negative, got {v}")


def _zero_triple_grads(shape) -> dict[str, np.ndarray]:
    return {k: np.zeros(shape) for k in ("sem", "str", "noi")}


def _map_grad(freq: np.ndarray, g_image: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. a map M in idct2(freq * M), given the image gradient."""
    gf = dct2(g_image)
    prod = freq * gf
    return prod.sum(axis=2) if prod.ndim == 3 else prod


def loss_ff(x: np.ndarray, triple: DistributionTriple, feat: FeatureExtractor):
    """Facial fidelity: MSE between features of the semantic rendering and
    of the original image. Returns (value, gradients w.r.t. the triple)."""
    freq = dct2(x)
    render = idct2(select_component(freq, triple.p_sem))
    fr = feat.evaluate(render)
    fx = feat.evaluate(x)
    if fr.shape != fx.shape:
        raise ValueError(f"feature dims differ: {fr.shape} vs {fx.shape}")
    diff = fr - fx
    value = float(np.mean(diff**2))
    g_render = feat.vjp(render, 2.0 * diff / diff.size)
    grads = _zero_triple_grads(triple.p_sem.shape)
    grads["sem"] = _map_grad(freq, g_render)
    return value, grads


def loss_qa(x: np.ndarray, triple: DistributionTriple):
    """Quality: MSE between the image and its reassembly from the semantic
    plus structural components (penalizes energy routed to noise)."""
    freq = dct2(x)
    rec = idct2(select_component(freq, triple.p_sem + triple.p_str))
    diff = x - rec
    value = float(np.mean(diff**2))
    g = _map_grad(freq, -2.0 * diff / diff.size)
    grads = _zero_triple_grads(triple.p_sem.shape)
    grads["sem"] = g
    grads["str"] = g.copy()
    return value, grads


def loss_pi(triple: DistributionTriple, priors: PriorMasks):
    """Prior and integrity: per-map MSE to the band priors plus MSE of the
    map sum against the all-ones mask."""
    maps = triple.maps()
    masks = priors.maps()
    n = triple.p_sem.size
    value = 0.0
    grads = {}
    for k in maps:
        if maps[k].shape != masks[k].shape:
            raise ValueError(f"map/prior shapes differ for {k}: {maps[k].shape} vs {masks[k].shape}")
        d = maps[k] - masks[k]
        value += float(np.mean(d**2))
        grads[k] = 2.0 * d / n
    s = triple.p_sem + triple.p_str + triple.p_noi - 1.0
    value += float(np.mean(s**2))
    gi = 2.0 * s / n
    for k in grads:
        grads[k] = grads[k] + gi
    return value, grads


@dataclass
class _Member:
    image: np.ndarray
    # (source frequency tensor, triple tag 'r'|'f', map name) per additive term
    terms: list[tuple[np.ndarray, str, str]]


@dataclass
class BlendSets:
    """The two recombination sets used by the authenticity loss.

    ``real_set`` holds images with no fake structural content (3 members),
    ``fake_set`` holds images containing fake structural content (2 members).
    """

    _real: list[_Member]
    _fake: list[_Member]

    @property
    def real_set(self) -> list[np.ndarray]:
        return [m.image for m in self._real]

    @property
    def fake_set(self) -> list[np.ndarray]:
        return [m.image for m in self._fake]


def build_blend_sets(
    x_r: np.ndarray,
    x_f: np.ndarray,
    triple_r: DistributionTriple,
    triple_f: DistributionTriple,
) -> BlendSets:
    """Assemble the recombination sets, each component selected with its
    own image's maps:

    real set: sem(r) | sem(f) | sem(r) + str(r)
    fake set: sem(f) + str(f) | sem(r) + str(f)
    """
    if np.asarray(x_r).shape != np.asarray(x_f).shape:
        raise ValueError(f"image shapes differ: {np.asarray(x_r).shape} vs {np.asarray(x_f).shape}")
    fr = dct2(x_r)
    ff = dct2(x_f)
    mr = triple_r.maps()
    mf = triple_f.maps()

    def member(terms):
        acc = np.zeros_like(fr)
        for freq, tag, name in terms:
            m = mr[name] if tag == "r" else mf[name]
            acc = acc + select_component(freq, m)
        return _Member(image=idct2(acc), terms=terms)

    real = [
        member([(fr, "r", "sem")]),
        member([(ff, "f", "sem")]),
        member([(fr, "r", "sem"), (fr, "r", "str")]),
    ]
    fake = [
        member([(ff, "f", "sem"), (ff, "f", "str")]),
        member([(fr, "r", "sem"), (ff, "f", "str")]),
    ]
    return BlendSets(_real=real, _fake=fake)


def loss_ad(sets: BlendSets, scorer: AuthenticityScorer):
    """Authenticity loss: mean BCE toward label 1 over the real set plus
    mean BCE toward label 0 over the fake set.

    Returns (value, grads w.r.t. the real image's triple, grads w.r.t. the
    fake image's triple). An uninformative scorer (0.5 everywhere) yields
    2*ln(2).
    """
    shape = sets._real[0].terms[0][0].shape[:2]
    grads = {"r": _zero_triple_grads(shape), "f": _zero_triple_grads(shape)}
    value = 0.0
    for members, label in ((sets._real, 1.0), (sets._fake, 0.0)):
        weight = 1.0 / len(members)
        for m in members:
            p = float(scorer.score(m.image))
            if not (0.0 < p < 1.0):
                raise ValueError(f"scorer returned {p}, outside the open interval (0, 1)")
            pc = min(max(p, _P_MIN), 1.0 - _P_MIN)
            value += weight * -(label * np.log(pc) + (1.0 - label) * np.log(1.0 - pc))
            dbce = weight * (-label / pc + (1.0 - label) / (1.0 - pc))
            g_img = scorer.vjp(m.image, dbce)
            gf = dct2(g_img)
            for freq, tag, name in m.terms:
                prod = freq * gf
                grads[tag][name] += prod.sum(axis=2) if prod.ndim == 3 else prod
    return float(value), grads["r"], grads["f"]


@dataclass
class TotalLossResult:
    total: float
    terms: dict[str, float]           # ff, ad, qa, pi
    grad_triple_r: dict[str, np.ndarray]
    grad_triple_f: dict[str, np.ndarray]


def total_loss(
    x_r: np.ndarray,
    x_f: np.ndarray,
    triple_r: DistributionTriple,
    triple_f: DistributionTriple,
    feat: FeatureExtractor,
    scorer: AuthenticityScorer,
    weights: LossWeights,
    priors: PriorMasks,
) -> TotalLossResult:
    """Weighted sum of the four losses with gradients for both triples.

    The fidelity and quality losses accept either a real or a fake input,
    so both are averaged over the (x_r, x_f) pair; the prior loss is
    averaged over both triples.
    """
    ff_r, gff_r = loss_ff(x_r, triple_r, feat)
    ff_f, gff_f = loss_ff(x_f, triple_f, feat)
    qa_r, gqa_r = loss_qa(x_r, triple_r)
    qa_f, gqa_f = loss_qa(x_f, triple_f)
    pi_r, gpi_r = loss_pi(triple_r, priors)
    pi_f, gpi_f = loss_pi(triple_f, priors)
    sets = build_blend_sets(x_r, x_f, triple_r, triple_f)
    ad, gad_r, gad_f = loss_ad(sets, scorer)

    terms = {
        "ff": 0.5 * (ff_r + ff_f),
        "ad": ad,
        "qa": 0.5 * (qa_r + qa_f),
        "pi": 0.5 * (pi_r + pi_f),
    }
    total = (
        weights.ff * terms["ff"]
        + weights.ad * terms["ad"]
        + weights.qa * terms["qa"]
        + weights.pi * terms["pi"]
    )

    def combine(gff, gqa, gpi, gad):
        return {
            k: 0.5 * weights.ff * gff[k]
            + 0.5 * weights.qa * gqa[k]
            + 0.5 * weights.pi * gpi[k]
            + weights.ad * gad[k]
            for k in ("sem", "str", "noi")
        }

    return TotalLossResult(
        total=float(total),
        terms=terms,
        grad_triple_r=combine(gff_r, gqa_r, gpi_r, gad_r),
        grad_triple_f=combine(gff_f, gqa_f, gpi_f, gad_f),
    )


# ---------------------------------------------------------------------------
# reference surrogates
# ---------------------------------------------------------------------------


class SpectralIdentityFeatures:
    """Low-frequency DCT fingerprint: the top-left ``block`` x ``block``
    coefficients of every channel, flattened and L2-normalized.

    A linear map plus normalization, so the vjp is exact and cheap.
    """

    def __init__(self, block: int = 8, eps: float = 1e-8):
        self.block = block
        self.eps = eps

    def _block_coeffs(self, image: np.ndarray) -> np.ndarray:
        x = np.asarray(image, dtype=np.float64)
        if x.ndim != 3:
            raise ValueError(f"expected (h, w, c) image, got shape {x.shape}")
        if x.shape[0] < self.block or x.shape[1] < self.block:
            raise ValueError(f"image must be at least {self.block}x{self.block}, got {x.shape[:2]}")
        return dct2(x)[: self.block, : self.block, :].ravel()

    def evaluate(self, image: np.ndarray) -> np.ndarray:
        g = self._block_coeffs(image)
        return g / (np.linalg.norm(g) + self.eps)

    def vjp(self, image: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        x = np.asarray(image, dtype=np.float64)
        g = self._block_coeffs(x)
        n = np.linalg.norm(g)
        dg = upstream / (n + self.eps) - g * (g @ upstream) / ((n + self.eps) ** 2 * max(n, 1e-300))
        back = np.zeros_like(x)
        back[: self.block, : self.block, :] = dg.reshape(self.block, self.block, x.shape[2])
        return idct2(back)


class BandEnergyScorer:
    """Logistic regression over log(1 + azimuthal band energy) features of
    the DCT magnitude spectrum. Scores the probability an image is real.
    """

    def __init__(
        self,
        weights: np.ndarray,
        bias: float,
        mu: np.ndarray,
        sd: np.ndarray,
        height: int,
        width: int,
        n_bins: int,
    ):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        self.mu = np.asarray(mu, dtype=np.float64)
        self.sd = np.asarray(sd, dtype=np.float64)
        self.height = height
        self.width = width
        self.n_bins = n_bins
        self._bin_idx, self._bin_counts, _ = radial_bin_grid(height, width, n_bins)

    @classmethod
    def with_random_weights(cls, height: int, width: int, n_bins: int, seed: int = 0) -> "BandEnergyScorer":
        """Untrained scorer with fixed random weights (gradient-check scenes)."""
        rng = np.random.default_rng(seed)
        return cls(
            weights=rng.normal(0.0, 0.5, size=n_bins),
            bias=0.1,
            mu=np.zeros(n_bins),
            sd=np.ones(n_bins),
            height=height,
            width=width,
            n_bins=n_bins,
        )

    def band_energies(self, image: np.ndarray) -> np.ndarray:
        x = np.asarray(image, dtype=np.float64)
        if x.shape[:2] != (self.height, self.width):
            raise ValueError(f"expected {self.height}x{self.width} image, got {x.shape[:2]}")
        mag = np.abs(dct2(x))
        if mag.ndim == 3:
            mag = mag.mean(axis=2)
        sums = np.bincount(self._bin_idx.ravel(), weights=mag.ravel(), minlength=self.n_bins)
        return sums / self._bin_counts

    def features(self, image: np.ndarray) -> np.ndarray:
        return np.log1p(self.band_energies(image))

    def _logit(self, image: np.ndarray) -> float:
        z = (self.features(image) - self.mu) / self.sd
        return float(self.weights @ z + self.bias)

    def score(self, image: np.ndarray) -> float:
        t = self._logit(image)
        p = 1.0 / (1.0 + np.exp(-t)) if t >= 0 else np.exp(t) / (1.0 + np.exp(t))
        return float(min(max(p, _P_MIN), 1.0 - _P_MIN))

    def vjp(self, image: np.ndarray, upstream: float) -> np.ndarray:
        x = np.asarray(image, dtype=np.float64)
        d = dct2(x)
        mag = np.abs(d)
        ch = 1 if mag.ndim == 2 else mag.shape[2]
        mag2 = mag if mag.ndim == 2 else mag.mean(axis=2)
        sums = np.bincount(self._bin_idx.ravel(), weights=mag2.ravel(), minlength=self.n_bins)
        e = sums / self._bin_counts
        p = self.score(x)
        dt = upstream * p * (1.0 - p)
        dg = dt * self.weights / self.sd
        de = dg / (1.0 + e)
        dmag2 = (de / self._bin_counts)[self._bin_idx]
        # |.| has subgradient 0 at exact zeros via np.sign
        if d.ndim == 2:
            dd = dmag2 * np.sign(d)
        else:
            dd = dmag2[:, :, None] * np.sign(d) / ch
        return idct2(dd)


def band_energy_scorer_train(
    real_images,
    fake_images,
    bins: int | None = None,
    steps: int = 500,
    lr: float = 0.5,
) -> BandEnergyScorer:
    """Fit the logistic band-energy scorer by full-batch gradient descent.

    Features are standardized over the training set; labels are 1 for the
    real class and 0 for the fake class.
    """
    real_images = list(real_images)
    fake_images = list(fake_images)
    if not real_images or not fake_images:
        raise ValueError("both classes must be non-empty")
    h, w = np.asarray(real_images[0]).shape[:2]
    if bins is None:
        bins = default_bins(h, w)
    scorer = BandEnergyScorer(
        weights=np.zeros(bins), bias=0.0, mu=np.zeros(bins), sd=np.ones(bins),
        height=h, width=w, n_bins=bins,
    )
    feats = np.array([scorer.features(img) for img in real_images + fake_images])
    y = np.concatenate([np.ones(len(real_images)), np.zeros(len(fake_images))])
    mu = feats.mean(axis=0)
    sd = np.maximum(feats.std(axis=0), 1e-8)
    z = (feats - mu) / sd

    wv = np.zeros(bins)
    b = 0.0
    for _ in range(steps):
        t = z @ wv + b
        p = np.where(t >= 0, 1.0 / (1.0 + np.exp(-t)), np.exp(t) / (1.0 + np.exp(t)))
        err = p - y
        wv -= lr * (z.T @ err) / len(y)
        b -= lr * float(err.mean())

    scorer.weights = wv
    scorer.bias = b
    scorer.mu = mu
    scorer.sd = sd
    return scorer


def roc_auc(labels, scores) -> float:
    """Rank-based AUC (Mann-Whitney), ties handled by average ranks."""
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
