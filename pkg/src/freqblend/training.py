"""Adam training loop for the parsing network, finite-difference gradient
verification, and the binary checkpoint format.

Training is deterministic given (seed, corpora order): real images are
visited once per epoch in a seeded shuffle and fake partners are drawn
from an independent RNG stream. The feature extractor and scorer stay
frozen; only parser parameters are updated.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .bands import PriorMasks, make_prior_masks
from .dct import dct2
from .losses import (
    BandEnergyScorer,
    LossWeights,
    band_energy_scorer_train,
    loss_ad,
    loss_ff,
    loss_pi,
    loss_qa,
    build_blend_sets,
    total_loss,
)
from .network import ParserModel, backward, forward, init_model

__all__ = [
    "AdamState",
    "TrainConfig",
    "EpochLog",
    "TrainResult",
    "NonFiniteGradientError",
    "CheckpointError",
    "adam_step",
    "train",
    "GradCheckScene",
    "GradCheckReport",
    "grad_check",
    "fd_compare",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
]


class NonFiniteGradientError(ValueError):
    """A gradient group contained NaN or Inf; the update step was aborted."""


class CheckpointError(ValueError):
    """Checkpoint file is malformed or inconsistent."""


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators, shaped like the parameters."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = 1e-4) -> "AdamState":
        return cls(
            lr=lr,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied in place.

    The whole step is aborted (no parameter touched) if any gradient group
    is non-finite.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in parameter group {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


@dataclass
class TrainConfig:
    """Desk-scale defaults; the 400x400 / 200-epoch setting from the paper
    configuration remains supported (image size just has to divide by 16)."""

    image_size: int = 64
    batch_size: int = 8
    epochs: int = 30
    seed: int = 0
    lr: float = 1e-4
    base_width: int = 8
    weights: LossWeights = field(default_factory=LossWeights)
    alpha: float = 0.2
    t1: float = 1.0 / 16.0
    t2: float = 1.0 / 2.0

    def __post_init__(self):
        if self.image_size % 16 != 0:
            raise ValueError(f"image_size must be divisible by 16, got {self.image_size}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class EpochLog:
    epoch: int
    ff: float
    ad: float
    qa: float
    pi: float
    total: float
    integrity_residual: float


@dataclass
class TrainResult:
    model: ParserModel
    log: list[EpochLog]
    aborted: bool = False
    abort_reason: str | None = None


def _snapshot(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}


def _restore(params: dict[str, np.ndarray], snap: dict[str, np.ndarray]) -> None:
    for k in params:
        params[k][...] = snap[k]


def train(
    config: TrainConfig,
    real_corpus,
    fake_corpus,
    feat,
    scorer,
    model: ParserModel | None = None,
) -> TrainResult:
    """Optimize the parser against the total loss over (real, fake) pairs.

    One epoch is one pass over the real corpus. A non-finite loss or
    gradient aborts training with the parameters of the last completed
    epoch restored.
    """
    real_corpus = list(real_corpus)
    fake_corpus = list(fake_corpus)
    if not real_corpus or not fake_corpus:
        raise ValueError("both corpora must be non-empty")

    if model is None:
        model = init_model(config.base_width, config.seed)
    params = model.named_tensors()
    state = AdamState.for_params(params, lr=config.lr)
    priors = make_prior_masks(config.image_size, config.image_size, config.t1, config.t2)

    seq = np.random.SeedSequence(config.seed)
    shuffle_rng, pair_rng = (np.random.default_rng(s) for s in seq.spawn(2))

    n_real = len(real_corpus)
    steps_per_epoch = (n_real + config.batch_size - 1) // config.batch_size
    log: list[EpochLog] = []
    snap = _snapshot(params)

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n_real)
        sums = {"ff": 0.0, "ad": 0.0, "qa": 0.0, "pi": 0.0, "total": 0.0}
        residual = 0.0
        n_pairs = 0
        for step in range(steps_per_epoch):
            idx = order[step * config.batch_size:(step + 1) * config.batch_size]
            fake_idx = pair_rng.integers(0, len(fake_corpus), size=len(idx))
            batch_grads = None
            for ri, fi in zip(idx, fake_idx):
                x_r = real_corpus[ri]
                x_f = fake_corpus[fi]
                triple_r, cache_r = forward(model, dct2(x_r), record=True)
                triple_f, cache_f = forward(model, dct2(x_f), record=True)
                result = total_loss(
                    x_r, x_f, triple_r, triple_f, feat, scorer, config.weights, priors
                )
                if not np.isfinite(result.total):
                    _restore(params, snap)
                    return TrainResult(
                        model=model, log=log, aborted=True,
                        abort_reason=f"non-finite loss at epoch {epoch}, step {step}",
                    )
                g = backward(model, cache_r, result.grad_triple_r)
                g_f = backward(model, cache_f, result.grad_triple_f)
                for k in g:
                    g[k] += g_f[k]
                if batch_grads is None:
                    batch_grads = g
                else:
                    for k in batch_grads:
                        batch_grads[k] += g[k]
                for k, v in result.terms.items():
                    sums[k] += v
                sums["total"] += result.total
                residual += 0.5 * (triple_r.integrity_residual() + triple_f.integrity_residual())
                n_pairs += 1
            for k in batch_grads:
                batch_grads[k] /= len(idx)
            try:
                adam_step(params, batch_grads, state)
            except NonFiniteGradientError as exc:
                _restore(params, snap)
                return TrainResult(model=model, log=log, aborted=True, abort_reason=str(exc))
        log.append(EpochLog(
            epoch=epoch,
            ff=sums["ff"] / n_pairs,
            ad=sums["ad"] / n_pairs,
            qa=sums["qa"] / n_pairs,
            pi=sums["pi"] / n_pairs,
            total=sums["total"] / n_pairs,
            integrity_residual=residual / n_pairs,
        ))
        snap = _snapshot(params)

    return TrainResult(model=model, log=log)


def pretrain_scorer(
    real_corpus,
    fake_corpus,
    t1: float = 1.0 / 16.0,
    t2: float = 1.0 / 2.0,
    bins: int | None = None,
    steps: int = 500,
    lr: float = 0.5,
) -> BandEnergyScorer:
    """Fit the frozen authenticity scorer used during parser training.

    The fake class holds the spatial pseudo-fakes plus their prior-mask
    frequency blends into the paired real image: restoring a clean noise
    band must not make a blended fake look real, so the scorer has to key
    on the structural band rather than on the high-band smoothing that
    resampling leaves behind.
    """
    from .blending import freq_blend

    real_corpus = list(real_corpus)
    fake_corpus = list(fake_corpus)
    if len(real_corpus) != len(fake_corpus):
        raise ValueError("scorer pretraining expects paired real/fake corpora")
    h, w = np.asarray(real_corpus[0]).shape[:2]
    priors = make_prior_masks(h, w, t1, t2)
    blends = [freq_blend(r, f, priors) for r, f in zip(real_corpus, fake_corpus)]
    return band_energy_scorer_train(real_corpus, fake_corpus + blends, bins=bins, steps=steps, lr=lr)


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------


@dataclass
class GradCheckScene:
    """Fixed toy inputs for finite-difference verification."""

    x_r: np.ndarray
    x_f: np.ndarray
    priors: PriorMasks
    feat: object
    scorer: object
    weights: LossWeights = field(default_factory=LossWeights)

    @classmethod
    def toy(cls, size: int = 16, base_width: int = 2, seed: int = 0) -> tuple["GradCheckScene", ParserModel]:
        rng = np.random.default_rng(seed)
        x_r = rng.uniform(0.0, 255.0, size=(size, size, 3))
        x_f = rng.uniform(0.0, 255.0, size=(size, size, 3))
        scene = cls(
            x_r=x_r,
            x_f=x_f,
            priors=make_prior_masks(size, size),
            feat=_toy_feature_extractor(),
            scorer=BandEnergyScorer.with_random_weights(size, size, n_bins=6, seed=seed + 1),
        )
        return scene, init_model(base_width, seed=seed + 2)


def _toy_feature_extractor():
    from .losses import SpectralIdentityFeatures

    return SpectralIdentityFeatures()


@dataclass
class GradCheckRow:
    loss: str
    group: str
    max_rel: float
    mean_rel: float


@dataclass
class GradCheckReport:
    rows: list[GradCheckRow]
    step: float

    @property
    def max_rel_error(self) -> float:
        return max(r.max_rel for r in self.rows)

    def passed(self, threshold: float = 1e-4) -> bool:
        return self.max_rel_error < threshold

    def groups(self) -> set[str]:
        return {r.group for r in self.rows}


def fd_compare(
    loss_fn,
    tensors: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    step: float,
    n_coords: int,
    rng: np.random.Generator,
) -> dict[str, tuple[float, float]]:
    """Central finite differences on a coordinate subsample per group.

    Relative error uses |a - f| / max(|a| + |f|, 1e-6); the floor keeps
    roundoff noise on near-zero gradients from registering as error.
    """
    out = {}
    for name, tensor in tensors.items():
        flat = tensor.reshape(-1)
        k = min(n_coords, flat.size)
        coords = rng.choice(flat.size, size=k, replace=False)
        rels = np.empty(k)
        for n, c in enumerate(coords):
            orig = flat[c]
            flat[c] = orig + step
            up = loss_fn()
            flat[c] = orig - step
            down = loss_fn()
            flat[c] = orig
            fd = (up - down) / (2.0 * step)
            a = analytic[name].reshape(-1)[c]
            rels[n] = abs(a - fd) / max(abs(a) + abs(fd), 1e-6)
        out[name] = (float(rels.max()), float(rels.mean()))
    return out


def _loss_value_and_grads(loss_name: str, model: ParserModel, scene: GradCheckScene):
    """Scalar loss and analytic parameter gradients for one loss term."""
    if loss_name in ("ff", "qa", "pi"):
        triple, cache = forward(model, dct2(scene.x_r), record=True)
        if loss_name == "ff":
            value, g = loss_ff(scene.x_r, triple, scene.feat)
        elif loss_name == "qa":
            value, g = loss_qa(scene.x_r, triple)
        else:
            value, g = loss_pi(triple, scene.priors)
        return value, backward(model, cache, g)
    triple_r, cache_r = forward(model, dct2(scene.x_r), record=True)
    triple_f, cache_f = forward(model, dct2(scene.x_f), record=True)
    if loss_name == "ad":
        sets = build_blend_sets(scene.x_r, scene.x_f, triple_r, triple_f)
        value, g_r, g_f = loss_ad(sets, scene.scorer)
    elif loss_name == "total":
        result = total_loss(
            scene.x_r, scene.x_f, triple_r, triple_f,
            scene.feat, scene.scorer, scene.weights, scene.priors,
        )
        value, g_r, g_f = result.total, result.grad_triple_r, result.grad_triple_f
    else:
        raise ValueError(f"unknown loss {loss_name!r}")
    grads = backward(model, cache_r, g_r)
    g2 = backward(model, cache_f, g_f)
    for k in grads:
        grads[k] += g2[k]
    return value, grads


def grad_check(
    model: ParserModel,
    scene: GradCheckScene,
    losses=("ff", "ad", "qa", "pi", "total"),
    step: float = 1e-4,
    n_coords: int = 50,
    seed: int = 0,
    corrupt_group: str | None = None,
) -> GradCheckReport:
    """Verify analytic parameter gradients of each loss against central
    finite differences on a random coordinate subsample of every group.

    ``corrupt_group`` is a test hook that perturbs one analytic gradient
    so callers can verify their failure handling.
    """
    rows: list[GradCheckRow] = []
    for loss_name in losses:
        _, analytic = _loss_value_and_grads(loss_name, model, scene)
        if corrupt_group is not None and corrupt_group in analytic:
            analytic[corrupt_group] = analytic[corrupt_group] + 1.0

        def value_only():
            v, _ = _loss_value_and_grads(loss_name, model, scene)
            return v

        # resample the same coordinates for every loss for comparability
        rng = np.random.default_rng(seed)
        stats = fd_compare(value_only, model.named_tensors(), analytic, step, n_coords, rng)
        for group, (mx, mean) in stats.items():
            rows.append(GradCheckRow(loss=loss_name, group=group, max_rel=mx, mean_rel=mean))
    return GradCheckReport(rows=rows, step=step)


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"FPNC"
CHECKPOINT_VERSION = 1


def _scorer_tensors(scorer: BandEnergyScorer) -> dict[str, np.ndarray]:
    return {
        "scorer.weights": scorer.weights,
        "scorer.bias": np.array([scorer.bias]),
        "scorer.mu": scorer.mu,
        "scorer.sd": scorer.sd,
    }


def save_checkpoint(path, model: ParserModel, scorer: BandEnergyScorer | None = None) -> None:
    """Write magic, u16 version, length-prefixed JSON manifest, then each
    tensor as little-endian float32 in manifest order."""
    tensors = dict(model.named_tensors())
    meta = {"base_width": model.base_width}
    if scorer is not None:
        tensors.update(_scorer_tensors(scorer))
        meta["scorer"] = {
            "height": scorer.height,
            "width": scorer.width,
            "n_bins": scorer.n_bins,
        }
    manifest = json.dumps({
        "meta": meta,
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()],
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(manifest)))
        fh.write(manifest)
        for v in tensors.values():
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[ParserModel, BandEnergyScorer | None]:
    """Reconstruct the model (and scorer, if stored) from a checkpoint.

    Values roundtrip through float32, so reloaded parameters match saves
    to single precision.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic bytes {blob[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (mlen,) = struct.unpack_from("<I", blob, 6)
    if 10 + mlen > len(blob):
        raise CheckpointError("truncated file: manifest extends past end of file")
    try:
        manifest = json.loads(blob[10:10 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from exc

    entries = manifest["tensors"]
    payload = 10 + mlen
    loaded: dict[str, np.ndarray] = {}
    for entry in entries:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if payload + nbytes > len(blob):
            raise CheckpointError(f"truncated file: tensor {entry['name']!r} incomplete")
        data = np.frombuffer(blob, dtype="<f4", count=int(np.prod(shape, dtype=np.int64)), offset=payload)
        loaded[entry["name"]] = data.reshape(shape).astype(np.float64)
        payload += nbytes
    if payload != len(blob):
        raise CheckpointError(f"{len(blob) - payload} trailing bytes after last tensor")

    meta = manifest["meta"]
    model = init_model(meta["base_width"], seed=0)
    params = model.named_tensors()
    scorer_meta = meta.get("scorer")
    expected = set(params)
    if scorer_meta is not None:
        expected |= {"scorer.weights", "scorer.bias", "scorer.mu", "scorer.sd"}
    if set(loaded) != expected:
        raise CheckpointError(
            f"manifest tensor set mismatch: missing {sorted(expected - set(loaded))}, "
            f"unexpected {sorted(set(loaded) - expected)}"
        )
    for name, p in params.items():
        if loaded[name].shape != p.shape:
            raise CheckpointError(
                f"tensor {name!r} has shape {loaded[name].shape}, expected {p.shape}"
            )
        p[...] = loaded[name]

    scorer = None
    if scorer_meta is not None:
        scorer = BandEnergyScorer(
            weights=loaded["scorer.weights"],
            bias=float(loaded["scorer.bias"][0]),
            mu=loaded["scorer.mu"],
            sd=loaded["scorer.sd"],
            height=scorer_meta["height"],
            width=scorer_meta["width"],
            n_bins=scorer_meta["n_bins"],
        )
    return model, scorer
