"""Command-line surface tying the modules into reproducible workflows.

Subcommands: defaults, corpus, spectrum, train, parse, blend, gradcheck,
sweep, validate. Every command is deterministic given its JSON config
(strict schema, unknown keys rejected; ``defaults`` prints the schema with
all default values).

Exit codes: 0 success, 1 usage error, 2 numeric failure (NaN training
abort or gradient-check failure), 3 IO or file-format error.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bands import make_prior_masks
from .blending import (
    BlendConfig,
    SpatialBlendParams,
    augment,
    freq_blend,
    spatial_pseudo_fake,
    synth_corpus,
)
from .dct import dct2
from .imgio import (
    TensorFormatError,
    diverging_image,
    inspect_tensor_file,
    read_png,
    read_tensor,
    write_png,
    write_profile_csv,
    write_tensor,
    write_training_log_csv,
)
from .losses import LossWeights, band_energy_scorer_train, roc_auc, SpectralIdentityFeatures
from .network import forward
from .spectrum import (
    accumulate_frequency,
    azimuthal_profile,
    default_bins,
    difference_heatmap,
    difference_profile,
    log_profile,
)
from .training import (
    CheckpointError,
    GradCheckScene,
    TrainConfig,
    grad_check,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = ["main", "load_config", "RunConfig", "parse_number", "DEFAULT_CONFIG"]


class UsageError(ValueError):
    pass


class NumericFailure(RuntimeError):
    pass


DEFAULT_CONFIG = {
    "train": {
        "image_size": 64,
        "batch_size": 8,
        "epochs": 30,
        "seed": 0,
        "lr": 1e-4,
        "base_width": 8,
        "lambda_ff": 1.0 / 12.0,
        "lambda_ad": 1.0,
        "lambda_qa": 1e-3,
        "lambda_pi": 0.25,
    },
    "priors": {"t1": 1.0 / 16.0, "t2": 0.5},
    "blend": {"alpha": 0.2, "clamp_output": True, "seed": 0},
    "spatial": {
        "mask_type": "ellipse",
        "translate_frac": 0.03,
        "scale_lo": 0.97,
        "scale_hi": 1.03,
        "rotate_deg": 2.0,
        "brightness": 0.05,
        "contrast": 0.05,
        "blur_sigma_lo": 0.5,
        "blur_sigma_hi": 2.0,
    },
    "analytics": {"n_bins": None},
    "corpus": {"n": 200, "size": 64, "seed": 7},
    "scorer": {"bins": None, "steps": 500, "lr": 0.5},
    "paths": {"out_dir": ".", "corpus_dir": None, "checkpoint": None},
}


@dataclass
class RunConfig:
    train: TrainConfig
    blend: BlendConfig
    spatial: SpatialBlendParams
    analytics_bins: int | None
    corpus_n: int
    corpus_size: int
    corpus_seed: int
    scorer_bins: int | None
    scorer_steps: int
    scorer_lr: float
    paths: dict
    raw: dict


def parse_number(text: str) -> float:
    """Accept plain floats plus simple fractions such as 1/12."""
    text = text.strip()
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return float(num) / float(den)
        return float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"cannot parse number {text!r}") from exc


def _merged(data: dict) -> dict:
    unknown = set(data) - set(DEFAULT_CONFIG)
    if unknown:
        raise UsageError(f"unknown config section(s): {sorted(unknown)}")
    merged = {}
    for section, defaults in DEFAULT_CONFIG.items():
        user = data.get(section, {})
        if not isinstance(user, dict):
            raise UsageError(f"config section {section!r} must be an object")
        bad = set(user) - set(defaults)
        if bad:
            raise UsageError(f"unknown key(s) in config section {section!r}: {sorted(bad)}")
        merged[section] = {**defaults, **user}
    return merged


def load_config(path=None) -> RunConfig:
    if path is None:
        data = {}
    else:
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    cfg = _merged(data)
    t = cfg["train"]
    train_cfg = TrainConfig(
        image_size=t["image_size"],
        batch_size=t["batch_size"],
        epochs=t["epochs"],
        seed=t["seed"],
        lr=t["lr"],
        base_width=t["base_width"],
        weights=LossWeights(ff=t["lambda_ff"], ad=t["lambda_ad"], qa=t["lambda_qa"], pi=t["lambda_pi"]),
        alpha=cfg["blend"]["alpha"],
        t1=cfg["priors"]["t1"],
        t2=cfg["priors"]["t2"],
    )
    s = cfg["spatial"]
    spatial = SpatialBlendParams(
        mask_type=s["mask_type"],
        translate_frac=s["translate_frac"],
        scale_range=(s["scale_lo"], s["scale_hi"]),
        rotate_deg=s["rotate_deg"],
        brightness=s["brightness"],
        contrast=s["contrast"],
        blur_sigma=(s["blur_sigma_lo"], s["blur_sigma_hi"]),
    )
    blend_cfg = BlendConfig(
        alpha=cfg["blend"]["alpha"],
        clamp_output=cfg["blend"]["clamp_output"],
        seed=cfg["blend"]["seed"],
    )
    return RunConfig(
        train=train_cfg,
        blend=blend_cfg,
        spatial=spatial,
        analytics_bins=cfg["analytics"]["n_bins"],
        corpus_n=cfg["corpus"]["n"],
        corpus_size=cfg["corpus"]["size"],
        corpus_seed=cfg["corpus"]["seed"],
        scorer_bins=cfg["scorer"]["bins"],
        scorer_steps=cfg["scorer"]["steps"],
        scorer_lr=cfg["scorer"]["lr"],
        paths=cfg["paths"],
        raw=cfg,
    )


def _load_dir_images(directory) -> list[np.ndarray]:
    files = sorted(Path(directory).glob("*.png"))
    if not files:
        raise UsageError(f"no PNG images found in {directory}")
    images = [read_png(f) for f in files]
    shape = images[0].shape
    for f, img in zip(files, images):
        if img.shape != shape:
            raise UsageError(f"{f} has shape {img.shape}, expected {shape}")
    return images


def _load_corpus(corpus_dir) -> tuple[list[np.ndarray], list[np.ndarray]]:
    root = Path(corpus_dir)
    return _load_dir_images(root / "real"), _load_dir_images(root / "spfake")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_defaults() -> int:
    print(json.dumps(DEFAULT_CONFIG, indent=2))
    return 0


def cmd_corpus(cfg: RunConfig, out_dir) -> int:
    root = Path(out_dir)
    (root / "real").mkdir(parents=True, exist_ok=True)
    (root / "spfake").mkdir(parents=True, exist_ok=True)
    real, fake = synth_corpus(cfg.corpus_n, cfg.corpus_size, cfg.corpus_seed, cfg.spatial)
    rows = []
    for i, (r, f) in enumerate(zip(real, fake)):
        rname = f"real/{i:05d}.png"
        fname = f"spfake/{i:05d}.png"
        write_png(root / rname, r)
        write_png(root / fname, f)
        rows.append((rname, "real", f"{cfg.corpus_seed}-{i}"))
        rows.append((fname, "spfake", f"{cfg.corpus_seed}-{i}"))
    with open(root / "manifest.csv", "w") as fh:
        fh.write("filename,class,seed\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    print(f"wrote {len(real)} real and {len(fake)} spfake images to {root}")
    return 0


def cmd_spectrum(real_dir, fake_dir, n_bins, out_prefix) -> int:
    real = _load_dir_images(real_dir)
    fake = _load_dir_images(fake_dir)
    if real[0].shape != fake[0].shape:
        raise UsageError(f"real/fake image sizes differ: {real[0].shape} vs {fake[0].shape}")
    h, w = real[0].shape[:2]
    if n_bins is None:
        n_bins = default_bins(h, w)
    agg_r = accumulate_frequency(real)
    agg_f = accumulate_frequency(fake)
    prof_r = azimuthal_profile(agg_r, n_bins)
    prof_f = azimuthal_profile(agg_f, n_bins)
    prefix = str(out_prefix)
    log_r = log_profile(prof_r)
    log_f = log_profile(prof_f)
    write_profile_csv(prefix + "_real_log2.csv", log_r.bin_centers, log_r.values)
    write_profile_csv(prefix + "_fake_log2.csv", log_f.bin_centers, log_f.values)
    write_profile_csv(prefix + "_diff.csv", prof_r.bin_centers, difference_profile(prof_r, prof_f))
    write_profile_csv(
        prefix + "_diff_signedlog.csv",
        prof_r.bin_centers,
        difference_profile(prof_r, prof_f, log_scale=True),
    )
    write_png(prefix + "_heatmap.png", diverging_image(difference_heatmap(agg_f, agg_r)))
    print(f"wrote spectrum profiles and heatmap with prefix {prefix}")
    return 0


def cmd_train(cfg: RunConfig, corpus_dir, out_checkpoint, log_path=None) -> int:
    real, fake = _load_corpus(corpus_dir)
    if real[0].shape[0] != cfg.train.image_size:
        raise UsageError(
            f"corpus images are {real[0].shape[0]}px but train.image_size={cfg.train.image_size}"
        )
    feat = SpectralIdentityFeatures()
    scorer = band_energy_scorer_train(
        real, fake, bins=cfg.scorer_bins, steps=cfg.scorer_steps, lr=cfg.scorer_lr
    )
    result = train(cfg.train, real, fake, feat, scorer)
    save_checkpoint(out_checkpoint, result.model, scorer)
    if log_path is None:
        log_path = str(out_checkpoint) + ".log.csv"
    write_training_log_csv(log_path, result.log)
    if result.aborted:
        print(f"training aborted: {result.abort_reason}; last checkpoint kept at {out_checkpoint}")
        raise NumericFailure(result.abort_reason)
    if result.log:
        last = result.log[-1]
        print(
            f"trained {cfg.train.epochs} epochs: total {last.total:.4f}, "
            f"integrity residual {last.integrity_residual:.4f}"
        )
    else:
        print("no epochs requested; checkpoint holds the initialization")
    print(f"checkpoint: {out_checkpoint}\nlog: {log_path}")
    return 0


def cmd_parse(checkpoint, image_path, out_prefix) -> int:
    model, _ = load_checkpoint(checkpoint)
    image = read_png(image_path)
    triple, _ = forward(model, dct2(image))
    prefix = str(out_prefix)
    from .bands import parse_components

    components = parse_components(image, triple)
    for name, pmap in triple.maps().items():
        write_tensor(f"{prefix}_p_{name}.fqtn", pmap)
        write_png(f"{prefix}_p_{name}.png", pmap * 255.0)
        write_png(f"{prefix}_render_{name}.png", components[name][1])
    residual = triple.integrity_residual()
    print(f"wrote 3 maps, 3 map PNGs and 3 renderings with prefix {prefix}")
    print(f"integrity residual mean|sum - 1| = {residual:.4f}")
    return 0


def cmd_blend(
    checkpoint,
    real_path,
    fake_path,
    out_path,
    use_spfake: bool,
    use_priors: bool,
    force_normalize: bool,
    cfg: RunConfig,
    seed: int,
) -> int:
    x_r = read_png(real_path)
    if use_spfake:
        rng = np.random.default_rng(seed)
        x_f, _ = spatial_pseudo_fake(x_r, cfg.spatial, rng)
    elif fake_path is not None:
        x_f = read_png(fake_path)
    else:
        raise UsageError("provide --fake IMAGE or --spfake")
    if x_r.shape != x_f.shape:
        raise UsageError(f"image sizes differ: {x_r.shape} vs {x_f.shape}")
    if use_priors:
        parser = make_prior_masks(x_r.shape[0], x_r.shape[1], cfg.train.t1, cfg.train.t2)
    else:
        if checkpoint is None:
            raise UsageError("provide --checkpoint or --priors")
        parser, _ = load_checkpoint(checkpoint)
    out = freq_blend(x_r, x_f, parser, normalize=force_normalize, clamp=cfg.blend.clamp_output)
    write_png(out_path, out)
    print(f"wrote pseudo-fake to {out_path}")
    return 0


def cmd_gradcheck(cfg: RunConfig, corrupt: str | None = None) -> int:
    scene, model = GradCheckScene.toy(size=16, base_width=2, seed=cfg.train.seed)
    scene.weights = cfg.train.weights
    report = grad_check(model, scene, corrupt_group=corrupt)
    for row in report.rows:
        print(f"{row.loss:>5s}  {row.group:<8s}  max_rel={row.max_rel:.3e}  mean_rel={row.mean_rel:.3e}")
    print(f"overall max relative error: {report.max_rel_error:.3e} (threshold 1e-4)")
    if not report.passed():
        raise NumericFailure(f"gradient check failed: max rel {report.max_rel_error:.3e}")
    print("gradient check passed")
    return 0


def _sweep_values(param: str, text: str):
    if param == "alpha":
        return [("alpha", parse_number(v)) for v in text.split(",") if v.strip()]
    if param == "lambdas":
        out = []
        for quad in text.split(";"):
            parts = [parse_number(v) for v in quad.split(",")]
            if len(parts) != 4:
                raise UsageError(f"lambda set needs 4 values, got {quad!r}")
            out.append(("lambdas", tuple(parts)))
        return out
    raise UsageError(f"unknown sweep parameter {param!r} (expected alpha or lambdas)")


def cmd_sweep(cfg: RunConfig, corpus_dir, param: str, values_text: str, out_csv) -> int:
    values = _sweep_values(param, values_text)
    real, fake = _load_corpus(corpus_dir)
    feat = SpectralIdentityFeatures()
    scorer = band_energy_scorer_train(
        real, fake, bins=cfg.scorer_bins, steps=cfg.scorer_steps, lr=cfg.scorer_lr
    )
    heldout_n = max(2, min(50, cfg.corpus_n))
    heldout, _ = synth_corpus(heldout_n, cfg.corpus_size, cfg.corpus_seed + 1, cfg.spatial)

    rows = []
    for _, value in values:
        train_cfg = cfg.train
        alpha = cfg.blend.alpha
        if param == "alpha":
            alpha = value
        else:
            from dataclasses import replace

            train_cfg = replace(
                train_cfg,
                weights=LossWeights(ff=value[0], ad=value[1], qa=value[2], pi=value[3]),
            )
        result = train(train_cfg, real, fake, feat, scorer)
        if result.aborted:
            raise NumericFailure(f"sweep value {value!r} aborted: {result.abort_reason}")
        last = result.log[-1]
        blend_cfg = BlendConfig(alpha=alpha, clamp_output=cfg.blend.clamp_output, seed=cfg.blend.seed)
        rng = np.random.default_rng(cfg.blend.seed)
        scores_real = [scorer.score(x) for x in heldout]
        scores_fake = [
            scorer.score(augment(x, result.model, blend_cfg, cfg.spatial, rng).image)
            for x in heldout
        ]
        auc = roc_auc(
            [1] * len(scores_real) + [0] * len(scores_fake), scores_real + scores_fake
        )
        value_str = f"{value:.10g}" if param == "alpha" else "/".join(f"{v:.10g}" for v in value)
        rows.append((value_str, last, auc))

    with open(out_csv, "w") as fh:
        fh.write("param,value,L_ff,L_ad,L_qa,L_pi,total,integrity_residual,auc\n")
        for value_str, last, auc in rows:
            fh.write(
                f"{param},{value_str},{last.ff:.10g},{last.ad:.10g},{last.qa:.10g},"
                f"{last.pi:.10g},{last.total:.10g},{last.integrity_residual:.10g},{auc:.10g}\n"
            )
    print(f"wrote {len(rows)} sweep rows to {out_csv}")
    return 0


def cmd_validate(path) -> int:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"FQTN":
        info = inspect_tensor_file(path)
        print(f"valid tensor file: rank {info['rank']}, dims {info['dims']}")
        read_tensor(path)
        return 0
    if magic == b"FPNC":
        model, scorer = load_checkpoint(path)
        n = len(model.named_tensors())
        print(f"valid checkpoint: base width {model.base_width}, {n} parser tensors, "
              f"scorer {'present' if scorer else 'absent'}")
        return 0
    raise TensorFormatError(f"unrecognized magic bytes {magic!r}")


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="freqblend", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("defaults", help="print the default configuration as JSON")

    c = sub.add_parser("corpus", help="generate the synthetic corpus")
    c.add_argument("--config", default=None)
    c.add_argument("--out", required=True)

    c = sub.add_parser("spectrum", help="spectrum profiles and difference heatmap")
    c.add_argument("--real", required=True)
    c.add_argument("--fake", required=True)
    c.add_argument("--bins", type=int, default=None)
    c.add_argument("--out", required=True, help="output file prefix")

    c = sub.add_parser("train", help="train the parsing network on a corpus")
    c.add_argument("--config", default=None)
    c.add_argument("--corpus", required=True)
    c.add_argument("--out", required=True, help="checkpoint path")
    c.add_argument("--log", default=None, help="loss CSV path (default: <out>.log.csv)")

    c = sub.add_parser("parse", help="split an image into frequency components")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--image", required=True)
    c.add_argument("--out", required=True, help="output file prefix")

    c = sub.add_parser("blend", help="frequency-blend a fake into a real image")
    c.add_argument("--checkpoint", default=None)
    c.add_argument("--real", required=True)
    c.add_argument("--fake", default=None)
    c.add_argument("--spfake", action="store_true", help="self-blend the real image as the fake input")
    c.add_argument("--priors", action="store_true", help="use the band priors instead of a checkpoint")
    c.add_argument("--force-normalize", action="store_true")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--config", default=None)
    c.add_argument("--out", required=True)

    c = sub.add_parser("gradcheck", help="verify analytic gradients on a toy scene")
    c.add_argument("--config", default=None)
    c.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)  # test hook

    c = sub.add_parser("sweep", help="rerun training across loss weights or alpha")
    c.add_argument("--config", default=None)
    c.add_argument("--corpus", required=True)
    c.add_argument("--param", required=True, choices=["alpha", "lambdas"])
    c.add_argument("--values", required=True)
    c.add_argument("--out", required=True)

    c = sub.add_parser("validate", help="check a tensor or checkpoint file format")
    c.add_argument("path")

    return p


def _apply_thread_env() -> None:
    threads = os.environ.get("FREQBLEND_THREADS")
    if not threads:
        return
    try:
        import numba

        numba.set_num_threads(max(1, int(threads)))
    except (ImportError, ValueError):
        pass


def main(argv=None) -> int:
    _apply_thread_env()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "defaults":
            return cmd_defaults()
        if args.command == "corpus":
            return cmd_corpus(load_config(args.config), args.out)
        if args.command == "spectrum":
            return cmd_spectrum(args.real, args.fake, args.bins, args.out)
        if args.command == "train":
            return cmd_train(load_config(args.config), args.corpus, args.out, args.log)
        if args.command == "parse":
            return cmd_parse(args.checkpoint, args.image, args.out)
        if args.command == "blend":
            return cmd_blend(
                args.checkpoint, args.real, args.fake, args.out,
                use_spfake=args.spfake, use_priors=args.priors,
                force_normalize=args.force_normalize,
                cfg=load_config(args.config), seed=args.seed,
            )
        if args.command == "gradcheck":
            return cmd_gradcheck(load_config(args.config), corrupt=args.corrupt)
        if args.command == "sweep":
            return cmd_sweep(load_config(args.config), args.corpus, args.param, args.values, args.out)
        if args.command == "validate":
            return cmd_validate(args.path)
        parser.error(f"unknown command {args.command!r}")
    except (UsageError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (TensorFormatError, CheckpointError) as exc:
        print(f"file format error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
