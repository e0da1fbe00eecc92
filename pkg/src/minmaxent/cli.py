"""Command-line entry point: ``minmaxent <command> [options]``.

Every command reads an optional INI run configuration (``--config``),
applies ``--set section.key=value`` overrides and command flags, writes
the resolved configuration to ``run.ini`` in its output directory and
produces its artifacts there.  The default output root is taken from
``MINMAXENT_OUTPUT`` (``./runs`` when unset).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import io as mio
from . import metrics, pca
from .biasnets import BiasNetConfig, train_classifier, train_discriminator
from .config import ConfigError, RunConfig, describe_keys
from .data import (
    CAUCHY_PARAMS,
    GAUSSIAN_PARAMS,
    Dataset,
    concat,
    default_digits_path,
    load_digits,
    subset,
    synth_bimodal,
)
from .hamiltonian import add_classifier_bias, add_discriminator_bias, detach_base
from .vae import VaeConfig, build_vae, sample_vae, train_vae

OUTPUT_ENV = "MINMAXENT_OUTPUT"


class CommandError(RuntimeError):
    pass


# helpers -------------------------------------------------------------------


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(mio._jsonable(obj), indent=2, sort_keys=True) + "\n"


def _out_dir(cfg: RunConfig, args, command: str) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.get("run", "output"):
        return Path(cfg.get("run", "output"))
    return Path(os.environ.get(OUTPUT_ENV, "runs")) / command


def _mixture(cfg: RunConfig):
    kind = cfg.get("data", "kind")
    params = cfg.get("data", "params")
    if params is None:
        params = GAUSSIAN_PARAMS if kind == "gaussian" else CAUCHY_PARAMS
    return kind, tuple(params)


def _digits(cfg: RunConfig) -> Dataset:
    path = cfg.get("data", "digits") or default_digits_path()
    if path is None:
        raise CommandError("no digits CSV configured (data.digits) and none bundled with scikit-learn")
    return load_digits(path)


def _training_images(cfg: RunConfig) -> Dataset:
    return subset(_digits(cfg), cfg.get("data", "images"), seed=cfg.get("run", "seed"), drop_labels=True)


def _biasnet_config(cfg: RunConfig) -> BiasNetConfig:
    return BiasNetConfig(
        epochs=cfg.get("biasnet", "epochs"),
        lr=cfg.get("biasnet", "lr"),
        batch_size=cfg.get("biasnet", "batch_size"),
        holdout=cfg.get("biasnet", "holdout"),
        seed=cfg.get("run", "seed"),
    )


def _generate(cfg: RunConfig, H, x0=None):
    ens, _ = ex.generate(
        H,
        n_chains=cfg.get("sample", "n_chains"),
        burn_in_sweeps=cfg.get("sample", "burn_in"),
        sweeps=cfg.get("sample", "sweeps"),
        thinning=cfg.get("sample", "thinning"),
        seed=cfg.get("run", "seed"),
        x0=x0,
    )
    return ens


def _save_images(path: Path, x: np.ndarray, n: int = 64) -> None:
    mio.write_png(path, mio.image_grid(x[-n:], ncols=8))


# commands ------------------------------------------------------------------


def cmd_pca_demo(cfg: RunConfig, args, out: Path) -> None:
    cov = pca.Covariance2D(*cfg.get("pca", "cov"))
    theta, S = pca.entropy_curve(cov, cfg.get("pca", "points"))
    mio.atomic_write_text(out / "entropy_curve.csv", _csv(zip(theta, S), ["theta", "entropy"]))
    t_star = pca.optimal_angle(cov)
    rng = np.random.default_rng(cfg.get("run", "seed"))
    xy = rng.multivariate_normal(np.zeros(2), cov.matrix(), size=cfg.get("pca", "scatter"))
    c, s = np.cos(t_star), np.sin(t_star)
    uv = np.column_stack([c * xy[:, 0] + s * xy[:, 1], c * xy[:, 1] - s * xy[:, 0]])
    mio.atomic_write_text(out / "scatter.csv", _csv(np.hstack([xy, uv]), ["x", "y", "u", "v"]))
    summary = {
        "covariance": [cov.s11, cov.s22, cov.s12],
        "optimal_angle": t_star,
        "grid_argmin": float(theta[np.argmin(S)]),
        "entropy_at_optimum": pca.maxent_entropy(cov, t_star),
        "entropy_at_zero": pca.maxent_entropy(cov, 0.0),
        "diagonalization_residual": pca.verify_diagonalization(cov, t_star),
        "det": cov.det,
    }
    mio.atomic_write_text(out / "summary.json", _json(summary))
    print(f"optimal angle {t_star:.6f} rad, entropy {summary['entropy_at_optimum']:.6f}")


def cmd_train_1d(cfg: RunConfig, args, out: Path) -> None:
    kind, params = _mixture(cfg)
    seed = cfg.get("run", "seed")
    data = synth_bimodal(kind, params, cfg.get("data", "n"), seed)
    config = cfg.train_config()
    every = cfg.get("train", "checkpoint_every")

    def checkpoint(epoch, H, rep):
        if every and (epoch + 1) % every == 0:
            mio.save_hamiltonian(out / f"checkpoint_{epoch + 1:05d}", H, extra={"epoch": epoch + 1})

    res = ex.train_1d(
        data,
        hidden=cfg.get("model", "hidden"),
        n_obs=cfg.get("model", "n_obs"),
        config=config,
        seed=seed,
        polish_epochs=cfg.get("train", "polish_epochs"),
        truth=(kind, params),
        kl_every=cfg.get("eval", "kl_every"),
        callback=checkpoint,
    )
    mio.atomic_write_text(out / "data.csv", _csv(data.x, ["x"]))
    mio.atomic_write_text(out / "report.csv", res.report.to_csv())
    if res.polish is not None:
        mio.atomic_write_text(out / "polish.csv", res.polish.to_csv())
    mio.atomic_write_text(out / "kl_curve.csv", _csv(res.kl_curve, ["epoch", "kl_true_model", "kl_model_true"]))
    dens = res.density()
    truth = metrics.true_density_bimodal(params, kind, ex.GRID)
    mio.atomic_write_text(out / "density.csv", _csv(zip(dens.x, dens.p, truth.p), ["x", "model", "true"]))
    chains = res.polish.chains if res.polish is not None else res.report.chains
    mio.save_hamiltonian(out / "model", res.H, chains.x, {"data": data.provenance})
    kl, kl_rev = ex.kl_to_truth(res.H, kind, params)
    summary = {
        "kind": kind,
        "params": params,
        "n": len(data),
        "kl_true_model": kl,
        "kl_model_true": kl_rev,
        "modes": metrics.count_modes(dens),
        "lambda": res.H.lam,
        "epochs": len(res.report),
        "stopped": res.report.stopped,
    }
    mio.atomic_write_text(out / "summary.json", _json(summary))
    print(f"KL(true||model) = {kl:.4f}, modes at {np.round(summary['modes'], 2).tolist()}")


def cmd_train_image(cfg: RunConfig, args, out: Path) -> None:
    data = _training_images(cfg)
    config = cfg.train_config(image=True)
    snap = cfg.get("image", "snapshot_every")
    every = cfg.get("train", "checkpoint_every")

    def callback(epoch, H, rep):
        if snap and (epoch + 1) % snap == 0:
            _save_images(out / f"samples_epoch{epoch + 1:05d}.png", rep.last_ensemble.samples)
        if every and (epoch + 1) % every == 0:
            mio.save_hamiltonian(out / f"checkpoint_{epoch + 1:05d}", H, extra={"epoch": epoch + 1})

    res = ex.train_images(data, cfg.get("model", "n_obs_image"), config, cfg.get("run", "seed"),
                          polish_epochs=cfg.get("image", "polish_epochs"), callback=callback)
    chains = res.polish.chains if res.polish is not None else res.report.chains
    mio.atomic_write_text(out / "report.csv", res.report.to_csv())
    if res.polish is not None:
        mio.atomic_write_text(out / "polish.csv", res.polish.to_csv())
    mio.save_hamiltonian(out / "model", res.H, chains.x, {"data": data.provenance})
    _save_images(out / "samples.png", res.report.last_ensemble.samples)
    _save_images(out / "training.png", data.x)
    terms = ex.final_chi2_terms(res.H, data, chains)
    windows = ex.window_means([r.mean_energy for r in res.report.records])
    summary = {
        "epochs": len(res.report),
        "polish_epochs": 0 if res.polish is None else len(res.polish),
        "chi2_terms": terms,
        "chi2": float(terms.sum()),
        "mean_energy_windows": windows,
        "stopped": res.report.stopped,
    }
    mio.atomic_write_text(out / "summary.json", _json(summary))
    print(f"final chi^2 {terms.sum():.4f}; max term {float(terms.max()):.4f}")


def _load_model(args):
    if not args.model:
        raise CommandError("--model DIR is required")
    return mio.load_hamiltonian(args.model)


def _write_samples(out: Path, H, ens) -> dict:
    mio.save_arrays(out / "samples.ckpt", {"x": ens.samples, "energy": ens.energies}, {"type": "samples"})
    if H.dim == 1:
        edges = np.linspace(ex.GRID[0], ex.GRID[1], 151)
        mio.atomic_write_text(out / "histogram.csv", metrics.Histogram1D.from_samples(ens.samples, edges).to_csv())
    else:
        _save_images(out / "samples.png", ens.samples)
    base = H.base_energy(ens.samples)
    return {"n": ens.n, "mean_base_energy": float(base.mean()), "std_base_energy": float(base.std())}


def cmd_sample(cfg: RunConfig, args, out: Path) -> None:
    H, chains_x, _ = _load_model(args)
    ens = _generate(cfg, H, x0=chains_x)
    summary = _write_samples(out, H, ens)
    mio.atomic_write_text(out / "summary.json", _json(summary))
    print(f"{summary['n']} samples, mean energy {summary['mean_base_energy']:.4f}")


def cmd_bias_sample(cfg: RunConfig, args, out: Path) -> None:
    H, chains_x, _ = _load_model(args)
    alpha = cfg.get("bias", "alpha")
    if args.discriminator:
        net = mio.load_network(args.discriminator)
        Hb = add_discriminator_bias(H, net, alpha)
    elif args.classifier:
        net = mio.load_network(args.classifier)
        Hb = add_classifier_bias(H, net, cfg.get("bias", "target"), alpha)
    else:
        raise CommandError("bias-sample needs --discriminator FILE or --classifier FILE")
    if cfg.get("bias", "only"):
        Hb = detach_base(Hb)
    ens = _generate(cfg, Hb, x0=chains_x)
    summary = _write_samples(out, H, ens)
    scores = metrics.score_summary(net, ens.samples)
    mio.atomic_write_text(out / "scores.csv", scores.to_csv())
    summary.update(score_mean=scores.mean, score_quantiles=scores.quantiles, alpha=alpha)
    if scores.label_counts is not None:
        target = cfg.get("bias", "target")
        summary.update(label_counts=scores.label_counts, target=target,
                       target_fraction=float(scores.label_counts[target] / scores.n))
    mio.atomic_write_text(out / "summary.json", _json(summary))
    print(f"{summary['n']} biased samples, mean score {scores.mean:.4f}")


def cmd_train_vae(cfg: RunConfig, args, out: Path) -> None:
    kind, params = _mixture(cfg)
    seed = cfg.get("run", "seed")
    data = synth_bimodal(kind, params, cfg.get("data", "n"), seed)
    model = build_vae(1, cfg.get("model", "hidden"), cfg.get("vae", "latent"), cfg.get("vae", "noise"), seed)
    every = cfg.get("eval", "kl_every")
    n_eval = cfg.get("eval", "samples")
    bw = cfg.get("eval", "bin_width")
    curve = []

    def cb(epoch, m, rep):
        if every and (epoch + 1) % every == 0:
            curve.append((epoch + 1, *ex.sample_kl(sample_vae(m, n_eval, seed), kind, params, bin_width=bw)))

    vcfg = VaeConfig(cfg.get("vae", "epochs"), cfg.get("vae", "lr"), cfg.get("vae", "batch_size"), seed)
    model, rep = train_vae(model, data, vcfg, callback=cb)
    mio.save_vae(out / "vae.ckpt", model)
    mio.atomic_write_text(out / "loss.csv", _csv(enumerate(rep.losses, 1), ["epoch", "loss"]))
    mio.atomic_write_text(out / "kl_curve.csv", _csv(curve, ["epoch", "kl_true_model", "kl_model_true"]))
    kl, kl_rev = ex.sample_kl(sample_vae(model, n_eval, seed), kind, params, bin_width=bw)
    mio.atomic_write_text(out / "summary.json", _json({"kl_true_model": kl, "kl_model_true": kl_rev}))
    print(f"VAE KL(true||model) = {kl:.4f}")


def cmd_eval_kl(cfg: RunConfig, args, out: Path) -> None:
    kind, params = _mixture(cfg)
    seed = cfg.get("run", "seed")
    n_eval = cfg.get("eval", "samples")
    bw = cfg.get("eval", "bin_width")
    result = {"kind": kind, "params": params}
    if args.vae:
        samples = sample_vae(mio.load_vae(args.vae), n_eval, seed)
        result["model"] = "vae"
    elif args.model:
        H, _, _ = mio.load_hamiltonian(args.model)
        if H.dim != 1:
            raise CommandError("eval-kl works on 1D models only")
        dens = ex.model_density(H)
        result["grid_kl_true_model"], result["grid_kl_model_true"] = ex.kl_to_truth(H, kind, params)
        samples = dens.sample(n_eval, np.random.default_rng(seed))
        result["model"] = "minmaxent"
    else:
        raise CommandError("eval-kl needs --model DIR or --vae FILE")
    result["hist_kl_true_model"], result["hist_kl_model_true"] = ex.sample_kl(samples, kind, params, bin_width=bw)
    mio.atomic_write_text(out / "kl.json", _json(result))
    print(f"histogram KL(true||model) = {result['hist_kl_true_model']:.4f}")


def cmd_train_discriminator(cfg: RunConfig, args, out: Path) -> None:
    real = _training_images(cfg)
    parts = []
    if args.model:
        H, chains_x, _ = mio.load_hamiltonian(args.model)
        need = cfg.get("biasnet", "generated")
        ens = _generate(cfg, H, x0=chains_x)
        parts.append(Dataset(ens.samples[-need:], None, {"source": str(args.model)}))
    for path in args.generated or []:
        _, arr = mio.load_arrays(path)
        parts.append(Dataset(arr["x"], None, {"source": str(path)}))
    if not parts:
        raise CommandError("train-discriminator needs --model DIR and/or --generated FILE")
    generated = concat(*parts)
    net, rep = train_discriminator(real, generated, _biasnet_config(cfg))
    mio.save_network(out / "discriminator.ckpt", net)
    mio.save_arrays(out / "generated.ckpt", {"x": generated.x}, {"type": "samples"})
    mio.atomic_write_text(out / "report.json", _json({
        "holdout_accuracy": rep.holdout_accuracy, "train_accuracy": rep.train_accuracy,
        "losses": rep.losses, "warnings": rep.warnings,
        "n_real": len(real), "n_generated": len(generated),
    }))
    print(f"discriminator held-out accuracy {rep.holdout_accuracy:.3f}")


def cmd_train_classifier(cfg: RunConfig, args, out: Path) -> None:
    net, rep = train_classifier(_digits(cfg), _biasnet_config(cfg))
    mio.save_network(out / "classifier.ckpt", net)
    mio.atomic_write_text(out / "report.json", _json({
        "holdout_accuracy": rep.holdout_accuracy, "train_accuracy": rep.train_accuracy,
        "losses": rep.losses,
    }))
    print(f"classifier held-out accuracy {rep.holdout_accuracy:.3f}")


COMMANDS = {
    "pca-demo": (cmd_pca_demo, "entropy versus rotation angle for a 2D Gaussian"),
    "train-1d": (cmd_train_1d, "train on a synthetic 1D bimodal dataset"),
    "train-image": (cmd_train_image, "train CNN observables on 8x8 digits"),
    "sample": (cmd_sample, "draw samples from a trained model"),
    "bias-sample": (cmd_bias_sample, "sample with a discriminator or classifier bias"),
    "train-vae": (cmd_train_vae, "train the VAE baseline on 1D data"),
    "eval-kl": (cmd_eval_kl, "KL divergence of a 1D model to the true mixture"),
    "train-discriminator": (cmd_train_discriminator, "train a real-vs-generated discriminator"),
    "train-classifier": (cmd_train_classifier, "train a digit classifier"),
}

# command flag -> config key
FLAG_KEYS = {
    "kind": ("data", "kind"),
    "n": ("data", "n"),
    "images": ("data", "images"),
    "digits": ("data", "digits"),
    "epochs": None,  # section depends on the command
    "alpha": ("bias", "alpha"),
    "target": ("bias", "target"),
    "bias_only": ("bias", "only"),
    "cov": ("pca", "cov"),
    "n_chains": ("sample", "n_chains"),
    "sweeps": ("sample", "sweeps"),
}

EPOCH_SECTION = {"train-1d": "train", "train-image": "image", "train-vae": "vae",
                 "train-discriminator": "biasnet", "train-classifier": "biasnet"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minmaxent",
        description="Minimal maximum-entropy generative modeling.",
        epilog=describe_keys() + f"\n\nenvironment: {OUTPUT_ENV} sets the default output root.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, (_, text) in COMMANDS.items():
        p = sub.add_parser(name, help=text, description=text, epilog=describe_keys(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="seed for every stochastic component")
        if name in ("train-1d", "train-vae", "eval-kl"):
            p.add_argument("--kind", choices=("gaussian", "cauchy"))
            p.add_argument("--n", type=int, help="number of synthetic samples")
        if name in EPOCH_SECTION:
            p.add_argument("--epochs", type=int)
        if name in ("train-image", "train-discriminator", "train-classifier"):
            p.add_argument("--digits", help="digits CSV file")
        if name in ("train-image", "train-discriminator"):
            p.add_argument("--images", type=int, help="training subset size")
        if name in ("sample", "bias-sample", "eval-kl", "train-discriminator"):
            p.add_argument("--model", help="model bundle directory")
        if name in ("sample", "bias-sample"):
            p.add_argument("--n-chains", type=int)
            p.add_argument("--sweeps", type=int)
        if name == "pca-demo":
            p.add_argument("--cov", type=float, nargs=3, metavar=("S11", "S22", "S12"))
        if name == "bias-sample":
            g = p.add_mutually_exclusive_group(required=True)
            g.add_argument("--discriminator", metavar="FILE")
            g.add_argument("--classifier", metavar="FILE")
            p.add_argument("--target", type=int, help="target digit (classifier bias)")
            p.add_argument("--alpha", type=float, help="bias strength")
            p.add_argument("--bias-only", action="store_true", default=None,
                           help="sample the bias term without the base energy")
        if name == "eval-kl":
            p.add_argument("--vae", metavar="FILE", help="VAE checkpoint")
        if name == "train-discriminator":
            p.add_argument("--generated", action="append", metavar="FILE",
                           help="extra generated samples (.ckpt), repeatable")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for text in args.set:
        cfg.apply_override(text)
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if flag == "epochs":
            key = (EPOCH_SECTION[args.command], "epochs")
        cfg.set(key[0], key[1], value)
    if args.seed is not None:
        cfg.set("run", "seed", args.seed)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = resolve_config(args)
        out = _out_dir(cfg, args, args.command)
        out.mkdir(parents=True, exist_ok=True)
        mio.atomic_write_text(out / "run.ini", cfg.to_text())
        COMMANDS[args.command][0](cfg, args, out)
    except (ConfigError, CommandError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
