"""Run configuration: an INI file with one section per component.

Every recognised key is listed in :data:`KEYS` with its type, default and
help text; the CLI prints this table in ``--help``.  Unknown sections or
keys are rejected so typos never pass silently.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import fields, replace
from pathlib import Path

from .trainer import TrainConfig

__all__ = ["KEYS", "RunConfig", "ConfigError", "describe_keys"]


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_floats(text: str):
    return None if text.strip().lower() in ("", "none") else _floats(text)


def _opt_str(text: str):
    return None if text.strip().lower() in ("", "none") else text.strip()


# (section, key) -> (parser, default text, help)
KEYS: dict[tuple[str, str], tuple] = {
    ("run", "seed"): (int, "0", "seed for every stochastic component"),
    ("run", "output"): (_opt_str, "none", "output directory (default: $MINMAXENT_OUTPUT/<command>)"),
    ("data", "kind"): (str, "gaussian", "synthetic mixture: gaussian or cauchy"),
    ("data", "n"): (int, "1000", "number of synthetic samples / image subset size"),
    ("data", "params"): (_opt_floats, "none", "mixture loc1 scale1 loc2 scale2 (default per kind)"),
    ("data", "digits"): (_opt_str, "none", "digits CSV path (default: copy bundled with scikit-learn)"),
    ("data", "images"): (int, "200", "training images for train-image"),
    ("model", "hidden"): (_ints, "32 32", "MLP hidden layout for 1D observables and the VAE encoder"),
    ("model", "n_obs"): (int, "2", "number of observables (1D); image runs use n_obs_image"),
    ("model", "n_obs_image"): (int, "16", "number of CNN observables for images"),
    ("train", "lr_lambda"): (float, "0.01", "ADAM learning rate for the multipliers"),
    ("train", "lr_theta"): (float, "0.1", "gradient-descent rate for observable parameters"),
    ("train", "adam_beta2"): (float, "0.99", "ADAM second-moment decay for the multipliers"),
    ("train", "inner_steps"): (int, "5", "multiplier steps per parameter step"),
    ("train", "epochs"): (int, "1000", "epoch budget"),
    ("train", "n_chains"): (int, "64", "persistent Metropolis chains"),
    ("train", "burn_in"): (int, "500", "initial equilibration sweeps"),
    ("train", "refresh_sweeps"): (int, "10", "sweeps at the start of each epoch"),
    ("train", "ensemble_sweeps"): (int, "100", "sweeps per ensemble"),
    ("train", "thinning"): (int, "5", "sweeps between recorded samples"),
    ("train", "init_step"): (float, "0.5", "initial proposal scale"),
    ("train", "bounds"): (_opt_floats, "-15 15", "sampling box lo hi for 1D runs"),
    ("train", "polish_epochs"): (int, "200", "theta-frozen multiplier epochs after training"),
    ("train", "tol_chi2"): (float, "0", "stop when chi^2 stays below this ..."),
    ("train", "tol_grad"): (float, "0", "... and the entropy-gradient norm below this"),
    ("train", "checkpoint_every"): (int, "0", "write a model bundle every k epochs (0: never)"),
    ("image", "lr_theta"): (float, "0.001", "parameter rate for image runs"),
    ("image", "epochs"): (int, "200", "epoch budget for image runs"),
    ("image", "polish_epochs"): (int, "60", "theta-frozen multiplier epochs after image training"),
    ("image", "n_chains"): (int, "64", "chains for image runs"),
    ("image", "burn_in"): (int, "20", "initial sweeps for image runs"),
    ("image", "refresh_sweeps"): (int, "2", "sweeps per epoch before the ensembles"),
    ("image", "ensemble_sweeps"): (int, "4", "sweeps per ensemble"),
    ("image", "thinning"): (int, "2", "sweeps between recorded samples"),
    ("image", "init_step"): (float, "0.3", "initial pixel proposal scale"),
    ("image", "snapshot_every"): (int, "50", "write a sample grid every k epochs (0: never)"),
    ("sample", "n_chains"): (int, "64", "chains used by sample / bias-sample"),
    ("sample", "burn_in"): (int, "200", "sweeps before recording"),
    ("sample", "sweeps"): (int, "200", "recording sweeps"),
    ("sample", "thinning"): (int, "10", "sweeps between recorded samples"),
    ("bias", "alpha"): (float, "5.0", "bias field strength"),
    ("bias", "target"): (int, "0", "target digit for the classifier bias"),
    ("bias", "only"): (_bool, "no", "drop the base energy and sample the bias alone"),
    ("vae", "latent"): (int, "2", "latent dimension"),
    ("vae", "noise"): (float, "0.1", "decoder output noise scale"),
    ("vae", "epochs"): (int, "1000", "training epochs"),
    ("vae", "lr"): (float, "0.001", "ADAM learning rate"),
    ("vae", "batch_size"): (int, "32", "minibatch size"),
    ("biasnet", "epochs"): (int, "30", "training epochs for discriminator/classifier"),
    ("biasnet", "lr"): (float, "0.003", "ADAM learning rate"),
    ("biasnet", "batch_size"): (int, "32", "minibatch size"),
    ("biasnet", "holdout"): (float, "0.2", "held-out fraction for accuracy"),
    ("biasnet", "generated"): (int, "400", "generated samples drawn for the discriminator"),
    ("eval", "samples"): (int, "100000", "samples drawn for histogram KL estimates"),
    ("eval", "bin_width"): (float, "0.2", "histogram bin width"),
    ("eval", "kl_every"): (int, "50", "epochs between KL-curve points"),
    ("pca", "cov"): (_floats, "3 2 1", "covariance s11 s22 s12"),
    ("pca", "points"): (int, "100000", "angles in the entropy curve"),
    ("pca", "scatter"): (int, "2000", "Gaussian draws in the scatter output"),
}


def describe_keys() -> str:
    lines = ["configuration keys (section.key = default):"]
    for (sec, key), (_, default, text) in KEYS.items():
        lines.append(f"  {sec}.{key} = {default}\n      {text}")
    return "\n".join(lines)


class RunConfig:
    """Typed view over an INI document restricted to :data:`KEYS`."""

    def __init__(self, values: dict[tuple[str, str], str] | None = None):
        self._raw = {k: v[1] for k, v in KEYS.items()}
        for k, v in (values or {}).items():
            self.set(k[0], k[1], v)

    def set(self, section: str, key: str, value) -> None:
        if (section, key) not in KEYS:
            raise ConfigError(f"unknown configuration key {section}.{key}")
        text = " ".join(str(v) for v in value) if isinstance(value, (list, tuple)) else str(value)
        try:
            KEYS[(section, key)][0](text)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: {exc}") from None
        self._raw[(section, key)] = text

    def get(self, section: str, key: str):
        return KEYS[(section, key)][0](self._raw[(section, key)])

    def __getitem__(self, name: str):
        section, key = name.split(".", 1)
        return self.get(section, key)

    def apply_override(self, text: str) -> None:
        """``section.key=value``."""
        if "=" not in text or "." not in text.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {text!r}")
        name, value = text.split("=", 1)
        section, key = name.strip().split(".", 1)
        self.set(section, key, value.strip())

    @classmethod
    def from_text(cls, text: str, origin: str = "<string>") -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text, source=origin)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        cfg = cls()
        for section in cp.sections():
            for key, value in cp.items(section):
                cfg.set(section, key, value)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), str(path))

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for (sec, key), value in self._raw.items():
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, key, value)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def train_config(self, image: bool = False) -> TrainConfig:
        tc = TrainConfig()
        names = {f.name for f in fields(TrainConfig)}
        kw = {}
        for (sec, key) in KEYS:
            if sec == "train" and key in names:
                kw[key] = self.get(sec, key)
        if kw.get("bounds") is not None:
            b = kw["bounds"]
            if len(b) != 2:
                raise ConfigError("train.bounds needs two numbers")
            kw["bounds"] = (b[0], b[1])
        if image:
            kw["bounds"] = None
            kw["proposal"] = "pixel"
            for (sec, key) in KEYS:
                if sec == "image" and key in names:
                    kw[key] = self.get(sec, key)
        kw["seed"] = self.get("run", "seed")
        return replace(tc, **kw).validate()
