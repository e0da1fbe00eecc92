"""Checkpoints, model bundles and image output.

Array checkpoint layout::

    MINMAXENT-CKPT 1\\n
    <one line of JSON: metadata plus the name/shape/offset of every array>\\n
    <little-endian float64 block>

A Hamiltonian bundle is a directory holding ``manifest.json``, the
observable parameters and one checkpoint per bias network.  Every file is
written to a temporary name and renamed into place.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .hamiltonian import BiasField, EffectiveHamiltonian
from .nets import Network, build_from_arch
from .observables import ObservableSet, from_arch
from .optim import LagrangeState

__all__ = [
    "MAGIC",
    "CheckpointError",
    "atomic_write_bytes",
    "atomic_write_text",
    "save_arrays",
    "load_arrays",
    "save_network",
    "load_network",
    "save_observables",
    "load_observables",
    "save_hamiltonian",
    "load_hamiltonian",
    "save_vae",
    "load_vae",
    "image_grid",
    "write_pgm",
    "write_png",
]

MAGIC = b"MINMAXENT-CKPT 1\n"


class CheckpointError(ValueError):
    pass


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    entries, blocks, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blocks.append(a.tobytes())
        offset += a.size
    header = json.dumps({"meta": _jsonable(meta or {}), "arrays": entries}, sort_keys=True)
    return atomic_write_bytes(path, MAGIC + header.encode("utf-8") + b"\n" + b"".join(blocks))


def load_arrays(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic line)")
    rest = raw[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(rest[:nl].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    body = rest[nl + 1:]
    if len(body) % 8 or not isinstance(header, dict) or not isinstance(header.get("arrays"), list):
        raise CheckpointError(f"{path}: corrupt checkpoint layout")
    data = np.frombuffer(body, dtype="<f8")
    arrays = {}
    for e in header["arrays"]:
        size = int(np.prod(e["shape"])) if e["shape"] else 1
        chunk = data[e["offset"]: e["offset"] + size]
        if chunk.size != size:
            raise CheckpointError(f"{path}: array {e['name']!r} is truncated")
        arrays[e["name"]] = chunk.reshape(e["shape"]).astype(np.float64)
    return header.get("meta", {}), arrays


def save_network(path, net: Network, extra: dict | None = None) -> Path:
    meta = {"type": "network", "arch": net.arch, "layout": net.layout.to_json(), **(extra or {})}
    return save_arrays(path, {"theta": net.theta}, meta)


def load_network(path) -> Network:
    meta, arrays = load_arrays(path)
    if meta.get("type") != "network":
        raise CheckpointError(f"{path}: not a network checkpoint")
    net = build_from_arch(meta["arch"], arrays["theta"])
    if net.layout.to_json() != meta["layout"]:
        raise CheckpointError(f"{path}: parameter layout does not match the architecture")
    return net


def save_observables(path, obs: ObservableSet) -> Path:
    return save_arrays(path, {"theta": obs.theta}, {"type": "observables", "arch": obs.arch()})


def load_observables(path) -> ObservableSet:
    meta, arrays = load_arrays(path)
    if meta.get("type") != "observables":
        raise CheckpointError(f"{path}: not an observables checkpoint")
    return from_arch(meta["arch"], arrays["theta"])


def save_hamiltonian(directory, H: EffectiveHamiltonian, chains_x: np.ndarray | None = None,
                     extra: dict | None = None) -> Path:
    """Write ``H`` (and optionally chain states to resume sampling) as a bundle."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_observables(d / "observables.ckpt", H.observables)
    lg = H.lagrange
    save_arrays(d / "lagrange.ckpt", {"lam": lg.lam, "m": lg.m, "v": lg.v}, {"type": "lagrange", "t": lg.t})
    biases = []
    for k, b in enumerate(H.biases):
        entry = {"kind": b.kind, "alpha": b.alpha, "target": b.target}
        if b.network is not None:
            if not isinstance(b.network, Network):
                raise CheckpointError("only Network bias fields can be saved")
            fname = f"bias{k}.ckpt"
            save_network(d / fname, b.network)
            entry["network"] = fname
        biases.append(entry)
    if chains_x is not None:
        save_arrays(d / "chains.ckpt", {"x": chains_x}, {"type": "chains"})
    manifest = {
        "format": 1,
        "include_base": H.include_base,
        "bounds": None if H.bounds is None else [H.bounds[0].tolist(), H.bounds[1].tolist()],
        "biases": biases,
        "chains": "chains.ckpt" if chains_x is not None else None,
        **_jsonable(extra or {}),
    }
    atomic_write_text(d / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def load_hamiltonian(directory) -> tuple[EffectiveHamiltonian, np.ndarray | None, dict]:
    """Returns ``(H, chain states or None, manifest)``."""
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise CheckpointError(f"{d}: no manifest.json (not a model bundle)")
    manifest = json.loads(mpath.read_text())
    obs = load_observables(d / "observables.ckpt")
    meta, arr = load_arrays(d / "lagrange.ckpt")
    lag = LagrangeState(arr["lam"], arr["m"], arr["v"], int(meta.get("t", 0)))
    biases = []
    for b in manifest.get("biases", []):
        net = load_network(d / b["network"]) if b.get("network") else None
        biases.append(BiasField(b["kind"], float(b["alpha"]), net, b.get("target")))
    bounds = manifest.get("bounds")
    H = EffectiveHamiltonian(
        obs, lag, biases, manifest.get("include_base", True),
        None if bounds is None else (np.array(bounds[0]), np.array(bounds[1])),
    )
    chains = None
    if manifest.get("chains"):
        chains = load_arrays(d / manifest["chains"])[1]["x"]
    return H, chains, manifest


def save_vae(path, model) -> Path:
    return save_arrays(path, {"theta": model.theta}, {"type": "vae", "arch": model.arch})


def load_vae(path):
    from .vae import vae_from_arch

    meta, arrays = load_arrays(path)
    if meta.get("type") != "vae":
        raise CheckpointError(f"{path}: not a VAE checkpoint")
    return vae_from_arch(meta["arch"], arrays["theta"])


def image_grid(samples: np.ndarray, side: int | None = None, ncols: int = 8, pad: int = 1) -> np.ndarray:
    """Tile flattened square images into one 2D array with values in [0, 1]."""
    x = np.asarray(samples, dtype=np.float64)
    if side is None:
        side = int(round(np.sqrt(x.shape[1])))
    if side * side != x.shape[1]:
        raise ValueError("samples are not square images")
    n = x.shape[0]
    ncols = max(1, min(ncols, n))
    nrows = -(-n // ncols)
    grid = np.ones((nrows * (side + pad) + pad, ncols * (side + pad) + pad))
    for k in range(n):
        r, c = divmod(k, ncols)
        y0, x0 = pad + r * (side + pad), pad + c * (side + pad)
        grid[y0: y0 + side, x0: x0 + side] = x[k].reshape(side, side)
    return np.clip(grid, 0.0, 1.0)


def _to_u8(img: np.ndarray, invert: bool) -> np.ndarray:
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if invert:
        img = 1.0 - img
    return np.round(img * 255).astype(np.uint8)


def write_pgm(path, img: np.ndarray, invert: bool = True, scale: int = 1) -> Path:
    """Binary PGM; ``invert`` draws ink dark on a light background."""
    u8 = _to_u8(img, invert)
    if scale > 1:
        u8 = np.kron(u8, np.ones((scale, scale), dtype=np.uint8))
    h, w = u8.shape
    return atomic_write_bytes(path, f"P5\n{w} {h}\n255\n".encode("ascii") + u8.tobytes())


def write_png(path, img: np.ndarray, invert: bool = True, scale: int = 4) -> Path:
    from PIL import Image
    import io as _io

    u8 = _to_u8(img, invert)
    if scale > 1:
        u8 = np.kron(u8, np.ones((scale, scale), dtype=np.uint8))
    buf = _io.BytesIO()
    Image.fromarray(u8, mode="L").save(buf, format="PNG")
    return atomic_write_bytes(path, buf.getvalue())
