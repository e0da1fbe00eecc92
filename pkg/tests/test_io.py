import numpy as np
import pytest
from PIL import Image

from minmaxent import io
from minmaxent.biasnets import BiasNetConfig, cnn_head_arch
from minmaxent.hamiltonian import EffectiveHamiltonian, add_classifier_bias, detach_base
from minmaxent.nets import build_from_arch
from minmaxent.observables import build_cnn_observables, build_mlp_observables


def test_array_roundtrip(tmp_path, rng):
    arrays = {"a": rng.normal(size=(3, 4)), "b": np.array(2.5), "c": np.zeros(0)}
    io.save_arrays(tmp_path / "x.ckpt", arrays, {"k": np.int64(3), "v": np.arange(2)})
    meta, back = io.load_arrays(tmp_path / "x.ckpt")
    assert meta == {"k": 3, "v": [0, 1]}
    for k, v in arrays.items():
        assert back[k].shape == v.shape and np.array_equal(back[k], v)


@pytest.mark.parametrize(
    "content",
    [b"not a checkpoint", io.MAGIC + b"{broken", io.MAGIC + b"{\"arrays\": 3}\n",
     io.MAGIC + b"[1]\n", io.MAGIC + b"{\"arrays\": []}\n" + b"\x00" * 5],
)
def test_corrupt_checkpoints(tmp_path, content):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(content)
    with pytest.raises(io.CheckpointError):
        io.load_arrays(p)


def test_truncated_array(tmp_path):
    p = io.save_arrays(tmp_path / "t.ckpt", {"a": np.ones(10)})
    p.write_bytes(p.read_bytes()[:-16])
    with pytest.raises(io.CheckpointError, match="truncated"):
        io.load_arrays(p)


def test_atomic_write_leaves_no_partial_file(tmp_path, monkeypatch):
    target = tmp_path / "sub" / "f.txt"
    io.atomic_write_text(target, "old")

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(io.os, "replace", boom)
    with pytest.raises(OSError):
        io.atomic_write_text(target, "new")
    assert target.read_text() == "old"
    assert [p.name for p in target.parent.iterdir()] == ["f.txt"]


def test_network_and_observable_roundtrip(tmp_path, rng):
    net = build_from_arch(cnn_head_arch(8, 10, "softmax", BiasNetConfig(seed=2)))
    io.save_network(tmp_path / "n.ckpt", net)
    net2 = io.load_network(tmp_path / "n.ckpt")
    x = rng.random((3, 64))
    assert np.array_equal(net(x), net2(x))
    obs = build_mlp_observables(1, (8,), 2, seed=1)
    io.save_observables(tmp_path / "o.ckpt", obs)
    with pytest.raises(io.CheckpointError):
        io.load_network(tmp_path / "o.ckpt")
    obs2 = io.load_observables(tmp_path / "o.ckpt")
    assert np.array_equal(obs.values(x[:, :1]), obs2.values(x[:, :1]))


def test_hamiltonian_bundle_roundtrip(tmp_path, rng):
    obs = build_cnn_observables(8, 4, seed=0)
    H = EffectiveHamiltonian(obs, rng.normal(size=4))
    clf = build_from_arch(cnn_head_arch(8, 10, "softmax", BiasNetConfig(seed=1)))
    Hb = detach_base(add_classifier_bias(H, clf, target=2, alpha=3.0))
    chains = rng.random((5, 64))
    io.save_hamiltonian(tmp_path / "m", Hb, chains, {"note": "x"})
    H2, c2, manifest = io.load_hamiltonian(tmp_path / "m")
    x = rng.random((6, 64))
    assert np.array_equal(Hb.energy(x), H2.energy(x))
    assert not H2.include_base and manifest["note"] == "x"
    assert np.array_equal(c2, chains)
    with pytest.raises(io.CheckpointError):
        io.load_hamiltonian(tmp_path)


def test_bounds_survive_bundle(tmp_path):
    H = EffectiveHamiltonian(build_mlp_observables(1, (4,), 2), [0.1, 0.2], bounds=(-15, 15))
    io.save_hamiltonian(tmp_path / "m", H)
    H2, chains, _ = io.load_hamiltonian(tmp_path / "m")
    assert chains is None
    assert np.isinf(H2.energy(np.array([[20.0]]))[0])


def test_image_grid_and_writers(tmp_path):
    x = np.linspace(0, 1, 3 * 64).reshape(3, 64)
    g = io.image_grid(x, ncols=2)
    assert g.shape == (2 * 9 + 1, 2 * 9 + 1)
    assert np.array_equal(g[1:9, 1:9], x[0].reshape(8, 8))
    with pytest.raises(ValueError):
        io.image_grid(np.zeros((2, 10)))
    io.write_png(tmp_path / "g.png", g, scale=2)
    img = np.asarray(Image.open(tmp_path / "g.png"))
    assert img.shape == (38, 38) and img[0, 0] == 0  # padding is 1, inverted to black
    io.write_pgm(tmp_path / "g.pgm", g, invert=False)
    raw = (tmp_path / "g.pgm").read_bytes()
    assert raw.startswith(b"P5\n19 19\n255\n") and len(raw) == 13 + 19 * 19
