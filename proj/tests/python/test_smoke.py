import io
import json

import numpy as np
import pytest
from PIL import Image

import paramshift as ps


def test_dataset_shape_and_range():
    imgs = ps.generate_dataset(8, seed=3)
    assert imgs.shape == (8, 1, 32, 32)
    assert imgs.dtype == np.float32
    assert 0.0 <= imgs.min() and imgs.max() <= 1.0
    assert np.array_equal(imgs, ps.generate_dataset(8, seed=3))


def test_generator_forward_and_roundtrip(tmp_path):
    g = ps.Generator.initialize(5)
    z = np.random.default_rng(0).standard_normal((4, 8)).astype(np.float32)
    out = g.generate(z)
    assert out.shape == (4, 32, 32, 1)
    path = str(tmp_path / "g.navg")
    g.save(path)
    back = ps.Generator.load(path)
    assert back.hash == g.hash
    assert np.array_equal(back.generate(z), out)


def test_spectrum_is_orthonormal():
    values, vectors = ps.spectrum(ps.Generator.initialize(2), 3, 3, hessian_batch=16, power_iterations=5)
    v = np.array(vectors)
    assert v.shape == (3, 72)
    assert np.allclose(v @ v.T, np.eye(3), atol=1e-6)
    assert list(values) == sorted(values, reverse=True)


def test_png_decodes_with_pillow():
    pixels = (np.arange(48, dtype=np.uint8) * 5).reshape(6, 8)
    data = ps.encode_png(pixels)
    img = Image.open(io.BytesIO(data))
    assert img.size == (8, 6)
    assert np.array_equal(np.asarray(img), pixels)
    assert np.array_equal(ps.decode_png(data), pixels)


def test_cli_discover_and_apply(tmp_path):
    model = str(tmp_path / "m.navg")
    ps.Generator.initialize(9).save(model)
    out = str(tmp_path / "d.navg")
    code, _, err = ps.run_cli(["discover", "--model", model, "--method", "svd", "--layer", "L3", "--T", "2", "--out", out])
    assert code == 0, err
    d = ps.Directions.load(out)
    assert d.layer == 3 and d.T == 2.0
    g = ps.Generator.load(model)
    assert np.array_equal(d.apply(g, 0, 0.0).generate(np.zeros((1, 8), np.float32)), g.generate(np.zeros((1, 8), np.float32)))
    code, _, err = ps.run_cli(["discover", "--model", str(tmp_path / "missing.navg"), "--out", out])
    assert code == 1
    assert "error" in json.loads(err)


def test_errors_surface_as_exceptions():
    with pytest.raises(ps.Error):
        ps.Directions.load("/nonexistent/path.navg")
