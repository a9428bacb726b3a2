"""FMAP container, light JSON, PNG round trips."""

import json
import struct

import numpy as np
import pytest

from sfskit.io import (
    load_light,
    load_png,
    normal_to_rgb,
    read_fmap,
    read_mask_fmap,
    rgb_to_normal,
    save_light,
    save_png,
    to_uint8,
    write_fmap,
    write_mask_fmap,
)
from sfskit.types import LightSH, Mask


def test_fmap_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    arr = rng.standard_normal((7, 5, 3)).astype(np.float32)
    p = tmp_path / "x.fmap"
    write_fmap(p, arr)
    back = read_fmap(p)
    np.testing.assert_array_equal(back, arr)
    assert back.dtype == np.float32


def test_fmap_header_layout(tmp_path):
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    p = tmp_path / "x.fmap"
    write_fmap(p, arr)
    blob = p.read_bytes()
    assert blob[:4] == b"FMAP"
    version, h, w, c = struct.unpack("<IIII", blob[4:20])
    assert (version, h, w, c) == (1, 2, 3, 1)
    payload = np.frombuffer(blob[20:], dtype="<f4")
    # row-major, channel-fastest
    np.testing.assert_array_equal(payload, np.arange(6, dtype=np.float32))


def test_fmap_rejects_garbage(tmp_path):
    p = tmp_path / "bad.fmap"
    p.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ValueError):
        read_fmap(p)
    q = tmp_path / "short.fmap"
    q.write_bytes(b"FMAP" + struct.pack("<IIII", 1, 4, 4, 3) + b"\x00" * 8)
    with pytest.raises(ValueError):
        read_fmap(q)


def test_mask_round_trip(tmp_path):
    bits = np.random.default_rng(1).random((6, 6)) > 0.5
    p = tmp_path / "m.fmap"
    write_mask_fmap(p, Mask(bits))
    np.testing.assert_array_equal(read_mask_fmap(p).bits, bits)


def test_light_json_round_trip(tmp_path):
    light = LightSH(np.linspace(-1, 2, 27).astype(np.float32))
    p = tmp_path / "light.json"
    save_light(p, light, note="fixture")
    doc = json.loads(p.read_text())
    assert len(doc["sh"]) == 27 and doc["note"] == "fixture"
    np.testing.assert_allclose(load_light(p).coeffs, light.coeffs, rtol=1e-6)


def test_to_uint8_clamps_and_scales():
    vals = np.array([[-0.5, 0.0, 0.5, 1.0, 1.7]])
    np.testing.assert_array_equal(to_uint8(vals), [[0, 0, 128, 255, 255]])


def test_png_round_trip_within_quantization(tmp_path):
    rng = np.random.default_rng(2)
    img = rng.random((9, 11, 3)).astype(np.float32)
    p = tmp_path / "img.png"
    save_png(p, img)
    back = load_png(p)
    assert back.shape == img.shape
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-6


def test_normal_rgb_mapping_round_trip():
    rng = np.random.default_rng(3)
    v = rng.standard_normal((4, 4, 3))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    rgb = normal_to_rgb(v)
    assert rgb.min() >= 0.0 and rgb.max() <= 1.0
    np.testing.assert_allclose(rgb_to_normal(rgb), v, atol=1e-6)
    # camera-facing normal maps to the classic powder blue
    np.testing.assert_allclose(normal_to_rgb(np.array([[[0.0, 0.0, 1.0]]]))[0, 0], [0.5, 0.5, 1.0])
