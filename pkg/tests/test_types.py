"""Value-type invariants: indexing, validation, dimension checks."""

import numpy as np
import pytest

from sfskit.types import (
    ColorMap,
    LightSH,
    LossWeights,
    Mask,
    VectorFieldMap,
    check_same_dims,
)


def test_light_channel_major_indexing():
    light = LightSH(np.arange(27, dtype=np.float32))
    for c in range(3):
        np.testing.assert_array_equal(light.channel(c), np.arange(9 * c, 9 * c + 9))
        np.testing.assert_array_equal(light.as_matrix()[c], light.channel(c))
    # coeffs[9c + k] addresses channel c, basis k
    assert light.coeffs[9 * 2 + 4] == 22.0


def test_light_matrix_round_trip():
    rng = np.random.default_rng(0)
    mat = rng.standard_normal((3, 9)).astype(np.float32)
    np.testing.assert_array_equal(LightSH.from_matrix(mat).as_matrix(), mat)


def test_light_validation():
    with pytest.raises(ValueError):
        LightSH(np.zeros(26))
    with pytest.raises(ValueError):
        LightSH(np.full(27, np.nan))


def test_gray_light_only_dc():
    g = LightSH.gray(2.0)
    mat = g.as_matrix()
    np.testing.assert_array_equal(mat[:, 0], [2.0, 2.0, 2.0])
    assert np.all(mat[:, 1:] == 0)


def test_mask_basics():
    m = Mask(np.array([[True, False], [False, False]]))
    assert (m.height, m.width, m.count) == (2, 2, 1)
    m.require_nonempty()
    with pytest.raises(ValueError):
        Mask(np.zeros((2, 2), dtype=bool)).require_nonempty()
    assert Mask.full(3, 4).count == 12


def test_vector_field_validation():
    with pytest.raises(ValueError):
        VectorFieldMap(np.zeros((4, 4, 2)))
    with pytest.raises(ValueError):
        VectorFieldMap(np.zeros((4, 4, 3)), role="velocity")
    field = VectorFieldMap(np.broadcast_to([0.0, 0.0, 1.0], (4, 4, 3)).copy())
    field.check_unit(Mask.full(4, 4))
    bad = np.broadcast_to([0.0, 0.0, 0.5], (4, 4, 3)).copy()
    with pytest.raises(ValueError):
        VectorFieldMap(bad).check_unit(Mask.full(4, 4))


def test_color_map_range_check_by_role():
    vals = np.full((2, 2, 3), 1.5, dtype=np.float32)
    shading = ColorMap(vals, role="shading")
    shading.check_range(Mask.full(2, 2))  # shading may exceed 1
    with pytest.raises(ValueError):
        ColorMap(vals, role="albedo").check_range(Mask.full(2, 2))
    with pytest.raises(ValueError):
        ColorMap(-vals, role="image").check_range(Mask.full(2, 2))


def test_loss_weights_defaults_and_validation():
    w = LossWeights()
    assert (w.w_recon, w.w_normal, w.w_albedo, w.w_light) == (0.5, 0.5, 0.5, 0.1)
    with pytest.raises(ValueError):
        LossWeights(w_recon=-0.1)


def test_check_same_dims():
    a = ColorMap(np.zeros((4, 5, 3), dtype=np.float32), role="image")
    b = Mask.full(4, 5)
    assert check_same_dims(a, b) == (4, 5)
    with pytest.raises(ValueError):
        check_same_dims(a, Mask.full(5, 4))
