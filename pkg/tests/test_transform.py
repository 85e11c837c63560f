import math

import numpy as np
import pytest

from scripts.core import FloatPlane
from scripts.errors import ConfigError
from scripts.transform import (
    BAND_OF,
    ZIGZAG,
    CoeffPlane,
    QuantPlane,
    dequantize,
    forward_dct8,
    inverse_dct8,
    quantize,
)


def _coeffs(values):
    values = np.asarray(values, dtype=np.float64)
    return CoeffPlane(values.shape[1], values.shape[0], values.shape[1], values.shape[0], values)


def test_zigzag_starts_like_jpeg():
    assert [tuple(p) for p in ZIGZAG[:6]] == [(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2)]
    assert tuple(ZIGZAG[-1]) == (7, 7)
    assert BAND_OF[0, 1] == 1 and BAND_OF[7, 7] == 63


def test_constant_block():
    coeffs = forward_dct8(FloatPlane.from_array(np.full((8, 8), 10.0)))
    assert coeffs.values[0, 0] == pytest.approx(80.0)
    ac = coeffs.values.copy()
    ac[0, 0] = 0.0
    np.testing.assert_allclose(ac, 0.0, atol=1e-12)


def test_impulse_gives_basis_column():
    block = np.zeros((8, 8))
    block[0, 0] = 1.0
    coeffs = forward_dct8(FloatPlane.from_array(block)).values
    basis = np.array([math.sqrt((1 if u == 0 else 2) / 8.0) for u in range(8)])
    np.testing.assert_allclose(coeffs, np.outer(basis, basis), atol=1e-12)


def test_round_trip_on_partial_blocks():
    rng = np.random.default_rng(1)
    plane = FloatPlane.from_array(rng.uniform(0, 255, size=(13, 10)))
    coeffs = forward_dct8(plane)
    assert (coeffs.width, coeffs.height) == (16, 16)
    assert (coeffs.orig_width, coeffs.orig_height) == (10, 13)
    np.testing.assert_allclose(inverse_dct8(coeffs).values, plane.values, atol=1e-10)


@pytest.mark.parametrize("value, qp, index", [(10.6, 4, 3), (-2.0, 4, -1), (2.0, 4, 1), (0.0, 7, 0)])
def test_quantize_rounds_half_away_from_zero(value, qp, index):
    values = np.zeros((8, 8))
    values[3, 5] = value
    assert quantize(_coeffs(values), qp).values[3, 5] == index


def test_dequantize():
    values = np.zeros((8, 8), dtype=np.int64)
    values[0, 0] = 3
    q = QuantPlane(8, 8, 8, 8, values)
    assert dequantize(q, 4).values[0, 0] == 12.0


@pytest.mark.parametrize("qp", [0, -1.5])
def test_invalid_step(qp):
    with pytest.raises(ConfigError, match="invalid step"):
        quantize(_coeffs(np.zeros((8, 8))), qp)


def test_fine_step_is_nearly_lossless():
    rng = np.random.default_rng(2)
    plane = FloatPlane.from_array(rng.integers(0, 256, size=(16, 24)).astype(np.float64))
    recon = inverse_dct8(dequantize(quantize(forward_dct8(plane), 0.01), 0.01)).values
    mse = np.mean((recon - plane.values) ** 2)
    assert 10 * math.log10(255.0 ** 2 / mse) > 60


def test_bands_round_trip():
    rng = np.random.default_rng(3)
    q = QuantPlane(16, 8, 13, 8, rng.integers(-5, 6, size=(8, 16)))
    bands = q.to_bands()
    assert bands.shape == (1, 2, 64)
    assert bands[0, 1, 2] == q.values[1, 8]
    np.testing.assert_array_equal(QuantPlane.from_bands(bands, 13, 8).values, q.values)


def test_quant_plane_range():
    with pytest.raises(ValueError):
        QuantPlane(8, 8, 8, 8, np.full((8, 8), 2**40))


def test_block_energy_is_preserved():
    rng = np.random.default_rng(4)
    plane = FloatPlane.from_array(rng.uniform(-128, 128, size=(16, 24)))
    coeffs = forward_dct8(plane)
    nby, nbx = coeffs.blocks_shape
    assert (nby, nbx) == (2, 3)
    for by in range(nby):
        for bx in range(nbx):
            rows, cols = slice(8 * by, 8 * by + 8), slice(8 * bx, 8 * bx + 8)
            assert np.sum(coeffs.values[rows, cols] ** 2) == pytest.approx(np.sum(plane.values[rows, cols] ** 2))


@pytest.mark.parametrize("qp", [0.5, 3.0, 8.0, 37.5])
def test_reconstruction_error_bounded_by_half_step(qp):
    rng = np.random.default_rng(5)
    coeffs = _coeffs(rng.normal(0, 60, size=(16, 16)))
    q = quantize(coeffs, qp)
    assert q.blocks_shape == (2, 2)
    error = np.abs(dequantize(q, qp).values - coeffs.values)
    assert error.max() <= qp / 2 + 1e-9
