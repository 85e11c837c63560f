"""DCT 8x8 orthonormale par blocs, quantification scalaire uniforme."""
from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from scripts.core import FloatPlane
from scripts.errors import ConfigError

BLOCK = 8


def _zigzag_order(n=BLOCK):
    """Positions (ligne, colonne) dans l'ordre zig-zag JPEG."""
    def key(pos):
        s = pos[0] + pos[1]
        return (s, pos[0] if s % 2 else pos[1])
    return sorted(((r, c) for r in range(n) for c in range(n)), key=key)


ZIGZAG = np.array(_zigzag_order(), dtype=np.int64)
# bande zig-zag de chaque position naturelle (ligne, colonne)
BAND_OF = np.empty((BLOCK, BLOCK), dtype=np.int64)
BAND_OF[ZIGZAG[:, 0], ZIGZAG[:, 1]] = np.arange(BLOCK * BLOCK)


@dataclass(frozen=True)
class CoeffPlane:
    """Coefficients en disposition par blocs 8x8 ; dimensions multiples de 8."""
    width: int
    height: int
    orig_width: int
    orig_height: int
    values: np.ndarray

    def __post_init__(self):
        if self.width % BLOCK or self.height % BLOCK:
            raise ValueError(f"CoeffPlane: {self.width}x{self.height} non multiple de {BLOCK}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.height, self.width) or not np.all(np.isfinite(values)):
            raise ValueError("CoeffPlane: géométrie ou valeurs invalides")
        object.__setattr__(self, "values", values)

    @property
    def blocks_shape(self):
        return self.height // BLOCK, self.width // BLOCK

    def to_bands(self):
        return _to_bands(self.values)


@dataclass(frozen=True)
class QuantPlane:
    width: int
    height: int
    orig_width: int
    orig_height: int
    values: np.ndarray  # int64 dans la plage int32

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64)
        if values.shape != (self.height, self.width):
            raise ValueError("QuantPlane: géométrie invalide")
        if values.size and (values.min() < -2**31 or values.max() > 2**31 - 1):
            raise ValueError("QuantPlane: indice hors de la plage int32")
        object.__setattr__(self, "values", values)

    @property
    def blocks_shape(self):
        return self.height // BLOCK, self.width // BLOCK

    def to_bands(self):
        """Indices réorganisés en (blocs_y, blocs_x, 64), bandes en ordre zig-zag."""
        return _to_bands(self.values)

    @classmethod
    def from_bands(cls, bands, orig_width, orig_height):
        values = _from_bands(np.asarray(bands, dtype=np.int64))
        return cls(values.shape[1], values.shape[0], orig_width, orig_height, values)


def _blocks(values):
    h, w = values.shape
    return values.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).swapaxes(1, 2)


def _unblocks(blocks):
    nby, nbx = blocks.shape[:2]
    return blocks.swapaxes(1, 2).reshape(nby * BLOCK, nbx * BLOCK)


def _to_bands(values):
    blocks = _blocks(values)
    return blocks[:, :, ZIGZAG[:, 0], ZIGZAG[:, 1]]


def _from_bands(bands):
    nby, nbx = bands.shape[:2]
    blocks = np.empty((nby, nbx, BLOCK, BLOCK), dtype=bands.dtype)
    blocks[:, :, ZIGZAG[:, 0], ZIGZAG[:, 1]] = bands
    return _unblocks(blocks)


def padded_size(size):
    return -(-size // BLOCK) * BLOCK


def forward_dct8(plane):
    """DCT-II orthonormale de chaque bloc ; le plan est complété par réplication des bords."""
    h, w = plane.shape
    padded = np.pad(plane.values, ((0, padded_size(h) - h), (0, padded_size(w) - w)), mode="edge")
    coeffs = dctn(_blocks(padded), type=2, norm="ortho", axes=(2, 3))
    values = _unblocks(coeffs)
    return CoeffPlane(values.shape[1], values.shape[0], w, h, values)


def inverse_dct8(coeffs):
    pixels = idctn(_blocks(coeffs.values), type=2, norm="ortho", axes=(2, 3))
    return FloatPlane.from_array(_unblocks(pixels)[:coeffs.orig_height, :coeffs.orig_width])


def check_step(qp):
    if not qp > 0:
        raise ConfigError(f"invalid step: qp={qp} (> 0 attendu)")


def quantize(coeffs, qp):
    """Arrondi de value / qp, moitiés éloignées de zéro."""
    check_step(qp)
    scaled = coeffs.values / qp
    indices = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return QuantPlane(coeffs.width, coeffs.height, coeffs.orig_width, coeffs.orig_height,
                      indices.astype(np.int64))


def dequantize(q, qp):
    check_step(qp)
    return CoeffPlane(q.width, q.height, q.orig_width, q.orig_height, q.values * float(qp))
