"""Représentation des images et E/S raster (PGM P5 / PPM P6, maxval 255)."""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scripts.errors import DimensionError, ImageFormatError

logger = logging.getLogger(__name__)

_WHITESPACE = b" \t\r\n\v\f"

# Poids BT.601 en millièmes : la somme entière reste exacte (blanc -> 255.0)
_LUMA_WEIGHTS = (299, 587, 114)


@dataclass(frozen=True)
class PlanarImage:
    """Image 8 bits, plans séparés : samples a la forme (channels, height, width)."""
    width: int
    height: int
    channels: int
    samples: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise DimensionError(f"dimension mismatch: {self.channels} canaux (1 ou 3 attendus)")
        if self.width <= 0 or self.height <= 0:
            raise DimensionError(f"dimension mismatch: taille {self.width}x{self.height} invalide")
        samples = np.asarray(self.samples)
        if samples.shape != (self.channels, self.height, self.width):
            raise DimensionError(
                f"dimension mismatch: plans {samples.shape}, "
                f"attendu {(self.channels, self.height, self.width)}"
            )
        samples = samples.astype(np.uint8, copy=True)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @classmethod
    def from_array(cls, array):
        """Construit une image depuis un tableau (h, w) ou (c, h, w)."""
        array = np.asarray(array)
        if array.ndim == 2:
            array = array[np.newaxis]
        if array.ndim != 3:
            raise DimensionError(f"dimension mismatch: tableau de forme {array.shape}")
        channels, height, width = array.shape
        return cls(width=width, height=height, channels=channels, samples=array)

    @property
    def pixels(self):
        return self.width * self.height

    def plane(self, channel):
        return FloatPlane.from_array(self.samples[channel])

    def same_geometry(self, other):
        return (self.width, self.height, self.channels) == (other.width, other.height, other.channels)

    def __eq__(self, other):
        if not isinstance(other, PlanarImage):
            return NotImplemented
        return self.same_geometry(other) and np.array_equal(self.samples, other.samples)


@dataclass(frozen=True)
class FloatPlane:
    """Plan flottant (résidus, coefficients, prédictions)."""
    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if self.width <= 0 or self.height <= 0 or values.shape != (self.height, self.width):
            raise DimensionError(
                f"dimension mismatch: plan {values.shape} pour {self.width}x{self.height}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("FloatPlane: valeurs non finies (NaN/Inf)")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, array):
        array = np.asarray(array, dtype=np.float64)
        return cls(width=array.shape[1], height=array.shape[0], values=array)

    @property
    def shape(self):
        return (self.height, self.width)


def _next_token(data, pos):
    """Lit un jeton d'en-tête ; renvoie (jeton, position après le jeton)."""
    while pos < len(data):
        if data[pos] in _WHITESPACE:
            pos += 1
        elif data[pos] == ord("#"):
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
        pos += 1
    if start == pos:
        raise ImageFormatError("malformed header: en-tête incomplet", offset=start)
    return data[start:pos], pos


def _header_int(data, pos, name):
    token, end = _next_token(data, pos)
    if not token.isdigit():
        raise ImageFormatError(f"malformed header: {name} non numérique {token!r}", offset=end - len(token))
    return int(token), end


def decode_image(data):
    """Décode le contenu binaire d'un fichier P5/P6."""
    magic, pos = _next_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"malformed header: magic {magic!r} non supporté", offset=0)
    channels = 1 if magic == b"P5" else 3

    width, pos = _header_int(data, pos, "largeur")
    height, pos = _header_int(data, pos, "hauteur")
    maxval_offset = pos
    maxval, pos = _header_int(data, pos, "maxval")
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval}", offset=maxval_offset)
    if width == 0 or height == 0:
        raise ImageFormatError(f"malformed header: taille {width}x{height}", offset=maxval_offset)
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise ImageFormatError("malformed header: séparateur manquant après maxval", offset=pos)
    pos += 1

    expected = width * height * channels
    payload = data[pos:pos + expected]
    if len(payload) < expected:
        raise ImageFormatError(
            f"truncated payload: {len(payload)} octets sur {expected}", offset=pos + len(payload)
        )
    raster = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return PlanarImage.from_array(np.moveaxis(raster, 2, 0))


def encode_image(img):
    """Sérialise une image en P5 (gris) ou P6 (RGB)."""
    magic = "P5" if img.channels == 1 else "P6"
    header = f"{magic}\n{img.width} {img.height}\n255\n".encode("ascii")
    raster = np.moveaxis(np.asarray(img.samples), 0, 2)
    return header + np.ascontiguousarray(raster, dtype=np.uint8).tobytes()


def read_image(path):
    """Charge une image PGM/PPM binaire."""
    path = Path(path).resolve()
    if not path.exists():
        raise FileNotFoundError(f"image introuvable: {path}")
    img = decode_image(path.read_bytes())
    logger.debug(f"Image chargée: {path.name} {img.width}x{img.height}x{img.channels}")
    return img


def write_image(img, path):
    path = Path(path)
    path.write_bytes(encode_image(img))
    logger.debug(f"Image écrite: {path}")


def to_luma(img):
    """Luma BT.601 (identité pour une image en niveaux de gris)."""
    samples = np.asarray(img.samples)
    if img.channels == 1:
        return FloatPlane.from_array(samples[0].astype(np.float64))
    weighted = sum(w * samples[c].astype(np.int64) for c, w in enumerate(_LUMA_WEIGHTS))
    return FloatPlane.from_array(weighted / 1000.0)


def check_same_geometry(left, right):
    if not left.same_geometry(right):
        raise DimensionError(
            f"dimension mismatch: gauche {left.width}x{left.height}x{left.channels}, "
            f"droite {right.width}x{right.height}x{right.channels}"
        )
