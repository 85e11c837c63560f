"""Warping arrière droite -> gauche et raffinement du prior aligné."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation, uniform_filter

from scripts.core import FloatPlane
from scripts.disparity import QUARTER
from scripts.errors import DimensionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValidityMask:
    """True là où les deux colonnes sources de l'interpolation sont dans l'image droite."""
    width: int
    height: int
    flags: np.ndarray

    def __post_init__(self):
        flags = np.asarray(self.flags, dtype=bool)
        if flags.shape != (self.height, self.width):
            raise DimensionError(f"dimension mismatch: masque {flags.shape}")
        object.__setattr__(self, "flags", flags)

    @classmethod
    def all_valid(cls, width, height):
        return cls(width, height, np.ones((height, width), dtype=bool))

    @property
    def valid_ratio(self):
        return float(self.flags.mean())


def warp_right_to_left(src, d):
    """Échantillonne src en (x - d(x, y) / 4, y) par interpolation linéaire horizontale."""
    if src.shape != d.values.shape:
        raise DimensionError(f"dimension mismatch: plan {src.shape}, disparité {d.values.shape}")
    h, w = src.shape
    positions = np.arange(w)[np.newaxis, :] - d.values / float(QUARTER)
    valid = (positions >= 0) & (positions <= w - 1)

    clamped = np.clip(positions, 0, w - 1)
    x0 = np.floor(clamped).astype(np.int64)
    frac = clamped - x0
    x1 = np.minimum(x0 + 1, w - 1)
    rows = np.arange(h)[:, np.newaxis]
    values = (1.0 - frac) * src.values[rows, x0] + frac * src.values[rows, x1]
    return FloatPlane.from_array(values), ValidityMask(w, h, valid)


def _nearest_valid(valid):
    """Colonne valide la plus proche de chaque colonne (gauche en cas d'égalité) ; la ligne a au moins un pixel valide."""
    indices = np.flatnonzero(valid)
    columns = np.arange(valid.size)
    pos = np.searchsorted(indices, columns)
    right = indices[np.minimum(pos, indices.size - 1)]
    left = indices[np.maximum(pos - 1, 0)]
    dist_right = np.where(pos < indices.size, right - columns, valid.size)
    dist_left = np.where(pos > 0, columns - left, valid.size)
    return np.where(dist_left <= dist_right, left, right)


def _fill_row(row, valid):
    """Remplit les trous par le pixel valide le plus proche de la ligne."""
    if not valid.any():
        return np.zeros_like(row)
    return np.where(valid, row, row[_nearest_valid(valid)])


def mirror_holes(plane, mask):
    """Remplace chaque trou par le pixel symétrique par rapport au pixel valide le plus proche.

    Le trou reçoit ainsi une texture voisine plutôt qu'une valeur répétée ;
    les lignes sans pixel valide sont laissées telles quelles.
    """
    if plane.shape != mask.flags.shape:
        raise DimensionError(f"dimension mismatch: plan {plane.shape}, masque {mask.flags.shape}")
    valid = mask.flags
    out = plane.values.copy()
    columns = np.arange(plane.width)
    for y in range(plane.height):
        if valid[y].all() or not valid[y].any():
            continue
        mirrored = np.clip(2 * _nearest_valid(valid[y]) - columns, 0, plane.width - 1)
        out[y] = np.where(valid[y], out[y], plane.values[y, mirrored])
    return FloatPlane.from_array(out)


def refine_prior(prior, mask):
    """Bouchage des trous ligne par ligne puis moyenne 3x3 autour des pixels invalides."""
    if prior.shape != mask.flags.shape:
        raise DimensionError(f"dimension mismatch: prior {prior.shape}, masque {mask.flags.shape}")
    valid = mask.flags
    if valid.all():
        return FloatPlane.from_array(prior.values.copy())

    filled = np.empty_like(prior.values)
    for y in range(prior.height):
        filled[y] = _fill_row(prior.values[y], valid[y])

    near_hole = binary_dilation(~valid, structure=np.ones((3, 3), dtype=bool))
    smoothed = uniform_filter(filled, size=3, mode="nearest")
    logger.debug(f"Prior raffiné: {int((~valid).sum())} trous, {int(near_hole.sum())} pixels lissés")
    return FloatPlane.from_array(np.where(near_hole, smoothed, filled))
