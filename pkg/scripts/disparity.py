"""Estimation de disparité gauche : coût SAD par bloc + agrégation semi-globale 4 chemins.

Les disparités sont stockées en quart de pixel (entiers, unité 1/4 px),
alignées sur la vue gauche : la valeur en (x, y) pointe vers la colonne
x - d de la vue droite.
"""
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scripts.core import FloatPlane, check_same_geometry, to_luma
from scripts.errors import ConfigError, DimensionError, ImageFormatError

logger = logging.getLogger(__name__)

QUARTER = 4
DMAP_MAGIC = b"DMAP"


@dataclass(frozen=True)
class MatchParams:
    max_disparity: int = 64
    block_radius: int = 2
    sgm_p1: float = 200.0
    sgm_p2: float = 800.0

    def __post_init__(self):
        if self.max_disparity < 1:
            raise ConfigError(f"invalid match params: max_disparity={self.max_disparity} (>= 1 attendu)")
        if self.block_radius < 0:
            raise ConfigError(f"invalid match params: block_radius={self.block_radius} (>= 0 attendu)")
        if not 0 < self.sgm_p1 <= self.sgm_p2:
            raise ConfigError(
                f"invalid match params: pénalités P1={self.sgm_p1}, P2={self.sgm_p2} (0 < P1 <= P2 attendu)"
            )

    @classmethod
    def for_radius(cls, max_disparity=64, block_radius=2):
        """Pénalités proportionnelles à la surface de la fenêtre (8 et 32 par pixel)."""
        area = (2 * block_radius + 1) ** 2
        return cls(max_disparity, block_radius, 8.0 * area, 32.0 * area)


@dataclass(frozen=True)
class CostVolume:
    width: int
    height: int
    num_disparities: int
    costs: np.ndarray  # (height, width, D)

    def __post_init__(self):
        if self.costs.shape != (self.height, self.width, self.num_disparities):
            raise DimensionError(f"dimension mismatch: volume {self.costs.shape}")


@dataclass(frozen=True)
class DisparityMap:
    width: int
    height: int
    max_disparity: int
    values: np.ndarray  # (height, width), entiers en quart de pixel

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int32)
        if values.shape != (self.height, self.width):
            raise DimensionError(f"dimension mismatch: carte {values.shape} pour {self.width}x{self.height}")
        if values.size and (values.min() < 0 or values.max() > QUARTER * self.max_disparity):
            raise ValueError(f"DisparityMap: valeurs hors de [0, {QUARTER * self.max_disparity}]")
        object.__setattr__(self, "values", values)

    def in_pixels(self):
        return self.values / float(QUARTER)


def _box_sum(plane, radius):
    """Somme sur fenêtre (2r+1)² avec réplication des bords (somme exacte, séparable)."""
    if radius == 0:
        return plane.copy()
    h, w = plane.shape
    padded = np.pad(plane, radius, mode="edge")
    rows = np.zeros((h + 2 * radius, w))
    for dx in range(2 * radius + 1):
        rows += padded[:, dx:dx + w]
    out = np.zeros((h, w))
    for dy in range(2 * radius + 1):
        out += rows[dy:dy + h, :]
    return out


def matching_cost(left, right, p):
    """Coût SAD entre la gauche en (x, y) et la droite en (x - d, y)."""
    if left.shape != right.shape:
        raise DimensionError(f"dimension mismatch: gauche {left.shape}, droite {right.shape}")
    h, w = left.shape
    num_d = p.max_disparity + 1
    columns = np.arange(w)
    costs = np.empty((h, w, num_d))
    for d in range(num_d):
        # colonnes hors image ramenées au bord
        shifted = right.values[:, np.maximum(columns - d, 0)]
        costs[:, :, d] = _box_sum(np.abs(left.values - shifted), p.block_radius)
    return CostVolume(width=w, height=h, num_disparities=num_d, costs=costs)


def _scan_path(costs, p1, p2):
    """Programme dynamique le long de l'axe 1 (gauche -> droite), vectorisé sur l'axe 0."""
    aggregated = np.empty_like(costs)
    aggregated[:, 0] = costs[:, 0]
    for x in range(1, costs.shape[1]):
        prev = aggregated[:, x - 1]
        prev_min = prev.min(axis=1, keepdims=True)
        best = prev.copy()
        best[:, 1:] = np.minimum(best[:, 1:], prev[:, :-1] + p1)
        best[:, :-1] = np.minimum(best[:, :-1], prev[:, 1:] + p1)
        best = np.minimum(best, prev_min + p2)
        aggregated[:, x] = costs[:, x] + best - prev_min
    return aggregated


def aggregate_costs(cv, p):
    """Agrégation semi-globale sur les 4 directions, somme des coûts de chemin."""
    c = cv.costs
    p1, p2 = float(p.sgm_p1), float(p.sgm_p2)
    total = _scan_path(c, p1, p2)
    total += _scan_path(c[:, ::-1], p1, p2)[:, ::-1]
    vertical = np.swapaxes(c, 0, 1)
    total += np.swapaxes(_scan_path(vertical, p1, p2), 0, 1)
    total += np.swapaxes(_scan_path(vertical[:, ::-1], p1, p2)[:, ::-1], 0, 1)
    return CostVolume(cv.width, cv.height, cv.num_disparities, total)


def select_disparity(cv):
    """Winner-take-all + raffinement parabolique, arrondi au quart de pixel."""
    costs = cv.costs
    num_d = cv.num_disparities
    best = np.argmin(costs, axis=2)  # premier minimum : égalités vers le plus petit d
    c0 = np.take_along_axis(costs, best[..., None], axis=2)[..., 0]
    cm = np.take_along_axis(costs, np.maximum(best - 1, 0)[..., None], axis=2)[..., 0]
    cp = np.take_along_axis(costs, np.minimum(best + 1, num_d - 1)[..., None], axis=2)[..., 0]

    denom = 2.0 * (cm - 2.0 * c0 + cp)
    refinable = (best > 0) & (best < num_d - 1) & (denom != 0)
    delta = np.zeros_like(c0)
    np.divide(cm - cp, denom, out=delta, where=refinable)
    delta = np.clip(delta, -0.5, 0.5)

    quarter = np.floor(QUARTER * (best + delta) + 0.5).astype(np.int64)
    quarter = np.clip(quarter, 0, QUARTER * (num_d - 1))
    return DisparityMap(cv.width, cv.height, num_d - 1, quarter)


def estimate_disparity(left, right, p):
    """Carte de disparité alignée sur la vue gauche (luma -> SAD -> SGM -> WTA)."""
    check_same_geometry(left, right)
    volume = matching_cost(to_luma(left), to_luma(right), p)
    volume = aggregate_costs(volume, p)
    dmap = select_disparity(volume)
    logger.debug(
        f"Disparité estimée {dmap.width}x{dmap.height}: moyenne {dmap.in_pixels().mean():.2f} px"
    )
    return dmap


def write_disparity_dump(dmap, path):
    """Dump de débogage : "DMAP" + largeur u16 + hauteur u16, puis valeurs u16 big-endian."""
    header = DMAP_MAGIC + struct.pack(">HH", dmap.width, dmap.height)
    Path(path).write_bytes(header + dmap.values.astype(">u2").tobytes())


def read_disparity_dump(path, max_disparity):
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != DMAP_MAGIC:
        raise ImageFormatError("malformed header: magic DMAP absent", offset=0)
    width, height = struct.unpack(">HH", data[4:8])
    payload = data[8:]
    if len(payload) != 2 * width * height:
        raise ImageFormatError(f"truncated payload: {len(payload)} octets", offset=8 + len(payload))
    values = np.frombuffer(payload, dtype=">u2").reshape(height, width)
    return DisparityMap(width, height, max_disparity, values)


if __name__ == "__main__":
    from scripts.synthetic import make_textured_pair

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    left, right = make_textured_pair(96, 64, shift=5, seed=1)
    dmap = estimate_disparity(left, right, MatchParams.for_radius(max_disparity=16))
    share = np.mean(dmap.values[8:-8, 24:-8] == 20)
    logger.info(f"Disparité 5 px retrouvée sur {share:.1%} de l'intérieur ✅")
