"""Paires stéréo synthétiques texturées (rectifiées, décalage horizontal entier)."""
import numpy as np
from scipy.ndimage import gaussian_filter

from scripts.core import PlanarImage


def _texture(rng, height, width, smoothness):
    noise = rng.standard_normal((height, width))
    tex = gaussian_filter(noise, smoothness, mode="reflect")
    tex -= tex.min()
    peak = tex.max()
    if peak > 0:
        tex /= peak
    return 16.0 + 223.0 * tex


def _to_u8(values):
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _shifted_rows(texture, width, shift):
    """Vue gauche = texture[:, :w], vue droite = texture[:, shift:shift + w]."""
    return texture[:, :width], texture[:, shift:shift + width]


def make_textured_pair(width, height, shift, seed=0, channels=1, smoothness=1.5,
                       foreground_shift=None):
    """Renvoie (gauche, droite) avec gauche(x) = droite(x - shift).

    foreground_shift : si fourni, la bande centrale des lignes (un tiers de la
    hauteur) suit ce décalage au lieu de `shift` (objet plus proche).
    """
    rng = np.random.default_rng(seed)
    margin = max(shift, foreground_shift or 0)
    left = np.empty((channels, height, width))
    right = np.empty((channels, height, width))

    base = _texture(rng, height, width + margin, smoothness)
    front = None
    if foreground_shift is not None:
        front = _texture(rng, height, width + margin, smoothness)
    y0, y1 = height // 3, 2 * height // 3

    for c in range(channels):
        # canaux corrélés : même structure, léger bruit propre au canal
        tint = base
        if c > 0:
            tint = base + (_texture(rng, height, width + margin, smoothness) - 128.0) * 0.15
        left[c], right[c] = _shifted_rows(tint, width, shift)
        if front is not None:
            fl, fr = _shifted_rows(front, width, foreground_shift)
            left[c, y0:y1], right[c, y0:y1] = fl[y0:y1], fr[y0:y1]

    return PlanarImage.from_array(_to_u8(left)), PlanarImage.from_array(_to_u8(right))


def make_dataset(count, width=96, height=64, max_shift=8, seed=0, channels=1):
    """Liste de paires nommées [(nom, gauche, droite)] aux décalages variés."""
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(count):
        shift = int(rng.integers(1, max_shift + 1))
        left, right = make_textured_pair(width, height, shift, seed=seed * 1000 + i, channels=channels)
        pairs.append((f"synth_{i:03d}", left, right))
    return pairs
