"""Codage entropique : codeur par plages 32 bits et modèle gaussien conditionnel.

Format du flux (documenté pour permettre une implémentation alternative) :

- état : low (32 bits, retenue propagée dans les octets déjà émis),
  range (32 bits, initialisé à 0xFFFFFFFF) ;
- coder un symbole (cum, freq) sur un total 2^bits :
  r = range >> bits ; low += r * cum ; range = r * freq ;
  si low >= 2^32 : low -= 2^32 et +1 sur les octets émis (0xFF -> 0x00 en cascade) ;
  tant que range < 2^24 : émettre low >> 24, low = (low << 8) mod 2^32, range <<= 8 ;
- fin : émettre les 4 octets de low, poids fort en premier ;
- décodeur : code = 4 premiers octets (big-endian), range = 0xFFFFFFFF ;
  r = range >> bits ; cible = min(code // r, 2^bits - 1) ; symbole s tel que
  cum[s] <= cible < cum[s+1] ; code -= r * cum[s] ; range = r * freq[s] ;
  renormalisation symétrique en lisant un octet à chaque décalage.

Les bits bruts (suffixe Exp-Golomb des échappements) passent par le même
codeur avec un total de 2 (bits = 1).
"""
import logging
import math
from bisect import bisect_right
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from scripts.errors import BitstreamError

logger = logging.getLogger(__name__)

PROB_BITS = 16
PROB_TOTAL = 1 << PROB_BITS
SUPPORT = 255
SIGMA_MIN_RATIO = 0.11
SIGMA_MAX_RATIO = 64.0
SCALE_LEVELS = 64
# échelles normalisées (sigma / qp), géométriques entre sigma_min et sigma_max
SCALE_TABLE = np.geomspace(SIGMA_MIN_RATIO, SIGMA_MAX_RATIO, SCALE_LEVELS)

_MASK32 = 0xFFFFFFFF
_BOTTOM = 1 << 24

BAND_DC, BAND_LOW, BAND_HIGH = "DC", "low", "high"


class CdfModel:
    """Table de fréquences entières (total 2^16) sur des symboles consécutifs.

    Avec escape=True, le premier et le dernier symbole sont des échappements :
    toute valeur au-delà est codée par l'échappement suivi de l'excès en
    Exp-Golomb d'ordre 0.
    """

    def __init__(self, freqs, min_symbol=0, escape=False):
        freqs = [int(f) for f in freqs]
        if min(freqs) < 1:
            raise ValueError("CdfModel: chaque symbole doit avoir une fréquence >= 1")
        cdf = [0]
        for f in freqs:
            cdf.append(cdf[-1] + f)
        if cdf[-1] != PROB_TOTAL:
            raise ValueError(f"CdfModel: total {cdf[-1]} != {PROB_TOTAL}")
        self.freqs = freqs
        self.cdf = cdf
        self.min_symbol = min_symbol
        self.escape = escape
        self.max_symbol = min_symbol + len(freqs) - 1

    @classmethod
    def uniform(cls, size, min_symbol=0):
        base, extra = divmod(PROB_TOTAL, size)
        return cls([base + (1 if i < extra else 0) for i in range(size)], min_symbol)

    @property
    def size(self):
        return len(self.freqs)

    def locate(self, value):
        """Renvoie (index du symbole, excès d'échappement ou None)."""
        if self.escape:
            if value <= self.min_symbol:
                return 0, self.min_symbol - value
            if value >= self.max_symbol:
                return self.size - 1, value - self.max_symbol
        elif not self.min_symbol <= value <= self.max_symbol:
            raise ValueError(f"symbole {value} hors du support [{self.min_symbol}, {self.max_symbol}]")
        return value - self.min_symbol, None

    def probability(self, index):
        return self.freqs[index] / PROB_TOTAL


class GaussianCdfModel(CdfModel):
    """Gaussienne discrétisée sur les intervalles de quantification, moyenne nulle."""

    def __init__(self, sigma, qp, support, freqs, pmf):
        super().__init__(freqs, min_symbol=-(support + 1), escape=True)
        self.mu = 0.0
        self.sigma = sigma
        self.qp = qp
        self.support = support
        self.pmf = pmf  # probabilités réelles avant plancher / renormalisation


def clamp_sigma(sigma, qp):
    return min(max(sigma, SIGMA_MIN_RATIO * qp), SIGMA_MAX_RATIO * qp)


@lru_cache(maxsize=4096)
def build_gaussian_cdf(sigma, qp, support=SUPPORT):
    """p(k) ∝ Φ((k+½)qp/σ) − Φ((k−½)qp/σ) sur [−S, S], queues repliées dans les échappements."""
    sigma = clamp_sigma(float(sigma), float(qp))
    t = qp / sigma
    k = np.arange(support + 1, dtype=np.float64)
    # côté gauche de la cloche : meilleure précision loin du centre
    side = ndtr(-(k - 0.5) * t) - ndtr(-(k + 0.5) * t)
    tail = ndtr(-(support + 0.5) * t)

    counts = np.maximum(1, np.floor(np.append(side[1:], tail) * PROB_TOTAL + 0.5)).astype(np.int64)
    center = PROB_TOTAL - 2 * int(counts.sum())
    # le centre reste le mode : le plancher à 1 des queues peut le faire passer sous ses voisins
    while center < max(1, int(counts[0])):
        # retire une unité au plus grand (le dernier à égalité) pour garder la décroissance
        peak = len(counts) - 1 - int(np.argmax(counts[::-1]))
        counts[peak] -= 1
        center += 2
    half = counts.tolist()
    freqs = half[::-1] + [center] + half

    half_pmf = np.append(side[1:], tail)
    pmf = np.concatenate([half_pmf[::-1], side[:1], half_pmf])
    return GaussianCdfModel(sigma, float(qp), support, freqs, pmf)


@lru_cache(maxsize=SCALE_LEVELS)
def level_model(level):
    """Modèle de la table d'échelles (indépendant de qp : seul sigma / qp compte)."""
    return build_gaussian_cdf(float(SCALE_TABLE[level]), 1.0, SUPPORT)


def scale_edges(qp):
    return SCALE_TABLE * float(qp)


def sigma_levels(sigma, qp):
    """Indice d'échelle : plus grande entrée de la table <= sigma (comparaisons seulement)."""
    levels = np.searchsorted(scale_edges(qp), sigma, side="right") - 1
    return np.clip(levels, 0, SCALE_LEVELS - 1)


def sigma_level(sigma, qp):
    edges = scale_edges(qp).tolist()
    return min(max(bisect_right(edges, sigma) - 1, 0), SCALE_LEVELS - 1)


def band_class(band):
    if band == 0:
        return BAND_DC
    return BAND_LOW if band <= 15 else BAND_HIGH


@dataclass(frozen=True)
class CodingContext:
    band_class: str
    causal_neighbor_mags: tuple = (0.0, 0.0, 0.0)
    prior_coeff_mag: float = 0.0

    def __post_init__(self):
        if any(m < 0 for m in self.causal_neighbor_mags) or self.prior_coeff_mag < 0:
            raise ValueError("CodingContext: magnitudes négatives")


def predict_sigma(ctx, use_prior, w_prior, qp=1.0):
    """Échelle prédite : moyenne des voisins causaux, fusionnée avec le prior inter-vues."""
    mags = ctx.causal_neighbor_mags
    base = sum(mags) / len(mags) if mags else 0.0
    if use_prior:
        base = (base + w_prior * ctx.prior_coeff_mag) / (1.0 + w_prior)
    return clamp_sigma(base, qp)


def predict_sigma_array(left, above, above_left, qp, prior=None, w_prior=0.5):
    """Version tableau de predict_sigma, appliquée à l'identique côté codeur et décodeur."""
    base = (left + above + above_left) / 3.0
    if prior is not None:
        base = (base + w_prior * prior) / (1.0 + w_prior)
    return np.clip(base, SIGMA_MIN_RATIO * qp, SIGMA_MAX_RATIO * qp)


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self.out = bytearray()

    def encode(self, cum, freq, bits=PROB_BITS):
        r = self.range >> bits
        self.low += r * cum
        self.range = r * freq
        if self.low > _MASK32:
            self.low &= _MASK32
            self._propagate_carry()
        while self.range < _BOTTOM:
            self.out.append(self.low >> 24)
            self.low = (self.low << 8) & _MASK32
            self.range <<= 8

    def encode_bit(self, bit):
        self.encode(bit, 1, bits=1)

    def _propagate_carry(self):
        i = len(self.out) - 1
        while self.out[i] == 0xFF:
            self.out[i] = 0
            i -= 1
        self.out[i] += 1

    def finish(self):
        for _ in range(4):
            self.out.append(self.low >> 24)
            self.low = (self.low << 8) & _MASK32
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data):
        self.data = data
        self.pos = 0
        self.range = _MASK32
        self.code = 0
        self._r = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self):
        if self.pos >= len(self.data):
            raise BitstreamError(f"bitstream underrun: flux épuisé après {len(self.data)} octets")
        byte = self.data[self.pos]
        self.pos += 1
        return byte

    def target(self, bits=PROB_BITS):
        self._r = self.range >> bits
        return min(self.code // self._r, (1 << bits) - 1)

    def consume(self, cum, freq):
        self.code -= self._r * cum
        self.range = self._r * freq
        while self.range < _BOTTOM:
            self.code = ((self.code << 8) | self._next_byte()) & _MASK32
            self.range <<= 8

    def decode_bit(self):
        bit = self.target(bits=1)
        self.consume(bit, 1)
        return bit


def _exp_golomb_bits(excess):
    """Bits Exp-Golomb d'ordre 0 de excess >= 0 (préfixe de zéros puis excess + 1)."""
    value = excess + 1
    n = value.bit_length()
    return [0] * (n - 1) + [(value >> i) & 1 for i in range(n - 1, -1, -1)]


def exp_golomb_length(excess):
    return 2 * (excess + 1).bit_length() - 1


def encode_value(encoder, model, value):
    index, excess = model.locate(value)
    encoder.encode(model.cdf[index], model.freqs[index])
    if excess is not None:
        for bit in _exp_golomb_bits(excess):
            encoder.encode_bit(bit)


def decode_value(decoder, model):
    index = bisect_right(model.cdf, decoder.target()) - 1
    decoder.consume(model.cdf[index], model.freqs[index])
    if model.escape and index in (0, model.size - 1):
        zeros = 0
        while decoder.decode_bit() == 0:
            zeros += 1
            if zeros > 32:
                raise BitstreamError("bitstream underrun: préfixe Exp-Golomb invalide")
        value = 1
        for _ in range(zeros):
            value = (value << 1) | decoder.decode_bit()
        excess = value - 1
        return model.min_symbol - excess if index == 0 else model.max_symbol + excess
    return model.min_symbol + index


def encode_symbols(symbols, model_fn):
    """Code la séquence ; model_fn(i, coded) fournit le modèle du symbole i.

    `coded` est la séquence des valeurs déjà codées : seules les positions < i
    peuvent être lues, ce qui garantit la symétrie avec le décodeur.
    """
    symbols = [int(s) for s in symbols]
    encoder = RangeEncoder()
    for i, value in enumerate(symbols):
        encode_value(encoder, model_fn(i, symbols), value)
    return encoder.finish()


def decode_symbols(data, count, model_fn):
    decoder = RangeDecoder(data)
    decoded = []
    for i in range(count):
        decoded.append(decode_value(decoder, model_fn(i, decoded)))
    return decoded


def symbol_cost(model, value):
    """Coût en bits d'une valeur, échappement compris."""
    index, excess = model.locate(value)
    bits = PROB_BITS - math.log2(model.freqs[index])
    if excess is not None:
        bits += exp_golomb_length(excess)
    return bits


def estimate_rate(symbols, model_fn):
    """Entropie croisée Σ −log2 p(symbole), en bits."""
    symbols = [int(s) for s in symbols]
    return float(sum(symbol_cost(model_fn(i, symbols), v) for i, v in enumerate(symbols)))


@lru_cache(maxsize=1)
def _level_cost_table():
    """Coûts −log2 p par (niveau, indice de symbole) pour l'estimation vectorisée."""
    freqs = np.array([level_model(level).freqs for level in range(SCALE_LEVELS)], dtype=np.float64)
    return PROB_BITS - np.log2(freqs)


def level_bits(values, levels):
    """Coût en bits de chaque symbole codé avec level_model(levels[i]) (même forme que values)."""
    values = np.asarray(values, dtype=np.int64)
    levels = np.asarray(levels, dtype=np.int64)
    bound = SUPPORT + 1
    magnitude = np.abs(values)
    bits = _level_cost_table()[levels, np.clip(values, -bound, bound) + bound]
    excess = np.maximum(magnitude - bound, 0)
    return bits + np.where(magnitude >= bound, 2 * np.floor(np.log2(excess + 1)) + 1, 0.0)


def estimate_level_bits(values, levels):
    """estimate_rate vectorisé pour des symboles codés avec level_model(levels[i])."""
    return float(level_bits(values, levels).sum())
