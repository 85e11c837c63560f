"""Codec stéréo à trois flux : vue droite, carte de disparité, résidu gauche.

Chaîne d'encodage :
  1. droite : DCT 8x8 -> quantification qp_r -> codage entropique (contexte causal) ;
     la reconstruction x̂_r est recalculée dans l'encodeur (boucle fermée) ;
  2. disparité : estimation sur les originaux, médiane 4x4, deltas gauche,
     gaussienne à sigma glissant ; reconstruction d̂ par suréchantillonnage bilinéaire ;
  3. prédiction : warp de x̂_r par d̂ (+ raffinement si use_prn) ;
  4. gauche : résidu x_l − prédiction, DCT -> qp_l -> codage avec le prior inter-vues
     (magnitude attendue du résidu, gains par classe de bande choisis par l'encodeur) ;
  5. en-tête + trois sous-flux préfixés par leur longueur.
"""
import logging
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from scripts.core import FloatPlane, PlanarImage, check_same_geometry
from scripts.disparity import QUARTER, DisparityMap, MatchParams, estimate_disparity
from scripts.entropy import (
    BAND_DC,
    BAND_HIGH,
    BAND_LOW,
    CdfModel,
    band_class,
    decode_symbols,
    encode_symbols,
    estimate_level_bits,
    estimate_rate,
    level_bits,
    level_model,
    predict_sigma_array,
    sigma_level,
    sigma_levels,
)
from scripts.errors import BitstreamError, ConfigError, DimensionError
from scripts.metrics import mse, psnr_from_mse
from scripts.transform import BLOCK, QuantPlane, check_step, dequantize, forward_dct8, inverse_dct8, padded_size, quantize
from scripts.warp import mirror_holes, refine_prior, warp_right_to_left

logger = logging.getLogger(__name__)

MAGIC = b"DSC1"
VERSION = 1
HEADER = struct.Struct(">4sBBHHffHfIII")
U16_MAX = 0xFFFF

FLAG_DISPARITY = 0x01
FLAG_PRIOR = 0x02
FLAG_ALIGN = 0x04
FLAG_PRN = 0x08
FLAG_COLOR = 0x10

DISPARITY_DOWNSAMPLE = 4
DISPARITY_SIGMA_INIT = 1.0
DISPARITY_EMA = 16.0
LEVEL_SHIFT = 128.0
BANDS = BLOCK * BLOCK
# amplitude maximale du bruit de quantification de x̂_r, en fraction de qp_r
NOISE_CAP = 0.5
# gains du prior par classe de bande ; l'indice 0 coupe le prior pour la classe
PRIOR_GAINS = (0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
BAND_CLASSES = (BAND_DC, BAND_LOW, BAND_HIGH)
CLASS_OF_BAND = np.array([BAND_CLASSES.index(band_class(band)) for band in range(BANDS)])
GAIN_MODEL = CdfModel.uniform(len(PRIOR_GAINS))

CASES = {
    "case1": (False, False, False, False),
    "case2": (True, False, False, False),
    "case3": (True, True, False, False),
    "case4": (True, True, True, False),
    "full": (True, True, True, True),
}


def _f32(value):
    return float(np.float32(value))


@dataclass(frozen=True)
class CodecConfig:
    qp_r: float = 8.0
    qp_l: float = 8.0
    match: MatchParams = field(default_factory=MatchParams)
    use_disparity: bool = True
    use_prior: bool = True
    align_prior: bool = True
    use_prn: bool = True
    w_prior: float = 0.5
    disparity_downsample: int = DISPARITY_DOWNSAMPLE

    def __post_init__(self):
        check_step(self.qp_r)
        check_step(self.qp_l)
        if self.align_prior and not self.use_prior:
            raise ConfigError("invalid config: align_prior exige use_prior")
        if self.use_prn and not self.align_prior:
            raise ConfigError("invalid config: use_prn exige align_prior")
        if self.align_prior and not self.use_disparity:
            raise ConfigError("invalid config: align_prior exige use_disparity")
        if self.w_prior < 0:
            raise ConfigError(f"invalid config: w_prior={self.w_prior} (>= 0 attendu)")
        if self.disparity_downsample != DISPARITY_DOWNSAMPLE:
            raise ConfigError(f"invalid config: sous-échantillonnage {self.disparity_downsample} (4 seulement)")
        if self.match.max_disparity > U16_MAX:
            raise ConfigError(f"invalid config: max_disparity={self.match.max_disparity} (en-tête sur 16 bits)")

    @classmethod
    def for_case(cls, case, **overrides):
        """Configuration d'ablation : case1..case4 ou full."""
        if case not in CASES:
            raise ConfigError(f"invalid config: cas inconnu {case!r} (choix: {', '.join(CASES)})")
        use_disparity, use_prior, align_prior, use_prn = CASES[case]
        return cls(use_disparity=use_disparity, use_prior=use_prior, align_prior=align_prior,
                   use_prn=use_prn, **overrides)

    @property
    def case(self):
        flags = (self.use_disparity, self.use_prior, self.align_prior, self.use_prn)
        for name, value in CASES.items():
            if value == flags:
                return name
        return "custom"

    @property
    def flags(self):
        return ((FLAG_DISPARITY if self.use_disparity else 0)
                | (FLAG_PRIOR if self.use_prior else 0)
                | (FLAG_ALIGN if self.align_prior else 0)
                | (FLAG_PRN if self.use_prn else 0))

    def normalized(self):
        """Pas et poids arrondis en float32, exactement comme le décodeur les relira."""
        return replace(self, qp_r=_f32(self.qp_r), qp_l=_f32(self.qp_l), w_prior=_f32(self.w_prior))


@dataclass(frozen=True)
class RDPoint:
    bpp: float
    psnr: float

    def __post_init__(self):
        if not self.bpp > 0:
            raise ValueError(f"RDPoint: bpp={self.bpp} (> 0 attendu)")
        if not np.isfinite(self.psnr):
            raise ValueError("RDPoint: psnr non fini")


@dataclass(frozen=True)
class Bitstream:
    width: int
    height: int
    flags: int
    qp_r: float
    qp_l: float
    max_disparity: int
    w_prior: float
    right: bytes
    disparity: bytes
    left: bytes
    version: int = VERSION

    @property
    def color(self):
        return bool(self.flags & FLAG_COLOR)

    @property
    def channels(self):
        return 3 if self.color else 1

    def config(self):
        """CodecConfig équivalente, reconstruite depuis l'en-tête."""
        try:
            return CodecConfig(
                qp_r=self.qp_r,
                qp_l=self.qp_l,
                match=MatchParams.for_radius(max_disparity=self.max_disparity),
                use_disparity=bool(self.flags & FLAG_DISPARITY),
                use_prior=bool(self.flags & FLAG_PRIOR),
                align_prior=bool(self.flags & FLAG_ALIGN),
                use_prn=bool(self.flags & FLAG_PRN),
                w_prior=self.w_prior,
            )
        except ConfigError as e:
            raise BitstreamError(f"bad header: {e}") from e

    @property
    def substream_sizes(self):
        return {"header": HEADER.size, "right": len(self.right),
                "disparity": len(self.disparity), "left": len(self.left)}

    def __len__(self):
        return HEADER.size + len(self.right) + len(self.disparity) + len(self.left)

    def to_bytes(self):
        header = HEADER.pack(MAGIC, self.version, self.flags, self.width, self.height,
                             self.qp_r, self.qp_l, self.max_disparity, self.w_prior,
                             len(self.right), len(self.disparity), len(self.left))
        return header + self.right + self.disparity + self.left

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < HEADER.size:
            raise BitstreamError(f"length mismatch: {len(data)} octets, en-tête de {HEADER.size} attendu")
        (magic, version, flags, width, height, qp_r, qp_l, max_disparity, w_prior,
         len_right, len_disp, len_left) = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise BitstreamError(f"bad magic: {magic!r}")
        if version != VERSION:
            raise BitstreamError(f"unsupported version: {version}")
        payload = data[HEADER.size:]
        if len_right + len_disp + len_left != len(payload):
            raise BitstreamError(
                f"length mismatch: longueurs déclarées {len_right}+{len_disp}+{len_left}, "
                f"charge utile de {len(payload)} octets"
            )
        if width == 0 or height == 0 or not (qp_r > 0 and qp_l > 0):
            raise BitstreamError(f"bad header: taille {width}x{height}, qp {qp_r}/{qp_l}")
        right = payload[:len_right]
        disparity = payload[len_right:len_right + len_disp]
        left = payload[len_right + len_disp:]
        return cls(width, height, flags, qp_r, qp_l, max_disparity, w_prior,
                   right, disparity, left, version)


@dataclass
class EncodeResult:
    """Flux produit et tout ce que l'encodeur sait de la reconstruction."""
    bitstream: Bitstream
    config: CodecConfig
    left: PlanarImage
    right: PlanarImage
    prediction: PlanarImage
    disparity: DisparityMap = None
    estimated_bits: dict = field(default_factory=dict)


@dataclass
class DecodedPair:
    left: PlanarImage
    right: PlanarImage
    prediction: PlanarImage
    disparity: DisparityMap = None


# ------------------ flux de coefficients ------------------

def band_gains(gain_indices):
    """Gain de chacune des 64 bandes à partir des indices (DC, low, high) dans PRIOR_GAINS."""
    return np.asarray(PRIOR_GAINS)[np.asarray(gain_indices, dtype=np.int64)][CLASS_OF_BAND]


def _block_sigma_levels(left, above, above_left, qp, prior=None, w_prior=0.5, gains=None):
    """Niveaux d'échelle d'un ensemble de blocs ; le prior ne sert qu'aux bandes de gain non nul."""
    sigma = predict_sigma_array(left, above, above_left, qp)
    if prior is not None:
        fused = predict_sigma_array(left, above, above_left, qp, gains * prior, w_prior)
        sigma = np.where(gains > 0, fused, sigma)
    return sigma_levels(sigma, qp)


def _context_levels(bands, qp, prior=None, w_prior=0.5, gains=None):
    """Niveaux de tous les symboles d'un canal (nby, nbx, 64), calcul vectorisé."""
    mags = np.abs(bands) * qp
    left = np.zeros_like(mags)
    above = np.zeros_like(mags)
    above_left = np.zeros_like(mags)
    left[:, 1:] = mags[:, :-1]
    above[1:, :] = mags[:-1, :]
    above_left[1:, 1:] = mags[:-1, :-1]
    return _block_sigma_levels(left, above, above_left, qp, prior, w_prior, gains)


def choose_prior_gains(channel_bands, priors, qp, w_prior):
    """Indices (DC, low, high) de PRIOR_GAINS minimisant le débit estimé, classe par classe.

    L'indice 0 (prior coupé) gagne les égalités.
    """
    costs = np.zeros((len(PRIOR_GAINS), len(BAND_CLASSES)))
    for g, gain in enumerate(PRIOR_GAINS):
        gains = np.full(BANDS, gain)
        for bands, prior in zip(channel_bands, priors):
            bits = level_bits(bands, _context_levels(bands, qp, prior, w_prior, gains))
            per_band = bits.reshape(-1, BANDS).sum(axis=0)
            costs[g] += np.bincount(CLASS_OF_BAND, weights=per_band, minlength=len(BAND_CLASSES))
    return tuple(int(i) for i in np.argmin(costs, axis=0))


class _CoefficientContexts:
    """Fournit le modèle de chaque coefficient à partir des coefficients déjà codés.

    Ordre des symboles : avec un prior, les trois indices de gain (DC, low, high)
    en tête ; puis canal, blocs en ordre raster, 64 bandes zig-zag par bloc.
    """

    def __init__(self, channels, blocks_shape, qp, priors=None, w_prior=0.5):
        self.channels = channels
        self.nby, self.nbx = blocks_shape
        self.qp = qp
        self.priors = priors
        self.w_prior = w_prior
        self.offset = len(BAND_CLASSES) if priors is not None else 0
        self.gains = None
        self.mags = np.zeros((channels, self.nby, self.nbx, BANDS))
        self._levels = None
        self._zero = np.zeros(BANDS)

    @property
    def count(self):
        return self.offset + self.channels * self.nby * self.nbx * BANDS

    def _position(self, block):
        channel, rest = divmod(block, self.nby * self.nbx)
        by, bx = divmod(rest, self.nbx)
        return channel, by, bx

    def _block_levels(self, block):
        c, by, bx = self._position(block)
        mags = self.mags[c]
        left = mags[by, bx - 1] if bx > 0 else self._zero
        above = mags[by - 1, bx] if by > 0 else self._zero
        above_left = mags[by - 1, bx - 1] if by > 0 and bx > 0 else self._zero
        prior = self.priors[c][by, bx] if self.priors is not None else None
        return _block_sigma_levels(left, above, above_left, self.qp, prior, self.w_prior, self.gains)

    def model_fn(self, i, coded):
        if i < self.offset:
            return GAIN_MODEL
        if i == self.offset and self.priors is not None:
            self.gains = band_gains(coded[:self.offset])
        j = i - self.offset
        band = j % BANDS
        if band == 0:
            block = j // BANDS
            if block > 0:
                c, by, bx = self._position(block - 1)
                self.mags[c, by, bx] = np.abs(np.asarray(coded[i - BANDS:i], dtype=np.int64)) * self.qp
            self._levels = self._block_levels(block)
        return level_model(int(self._levels[band]))


def _code_residual(target, prediction, qp):
    """Quantifie le résidu target − prediction ; renvoie (indices, reconstruction uint8)."""
    coeffs = forward_dct8(FloatPlane.from_array(target.astype(np.float64) - prediction))
    q = quantize(coeffs, qp)
    return q, _reconstruct(q, prediction, qp)


def _reconstruct(q, prediction, qp):
    residual = inverse_dct8(dequantize(q, qp)).values
    return np.clip(np.floor(prediction + residual + 0.5), 0, 255).astype(np.uint8)


# ------------------ flux de disparité ------------------

class _DisparityContexts:
    """Gaussienne dont l'échelle suit la moyenne glissante de |delta| (facteur 1/16)."""

    def __init__(self):
        self.sigma = DISPARITY_SIGMA_INIT

    def model_fn(self, i, coded):
        if i > 0:
            self.sigma += (abs(coded[i - 1]) - self.sigma) / DISPARITY_EMA
        return level_model(sigma_level(self.sigma, 1.0))


def _low_res_shape(width, height, factor=DISPARITY_DOWNSAMPLE):
    return -(-height // factor), -(-width // factor)


def downsample_disparity(values, factor=DISPARITY_DOWNSAMPLE):
    """Médiane inférieure de chaque bloc factor x factor (blocs de bord partiels)."""
    h, w = values.shape
    lh, lw = _low_res_shape(w, h, factor)
    sentinel = np.iinfo(np.int64).max
    padded = np.full((lh * factor, lw * factor), sentinel, dtype=np.int64)
    padded[:h, :w] = values
    blocks = padded.reshape(lh, factor, lw, factor).swapaxes(1, 2).reshape(lh, lw, factor * factor)
    counts = np.sum(blocks != sentinel, axis=2)
    ordered = np.sort(blocks, axis=2)
    return np.take_along_axis(ordered, ((counts - 1) // 2)[..., None], axis=2)[..., 0]


def settle_border_disparity(low, factor=DISPARITY_DOWNSAMPLE):
    """Les blocs que la disparité de leur voisin de droite place hors de la vue droite la reprennent.

    Parcours de droite à gauche : la colonne j (bord gauche en j·factor px) est
    invisible dès que 4·j·factor < d(j + 1).
    """
    low = low.copy()
    for j in range(low.shape[1] - 2, -1, -1):
        neighbor = low[:, j + 1]
        low[:, j] = np.where(QUARTER * j * factor < neighbor, neighbor, low[:, j])
    return low


def disparity_deltas(low):
    """Delta au voisin gauche ; la première colonne est prédite par la ligne du dessus."""
    pred = np.zeros_like(low)
    pred[:, 1:] = low[:, :-1]
    pred[1:, 0] = low[:-1, 0]
    return low - pred


def undo_disparity_deltas(deltas):
    first = np.cumsum(deltas[:, 0])
    return np.cumsum(deltas, axis=1) - deltas[:, :1] + first[:, None]


def upsample_disparity(low, width, height, max_disparity, factor=DISPARITY_DOWNSAMPLE):
    """Suréchantillonnage bilinéaire (centres de pixels alignés), arrondi au quart de pixel."""
    lh, lw = low.shape
    low = low.astype(np.float64)

    def axis(n, size):
        pos = np.clip((np.arange(n) + 0.5) / factor - 0.5, 0, size - 1)
        i0 = np.floor(pos).astype(np.int64)
        return i0, np.minimum(i0 + 1, size - 1), pos - i0

    y0, y1, fy = axis(height, lh)
    x0, x1, fx = axis(width, lw)
    top = (1.0 - fx) * low[y0][:, x0] + fx * low[y0][:, x1]
    bottom = (1.0 - fx) * low[y1][:, x0] + fx * low[y1][:, x1]
    values = (1.0 - fy)[:, None] * top + fy[:, None] * bottom
    quarter = np.clip(np.floor(values + 0.5), 0, QUARTER * max_disparity).astype(np.int64)
    return DisparityMap(width, height, max_disparity, quarter)


# ------------------ prédiction ------------------

def _band_magnitudes(values):
    return np.abs(forward_dct8(FloatPlane.from_array(values)).to_bands())


def residual_prior(plane, qp_r, mask=None, capped=True):
    """Magnitude attendue du résidu gauche, par bloc et bande (nby, nbx, 64).

    Là où la prédiction vient de x̂_r, le résidu est le bruit de quantification
    de la vue droite : la magnitude du coefficient du plan prior est plafonnée
    à NOISE_CAP·qp_r. Avec un masque de warp, les trous reçoivent en plus
    l'écart entre la texture en miroir et le plan, seule estimation disponible
    du contenu occulté.
    """
    mags = _band_magnitudes(plane - LEVEL_SHIFT)
    if capped:
        mags = np.minimum(mags, NOISE_CAP * qp_r)
    if mask is not None and not mask.flags.all():
        source = FloatPlane.from_array(plane)
        holes = _band_magnitudes(mirror_holes(source, mask).values - plane)
        mags = np.hypot(mags, holes)
    return mags


def predict_left(right_recon, d_hat, cfg):
    """Prédiction de la vue gauche et magnitudes du prior inter-vues (par canal)."""
    channels, h, w = right_recon.shape
    source = right_recon.astype(np.float64)
    mask = None
    if cfg.use_disparity:
        planes = []
        for c in range(channels):
            warped, mask = warp_right_to_left(FloatPlane.from_array(source[c]), d_hat)
            if cfg.use_prn:
                warped = refine_prior(warped, mask)
            planes.append(warped.values)
        prediction = np.stack(planes)
    else:
        prediction = np.full((channels, h, w), LEVEL_SHIFT)

    priors = None
    if cfg.use_prior and cfg.align_prior:
        priors = [residual_prior(plane, cfg.qp_r, mask) for plane in prediction]
    elif cfg.use_prior:
        # sans disparité, le résidu est la texture gauche elle-même : pas de plafond
        priors = [residual_prior(plane, cfg.qp_r, capped=cfg.use_disparity) for plane in source]
    return prediction, priors


def _as_image(planes):
    return PlanarImage.from_array(np.clip(np.floor(planes + 0.5), 0, 255).astype(np.uint8))


# ------------------ encodeur ------------------

@dataclass
class _Analysis:
    """Tout ce que produit l'encodeur, hors codage arithmétique."""
    config: CodecConfig
    right_q: list
    right_recon: np.ndarray
    deltas: np.ndarray
    d_hat: DisparityMap
    prediction: np.ndarray
    priors: list
    prior_gains: tuple
    left_q: list
    left_recon: np.ndarray
    estimated_bits: dict

    @property
    def total_estimated_bits(self):
        return sum(self.estimated_bits.values())


class StereoEncoder:
    """Encodeur d'une paire ; garde en cache disparité et flux droit entre configurations."""

    def __init__(self, left, right):
        check_same_geometry(left, right)
        if left.width > U16_MAX or left.height > U16_MAX:
            raise DimensionError(f"dimension mismatch: {left.width}x{left.height} dépasse l'en-tête 16 bits")
        self.left = left
        self.right = right
        self.width, self.height, self.channels = left.width, left.height, left.channels
        self._disparity = {}
        self._right = {}

    @property
    def pixels(self):
        return self.width * self.height

    def disparity_stream(self, match):
        if match not in self._disparity:
            dmap = estimate_disparity(self.left, self.right, match)
            deltas = disparity_deltas(settle_border_disparity(downsample_disparity(dmap.values)))
            d_hat = upsample_disparity(undo_disparity_deltas(deltas), self.width, self.height,
                                       match.max_disparity)
            bits = estimate_rate(deltas.ravel().tolist(), _DisparityContexts().model_fn)
            self._disparity[match] = (deltas, d_hat, bits)
        return self._disparity[match]

    def right_stream(self, qp_r):
        if qp_r not in self._right:
            neutral = np.full((self.height, self.width), LEVEL_SHIFT)
            quantized, recon, bits = [], [], 0.0
            for c in range(self.channels):
                q, rec = _code_residual(self.right.samples[c], neutral, qp_r)
                bands = q.to_bands()
                bits += estimate_level_bits(bands, _context_levels(bands, qp_r))
                quantized.append(q)
                recon.append(rec)
            self._right[qp_r] = (quantized, np.stack(recon), bits)
        return self._right[qp_r]

    def analyze(self, cfg):
        cfg = cfg.normalized()
        right_q, right_recon, right_bits = self.right_stream(cfg.qp_r)

        deltas, d_hat, disp_bits = None, None, 0.0
        if cfg.use_disparity:
            deltas, d_hat, disp_bits = self.disparity_stream(cfg.match)

        prediction, priors = predict_left(right_recon, d_hat, cfg)
        left_q, left_recon = [], []
        for c in range(self.channels):
            q, rec = _code_residual(self.left.samples[c], prediction[c], cfg.qp_l)
            left_q.append(q)
            left_recon.append(rec)

        channel_bands = [q.to_bands() for q in left_q]
        gains, prior_gains, left_bits = None, (), 0.0
        if priors is not None:
            prior_gains = choose_prior_gains(channel_bands, priors, cfg.qp_l, cfg.w_prior)
            gains = band_gains(prior_gains)
            left_bits = len(prior_gains) * math.log2(len(PRIOR_GAINS))
        for c, bands in enumerate(channel_bands):
            prior = priors[c] if priors is not None else None
            left_bits += estimate_level_bits(bands, _context_levels(bands, cfg.qp_l, prior, cfg.w_prior, gains))

        estimated = {"header": HEADER.size * 8.0, "right": right_bits,
                     "disparity": disp_bits, "left": left_bits}
        return _Analysis(cfg, right_q, right_recon, deltas, d_hat, prediction, priors, prior_gains,
                         left_q, np.stack(left_recon), estimated)

    def _code_bands(self, quantized, qp, priors=None, w_prior=0.5, prior_gains=()):
        symbols = list(prior_gains) + np.concatenate([q.to_bands().ravel() for q in quantized]).tolist()
        contexts = _CoefficientContexts(self.channels, quantized[0].blocks_shape, qp, priors, w_prior)
        return encode_symbols(symbols, contexts.model_fn)

    def encode(self, cfg):
        analysis = self.analyze(cfg)
        cfg = analysis.config
        right_bytes = self._code_bands(analysis.right_q, cfg.qp_r)
        disp_bytes = b""
        if cfg.use_disparity:
            disp_bytes = encode_symbols(analysis.deltas.ravel().tolist(), _DisparityContexts().model_fn)
        left_bytes = self._code_bands(analysis.left_q, cfg.qp_l, analysis.priors, cfg.w_prior,
                                      analysis.prior_gains)

        flags = cfg.flags | (FLAG_COLOR if self.channels == 3 else 0)
        bitstream = Bitstream(self.width, self.height, flags, cfg.qp_r, cfg.qp_l,
                              cfg.match.max_disparity, cfg.w_prior,
                              right_bytes, disp_bytes, left_bytes)
        logger.debug(
            f"Paire encodée ({cfg.case}): droite {len(right_bytes)} o, "
            f"disparité {len(disp_bytes)} o, gauche {len(left_bytes)} o"
        )
        return EncodeResult(
            bitstream=bitstream,
            config=cfg,
            left=PlanarImage.from_array(analysis.left_recon),
            right=PlanarImage.from_array(analysis.right_recon),
            prediction=_as_image(analysis.prediction),
            disparity=analysis.d_hat,
            estimated_bits=analysis.estimated_bits,
        )


def encode_pair_report(left, right, cfg):
    return StereoEncoder(left, right).encode(cfg)


def encode_pair(left, right, cfg):
    return encode_pair_report(left, right, cfg).bitstream


# ------------------ décodeur ------------------

def _decode_bands(payload, channels, width, height, qp, priors=None, w_prior=0.5):
    blocks_shape = padded_size(height) // BLOCK, padded_size(width) // BLOCK
    contexts = _CoefficientContexts(channels, blocks_shape, qp, priors, w_prior)
    values = decode_symbols(payload, contexts.count, contexts.model_fn)[contexts.offset:]
    bands = np.asarray(values, dtype=np.int64).reshape(channels, *blocks_shape, BANDS)
    return [QuantPlane.from_bands(bands[c], width, height) for c in range(channels)]


def decode_stream(bs):
    """Décode un flux (objet Bitstream ou octets) en conservant la prédiction."""
    if not isinstance(bs, Bitstream):
        bs = Bitstream.from_bytes(bs)
    cfg = bs.config()
    w, h, channels = bs.width, bs.height, bs.channels

    neutral = np.full((h, w), LEVEL_SHIFT)
    right_q = _decode_bands(bs.right, channels, w, h, cfg.qp_r)
    right_recon = np.stack([_reconstruct(q, neutral, cfg.qp_r) for q in right_q])

    d_hat = None
    if cfg.use_disparity:
        lh, lw = _low_res_shape(w, h)
        deltas = decode_symbols(bs.disparity, lh * lw, _DisparityContexts().model_fn)
        low = undo_disparity_deltas(np.asarray(deltas, dtype=np.int64).reshape(lh, lw))
        d_hat = upsample_disparity(low, w, h, bs.max_disparity)

    prediction, priors = predict_left(right_recon, d_hat, cfg)
    left_q = _decode_bands(bs.left, channels, w, h, cfg.qp_l, priors, cfg.w_prior)
    left_recon = np.stack([_reconstruct(q, prediction[c], cfg.qp_l) for c, q in enumerate(left_q)])
    return DecodedPair(
        left=PlanarImage.from_array(left_recon),
        right=PlanarImage.from_array(right_recon),
        prediction=_as_image(prediction),
        disparity=d_hat,
    )


def decode_pair(bs):
    decoded = decode_stream(bs)
    return decoded.left, decoded.right


# ------------------ recherche débit-distorsion ------------------

def rd_search(left, right, lam, qp_grid, template=None):
    """Minimise J = R + λ·D sur la grille (qp_r, qp_l).

    R : débit estimé en bpp (moyenne des deux vues, en-tête compris) ;
    D : MSE moyenne des deux reconstructions. Égalités départagées vers le débit le plus bas.
    """
    return search_encoder(StereoEncoder(left, right), lam, qp_grid, template)


def search_encoder(encoder, lam, qp_grid, template=None):
    """rd_search sur un encodeur existant (caches partagés entre valeurs de λ)."""
    grid = sorted({float(qp) for qp in qp_grid})
    if not grid:
        raise ConfigError("empty grid: aucun pas de quantification à évaluer")
    if lam < 0:
        raise ConfigError(f"invalid lambda: {lam} (>= 0 attendu)")
    template = template or CodecConfig()
    left, right = encoder.left, encoder.right
    pixels = 2 * encoder.pixels

    best = None
    for qp_r in grid:
        for qp_l in grid:
            analysis = encoder.analyze(replace(template, qp_r=qp_r, qp_l=qp_l))
            rate = analysis.total_estimated_bits / pixels
            mse_l = mse(left, PlanarImage.from_array(analysis.left_recon))
            mse_r = mse(right, PlanarImage.from_array(analysis.right_recon))
            distortion = (mse_l + mse_r) / 2.0
            key = (rate + lam * distortion, rate)
            if best is None or key < best[0]:
                quality = (psnr_from_mse(mse_l) + psnr_from_mse(mse_r)) / 2.0
                best = (key, analysis.config, RDPoint(rate, quality))
    _, cfg, point = best
    logger.debug(f"rd_search λ={lam}: qp_r={cfg.qp_r}, qp_l={cfg.qp_l}, {point.bpp:.4f} bpp")
    return cfg, point
