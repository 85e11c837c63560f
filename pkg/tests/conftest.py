import numpy as np
import pytest

from scripts.codec import CodecConfig
from scripts.core import PlanarImage
from scripts.disparity import MatchParams
from scripts.synthetic import make_textured_pair


@pytest.fixture
def textured_pair():
    """Paire grise 64x48, décalage uniforme de 4 px."""
    return make_textured_pair(64, 48, shift=4, seed=3)


@pytest.fixture
def color_pair():
    """Paire RGB de taille non multiple de 8 (blocs partiels)."""
    return make_textured_pair(42, 27, shift=3, seed=5, channels=3)


@pytest.fixture
def fast_config():
    return CodecConfig(match=MatchParams.for_radius(max_disparity=8))


@pytest.fixture
def gray_image():
    def build(values):
        return PlanarImage.from_array(np.asarray(values, dtype=np.uint8))
    return build
