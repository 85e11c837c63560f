from dataclasses import replace

import numpy as np
import pytest

from scripts.codec import (
    CASES,
    HEADER,
    Bitstream,
    CodecConfig,
    StereoEncoder,
    band_gains,
    choose_prior_gains,
    decode_pair,
    decode_stream,
    disparity_deltas,
    downsample_disparity,
    encode_pair,
    encode_pair_report,
    rd_search,
    settle_border_disparity,
    undo_disparity_deltas,
    upsample_disparity,
)
from scripts.core import PlanarImage
from scripts.disparity import MatchParams
from scripts.errors import BitstreamError, ConfigError, DimensionError
from scripts.metrics import mse, psnr
from scripts.synthetic import make_dataset, make_textured_pair


def test_header_layout():
    assert HEADER.size == 36


@pytest.mark.parametrize("kwargs", [
    {"use_prior": False},
    {"align_prior": False},
    {"use_disparity": False, "use_prn": False},
    {"qp_r": 0},
    {"qp_l": -4},
    {"w_prior": -0.1},
    {"disparity_downsample": 2},
])
def test_invalid_configs(kwargs):
    with pytest.raises(ConfigError):
        CodecConfig(**kwargs)


def test_cases_follow_flag_chain():
    assert CodecConfig().case == "full"
    assert CodecConfig.for_case("case1").flags == 0
    assert CodecConfig.for_case("case3").case == "case3"
    assert CodecConfig(use_disparity=False, align_prior=False, use_prn=False).case == "custom"
    with pytest.raises(ConfigError):
        CodecConfig.for_case("case9")


def test_normalized_steps_are_float32():
    cfg = CodecConfig(qp_r=0.1, qp_l=0.3, w_prior=0.7).normalized()
    assert cfg.qp_r == float(np.float32(0.1))
    assert cfg.w_prior == float(np.float32(0.7))


@pytest.mark.parametrize("case", list(CASES))
def test_decoder_matches_encoder_reconstruction(color_pair, fast_config, case):
    left, right = color_pair
    cfg = CodecConfig.for_case(case, qp_r=6.0, qp_l=10.0, match=fast_config.match)
    report = encode_pair_report(left, right, cfg)
    decoded = decode_stream(report.bitstream.to_bytes())
    assert decoded.left == report.left
    assert decoded.right == report.right
    assert decoded.prediction == report.prediction


def test_gray_round_trip_and_accounting(textured_pair, fast_config):
    left, right = textured_pair
    bs = encode_pair(left, right, fast_config)
    data = bs.to_bytes()
    assert len(data) == len(bs) == HEADER.size + len(bs.right) + len(bs.disparity) + len(bs.left)
    parsed = Bitstream.from_bytes(data)
    assert parsed == bs
    assert parsed.config().case == "full"
    dec_left, dec_right = decode_pair(parsed)
    assert (dec_left.width, dec_left.height, dec_left.channels) == (64, 48, 1)


def test_encoding_is_deterministic(textured_pair, fast_config):
    left, right = textured_pair
    assert encode_pair(left, right, fast_config).to_bytes() == encode_pair(left, right, fast_config).to_bytes()


def test_tampered_length_is_rejected(textured_pair, fast_config):
    data = bytearray(encode_pair(*textured_pair, fast_config).to_bytes())
    data[27] ^= 0x01  # octet de poids faible de len_right
    with pytest.raises(BitstreamError, match="length mismatch"):
        decode_pair(bytes(data))
    with pytest.raises(BitstreamError, match="length mismatch"):
        decode_pair(bytes(data[:20]))


def test_bad_magic_and_version(textured_pair, fast_config):
    data = bytearray(encode_pair(*textured_pair, fast_config).to_bytes())
    bad_magic = bytes(b"XSC1" + data[4:])
    with pytest.raises(BitstreamError, match="bad magic"):
        decode_pair(bad_magic)
    data[4] = 2
    with pytest.raises(BitstreamError, match="unsupported version"):
        decode_pair(bytes(data))


def test_truncated_substream_underruns(textured_pair, fast_config):
    bs = encode_pair(*textured_pair, fast_config)
    short = replace(bs, left=bs.left[:-3])
    with pytest.raises(BitstreamError, match="bitstream underrun"):
        decode_pair(short.to_bytes())


def test_dimension_mismatch(textured_pair, color_pair, fast_config):
    with pytest.raises(DimensionError):
        encode_pair(textured_pair[0], color_pair[1], fast_config)


def test_case1_codes_views_independently(textured_pair):
    left, right = textured_pair
    other, _ = make_textured_pair(64, 48, shift=2, seed=11)
    bs = encode_pair(left, right, CodecConfig.for_case("case1", qp_r=6.0, qp_l=12.0))
    alone = encode_pair(other, left, CodecConfig.for_case("case1", qp_r=12.0, qp_l=6.0))
    assert bs.disparity == b""
    assert bs.left == alone.right

    dec_left, dec_right = decode_pair(bs)
    assert dec_left == decode_pair(alone)[1]


def test_identical_views_cost_little_for_left(textured_pair, fast_config):
    left, _ = textured_pair
    report = encode_pair_report(left, left, replace(fast_config, qp_r=2.0, qp_l=2.0))
    assert np.all(report.disparity.values == 0)
    assert len(report.bitstream.left) < len(report.bitstream.right)


def test_disparity_lowers_total_rate(textured_pair, fast_config):
    left, right = textured_pair
    case1 = encode_pair(left, right, replace(CodecConfig.for_case("case1"), match=fast_config.match))
    case2 = encode_pair(left, right, replace(CodecConfig.for_case("case2"), match=fast_config.match))
    assert len(case2) < len(case1)


def test_estimated_bits_cover_all_streams(textured_pair, fast_config):
    report = encode_pair_report(*textured_pair, fast_config)
    bits = report.estimated_bits
    assert set(bits) == {"header", "right", "disparity", "left"}
    assert bits["header"] == 8 * HEADER.size
    # estimation et codage réel restent proches
    assert 8 * len(report.bitstream.right) == pytest.approx(bits["right"], rel=0.1, abs=64)


def test_lower_median_downsampling():
    values = np.arange(16).reshape(4, 4)
    assert downsample_disparity(values).tolist() == [[7]]
    partial = downsample_disparity(np.arange(25).reshape(5, 5))
    assert partial.shape == (2, 2)
    assert partial[1, 1] == 24
    assert partial[0, 1] == 9


def test_deltas_round_trip():
    low = np.array([[3, 5], [4, 4]])
    deltas = disparity_deltas(low)
    assert deltas.tolist() == [[3, 2], [1, 0]]
    rng = np.random.default_rng(0)
    low = rng.integers(0, 200, size=(7, 9))
    np.testing.assert_array_equal(undo_disparity_deltas(disparity_deltas(low)), low)


def test_constant_upsampling():
    d_hat = upsample_disparity(np.full((3, 4), 9), width=14, height=10, max_disparity=8)
    assert d_hat.values.shape == (10, 14)
    assert np.all(d_hat.values == 9)


def test_rd_search_extremes(textured_pair, fast_config):
    left, right = textured_pair
    grid = [8.0, 48.0]
    cfg, point = rd_search(left, right, 0.0, grid, fast_config)
    assert (cfg.qp_r, cfg.qp_l) == (48.0, 48.0)
    assert point.bpp > 0
    cfg, _ = rd_search(left, right, 1e9, grid, fast_config)
    assert (cfg.qp_r, cfg.qp_l) == (8.0, 8.0)


def test_rd_search_matches_exhaustive_evaluation(textured_pair, fast_config):
    left, right = textured_pair
    lam = 0.01
    grid = [6.0, 24.0]
    encoder = StereoEncoder(left, right)
    costs = {}
    for qp_r in grid:
        for qp_l in grid:
            analysis = encoder.analyze(replace(fast_config, qp_r=qp_r, qp_l=qp_l))
            rate = analysis.total_estimated_bits / (2 * left.pixels)
            dist = (mse(left, PlanarImage.from_array(analysis.left_recon))
                    + mse(right, PlanarImage.from_array(analysis.right_recon))) / 2.0
            costs[(qp_r, qp_l)] = (rate + lam * dist, rate)
    expected = min(costs, key=costs.get)
    cfg, point = rd_search(left, right, lam, grid, fast_config)
    assert (cfg.qp_r, cfg.qp_l) == expected
    assert point.bpp == pytest.approx(costs[expected][1])


def test_rd_search_empty_grid(textured_pair):
    with pytest.raises(ConfigError, match="empty grid"):
        rd_search(*textured_pair, 0.01, [])


def test_border_blocks_take_neighbor_disparity():
    low = np.array([[0, 3, 30, 30, 30],
                    [0, 0, 0, 0, 0],
                    [7, 7, 7, 7, 12],
                    [9, 2, 2, 2, 2]])
    settled = settle_border_disparity(low, factor=4)
    assert settled[0].tolist() == [30, 30, 30, 30, 30]
    assert settled[1].tolist() == [0, 0, 0, 0, 0]
    assert settled[2].tolist() == [7, 7, 7, 7, 12]
    assert settled[3].tolist() == [2, 2, 2, 2, 2]
    assert low[0, 0] == 0


def test_band_gains_follow_band_classes():
    gains = band_gains((0, 4, 7))
    assert gains.shape == (64,)
    assert gains[0] == 0.0
    assert gains[1] == 1.0
    assert gains[63] == 8.0


def test_informative_prior_is_switched_on():
    rng = np.random.default_rng(1)
    scale = np.exp(rng.uniform(np.log(0.5), np.log(40.0), size=(16, 16, 1)))
    bands = np.round(rng.laplace(0, scale, size=(16, 16, 64)))
    prior = np.broadcast_to(scale, bands.shape)
    gains = choose_prior_gains([bands], [prior], qp=1.0, w_prior=0.5)
    assert all(g > 0 for g in gains)


def test_prior_without_disparity_round_trips(textured_pair, fast_config):
    cfg = replace(fast_config, use_disparity=False, align_prior=False, use_prn=False)
    assert cfg.case == "custom"
    report = encode_pair_report(*textured_pair, cfg)
    assert report.bitstream.disparity == b""
    decoded = decode_stream(report.bitstream.to_bytes())
    assert decoded.left == report.left


def _dataset_reports(count, qp=8.0):
    match = MatchParams.for_radius(max_disparity=16)
    stats = {case: {"left": [], "total": [], "disparity": [], "right": [], "psnr": []} for case in CASES}
    for _, left, right in make_dataset(count):
        encoder = StereoEncoder(left, right)
        for case in CASES:
            report = encoder.encode(CodecConfig.for_case(case, qp_r=qp, qp_l=qp, match=match))
            bs = report.bitstream
            sizes = bs.substream_sizes
            pixels = left.pixels
            stats[case]["left"].append(8 * sizes["left"] / pixels)
            stats[case]["right"].append(8 * sizes["right"] / pixels)
            stats[case]["disparity"].append(8 * sizes["disparity"] / pixels)
            stats[case]["total"].append(8 * len(bs) / (2 * pixels))
            stats[case]["psnr"].append((psnr(left, report.left) + psnr(right, report.right)) / 2.0)
    return {case: {k: float(np.mean(v)) for k, v in s.items()} for case, s in stats.items()}


@pytest.fixture(scope="module")
def dataset_stats():
    return _dataset_reports(20)


@pytest.mark.slow
def test_ablation_ordering_on_dataset(dataset_stats):
    s = dataset_stats
    assert s["case4"]["left"] <= s["case3"]["left"] <= s["case2"]["left"]
    assert s["full"]["total"] <= 0.97 * s["case2"]["total"]


@pytest.mark.slow
def test_disparity_compensation_beats_independent_coding(dataset_stats):
    s = dataset_stats
    assert s["case2"]["total"] <= 0.9 * s["case1"]["total"]
    assert abs(s["case2"]["psnr"] - s["case1"]["psnr"]) <= 1.0


@pytest.mark.slow
def test_disparity_stream_is_smallest(dataset_stats):
    full = dataset_stats["full"]
    assert full["disparity"] < 0.05
    assert full["disparity"] < min(full["left"], full["right"])


@pytest.mark.slow
def test_random_pairs_decode_to_encoder_reconstruction():
    rng = np.random.default_rng(2024)
    configs = [CodecConfig.for_case(case) for case in CASES]
    configs.append(CodecConfig(use_disparity=False, align_prior=False, use_prn=False))
    for i in range(50):
        width, height = int(rng.integers(64, 513)), int(rng.integers(64, 257))
        shift = int(rng.integers(0, 9))
        foreground = shift + 3 if i % 2 else None
        channels = 3 if i % 10 == 0 else 1
        left, right = make_textured_pair(width, height, shift, seed=i, channels=channels,
                                         foreground_shift=foreground)
        qp_r, qp_l = (float(q) for q in rng.choice([2.0, 6.0, 16.0, 40.0], size=2))
        cfg = replace(configs[i % len(configs)], qp_r=qp_r, qp_l=qp_l,
                      match=MatchParams.for_radius(max_disparity=12))
        report = encode_pair_report(left, right, cfg)
        decoded = decode_stream(report.bitstream.to_bytes())
        assert decoded.left == report.left, (i, cfg.case)
        assert decoded.right == report.right, (i, cfg.case)
        assert decoded.prediction == report.prediction, (i, cfg.case)
