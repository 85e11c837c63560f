import math

import numpy as np
import pandas as pd
import pytest

from scripts.bench import (
    AllocationRow,
    RDCurve,
    StereoBenchmark,
    bd_metrics,
    discover_pairs,
    load_pairs,
    rd_sweep,
)
from scripts.codec import HEADER, CodecConfig, RDPoint
from scripts.core import write_image
from scripts.disparity import MatchParams
from scripts.errors import BenchmarkError
from scripts.synthetic import make_dataset, make_textured_pair

RATES = [0.1, 0.2, 0.4, 0.8, 1.6]
PSNRS = [28.0, 31.0, 34.0, 36.5, 38.5]
FAST = CodecConfig(match=MatchParams.for_radius(max_disparity=8))


def _curve(rates, psnrs):
    return RDCurve(tuple(RDPoint(r, q) for r, q in zip(rates, psnrs)))


def test_identical_curves():
    curve = _curve(RATES, PSNRS)
    assert bd_metrics(curve, curve) == (0.0, 0.0)


def test_vertical_shift():
    bd_rate, bd_psnr = bd_metrics(_curve(RATES, PSNRS), _curve(RATES, [q + 1.0 for q in PSNRS]))
    assert bd_psnr == pytest.approx(1.0, abs=1e-6)
    assert bd_rate < 0


def test_doubled_rates():
    bd_rate, bd_psnr = bd_metrics(_curve(RATES, PSNRS), _curve([2 * r for r in RATES], PSNRS))
    assert bd_rate == pytest.approx(100.0, abs=0.01)
    assert bd_psnr < 0


def test_bd_psnr_antisymmetry():
    a = _curve(RATES, PSNRS)
    b = _curve([0.12, 0.25, 0.45, 0.9, 1.5], [28.5, 31.2, 34.6, 36.9, 38.7])
    assert bd_metrics(a, b)[1] == pytest.approx(-bd_metrics(b, a)[1], abs=1e-9)


def test_no_overlap_names_ranges():
    a = _curve(RATES, PSNRS)
    b = _curve([r * 100 for r in RATES], [q + 30 for q in PSNRS])
    with pytest.raises(BenchmarkError, match="insufficient overlap"):
        bd_metrics(a, b)


def test_curve_validation():
    with pytest.raises(BenchmarkError):
        _curve(RATES[:3], PSNRS[:3])
    with pytest.raises(BenchmarkError):
        _curve([0.1, 0.1, 0.2, 0.3], PSNRS[:4])
    curve = RDCurve.from_measurements([RDPoint(r, q) for r, q in zip(RATES[::-1], PSNRS[::-1])])
    assert [p.bpp for p in curve.points] == RATES


def test_rd_point_validation():
    with pytest.raises(ValueError):
        RDPoint(0.0, 30.0)
    with pytest.raises(ValueError):
        RDPoint(0.5, math.inf)


def _write_pair(directory, name, left, right, layout):
    if layout == "split":
        (directory / "left").mkdir(exist_ok=True)
        (directory / "right").mkdir(exist_ok=True)
        write_image(left, directory / "left" / f"{name}.pgm")
        write_image(right, directory / "right" / f"{name}.pgm")
    else:
        write_image(left, directory / f"{name}_left.pgm")
        write_image(right, directory / f"{name}_right.pgm")


@pytest.mark.parametrize("layout", ["split", "flat"])
def test_dataset_layouts(tmp_path, layout):
    for name, left, right in make_dataset(2, width=32, height=24):
        _write_pair(tmp_path, name, left, right, layout)
    found, missing = discover_pairs(tmp_path)
    assert [name for name, _, _ in found] == ["synth_000", "synth_001"]
    assert missing == 0


def test_unreadable_pair_is_skipped(tmp_path):
    (_, left, right), = make_dataset(1, width=32, height=24)
    _write_pair(tmp_path, "good", left, right, "flat")
    (tmp_path / "bad_left.pgm").write_bytes(b"P5\n4 4\n255\n")
    (tmp_path / "bad_right.pgm").write_bytes(b"P5\n4 4\n255\n")
    (tmp_path / "lonely_left.pgm").write_bytes(b"P5\n1 1\n255\n\x00")
    pairs, skipped = load_pairs(tmp_path)
    assert [name for name, _, _ in pairs] == ["good"]
    assert skipped == 2


def test_missing_dataset(tmp_path):
    with pytest.raises(FileNotFoundError):
        discover_pairs(tmp_path / "absent")


def test_empty_dataset(tmp_path):
    with pytest.raises(BenchmarkError, match="empty dataset"):
        rd_sweep([], [0.01], FAST, output_dir=tmp_path)


def test_sweep_reports(tmp_path):
    pairs = make_dataset(2, width=48, height=32)
    lambdas = [0.005, 0.02]
    result = rd_sweep(pairs, lambdas, FAST, qp_grid=[8.0, 32.0], output_dir=tmp_path)

    rd_curve = pd.read_csv(tmp_path / "rd_curve.csv")
    assert list(rd_curve.columns) == ["lambda", "bpp", "psnr", "msssim", "msssim_db"]
    assert len(rd_curve) == len(lambdas)
    allocation = pd.read_csv(tmp_path / "allocation.csv")
    assert list(allocation.columns) == ["lambda", "bpp_total", "psnr_avg", "bpp_r", "psnr_r",
                                        "bpp_l", "psnr_l", "bpp_d", "psnr_pred"]
    assert all(isinstance(row, AllocationRow) for row in result.allocation)
    assert result.curve is None  # deux λ : pas de courbe BD

    per_pair = result.reports["pairs"]
    pixels = 48 * 32
    header_bpp = HEADER.size * 8.0 / pixels
    np.testing.assert_allclose(
        per_pair["bpp_total"],
        (per_pair["bpp_r"] + per_pair["bpp_l"] + per_pair["bpp_d"] + header_bpp) / 2.0,
    )
    np.testing.assert_allclose(per_pair["bpp_total"], per_pair["bytes"] * 8.0 / (2 * pixels))


def test_duplicated_pair_allocation(tmp_path):
    left, _ = make_textured_pair(48, 32, shift=1, seed=4)
    result = rd_sweep([("dup", left, left)], [0.01], FAST, qp_grid=[8.0], output_dir=tmp_path)
    row = result.allocation[0]
    assert row.bpp_d < 0.05
    assert row.psnr_pred == pytest.approx(row.psnr_r)


@pytest.mark.slow
def test_ablation_reports(tmp_path):
    pairs = make_dataset(2, width=48, height=32)
    lambdas = [0.001, 0.002, 0.005, 0.01, 0.02]
    result = StereoBenchmark(lambdas, [6.0, 12.0, 24.0, 48.0], FAST, output_dir=tmp_path).rd_sweep(
        pairs, ablation=True)
    assert sorted(result.files) == ["ablation", "allocation", "bd_summary", "pairs", "rd_curve"]
    ablation = pd.read_csv(tmp_path / "ablation.csv")
    assert len(ablation) == 5 * len(lambdas)
    assert list(ablation["case"].unique()) == ["full", "case1", "case2", "case3", "case4"]
    bd = pd.read_csv(tmp_path / "bd_summary.csv")
    assert list(bd["case"]) == ["case2", "case3", "case4", "full"]


@pytest.mark.slow
def test_sweep_is_independent_of_job_count(tmp_path):
    pairs = make_dataset(3, width=40, height=32)
    outputs = []
    for jobs in (1, 2):
        out = tmp_path / f"jobs{jobs}"
        StereoBenchmark([0.005, 0.02], [8.0, 24.0], FAST, jobs=jobs, output_dir=out).rd_sweep(pairs)
        outputs.append({name: (out / f"{name}.csv").read_bytes() for name in ("rd_curve", "allocation", "pairs")})
    assert outputs[0] == outputs[1]
