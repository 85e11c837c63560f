"""Banc d'évaluation : BD-rate / BD-PSNR, balayages RD, allocation de débit et ablation.

Exemple :
    python -m scripts.bench --synthetic 4
"""
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from scripts.codec import CASES, CodecConfig, RDPoint, StereoEncoder, decode_stream, search_encoder
from scripts.config import DEFAULT_LAMBDAS, DEFAULT_QP_GRID
from scripts.core import check_same_geometry, read_image
from scripts.errors import BenchmarkError, BitstreamError, StereoCodecError
from scripts.metrics import ms_ssim, msssim_db, psnr

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".ppm")
FLOAT_FORMAT = "%.6g"
ANCHOR_CASE = "case1"
MIN_CURVE_POINTS = 4

RD_COLUMNS = ["lambda", "bpp", "psnr", "msssim", "msssim_db"]
ALLOCATION_COLUMNS = ["lambda", "bpp_total", "psnr_avg", "bpp_r", "psnr_r",
                      "bpp_l", "psnr_l", "bpp_d", "psnr_pred"]
ABLATION_COLUMNS = ["case", "lambda", "bpp", "psnr"]
BD_COLUMNS = ["case", "bd_rate", "bd_psnr"]
PAIR_COLUMNS = ["case", "pair", "lambda", "qp_r", "qp_l", "bytes"] + ALLOCATION_COLUMNS[1:] + ["msssim"]

__all__ = ["psnr", "ms_ssim", "RDCurve", "AllocationRow", "bd_metrics", "rd_sweep", "StereoBenchmark"]


@dataclass(frozen=True)
class RDCurve:
    points: tuple

    def __post_init__(self):
        points = tuple(self.points)
        if len(points) < MIN_CURVE_POINTS:
            raise BenchmarkError(f"insufficient points: {len(points)} points RD ({MIN_CURVE_POINTS} minimum)")
        rates = [p.bpp for p in points]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise BenchmarkError("insufficient points: bpp non strictement croissants")
        object.__setattr__(self, "points", points)

    @classmethod
    def from_measurements(cls, points):
        """Trie par débit ; à débit égal ne garde que le meilleur PSNR."""
        best = {}
        for p in points:
            if p.bpp not in best or p.psnr > best[p.bpp].psnr:
                best[p.bpp] = p
        return cls(tuple(best[bpp] for bpp in sorted(best)))

    @property
    def log_rates(self):
        return np.log10([p.bpp for p in self.points])

    @property
    def psnrs(self):
        return np.array([p.psnr for p in self.points])


@dataclass(frozen=True)
class AllocationRow:
    """Une ligne du tableau d'allocation de débit (moyennes sur les paires)."""
    bpp_total: float
    psnr_avg: float
    bpp_r: float
    psnr_r: float
    bpp_l: float
    psnr_l: float
    bpp_d: float
    psnr_pred: float


def _overlap(a, b, what):
    low, high = max(a.min(), b.min()), min(a.max(), b.max())
    if not low < high:
        raise BenchmarkError(
            f"insufficient overlap: {what} [{a.min():.4f}, {a.max():.4f}] "
            f"et [{b.min():.4f}, {b.max():.4f}]"
        )
    return low, high


def _mean_integral(x, y, low, high):
    """Moyenne sur [low, high] du polynôme cubique ajusté à y(x)."""
    poly = np.polyint(np.polyfit(x, y, 3))
    return (np.polyval(poly, high) - np.polyval(poly, low)) / (high - low)


def bd_metrics(anchor, test):
    """Bjøntegaard : (bd_rate en %, bd_psnr en dB), ajustement cubique, bornes = recouvrement."""
    lr_a, lr_t = anchor.log_rates, test.log_rates
    q_a, q_t = anchor.psnrs, test.psnrs

    low, high = _overlap(lr_a, lr_t, "log10(débit)")
    bd_psnr = _mean_integral(lr_t, q_t, low, high) - _mean_integral(lr_a, q_a, low, high)

    low, high = _overlap(q_a, q_t, "PSNR")
    delta = _mean_integral(q_t, lr_t, low, high) - _mean_integral(q_a, lr_a, low, high)
    bd_rate = (10.0 ** delta - 1.0) * 100.0
    return float(bd_rate), float(bd_psnr)


# ------------------ jeux de données ------------------

def _is_image(path):
    return path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES


def discover_pairs(root):
    """Liste (nom, chemin gauche, chemin droit) : sous-dossiers left/ et right/, ou fichiers <nom>_left / <nom>_right."""
    root = Path(root).resolve()
    if not root.is_dir():
        raise FileNotFoundError(f"dossier de paires introuvable: {root}")

    found, missing = [], 0
    if (root / "left").is_dir() and (root / "right").is_dir():
        for left in sorted(p for p in (root / "left").iterdir() if _is_image(p)):
            right = root / "right" / left.name
            if right.exists():
                found.append((left.stem, left, right))
            else:
                logger.warning(f"Paire ignorée: {left.name} sans vue droite")
                missing += 1
    else:
        for left in sorted(p for p in root.iterdir() if _is_image(p) and p.stem.endswith("_left")):
            name = left.stem[:-len("_left")]
            candidates = [root / f"{name}_right{suffix}" for suffix in (left.suffix, *IMAGE_SUFFIXES)]
            right = next((c for c in candidates if c.exists()), None)
            if right is None:
                logger.warning(f"Paire ignorée: {left.name} sans vue droite")
                missing += 1
            else:
                found.append((name, left, right))
    return found, missing


def load_pairs(root):
    """Charge les paires lisibles ; renvoie ([(nom, gauche, droite)], nombre de paires ignorées)."""
    found, skipped = discover_pairs(root)
    pairs = []
    for name, left_path, right_path in found:
        try:
            left, right = read_image(left_path), read_image(right_path)
            check_same_geometry(left, right)
        except (OSError, StereoCodecError) as e:
            logger.warning(f"Paire ignorée: {name} ({e})")
            skipped += 1
            continue
        pairs.append((name, left, right))
    logger.info(f"{len(pairs)} paires chargées depuis {root} ({skipped} ignorées) ✅")
    return pairs, skipped


# ------------------ évaluation d'une paire ------------------

def _pair_msssim(left, right, decoded):
    try:
        return (ms_ssim(left, decoded.left) + ms_ssim(right, decoded.right)) / 2.0
    except ValueError as e:
        logger.warning(f"MS-SSIM indisponible: {e}")
        return math.nan


def evaluate_pair(task):
    """Toutes les valeurs de λ pour une paire et une configuration (exécuté dans un worker)."""
    case, name, left, right, lambdas, qp_grid, template = task
    encoder = StereoEncoder(left, right)
    pixels = encoder.pixels
    rows = []
    for lam in lambdas:
        cfg, _ = search_encoder(encoder, lam, qp_grid, template)
        report = encoder.encode(cfg)
        bs = report.bitstream
        decoded = decode_stream(bs.to_bytes())
        if decoded.left != report.left or decoded.right != report.right:
            raise BitstreamError(f"closed loop mismatch: paire {name}, λ={lam}")

        psnr_l, psnr_r = psnr(left, decoded.left), psnr(right, decoded.right)
        sizes = bs.substream_sizes
        rows.append({
            "case": case,
            "pair": name,
            "lambda": lam,
            "qp_r": cfg.qp_r,
            "qp_l": cfg.qp_l,
            "bytes": len(bs),
            "bpp_total": len(bs) * 8.0 / (2 * pixels),
            "psnr_avg": (psnr_l + psnr_r) / 2.0,
            "bpp_r": sizes["right"] * 8.0 / pixels,
            "psnr_r": psnr_r,
            "bpp_l": sizes["left"] * 8.0 / pixels,
            "psnr_l": psnr_l,
            "bpp_d": sizes["disparity"] * 8.0 / pixels,
            "psnr_pred": psnr(left, decoded.prediction),
            "msssim": _pair_msssim(left, right, decoded),
        })
    return rows


# ------------------ balayage ------------------

@dataclass
class SweepResult:
    """Courbe RD de la configuration principale, lignes d'allocation et rapports produits."""
    curve: RDCurve = None
    allocation: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    skipped: int = 0


class StereoBenchmark:
    def __init__(self, lambdas=DEFAULT_LAMBDAS, qp_grid=DEFAULT_QP_GRID, template=None, jobs=1,
                 output_dir="reports"):
        if not lambdas:
            raise BenchmarkError("empty lambdas: aucune valeur de λ")
        self.lambdas = tuple(float(lam) for lam in lambdas)
        self.qp_grid = tuple(float(qp) for qp in qp_grid)
        self.template = template or CodecConfig()
        self.jobs = max(1, int(jobs))
        self.output_dir = output_dir

    def _case_config(self, case):
        if case == self.template.case:
            return self.template
        flags = dict(zip(("use_disparity", "use_prior", "align_prior", "use_prn"), CASES[case]))
        return replace(self.template, **flags)

    def _run(self, pairs, configs):
        """Évalue chaque (configuration, paire) ; ordre des résultats indépendant de jobs."""
        tasks = [(case, name, left, right, self.lambdas, self.qp_grid, cfg)
                 for case, cfg in configs.items() for name, left, right in pairs]
        if self.jobs == 1:
            results = [evaluate_pair(task) for task in tasks]
        else:
            with ProcessPoolExecutor(max_workers=self.jobs) as executor:
                results = list(executor.map(evaluate_pair, tasks))

        rows = []
        for i, task_rows in enumerate(results, start=1):
            rows.extend(task_rows)
            logger.info(f"Paire {i}/{len(tasks)} traitée ({task_rows[0]['case']}, {task_rows[0]['pair']})")
        return pd.DataFrame(rows, columns=PAIR_COLUMNS)

    @staticmethod
    def summarize(per_pair):
        """Moyennes par (configuration, λ), dans l'ordre d'apparition."""
        grouped = per_pair.groupby(["case", "lambda"], sort=False)
        summary = grouped[ALLOCATION_COLUMNS[1:] + ["msssim"]].mean().reset_index()
        summary["msssim_db"] = [msssim_db(s) if np.isfinite(s) else math.nan for s in summary["msssim"]]
        return summary

    @staticmethod
    def curve_of(summary, case):
        rows = summary[summary["case"] == case]
        points = [RDPoint(float(b), float(q)) for b, q in zip(rows["bpp_total"], rows["psnr_avg"])]
        try:
            return RDCurve.from_measurements(points)
        except BenchmarkError as e:
            logger.warning(f"Courbe RD {case} inutilisable: {e}")
            return None

    def bd_summary(self, summary):
        """BD-rate / BD-PSNR de chaque configuration contre l'ancre case1."""
        anchor = self.curve_of(summary, ANCHOR_CASE)
        records = []
        for case in CASES:
            if case == ANCHOR_CASE:
                continue
            bd_rate = bd_psnr = math.nan
            test = self.curve_of(summary, case)
            if anchor is not None and test is not None:
                try:
                    bd_rate, bd_psnr = bd_metrics(anchor, test)
                except BenchmarkError as e:
                    logger.warning(f"BD {case} contre {ANCHOR_CASE} non calculable: {e}")
            records.append({"case": case, "bd_rate": bd_rate, "bd_psnr": bd_psnr})
        return pd.DataFrame(records, columns=BD_COLUMNS)

    def rd_sweep(self, pairs, ablation=False, skipped=0):
        if not pairs:
            raise BenchmarkError("empty dataset: aucune paire lisible")
        main_case = self.template.case
        configs = {main_case: self.template}
        if ablation:
            configs.update({case: self._case_config(case) for case in CASES})

        per_pair = self._run(pairs, configs)
        summary = self.summarize(per_pair)
        main = summary[summary["case"] == main_case]

        reports = {
            "rd_curve": pd.DataFrame({
                "lambda": main["lambda"], "bpp": main["bpp_total"], "psnr": main["psnr_avg"],
                "msssim": main["msssim"], "msssim_db": main["msssim_db"],
            }, columns=RD_COLUMNS),
            "allocation": main[ALLOCATION_COLUMNS].copy(),
            "pairs": per_pair,
        }
        if ablation:
            ablation_rows = summary[summary["case"].isin(list(CASES))]
            reports["ablation"] = pd.DataFrame({
                "case": ablation_rows["case"], "lambda": ablation_rows["lambda"],
                "bpp": ablation_rows["bpp_total"], "psnr": ablation_rows["psnr_avg"],
            }, columns=ABLATION_COLUMNS)
            reports["bd_summary"] = self.bd_summary(summary)

        allocation = [AllocationRow(**{k: float(row[k]) for k in ALLOCATION_COLUMNS[1:]})
                      for _, row in main.iterrows()]
        files = self.save_reports(reports)
        logger.info(f"Balayage terminé: {len(pairs)} paires, {len(self.lambdas)} valeurs de λ ✅")
        return SweepResult(self.curve_of(summary, main_case), allocation, files, reports, skipped)

    def save_reports(self, reports):
        """Sauvegarde les rapports au format CSV (6 chiffres significatifs)."""
        os.makedirs(self.output_dir, exist_ok=True)
        files = {}
        for key, df in reports.items():
            filename = os.path.join(self.output_dir, f"{key}.csv")
            df.to_csv(filename, index=False, float_format=FLOAT_FORMAT)
            files[key] = filename
            logger.info(f"Rapport {key} sauvegardé: {filename}")
        return files


def rd_sweep(pairs, lambdas, template=None, qp_grid=DEFAULT_QP_GRID, output_dir="reports",
             ablation=False, jobs=1):
    bench = StereoBenchmark(lambdas, qp_grid, template, jobs, output_dir)
    return bench.rd_sweep(pairs, ablation=ablation)


def allocation_table(result):
    return pd.DataFrame([asdict(row) for row in result.allocation])


if __name__ == "__main__":
    import argparse

    from scripts.synthetic import make_dataset

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    parser = argparse.ArgumentParser(description="Balayage RD sur paires synthétiques")
    parser.add_argument("--synthetic", type=int, default=4)
    parser.add_argument("--out", default="reports")
    args = parser.parse_args()

    result = rd_sweep(make_dataset(args.synthetic), DEFAULT_LAMBDAS, output_dir=args.out, ablation=True)

    print("=== ALLOCATION DE DÉBIT ===")
    print(allocation_table(result))
    print("\n--- BD CONTRE CASE1 ---")
    print(result.reports["bd_summary"])
