"""Ligne de commande : encode, decode, psnr, msssim, bd, sweep.

Codes de sortie : 0 succès, 1 erreur d'usage (option inconnue, fichier absent),
2 erreur de données (flux corrompu, image invalide, configuration incohérente).
"""
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import pandas as pd

from scripts.bench import RDCurve, StereoBenchmark, bd_metrics, load_pairs
from scripts.codec import RDPoint, decode_pair, encode_pair_report, rd_search
from scripts.config import load_settings, parse_float_list
from scripts.core import read_image, write_image
from scripts.disparity import write_disparity_dump
from scripts.errors import StereoCodecError
from scripts.metrics import ms_ssim, msssim_db, psnr
from scripts.synthetic import make_dataset

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(value):
    return f"{value:.6g}"


def _add_codec_options(parser):
    parser.add_argument("--qp-r", type=float, help="pas de quantification de la vue droite")
    parser.add_argument("--qp-l", type=float, help="pas de quantification du résidu gauche")
    parser.add_argument("--max-disp", type=int, help="disparité maximale en pixels (défaut 64)")
    parser.add_argument("--w-prior", type=float, help="poids du prior inter-vues")
    parser.add_argument("--no-disparity", action="store_true", help="case1 : deux codages indépendants")
    parser.add_argument("--no-prior", action="store_true", help="case2 : prédiction sans prior")
    parser.add_argument("--no-align", action="store_true", help="case3 : prior non aligné")
    parser.add_argument("--no-prn", action="store_true", help="case4 : prior aligné non raffiné")
    parser.add_argument("--qp-grid", help="grille de pas pour la recherche RD, ex. 4,8,16,32")


def build_parser():
    parser = _Parser(prog="stereodc", description="Codec d'images stéréo à compensation de disparité")
    parser.add_argument("--config", help="fichier ini (défaut config/stereodc.ini)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="encode une paire gauche/droite")
    enc.add_argument("left")
    enc.add_argument("right")
    enc.add_argument("output")
    enc.add_argument("--lambda", dest="lam", type=float, help="recherche RD avec ce multiplicateur")
    enc.add_argument("--dump-disparity", help="écrit la carte de disparité décodée (format DMAP)")
    _add_codec_options(enc)

    dec = sub.add_parser("decode", help="décode un flux en deux images")
    dec.add_argument("input")
    dec.add_argument("left_out")
    dec.add_argument("right_out")

    for name in ("psnr", "msssim"):
        metric = sub.add_parser(name, help=f"{name.upper()} entre deux images")
        metric.add_argument("reference")
        metric.add_argument("distorted")

    bd = sub.add_parser("bd", help="BD-rate / BD-PSNR entre deux rd_curve.csv")
    bd.add_argument("anchor")
    bd.add_argument("test")

    sweep = sub.add_parser("sweep", help="balayage RD sur un dossier de paires")
    sweep.add_argument("dataset", nargs="?")
    sweep.add_argument("--synthetic", type=int, help="utilise N paires synthétiques au lieu d'un dossier")
    sweep.add_argument("--lambdas", help="liste de λ, ex. 0.001,0.002,0.005,0.01,0.02")
    sweep.add_argument("--ablation", action="store_true", help="répète le balayage pour case1..case4 et full")
    sweep.add_argument("--out", help="dossier des rapports CSV")
    sweep.add_argument("--jobs", type=int, help="processus parallèles (défaut STEREODC_JOBS)")
    _add_codec_options(sweep)
    return parser


def codec_config(args, base):
    """Applique les options de la ligne de commande à la configuration de base."""
    cfg = base
    if args.qp_r is not None:
        cfg = replace(cfg, qp_r=args.qp_r)
    if args.qp_l is not None:
        cfg = replace(cfg, qp_l=args.qp_l)
    if args.w_prior is not None:
        cfg = replace(cfg, w_prior=args.w_prior)
    if args.max_disp is not None:
        cfg = replace(cfg, match=replace(cfg.match, max_disparity=args.max_disp))

    # chaque option désactive aussi les étapes qui en dépendent
    use_disparity = cfg.use_disparity and not args.no_disparity
    use_prior = cfg.use_prior and not (args.no_prior or args.no_disparity)
    align_prior = cfg.align_prior and use_prior and use_disparity and not args.no_align
    use_prn = cfg.use_prn and align_prior and not args.no_prn
    return replace(cfg, use_disparity=use_disparity, use_prior=use_prior,
                   align_prior=align_prior, use_prn=use_prn)


def _require(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"fichier introuvable: {path}")
    return path


def cmd_encode(args, settings):
    left, right = read_image(_require(args.left)), read_image(_require(args.right))
    cfg = codec_config(args, settings.codec)
    if args.lam is not None:
        grid = parse_float_list(args.qp_grid, "qp_grid") if args.qp_grid else settings.qp_grid
        cfg, _ = rd_search(left, right, args.lam, grid, cfg)

    report = encode_pair_report(left, right, cfg)
    bs = report.bitstream
    Path(args.output).write_bytes(bs.to_bytes())
    if args.dump_disparity:
        if report.disparity is None:
            logger.warning("Pas de carte de disparité à écrire (--no-disparity)")
        else:
            write_disparity_dump(report.disparity, args.dump_disparity)

    pixels = left.pixels
    psnr_l, psnr_r = psnr(left, report.left), psnr(right, report.right)
    print(
        f"bpp={_fmt(len(bs) * 8.0 / (2 * pixels))} psnr={_fmt((psnr_l + psnr_r) / 2.0)} "
        f"psnr_l={_fmt(psnr_l)} psnr_r={_fmt(psnr_r)} "
        f"bpp_r={_fmt(len(bs.right) * 8.0 / pixels)} bpp_d={_fmt(len(bs.disparity) * 8.0 / pixels)} "
        f"bpp_l={_fmt(len(bs.left) * 8.0 / pixels)} qp_r={_fmt(report.config.qp_r)} "
        f"qp_l={_fmt(report.config.qp_l)} case={report.config.case}"
    )
    logger.info(f"Flux écrit: {args.output} ({len(bs)} octets) ✅")
    return EXIT_OK


def cmd_decode(args, settings):
    data = _require(args.input).read_bytes()
    left, right = decode_pair(data)
    write_image(left, args.left_out)
    write_image(right, args.right_out)
    logger.info(f"Paire décodée: {left.width}x{left.height}x{left.channels} ✅")
    return EXIT_OK


def cmd_psnr(args, settings):
    print(_fmt(psnr(read_image(_require(args.reference)), read_image(_require(args.distorted)))))
    return EXIT_OK


def cmd_msssim(args, settings):
    score = ms_ssim(read_image(_require(args.reference)), read_image(_require(args.distorted)))
    print(f"{_fmt(score)} ({_fmt(msssim_db(score))} dB)")
    return EXIT_OK


def _read_curve(path):
    df = pd.read_csv(_require(path))
    missing = {"bpp", "psnr"} - set(df.columns)
    if missing:
        raise StereoCodecError(f"invalid curve: colonnes {sorted(missing)} absentes de {path}")
    return RDCurve.from_measurements([RDPoint(float(b), float(q)) for b, q in zip(df["bpp"], df["psnr"])])


def cmd_bd(args, settings):
    bd_rate, bd_psnr = bd_metrics(_read_curve(args.anchor), _read_curve(args.test))
    print(f"bd_rate={_fmt(bd_rate)} bd_psnr={_fmt(bd_psnr)}")
    return EXIT_OK


def cmd_sweep(args, settings):
    if args.synthetic:
        pairs, skipped = make_dataset(args.synthetic), 0
    elif args.dataset:
        pairs, skipped = load_pairs(args.dataset)
    else:
        raise UsageError("sweep: dossier de paires ou --synthetic N requis")

    lambdas = parse_float_list(args.lambdas, "lambdas") if args.lambdas else settings.lambdas
    grid = parse_float_list(args.qp_grid, "qp_grid") if args.qp_grid else settings.qp_grid
    jobs = args.jobs if args.jobs is not None else settings.jobs
    if jobs < 1:
        raise UsageError(f"--jobs {jobs}: au moins 1 processus")

    bench = StereoBenchmark(lambdas, grid, codec_config(args, settings.codec), jobs,
                            args.out or settings.out_dir)
    result = bench.rd_sweep(pairs, ablation=args.ablation, skipped=skipped)
    for row in result.reports["rd_curve"].to_dict("records"):
        print(f"lambda={_fmt(row['lambda'])} bpp={_fmt(row['bpp'])} "
              f"psnr={_fmt(row['psnr'])} msssim={_fmt(row['msssim'])}")
    if skipped:
        print(f"skipped={skipped}")
    return EXIT_OK


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "psnr": cmd_psnr,
    "msssim": cmd_msssim,
    "bd": cmd_bd,
    "sweep": cmd_sweep,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_OK

    try:
        settings = load_settings(args.config)
        level = logging.DEBUG if args.verbose else getattr(logging, settings.log_level, logging.INFO)
        logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s')
        logging.getLogger().setLevel(level)
        return COMMANDS[args.command](args, settings)
    except (UsageError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (StereoCodecError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
