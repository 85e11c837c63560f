"""Paramètres par défaut : config/stereodc.ini, surchargés par l'environnement (.env compris)."""
import configparser
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv

from scripts.codec import CodecConfig
from scripts.disparity import MatchParams
from scripts.errors import ConfigError

logger = logging.getLogger(__name__)

# racine du dépôt (parent de scripts/)
BASE_DIR = Path(__file__).resolve().parent.parent
DEFAULT_CONFIG = "config/stereodc.ini"
SECTIONS = ("codec", "matching", "bench")

DEFAULT_QP_GRID = (4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0)
DEFAULT_LAMBDAS = (0.001, 0.002, 0.005, 0.01, 0.02)


def parse_float_list(text, name="liste"):
    """'0.001,0.002' -> (0.001, 0.002)"""
    try:
        values = tuple(float(item) for item in str(text).split(",") if item.strip())
    except ValueError as e:
        raise ConfigError(f"invalid config: {name} illisible {text!r}") from e
    if not values:
        raise ConfigError(f"invalid config: {name} vide")
    return values


@dataclass(frozen=True)
class Settings:
    codec: CodecConfig = field(default_factory=CodecConfig)
    qp_grid: tuple = DEFAULT_QP_GRID
    lambdas: tuple = DEFAULT_LAMBDAS
    jobs: int = 1
    out_dir: str = "reports"
    log_level: str = "INFO"


def _read_ini(path):
    path = Path(path).resolve()
    if not path.exists():
        raise FileNotFoundError(f"stereodc.ini introuvable: {path}")

    config = configparser.ConfigParser()
    config.read(path)
    missing = [name for name in SECTIONS if name not in config]
    if missing:
        raise ConfigError(
            f"Section(s) {missing} introuvable(s) dans {path}. Sections disponibles: {config.sections()}"
        )
    return config


def _env_int(name, default):
    value = os.getenv(name)
    if value is None or not value.strip():
        return default
    try:
        jobs = int(value)
    except ValueError as e:
        raise ConfigError(f"invalid config: {name}={value!r} n'est pas un entier") from e
    if jobs < 1:
        raise ConfigError(f"invalid config: {name}={jobs} (>= 1 attendu)")
    return jobs


def load_settings(config_file=None):
    """Lit l'ini (STEREODC_CONFIG ou config/stereodc.ini) puis applique STEREODC_JOBS / STEREODC_LOG_LEVEL."""
    load_dotenv()
    config_file = config_file or os.getenv("STEREODC_CONFIG") or DEFAULT_CONFIG
    path = Path(config_file)
    if not path.is_absolute():
        path = BASE_DIR / path
    config = _read_ini(path)
    codec, matching, bench = config["codec"], config["matching"], config["bench"]

    try:
        block_radius = matching.getint("block_radius", 2)
        area = (2 * block_radius + 1) ** 2
        match = MatchParams(
            max_disparity=matching.getint("max_disparity", 64),
            block_radius=block_radius,
            sgm_p1=matching.getfloat("sgm_p1", 8.0 * area),
            sgm_p2=matching.getfloat("sgm_p2", 32.0 * area),
        )
        codec_cfg = CodecConfig(
            qp_r=codec.getfloat("qp_r", 8.0),
            qp_l=codec.getfloat("qp_l", 8.0),
            match=match,
            use_disparity=codec.getboolean("use_disparity", True),
            use_prior=codec.getboolean("use_prior", True),
            align_prior=codec.getboolean("align_prior", True),
            use_prn=codec.getboolean("use_prn", True),
            w_prior=codec.getfloat("w_prior", 0.5),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid config: {path.name}: {e}") from e

    settings = Settings(
        codec=codec_cfg,
        qp_grid=parse_float_list(bench.get("qp_grid", ",".join(map(str, DEFAULT_QP_GRID))), "qp_grid"),
        lambdas=parse_float_list(bench.get("lambdas", ",".join(map(str, DEFAULT_LAMBDAS))), "lambdas"),
        jobs=_env_int("STEREODC_JOBS", bench.getint("jobs", 1)),
        out_dir=bench.get("out_dir", "reports"),
        log_level=os.getenv("STEREODC_LOG_LEVEL", "INFO").upper(),
    )
    logger.debug(f"Configuration chargée depuis {path}")
    return settings
