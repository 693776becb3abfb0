"""
Configuration de VolScope
Valeurs par défaut, configuration d'exécution validée et journalisation
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from volscope.errors import ConfigError

# Protocole d'estimation : VAR(2) avec constante, fenêtre de 500 observations
ESTIMATION_CONFIG = {
    "lags": 2,
    "intercept": True,
    "window": 500,
    "step": 1,
    "htrunc": 100,
}

FREQUENCY_CONFIG = {
    "nfreq": 512,
    "bands": "1:5,5:inf",
    "standardization": "global",
    "clip_tolerance": 1e-14,
    "stability_margin": 1e-8,
    "tail_tolerance": 1e-6,
}

BOOTSTRAP_CONFIG = {
    "replications": 500,
    "significance": 0.10,
    "seed": 42,
    "max_unstable_share": 0.20,
}

INGEST_CONFIG = {
    "spacing_minutes": 5,
    "session": "00:00-24:00",
    "calendar": "standard",
    "transform": "log",
}

LOGGING_CONFIG = {
    "level": "INFO",
    "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
}

OUTPUT_ENV_VAR = "VOLSCOPE_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "output"

logger = logging.getLogger(__name__)


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None):
    """Configuration du logging (une ligne par événement)"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(
        level=getattr(logging, (level or LOGGING_CONFIG["level"]).upper()),
        format=LOGGING_CONFIG["format"],
        handlers=handlers,
        force=True,
    )


def log_event(log: logging.Logger, event: str, level: int = logging.INFO, **fields: Any):
    """Écrit un événement structuré sur une seule ligne : event=... cle=valeur"""
    parts = [f"event={event}"]
    for key, value in fields.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        text = str(value)
        if " " in text:
            text = f'"{text}"'
        parts.append(f"{key}={text}")
    log.log(level, " ".join(parts))


class RunConfig(BaseModel):
    """Configuration complète d'une exécution (valeurs par défaut développées)"""

    model_config = ConfigDict(extra="forbid")

    # Données
    inputs: List[str] = Field(default_factory=list)
    symbols: List[str] = Field(default_factory=list)
    transform: Literal["raw", "sqrt", "log"] = INGEST_CONFIG["transform"]
    spacing: int = Field(INGEST_CONFIG["spacing_minutes"], ge=1)
    session: str = INGEST_CONFIG["session"]
    calendar: Literal["standard", "none"] = INGEST_CONFIG["calendar"]

    # Estimation
    lags: int = Field(ESTIMATION_CONFIG["lags"], ge=1)
    intercept: bool = ESTIMATION_CONFIG["intercept"]
    window: int = Field(ESTIMATION_CONFIG["window"], ge=2)
    step: int = Field(ESTIMATION_CONFIG["step"], ge=1)
    htrunc: int = Field(ESTIMATION_CONFIG["htrunc"], ge=1)

    # Fréquences
    nfreq: int = Field(FREQUENCY_CONFIG["nfreq"], ge=64)
    bands: str = FREQUENCY_CONFIG["bands"]
    standardization: Literal["global", "per_frequency"] = FREQUENCY_CONFIG["standardization"]
    reconcile: bool = True

    # Bootstrap
    boot: int = Field(0, ge=0)
    significance: float = Field(BOOTSTRAP_CONFIG["significance"], gt=0.0, lt=1.0)
    seed: int = Field(BOOTSTRAP_CONFIG["seed"], ge=0)

    # Dynamique et sorties
    events: Optional[str] = None
    ratios: bool = False
    workers: int = Field(1, ge=1)
    out: str = DEFAULT_OUTPUT_DIR

    # Génération synthétique
    k: int = Field(3, ge=2)
    length: int = Field(2000, ge=10)
    params: Optional[str] = None

    @field_validator("bands")
    @classmethod
    def _check_bands(cls, value: str) -> str:
        from volscope.freqdomain import parse_band_string

        parse_band_string(value)
        return value

    @field_validator("session")
    @classmethod
    def _check_session(cls, value: str) -> str:
        from volscope.ingest import parse_session

        parse_session(value)
        return value

    @field_validator("boot")
    @classmethod
    def _check_boot(cls, value: int) -> int:
        if 0 < value < 100:
            raise ValueError("le bootstrap exige au moins 100 réplications (0 pour désactiver)")
        return value

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        from volscope.freqdomain import is_partition, parse_band_string

        if self.htrunc + 1 > 2 * self.nfreq:
            raise ValueError(f"htrunc + 1 ({self.htrunc + 1}) doit être <= 2 * nfreq ({2 * self.nfreq})")
        if self.reconcile and not is_partition(parse_band_string(self.bands)):
            raise ValueError(
                f"les bandes '{self.bands}' ne forment pas une partition de (0, pi] ; "
                "utiliser --no-reconcile pour des bandes libres"
            )
        return self


def load_config_file(path: str) -> Dict[str, Any]:
    """Charge un fichier JSON à sections et l'aplatit en clés de RunConfig"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Fichier de configuration introuvable : {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Fichier de configuration invalide {path} (ligne {e.lineno}) : {e.msg}")

    if not isinstance(document, dict):
        raise ConfigError(f"Le fichier de configuration {path} doit contenir un objet JSON")

    flat: Dict[str, Any] = {}
    for key, value in document.items():
        if isinstance(value, dict):
            for sub_key, sub_value in value.items():
                if sub_key in flat:
                    raise ConfigError(f"Clé '{sub_key}' définie plusieurs fois dans {path}")
                flat[sub_key] = sub_value
        else:
            flat[key] = value
    return flat


def build_run_config(config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Résout la configuration : options > fichier > valeurs par défaut"""
    load_dotenv()
    values: Dict[str, Any] = {"out": os.getenv(OUTPUT_ENV_VAR, DEFAULT_OUTPUT_DIR)}
    if config_path:
        values.update(load_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    try:
        return RunConfig(**values)
    except ValidationError as e:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"Configuration invalide : {details}")
    except ConfigError:
        raise
