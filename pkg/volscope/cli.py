"""
Interface en ligne de commande de VolScope
Sous-commandes rv, fit, connect, roll et synth
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import click
import numpy as np
import pandas as pd

from volscope import __version__
from volscope.config import RunConfig, build_run_config, log_event, setup_logging
from volscope.dynamics import annotate, default_events, ratio_table, read_events_csv, rolling_connectedness
from volscope.errors import ConfigError, DataError, NumericError, VolScopeError
from volscope.export_utils import (
    band_measures_long,
    export_table_csv,
    report_document,
    rolling_document,
    rolling_long,
    write_csv,
    write_json,
)
from volscope.freqdomain import frequency_connectedness, parse_band_string
from volscope.ingest import (
    CalendarRules,
    build_panel,
    daily_realized_measures,
    filter_calendar,
    load_ticks,
    parse_session,
    read_panel_csv,
    resample_grid,
    summary_stats,
    synth_var_panel,
    write_panel_csv,
)
from volscope.varcore import fit_var, model_from_parameters, stability

logger = logging.getLogger(__name__)


def _prepare(ctx: click.Context, overrides: Dict[str, Any]) -> RunConfig:
    """Résout la configuration, crée le répertoire de sortie et y écrit run_config.json"""
    config = build_run_config(ctx.obj.get("config_path"), overrides)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(config.model_dump(), out / "run_config.json")
    return config


def _split(text: Optional[str]) -> Optional[List[str]]:
    if text is None:
        return None
    return [s.strip() for s in text.split(",") if s.strip()]


def _load_panel(config: RunConfig):
    if len(config.inputs) != 1:
        raise ConfigError("Un seul fichier panel attendu")
    return read_panel_csv(config.inputs[0], transform_tag=config.transform, symbols=config.symbols or None)


def estimation_options(f):
    """Options communes d'estimation"""
    for decorator in reversed([
        click.option("--lags", type=int, default=None, help="Ordre de retard p (défaut 2)"),
        click.option("--intercept/--no-intercept", default=None, help="Constante dans le VAR"),
        click.option("--htrunc", type=int, default=None, help="Troncature de la représentation de Wold"),
        click.option("--nfreq", type=int, default=None, help="Nombre de fréquences de la grille"),
        click.option("--bands", default=None, help="Bandes en jours, ex. '1:5,5:inf'"),
        click.option("--reconcile/--no-reconcile", default=None, help="Exiger une partition de (0, pi]"),
        click.option("--standardization", type=click.Choice(["global", "per_frequency"]), default=None),
        click.option("--symbols", default=None, help="Sous-ensemble de colonnes, séparées par des virgules"),
        click.option("--transform", type=click.Choice(["raw", "sqrt", "log"]), default=None),
        click.option("--out", default=None, help="Répertoire de sortie"),
    ]):
        f = decorator(f)
    return f


def _estimation_overrides(panel: str, **options) -> Dict[str, Any]:
    overrides = dict(options)
    overrides["inputs"] = [panel]
    overrides["symbols"] = _split(options.get("symbols"))
    return overrides


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="Fichier JSON de configuration")
@click.option("--log-level", default="INFO", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.version_option(__version__, prog_name="volscope")
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[str], log_level: str):
    """VolScope : connectedness de volatilité dans les domaines temporel et fréquentiel"""
    setup_logging(log_level)
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


@cli.command()
@click.argument("inputs", nargs=-1)
@click.option("--spacing", type=int, default=None, help="Pas de la grille en minutes (défaut 5)")
@click.option("--session", default=None, help="Session intrajournalière HH:MM-HH:MM (UTC)")
@click.option("--calendar", type=click.Choice(["standard", "none"]), default=None)
@click.option("--transform", type=click.Choice(["raw", "sqrt", "log"]), default=None)
@click.option("--out", default=None, help="Répertoire de sortie")
@click.pass_context
def rv(ctx, inputs, **options):
    """Volatilités réalisées journalières à partir de fichiers de ticks (SYMBOLE=chemin ou chemin)"""
    config = _prepare(ctx, {"inputs": list(inputs) or None, **options})
    if not config.inputs:
        raise ConfigError("Aucun fichier de ticks fourni")

    out = Path(config.out)
    session = parse_session(config.session)
    spacing = pd.Timedelta(minutes=config.spacing)
    daily: Dict[str, pd.DataFrame] = {}
    for item in config.inputs:
        symbol, _, path = item.rpartition("=")
        symbol = symbol or Path(path).stem
        if symbol in daily:
            raise ConfigError(f"Symbole en double : {symbol}")
        if not Path(path).is_file():
            raise DataError(f"Fichier de ticks introuvable : {path}")

        ticks = load_ticks(path, symbol)
        if config.calendar == "standard" and len(ticks):
            rules = CalendarRules.standard(ticks.timestamps[0].tz_localize(None), ticks.timestamps[-1].tz_localize(None))
        else:
            rules = CalendarRules()
        ticks = filter_calendar(ticks, rules)
        measures = daily_realized_measures(resample_grid(ticks, spacing, session))
        frame = measures.copy()
        frame.index = pd.DatetimeIndex(frame.index).strftime("%Y-%m-%d")
        frame.index.name = "date"
        write_csv(frame, out / f"rv_{symbol}.csv", index=True)
        log_event(logger, "rv_written", symbol=symbol, days=len(frame))
        daily[symbol] = measures

    if len(daily) >= 2:
        panel = build_panel(daily, config.transform)
        write_panel_csv(panel, out / "panel.csv")
        write_csv(summary_stats(panel), out / "summary_stats.csv", index=True)
        log_event(logger, "panel_written", days=panel.T, symbols=panel.k, transform=panel.transform_tag)
    else:
        log_event(logger, "panel_skipped", logging.WARNING, reason="fewer_than_2_symbols")


@cli.command()
@click.argument("panel", type=click.Path(exists=True, dir_okay=False))
@estimation_options
@click.pass_context
def fit(ctx, panel, **options):
    """Estime le VAR sur tout l'échantillon et écrit model.json"""
    config = _prepare(ctx, _estimation_overrides(panel, **options))
    model = fit_var(_load_panel(config), config.lags, config.intercept)
    report = stability(model)
    write_json(model.to_document(), Path(config.out) / "model.json")
    log_event(logger, "model_fitted", k=model.k, p=model.p, n_obs=model.n_obs,
              stable=report.stable, spectral_radius=report.spectral_radius)


@cli.command()
@click.argument("panel", type=click.Path(exists=True, dir_okay=False))
@estimation_options
@click.pass_context
def connect(ctx, panel, **options):
    """Connectedness sur tout l'échantillon : table temporelle, bandes, réconciliation"""
    config = _prepare(ctx, _estimation_overrides(panel, **options))
    out = Path(config.out)
    model = fit_var(_load_panel(config), config.lags, config.intercept)
    report = frequency_connectedness(
        model, parse_band_string(config.bands), config.htrunc, config.nfreq, config.standardization
    )

    write_json(report_document(report), out / "connectedness.json")
    export_table_csv(report.time_table, report.time_measures, out / "time_table.csv")
    write_csv(band_measures_long(report), out / "band_measures.csv")

    click.echo(f"total connectedness (H={report.time_table.horizon_tag}): {report.time_measures.total:.6f}")
    for measures in report.bands:
        click.echo(
            f"{measures.band.label}: within={measures.within_total:.6f} "
            f"gamma={measures.gamma:.6f} absolute={measures.absolute_total:.6f}"
        )
    if report.reconciliation is not None:
        click.echo(f"reconciliation |sum_d C~d - C| = {report.reconciliation:.3e}")
        log_event(logger, "reconciliation", residual=report.reconciliation)


@cli.command()
@click.argument("panel", type=click.Path(exists=True, dir_okay=False))
@estimation_options
@click.option("--window", type=int, default=None, help="Longueur de fenêtre (défaut 500)")
@click.option("--step", type=int, default=None, help="Pas entre fenêtres (défaut 1)")
@click.option("--boot", type=int, default=None, help="Réplications bootstrap (0 = sans bandes)")
@click.option("--significance", type=float, default=None, help="Significativité des bandes (défaut 0.10)")
@click.option("--seed", type=int, default=None)
@click.option("--events", default=None, help="CSV date,label ou 'default'")
@click.option("--ratios/--no-ratios", default=None, help="Ratios court/long terme et tendances")
@click.option("--workers", type=int, default=None, help="Nombre de processus")
@click.pass_context
def roll(ctx, panel, **options):
    """Connectedness sur fenêtres glissantes, bandes bootstrap et annotations"""
    config = _prepare(ctx, _estimation_overrides(panel, **options))
    out = Path(config.out)
    result = rolling_connectedness(
        _load_panel(config),
        p=config.lags,
        window=config.window,
        step=config.step,
        bands=parse_band_string(config.bands),
        h_trunc=config.htrunc,
        n_freq=config.nfreq,
        standardization=config.standardization,
        include_intercept=config.intercept,
        replications=config.boot,
        significance=config.significance,
        seed=config.seed,
        workers=config.workers,
    )
    if config.events:
        events = default_events() if config.events == "default" else read_events_csv(config.events)
        result = annotate(result, events)

    write_csv(rolling_long(result), out / "rolling.csv")
    write_json(rolling_document(result), out / "rolling.json")
    if config.ratios:
        ratios, trends = ratio_table(result)
        ratios.index = ratios.index.strftime("%Y-%m-%d")
        write_csv(ratios, out / "ratios.csv", index=True)
        write_csv(trends, out / "trends.csv")
    log_event(logger, "rolling_written", windows=result.n_windows, gaps=len(result.gaps))


def default_parameters(k: int) -> Dict[str, Any]:
    """VAR(1) stable de référence : Φ1 = 0.4 I + 0.3/k hors diagonale, Σ à corrélation 0.3"""
    off = np.ones((k, k)) - np.eye(k)
    return {
        "phi": [(0.4 * np.eye(k) + 0.3 / k * off).tolist()],
        "sigma": (np.eye(k) + 0.3 * off).tolist(),
        "intercept": [0.0] * k,
    }


def load_parameters(path: str) -> Dict[str, Any]:
    """Fichier JSON {phi, sigma, intercept?, names?}"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Fichier de paramètres introuvable : {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Fichier de paramètres invalide {path} (ligne {e.lineno}) : {e.msg}")
    if not isinstance(document, dict) or not {"phi", "sigma"} <= set(document):
        raise ConfigError(f"{path}: les champs 'phi' et 'sigma' sont requis")
    return document


@cli.command()
@click.option("--k", type=int, default=None, help="Nombre de variables (paramètres par défaut)")
@click.option("--length", type=int, default=None, help="Nombre d'observations")
@click.option("--params", default=None, help="JSON des paramètres du VAR générateur")
@click.option("--seed", type=int, default=None)
@click.option("--htrunc", type=int, default=None)
@click.option("--nfreq", type=int, default=None)
@click.option("--bands", default=None)
@click.option("--out", default=None, help="Répertoire de sortie")
@click.pass_context
def synth(ctx, **options):
    """Panel synthétique et fichier de vérité (paramètres et mesures exactes)"""
    config = _prepare(ctx, options)
    out = Path(config.out)
    params = load_parameters(config.params) if config.params else default_parameters(config.k)
    truth = model_from_parameters(params["phi"], params["sigma"], params.get("intercept"), params.get("names"))

    panel = synth_var_panel(truth.phi, truth.sigma, config.length, config.seed,
                            intercept=truth.intercept, names=truth.variable_names)
    write_panel_csv(panel, out / "panel.csv")

    report = frequency_connectedness(truth, parse_band_string(config.bands), config.htrunc, config.nfreq,
                                     config.standardization)
    document = report_document(report)
    document["seed"] = config.seed
    document["length"] = config.length
    write_json(document, out / "truth.json")
    log_event(logger, "synth_written", k=truth.k, length=config.length, seed=config.seed,
              total=report.time_measures.total)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Exécute la ligne de commande et renvoie le code de sortie (0, 1, 2 ou 3)"""
    try:
        result = cli.main(args=list(argv) if argv is not None else None, prog_name="volscope", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Interrompu", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except VolScopeError as e:
        logger.error(f"{type(e).__name__}: {e}")
        click.echo(f"Erreur : {e}", err=True)
        return e.exit_code
    except OSError as e:
        logger.error(f"Erreur d'entrée/sortie : {e}")
        click.echo(f"Erreur d'entrée/sortie : {e}", err=True)
        return DataError.exit_code
    except Exception as e:
        # Toute autre exception est un échec de calcul
        logger.exception(f"Erreur inattendue : {type(e).__name__}")
        click.echo(f"Erreur inattendue : {type(e).__name__}: {e}", err=True)
        return NumericError.exit_code
    return result if isinstance(result, int) else 0
