"""
Analyse dynamique de la connectedness
Fenêtres glissantes, bandes de confiance par bootstrap paramétrique,
annotation par événements et séries de ratios court/long terme
"""

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from volscope.config import BOOTSTRAP_CONFIG, ESTIMATION_CONFIG, FREQUENCY_CONFIG, log_event
from volscope.errors import DataError, NumericError, RankDeficientError, UnstableModelError
from volscope.freqdomain import BandSpec, FrequencyReport, frequency_connectedness, is_partition
from volscope.ingest import VolatilityPanel, simulate_var_paths
from volscope.varcore import VarModel, fit_var

logger = logging.getLogger(__name__)

# (mesure, bande) ; bande "time" pour le domaine temporel
MeasureKey = Tuple[str, str]

TIME_BAND = "time"
RATIO_TOLERANCE = 1e-12
DEFAULT_EVENTS_PATH = Path(__file__).resolve().parent.parent / "data" / "events.csv"
SERIES_COLUMNS = ["value", "lower", "upper"]


def _pairs(names: Sequence[str]):
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            yield i, j, f"{names[i]}:{names[j]}"


def flatten_measures(report: FrequencyReport) -> Dict[MeasureKey, float]:
    """Toutes les mesures scalaires d'un rapport, clé (mesure, bande)"""
    names = report.time_table.variable_names
    time = report.time_measures
    values: Dict[MeasureKey, float] = {("total", TIME_BAND): time.total}
    for i, name in enumerate(names):
        values[(f"from:{name}", TIME_BAND)] = time.from_others[i]
        values[(f"to:{name}", TIME_BAND)] = time.to_others[i]
        values[(f"net:{name}", TIME_BAND)] = time.net[i]
    for i, j, pair in _pairs(names):
        values[(f"pairwise:{pair}", TIME_BAND)] = time.pairwise[i, j]

    for measures in report.bands:
        label = measures.band.label
        values[("within_total", label)] = measures.within_total
        values[("gamma", label)] = measures.gamma
        values[("absolute_total", label)] = measures.absolute_total
        for prefix in ("within", "absolute"):
            for i, name in enumerate(names):
                values[(f"{prefix}_from:{name}", label)] = getattr(measures, f"{prefix}_from")[i]
                values[(f"{prefix}_to:{name}", label)] = getattr(measures, f"{prefix}_to")[i]
                values[(f"{prefix}_net:{name}", label)] = getattr(measures, f"{prefix}_net")[i]
            pairwise = getattr(measures, f"{prefix}_pairwise")
            for i, j, pair in _pairs(names):
                values[(f"{prefix}_pairwise:{pair}", label)] = pairwise[i, j]
    return {key: float(value) for key, value in values.items()}


class BootstrapMeta(NamedTuple):
    replications: int
    significance: float
    seed: int


@dataclass(frozen=True, eq=False)
class BootstrapBands:
    """Bornes (lower, upper) par mesure et diagnostics des réplications

    `quantiles` garde les quantiles calculés ; `bounds` les élargit au besoin pour
    contenir l'estimation ponctuelle.
    """

    bounds: Dict[MeasureKey, Tuple[float, float]]
    quantiles: Dict[MeasureKey, Tuple[float, float]]
    replications: int
    n_unstable: int
    n_widened: int


def bootstrap_bands(
    model: VarModel,
    window: int,
    bands: Sequence[BandSpec],
    replications: int = BOOTSTRAP_CONFIG["replications"],
    significance: float = BOOTSTRAP_CONFIG["significance"],
    seed: int = BOOTSTRAP_CONFIG["seed"],
    h_trunc: int = ESTIMATION_CONFIG["htrunc"],
    n_freq: int = FREQUENCY_CONFIG["nfreq"],
    standardization: str = "global",
    point: Optional[Dict[MeasureKey, float]] = None,
    window_index: int = 0,
) -> BootstrapBands:
    """Bootstrap paramétrique autour du modèle ajusté

    Chaque réplication simule `window` observations du VAR (innovations gaussiennes
    de covariance Σ), ré-estime le modèle et recalcule toutes les mesures. Les bornes
    sont les quantiles empiriques significance/2 et 1 - significance/2. Le générateur
    de la réplication r est dérivé de (seed, window_index, r).
    Si `point` est fourni, les bornes sont élargies pour le contenir.
    """
    if replications < 100:
        raise DataError(f"Le bootstrap exige au moins 100 réplications ({replications} demandées)")
    if not 0.0 < significance < 1.0:
        raise DataError(f"Niveau de significativité hors de (0, 1) : {significance}")

    rngs = [np.random.default_rng([seed, window_index, r]) for r in range(replications)]
    intercept = model.intercept if model.include_intercept else None
    paths = simulate_var_paths(model.phi, model.sigma, window, rngs, intercept=intercept)

    draws: Dict[MeasureKey, List[float]] = {}
    n_unstable = 0
    for path in paths:
        frame = pd.DataFrame(path, columns=model.variable_names)
        try:
            refit = fit_var(frame, model.p, model.include_intercept)
            report = frequency_connectedness(refit, bands, h_trunc, n_freq, standardization, check_tail=False)
        except (UnstableModelError, RankDeficientError):
            n_unstable += 1
            continue
        for key, value in flatten_measures(report).items():
            draws.setdefault(key, []).append(value)

    max_share = BOOTSTRAP_CONFIG["max_unstable_share"]
    if n_unstable > max_share * replications:
        raise NumericError(
            f"{n_unstable}/{replications} réplications instables (> {max_share:.0%}) ; augmenter la fenêtre"
        )

    bounds: Dict[MeasureKey, Tuple[float, float]] = {}
    quantiles: Dict[MeasureKey, Tuple[float, float]] = {}
    widened: List[str] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for key, values in draws.items():
            lower, upper = np.nanquantile(np.asarray(values), [significance / 2.0, 1.0 - significance / 2.0])
            quantiles[key] = (float(lower), float(upper))
            if point is not None and np.isfinite(point.get(key, np.nan)):
                value = point[key]
                if value < lower or value > upper:
                    widened.append(f"{key[0]}@{key[1]}")
                    lower, upper = min(lower, value), max(upper, value)
            bounds[key] = (float(lower), float(upper))

    if widened:
        log_event(logger, "bootstrap_widened", window=window_index, count=len(widened),
                  first=widened[0], replications=replications)
    return BootstrapBands(bounds=bounds, quantiles=quantiles, replications=replications,
                          n_unstable=n_unstable, n_widened=len(widened))


class WindowGap(NamedTuple):
    index: int
    date: pd.Timestamp
    reason: str


@dataclass(frozen=True)
class EventMark:
    """Événement rattaché (ou non) à une date d'ancrage"""

    date: pd.Timestamp
    label: str
    anchor: Optional[pd.Timestamp]

    @property
    def placed(self) -> bool:
        return self.anchor is not None


@dataclass(frozen=True, eq=False)
class RollingResult:
    """Séries glissantes (value, lower, upper) indexées par la date de fin de fenêtre"""

    window_length: int
    step: int
    anchor_dates: pd.DatetimeIndex
    series: Dict[MeasureKey, pd.DataFrame]
    bands_used: List[BandSpec]
    gaps: List[WindowGap] = field(default_factory=list)
    reconciliation: Optional[pd.Series] = None
    bootstrap_meta: Optional[BootstrapMeta] = None
    events: List[EventMark] = field(default_factory=list)

    @property
    def n_windows(self) -> int:
        return len(self.anchor_dates)

    def measure(self, key: MeasureKey) -> pd.DataFrame:
        if key not in self.series:
            raise DataError(f"Mesure absente du résultat glissant : {key[0]} ({key[1]})")
        return self.series[key]


@dataclass
class _WindowOutcome:
    index: int
    values: Optional[Dict[MeasureKey, float]] = None
    bounds: Optional[Dict[MeasureKey, Tuple[float, float]]] = None
    reconciliation: Optional[float] = None
    tail_ratio: float = 0.0
    gap_reason: Optional[str] = None
    message: str = ""
    bootstrap_error: str = ""
    n_widened: int = 0


def _run_window(
    index: int,
    frame: pd.DataFrame,
    p: int,
    include_intercept: bool,
    bands: Sequence[BandSpec],
    h_trunc: int,
    n_freq: int,
    standardization: str,
    replications: int,
    significance: float,
    seed: int,
) -> _WindowOutcome:
    """Traitement d'une fenêtre (fonction de module pour le pool de processus)"""
    try:
        model = fit_var(frame, p, include_intercept)
        report = frequency_connectedness(model, bands, h_trunc, n_freq, standardization, check_tail=False)
    except UnstableModelError as e:
        return _WindowOutcome(index, gap_reason="unstable", message=f"rayon spectral {e.spectral_radius:.6f}")
    except RankDeficientError as e:
        return _WindowOutcome(index, gap_reason="rank_deficient", message=str(e))
    except NumericError as e:
        return _WindowOutcome(index, gap_reason="numeric", message=str(e))

    outcome = _WindowOutcome(
        index,
        values=flatten_measures(report),
        reconciliation=report.reconciliation,
        tail_ratio=report.tail_ratio,
    )
    if replications:
        try:
            boot = bootstrap_bands(
                model, len(frame), bands, replications, significance, seed,
                h_trunc, n_freq, standardization, point=outcome.values, window_index=index,
            )
            outcome.bounds = boot.bounds
            outcome.n_widened = boot.n_widened
        except NumericError as e:
            outcome.bootstrap_error = str(e)
    return outcome


def rolling_connectedness(
    panel: Union[VolatilityPanel, pd.DataFrame],
    p: int = ESTIMATION_CONFIG["lags"],
    window: int = ESTIMATION_CONFIG["window"],
    step: int = ESTIMATION_CONFIG["step"],
    bands: Sequence[BandSpec] = (),
    h_trunc: int = ESTIMATION_CONFIG["htrunc"],
    n_freq: int = FREQUENCY_CONFIG["nfreq"],
    standardization: str = "global",
    include_intercept: bool = ESTIMATION_CONFIG["intercept"],
    replications: int = 0,
    significance: float = BOOTSTRAP_CONFIG["significance"],
    seed: int = BOOTSTRAP_CONFIG["seed"],
    workers: int = 1,
) -> RollingResult:
    """Mesures temporelles et par bande sur chaque fenêtre glissante

    Les fenêtres instables sont conservées comme lacunes (valeurs NaN) avec un code
    de raison. Les résultats sont réduits par indice de fenêtre : le nombre de
    processus ne change pas la sortie.
    """
    frame = panel.frame if isinstance(panel, VolatilityPanel) else panel
    T, k = frame.shape
    if step < 1:
        raise DataError(f"Pas de fenêtre invalide : {step}")
    if window > T:
        raise DataError(f"Fenêtre de {window} observations > longueur du panel ({T})")
    if window - p < k * p + 1:
        raise DataError(f"Fenêtre de {window} observations insuffisante pour un VAR({p}) à {k} variables")
    if not bands:
        raise DataError("Aucune bande de fréquences fournie")

    n_windows = (T - window) // step + 1
    starts = [i * step for i in range(n_windows)]
    anchor_dates = pd.DatetimeIndex([frame.index[s + window - 1] for s in starts], name="date")
    log_event(logger, "rolling_start", windows=n_windows, window=window, step=step, workers=workers,
              replications=replications)

    common = (p, include_intercept, list(bands), h_trunc, n_freq, standardization, replications, significance, seed)
    outcomes: Dict[int, _WindowOutcome] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {
                executor.submit(_run_window, i, frame.iloc[s:s + window], *common): i
                for i, s in enumerate(starts)
            }
            for future in futures:
                outcomes[futures[future]] = future.result()
    else:
        for i, s in enumerate(starts):
            outcomes[i] = _run_window(i, frame.iloc[s:s + window], *common)

    gaps: List[WindowGap] = []
    n_tail = 0
    n_widened = 0
    for i in range(n_windows):
        outcome = outcomes[i]
        if outcome.gap_reason:
            gaps.append(WindowGap(i, anchor_dates[i], outcome.gap_reason))
            log_event(logger, "window_gap", logging.WARNING, index=i, date=anchor_dates[i].date(),
                      reason=outcome.gap_reason, detail=outcome.message)
            continue
        if outcome.tail_ratio >= FREQUENCY_CONFIG["tail_tolerance"]:
            n_tail += 1
        if outcome.bootstrap_error:
            log_event(logger, "window_bootstrap_failed", logging.WARNING, index=i, date=anchor_dates[i].date(),
                      detail=outcome.bootstrap_error)
        n_widened += outcome.n_widened

    valid = [outcomes[i] for i in range(n_windows) if outcomes[i].values is not None]
    if not valid:
        raise NumericError(f"Aucune fenêtre valide sur {n_windows} ({gaps[0].reason if gaps else 'inconnu'})")
    if n_tail:
        log_event(logger, "wold_tail_not_negligible", logging.WARNING, windows=n_tail, h_trunc=h_trunc,
                  tolerance=FREQUENCY_CONFIG["tail_tolerance"])
    if replications:
        log_event(logger, "bootstrap_bands_widened", bands=n_widened)

    keys = list(valid[0].values)
    series: Dict[MeasureKey, pd.DataFrame] = {}
    for key in keys:
        data = np.full((n_windows, 3), np.nan)
        for outcome in valid:
            data[outcome.index, 0] = outcome.values[key]
            if outcome.bounds is not None and key in outcome.bounds:
                data[outcome.index, 1:] = outcome.bounds[key]
        series[key] = pd.DataFrame(data, index=anchor_dates, columns=SERIES_COLUMNS)

    reconciliation = None
    if is_partition(bands):
        reconciliation = pd.Series(np.nan, index=anchor_dates, name="reconciliation")
        for outcome in valid:
            reconciliation.iloc[outcome.index] = outcome.reconciliation
        log_event(logger, "rolling_reconciliation", max_residual=float(reconciliation.max()))

    log_event(logger, "rolling_done", windows=n_windows, valid=len(valid), gaps=len(gaps))
    return RollingResult(
        window_length=window,
        step=step,
        anchor_dates=anchor_dates,
        series=series,
        bands_used=list(bands),
        gaps=gaps,
        reconciliation=reconciliation,
        bootstrap_meta=BootstrapMeta(replications, significance, seed) if replications else None,
    )


def ratio_series(result: RollingResult, numerator: MeasureKey, denominator: MeasureKey) -> pd.Series:
    """Ratio point à point ; lacune (NaN) lorsque |dénominateur| < 1e-12"""
    top = result.measure(numerator)["value"]
    bottom = result.measure(denominator)["value"]
    valid = bottom.abs() >= RATIO_TOLERANCE
    ratio = pd.Series(np.nan, index=result.anchor_dates, name=f"{numerator[0]} ({numerator[1]} / {denominator[1]})")
    ratio[valid] = top[valid] / bottom[valid]
    return ratio


class TrendFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    n: int


def linear_trend(series: Union[pd.Series, Sequence[float]]) -> TrendFit:
    """Droite des moindres carrés de la valeur sur l'indice de fenêtre, lacunes exclues

    Une série constante donne une pente nulle et un r² de 0 par convention.
    """
    values = np.asarray(series, dtype=float)
    x = np.arange(len(values), dtype=float)
    keep = np.isfinite(values)
    if keep.sum() < 2:
        raise DataError("Tendance linéaire impossible : moins de 2 points valides")
    x, y = x[keep], values[keep]
    if y.max() == y.min():
        return TrendFit(0.0, float(y[0]), 0.0, 0.0, len(y))
    fit = stats.linregress(x, y)
    return TrendFit(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2), float(fit.stderr), len(y))


def short_long_bands(bands: Sequence[BandSpec]) -> Tuple[BandSpec, BandSpec]:
    """Bande des hautes fréquences (court terme) et bande contenant les basses fréquences"""
    if len(bands) < 2:
        raise DataError("Les ratios court/long terme exigent au moins deux bandes")
    return max(bands, key=lambda b: b.upper), min(bands, key=lambda b: b.lower)


def ratio_table(result: RollingResult) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Ratios court/long terme des mesures within et absolues, avec leurs tendances"""
    short, long = short_long_bands(result.bands_used)
    names = sorted({m for m, band in result.series if band == short.label and not m.startswith("gamma")})
    ratios = {}
    trends = []
    for name in names:
        if (name, long.label) not in result.series or "pairwise" in name:
            continue
        ratio = ratio_series(result, (name, short.label), (name, long.label))
        ratios[name] = ratio
        try:
            trend = linear_trend(ratio)
        except DataError:
            log_event(logger, "ratio_trend_skipped", logging.WARNING, measure=name)
            continue
        trends.append({"measure": name, **trend._asdict()})
    frame = pd.DataFrame(ratios, index=result.anchor_dates)
    return frame, pd.DataFrame(trends, columns=["measure", *TrendFit._fields])


@dataclass(frozen=True)
class EventGrid:
    """Liste d'événements (date, libellé)"""

    events: Tuple[Tuple[pd.Timestamp, str], ...]

    def __post_init__(self):
        for when, label in self.events:
            if pd.isna(when):
                raise DataError("Date d'événement invalide")
            if not str(label).strip():
                raise DataError(f"Événement sans libellé au {when}")


def read_events_csv(path: Union[str, Path]) -> EventGrid:
    """Lit un fichier date,label"""
    try:
        frame = pd.read_csv(path, dtype=str, encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"Fichier d'événements introuvable : {path}")
    if list(frame.columns) != ["date", "label"]:
        raise DataError(f"{path}: en-tête attendu 'date,label'")
    dates = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    for row, (when, label) in enumerate(zip(dates, frame["label"].fillna(""))):
        if pd.isna(when):
            raise DataError(f"{path}: ligne {row + 2} : date invalide '{frame['date'].iloc[row]}'")
        if not label.strip():
            raise DataError(f"{path}: ligne {row + 2} : libellé vide")
    return EventGrid(events=tuple(zip(dates, frame["label"].str.strip())))


def default_events() -> EventGrid:
    """Événements géopolitiques de référence livrés dans data/events.csv"""
    return read_events_csv(DEFAULT_EVENTS_PATH)


def annotate(result: RollingResult, events: EventGrid) -> RollingResult:
    """Rattache chaque événement à la date d'ancrage la plus proche (égalité -> la plus ancienne)"""
    anchors = result.anchor_dates
    marks = []
    for when, label in events.events:
        when = pd.Timestamp(when)
        anchor = None
        if len(anchors) and anchors[0] <= when <= anchors[-1]:
            pos = anchors.searchsorted(when)
            if anchors[pos] == when:
                anchor = anchors[pos]
            else:
                before, after = anchors[pos - 1], anchors[pos]
                anchor = before if when - before <= after - when else after
        else:
            log_event(logger, "event_unplaced", logging.WARNING, date=when.date(), label=label)
        marks.append(EventMark(date=when, label=label, anchor=anchor))
    return replace(result, events=marks)
