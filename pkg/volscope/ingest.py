"""
Préparation des données de volatilité
Ticks irréguliers -> grille intrajournalière -> variation bi-puissance -> panel log-volatilité
"""

import logging
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import IO, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pandas.tseries.holiday import USFederalHolidayCalendar
from scipy import stats

from volscope.config import FREQUENCY_CONFIG, log_event
from volscope.errors import ConfigError, DataError, UnstableModelError
from volscope.varcore import spectral_radius, unconditional_mean

logger = logging.getLogger(__name__)

# μ1 = E|Z| pour Z ~ N(0,1)
MU1 = np.sqrt(2.0 / np.pi)

TRANSFORMS = ("raw", "sqrt", "log")
SUMMARY_ROWS = ["mean", "median", "std", "skewness", "kurtosis"]
SYNTH_EARLIEST_START = "1678-01-03"

MonthDay = Tuple[int, int]
Session = Tuple[pd.Timedelta, pd.Timedelta]


@dataclass(frozen=True, eq=False)
class TickSeries:
    """Prix horodatés (UTC) d'un instrument, strictement croissants dans le temps"""

    symbol: str
    prices: pd.Series

    def __post_init__(self):
        index = self.prices.index
        if not isinstance(index, pd.DatetimeIndex) or index.tz is None:
            raise DataError(f"{self.symbol}: l'index des ticks doit être un DatetimeIndex UTC")
        if len(index) > 1 and not (index.is_monotonic_increasing and index.is_unique):
            raise DataError(f"{self.symbol}: horodatages non strictement croissants")
        if (self.prices.to_numpy() <= 0).any():
            raise DataError(f"{self.symbol}: prix non positifs")

    def __len__(self) -> int:
        return len(self.prices)

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return self.prices.index


@dataclass(frozen=True, eq=False)
class ReturnGrid:
    """Rendements logarithmiques d'une journée sur une grille régulière"""

    symbol: str
    trading_day: date
    returns: np.ndarray
    grid_spacing: pd.Timedelta = pd.Timedelta(minutes=5)

    def __len__(self) -> int:
        return len(self.returns)


@dataclass(frozen=True, eq=False)
class VolatilityPanel:
    """Panel T x k de volatilités journalières, sans cellule manquante"""

    frame: pd.DataFrame
    transform_tag: str = "raw"

    def __post_init__(self):
        if self.transform_tag not in TRANSFORMS:
            raise DataError(f"Transformation inconnue : {self.transform_tag}")
        if self.frame.shape[1] < 2:
            raise DataError("Le panel doit contenir au moins 2 séries")
        if self.frame.shape[0] == 0:
            raise DataError("Le panel est vide")
        if self.frame.isna().to_numpy().any():
            raise DataError("Le panel contient des cellules manquantes")
        index = self.frame.index
        if not (index.is_monotonic_increasing and index.is_unique):
            raise DataError("Les dates du panel doivent être strictement croissantes")

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def symbols(self) -> List[str]:
        return [str(c) for c in self.frame.columns]

    @property
    def values(self) -> np.ndarray:
        return self.frame.to_numpy(dtype=float)

    @property
    def T(self) -> int:
        return self.frame.shape[0]

    @property
    def k(self) -> int:
        return self.frame.shape[1]


@dataclass(frozen=True)
class CalendarRules:
    """Règles d'exclusion de calendrier (week-ends, fenêtres fixes, jours fériés)"""

    weekend_exclusion: bool = False
    fixed_exclusion_windows: Tuple[Tuple[MonthDay, MonthDay], ...] = ()
    holiday_list: Tuple[date, ...] = ()

    def __post_init__(self):
        for start, end in self.fixed_exclusion_windows:
            for month, day in (start, end):
                try:
                    # 2000 est bissextile : le 29 février reste accepté
                    date(2000, month, day)
                except (TypeError, ValueError):
                    raise ConfigError(f"Fenêtre d'exclusion invalide : {start} -> {end}")
            # Seul le passage du nouvel an (décembre -> janvier) peut boucler
            if start > end and not (start[0] == 12 and end[0] == 1):
                raise ConfigError(f"Fenêtre d'exclusion à rebours hors nouvel an : {start} -> {end}")

    @classmethod
    def standard(cls, start, end) -> "CalendarRules":
        """Exclusions du protocole : week-ends, jours fériés fédéraux US, 24-26 déc., 31 déc.-2 janv."""
        holidays = USFederalHolidayCalendar().holidays(start=start, end=end)
        return cls(
            weekend_exclusion=True,
            fixed_exclusion_windows=(((12, 24), (12, 26)), ((12, 31), (1, 2))),
            holiday_list=tuple(d.date() for d in holidays),
        )

    def excluded(self, index: pd.DatetimeIndex) -> np.ndarray:
        """Masque booléen des horodatages tombant un jour exclu"""
        mask = np.zeros(len(index), dtype=bool)
        if self.weekend_exclusion:
            mask |= np.asarray(index.dayofweek >= 5)
        month_day = np.asarray(index.month * 100 + index.day)
        for (sm, sd), (em, ed) in self.fixed_exclusion_windows:
            lo, hi = sm * 100 + sd, em * 100 + ed
            if lo <= hi:
                mask |= (month_day >= lo) & (month_day <= hi)
            else:
                mask |= (month_day >= lo) | (month_day <= hi)
        if self.holiday_list:
            mask |= np.asarray(pd.Index(index.date).isin(list(self.holiday_list)))
        return mask


def parse_session(text: str) -> Session:
    """Lit une session 'HH:MM-HH:MM' (24:00 autorisé en fin de session)"""
    try:
        start_text, end_text = text.split("-")
        bounds = []
        for part in (start_text, end_text):
            hours, minutes = part.strip().split(":")
            hours, minutes = int(hours), int(minutes)
            if not (0 <= minutes < 60 and 0 <= hours <= 24) or (hours == 24 and minutes != 0):
                raise ValueError(part)
            bounds.append(pd.Timedelta(hours=hours, minutes=minutes))
    except ValueError:
        raise ConfigError(f"Session invalide '{text}' (format attendu HH:MM-HH:MM)")
    if bounds[0] >= bounds[1]:
        raise ConfigError(f"Session invalide '{text}' : le début doit précéder la fin")
    return bounds[0], bounds[1]


def load_ticks(source: Union[str, Path, IO[bytes]], symbol: str) -> TickSeries:
    """Lecture d'un CSV de ticks (timestamp,price)"""
    name = source if isinstance(source, (str, Path)) else getattr(source, "name", symbol)
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DataError(f"{name}: fichier de ticks vide")
    except pd.errors.ParserError as e:
        raise DataError(f"{name}: ligne malformée ({e})")

    columns = [str(c).strip() for c in frame.columns]
    if columns != ["timestamp", "price"]:
        raise DataError(f"{name}: en-tête attendu 'timestamp,price', trouvé '{','.join(columns)}'")
    if frame.empty:
        raise DataError(f"{name}: aucun tick")

    timestamps = pd.to_datetime(frame["timestamp"].str.strip(), utc=True, errors="coerce", format="ISO8601")
    prices = pd.to_numeric(frame["price"].str.strip(), errors="coerce")

    # Ligne 1 = en-tête
    malformed = timestamps.isna() | prices.isna() | ~np.isfinite(prices)
    if malformed.any():
        row = int(np.flatnonzero(malformed.to_numpy())[0])
        raise DataError(f"{name}: ligne {row + 2} malformée : '{frame.iloc[row, 0]},{frame.iloc[row, 1]}'")
    non_positive = prices <= 0
    if non_positive.any():
        row = int(np.flatnonzero(non_positive.to_numpy())[0])
        raise DataError(f"{name}: ligne {row + 2} : prix non positif {prices.iloc[row]}")

    index = pd.DatetimeIndex(timestamps)
    ns = index.asi8
    keep = np.ones(len(ns), dtype=bool)
    keep[1:] = ns[1:] >= np.maximum.accumulate(ns)[:-1]
    if not keep.all():
        rejected = np.flatnonzero(~keep)
        log_event(
            logger, "ticks_out_of_order", logging.WARNING,
            symbol=symbol, rejected=len(rejected), first_line=int(rejected[0]) + 2,
        )

    series = pd.Series(prices.to_numpy(dtype=float)[keep], index=index[keep], name=symbol)
    duplicated = series.index.duplicated(keep="last")
    if duplicated.any():
        log_event(logger, "ticks_duplicates_collapsed", symbol=symbol, collapsed=int(duplicated.sum()))
        series = series[~duplicated]

    return TickSeries(symbol=symbol, prices=series)


def filter_calendar(ticks: TickSeries, rules: CalendarRules) -> TickSeries:
    """Supprime les ticks des jours exclus (ordre conservé)"""
    mask = rules.excluded(ticks.timestamps)
    removed = int(mask.sum())
    log_event(logger, "calendar_filter", symbol=ticks.symbol, removed=removed, kept=len(ticks) - removed)
    return TickSeries(symbol=ticks.symbol, prices=ticks.prices[~mask])


def resample_grid(
    ticks: TickSeries,
    spacing: pd.Timedelta = pd.Timedelta(minutes=5),
    session: Session = (pd.Timedelta(0), pd.Timedelta(hours=24)),
) -> List[ReturnGrid]:
    """Rendements sur grille régulière par interpolation au tick précédent"""
    spacing = pd.Timedelta(spacing)
    start, end = session
    if spacing <= pd.Timedelta(0) or (end - start) % spacing != pd.Timedelta(0):
        raise ConfigError(f"Le pas {spacing} ne divise pas la session {start} -> {end}")

    n_points = (end - start) // spacing + 1
    offsets = start + pd.to_timedelta(np.arange(n_points) * spacing.value, unit="ns")

    grids: List[ReturnGrid] = []
    series = ticks.prices
    for day, chunk in series.groupby(series.index.normalize()):
        time_of_day = chunk.index - day
        chunk = chunk[(time_of_day >= start) & (time_of_day <= end)]

        grid_times = day + offsets
        # Dernier tick à l'instant de grille ou avant
        position = np.searchsorted(chunk.index.asi8, grid_times.asi8, side="right") - 1
        position = position[position >= 0]
        if len(position) < 2:
            log_event(
                logger, "day_skipped", logging.WARNING,
                symbol=ticks.symbol, day=day.date().isoformat(), reason="fewer_than_2_grid_prices",
            )
            continue

        log_prices = np.log(chunk.to_numpy()[position])
        grids.append(
            ReturnGrid(
                symbol=ticks.symbol,
                trading_day=day.date(),
                returns=np.diff(log_prices),
                grid_spacing=spacing,
            )
        )
    return grids


def _returns_of(day: Union[ReturnGrid, Sequence[float], np.ndarray]) -> np.ndarray:
    returns = day.returns if isinstance(day, ReturnGrid) else day
    return np.asarray(returns, dtype=float)


def bipower_variation(day: Union[ReturnGrid, Sequence[float], np.ndarray]) -> float:
    """Variation bi-puissance : μ1^-2 Σ |r_t| |r_{t-1}|"""
    r = np.abs(_returns_of(day))
    if r.size < 2:
        raise DataError(f"Rendements intrajournaliers insuffisants ({r.size} < 2)")
    return float(np.sum(r[1:] * r[:-1]) / MU1 ** 2)


def realized_variance(day: Union[ReturnGrid, Sequence[float], np.ndarray]) -> float:
    """Variance réalisée Σ r_t²"""
    r = _returns_of(day)
    if r.size < 1:
        raise DataError("Aucun rendement intrajournalier")
    return float(np.sum(r ** 2))


def daily_realized_measures(grids: Sequence[ReturnGrid]) -> pd.DataFrame:
    """Mesures journalières (rv, bpv) indexées par date ; jours à moins de 2 rendements écartés"""
    rows = []
    for g in grids:
        if len(g) < 2:
            log_event(
                logger, "day_skipped", logging.WARNING,
                symbol=g.symbol, day=g.trading_day.isoformat(), reason="fewer_than_2_returns",
            )
            continue
        rows.append({"date": pd.Timestamp(g.trading_day), "rv": realized_variance(g), "bpv": bipower_variation(g)})
    frame = pd.DataFrame(rows, columns=["date", "rv", "bpv"])
    return frame.set_index("date")


def _as_daily_series(symbol: str, daily) -> pd.Series:
    if isinstance(daily, pd.DataFrame):
        daily = daily["bpv"]
    if isinstance(daily, pd.Series):
        series = daily.astype(float)
        series.index = pd.DatetimeIndex(series.index)
    else:
        pairs = list(daily)
        series = pd.Series(
            [float(v) for _, v in pairs],
            index=pd.DatetimeIndex([pd.Timestamp(d) for d, _ in pairs]),
            dtype=float,
        )
    if series.index.has_duplicates:
        raise DataError(f"{symbol}: dates en double dans les mesures journalières")
    return series.rename(symbol)


def build_panel(per_symbol_daily: Mapping[str, object], transform: str = "log") -> VolatilityPanel:
    """Jointure interne des séries journalières et transformation cellule par cellule

    transform = "log" signifie log(sqrt(BPV)) : le panel est à l'échelle de la volatilité.
    """
    if transform not in TRANSFORMS:
        raise ConfigError(f"Transformation inconnue '{transform}' (attendu : raw, sqrt, log)")
    if len(per_symbol_daily) < 2:
        raise DataError("Au moins 2 symboles sont nécessaires pour construire un panel")

    columns = [_as_daily_series(symbol, daily) for symbol, daily in per_symbol_daily.items()]
    frame = pd.concat(columns, axis=1, join="inner").sort_index()
    frame.index.name = "date"
    if frame.empty:
        raise DataError("Intersection des dates vide entre les symboles")

    if transform != "raw":
        bad = frame <= 0
        if bad.to_numpy().any():
            row, col = np.argwhere(bad.to_numpy())[0]
            raise DataError(
                f"Transformation {transform} impossible : BPV non positive pour "
                f"{frame.columns[col]} le {frame.index[row].date().isoformat()}"
            )
        frame = np.sqrt(frame)
        if transform == "log":
            frame = np.log(frame)

    return VolatilityPanel(frame=frame, transform_tag=transform)


def summary_stats(panel: Union[VolatilityPanel, pd.DataFrame]) -> pd.DataFrame:
    """Statistiques descriptives par symbole (statistiques en lignes, symboles en colonnes)

    Le kurtosis est le quatrième moment standardisé brut (non excédentaire).
    """
    frame = panel.frame if isinstance(panel, VolatilityPanel) else panel
    if frame.shape[0] < 2:
        raise DataError("Au moins 2 observations sont nécessaires pour les statistiques descriptives")

    table = pd.DataFrame(index=SUMMARY_ROWS, columns=frame.columns, dtype=float)
    for symbol in frame.columns:
        x = frame[symbol].to_numpy(dtype=float)
        std = float(np.std(x, ddof=1))
        degenerate = x.max() == x.min()
        table.loc["mean", symbol] = float(np.mean(x))
        table.loc["median", symbol] = float(np.median(x))
        table.loc["std", symbol] = 0.0 if degenerate else std
        table.loc["skewness", symbol] = np.nan if degenerate else float(stats.skew(x, bias=True))
        table.loc["kurtosis", symbol] = np.nan if degenerate else float(stats.kurtosis(x, fisher=False, bias=True))
    table.index.name = "statistic"
    return table


def simulate_var_paths(
    phi,
    sigma,
    T: int,
    rngs: Sequence[np.random.Generator],
    intercept=None,
    burn_in: Optional[int] = None,
) -> np.ndarray:
    """Simule len(rngs) trajectoires VAR(p) gaussiennes, forme (R, T, k)

    Chaque trajectoire tire ses innovations de son propre générateur, ce qui rend
    le résultat indépendant de la façon dont les trajectoires sont regroupées.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 2:
        phi = phi[None, :, :]
    p, k, _ = phi.shape
    sigma = np.asarray(sigma, dtype=float)
    c = np.zeros(k) if intercept is None else np.asarray(intercept, dtype=float)

    radius = spectral_radius(phi)
    if radius >= 1.0 - FREQUENCY_CONFIG["stability_margin"]:
        raise UnstableModelError(radius, f"Coefficients VAR instables (rayon spectral {radius:.6f})")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise DataError("La covariance des innovations n'est pas définie positive")

    burn = max(1000, 10 * p) if burn_in is None else burn_in
    total = burn + T
    n_paths = len(rngs)
    eps = np.stack([rng.standard_normal((total, k)) for rng in rngs]) @ chol.T

    y = np.empty((n_paths, total + p, k))
    y[:, :p, :] = unconditional_mean(phi, c)
    for t in range(p, total + p):
        value = c + eps[:, t - p, :]
        for j in range(p):
            value = value + y[:, t - 1 - j, :] @ phi[j].T
        y[:, t, :] = value
    return y[:, p + burn:, :]


def simulate_var(phi, sigma, T: int, rng: np.random.Generator, intercept=None, burn_in: Optional[int] = None) -> np.ndarray:
    """Simule une trajectoire VAR(p), forme (T, k)"""
    return simulate_var_paths(phi, sigma, T, [rng], intercept=intercept, burn_in=burn_in)[0]


def synthetic_dates(T: int, start: str = "2000-01-03") -> pd.DatetimeIndex:
    """T jours ouvrés à partir de start

    Les Timestamp pandas s'arrêtent en 2262 : au-delà, la plage démarre en 1678.
    """
    last = pd.Timestamp.max.normalize()
    if T > len(pd.bdate_range(start, last)):
        earliest = pd.Timestamp(SYNTH_EARLIEST_START)
        capacity = len(pd.bdate_range(earliest, last))
        if T > capacity:
            raise DataError(f"T = {T} dépasse les {capacity} jours ouvrés représentables")
        log_event(logger, "synth_start_moved", logging.WARNING, requested=str(start), start=SYNTH_EARLIEST_START, T=T)
        start = earliest
    return pd.bdate_range(start, periods=T, name="date")


def synth_var_panel(
    coefficients,
    sigma,
    T: int,
    seed: int,
    intercept=None,
    names: Optional[Sequence[str]] = None,
    start: str = "2000-01-03",
) -> VolatilityPanel:
    """Panel synthétique déterministe généré par un VAR stable connu"""
    phi = np.asarray(coefficients, dtype=float)
    if phi.ndim == 2:
        phi = phi[None, :, :]
    k = phi.shape[1]
    names = list(names) if names else [f"V{i + 1}" for i in range(k)]
    if len(names) != k:
        raise DataError(f"{len(names)} noms pour {k} variables")

    dates = synthetic_dates(T, start)
    values = simulate_var(phi, sigma, T, np.random.default_rng(seed), intercept=intercept)
    frame = pd.DataFrame(values, index=dates, columns=names)
    return VolatilityPanel(frame=frame, transform_tag="raw")


def write_panel_csv(panel: VolatilityPanel, path: Union[str, Path]):
    """Écrit le panel au format date,<symbole1>,...,<symbolek>"""
    frame = panel.frame.copy()
    frame.index = pd.DatetimeIndex(frame.index).strftime("%Y-%m-%d")
    frame.index.name = "date"
    frame.to_csv(path, lineterminator="\n")


def read_panel_csv(path: Union[str, Path], transform_tag: str = "log", symbols: Optional[Sequence[str]] = None) -> VolatilityPanel:
    """Lit un panel CSV (date,<symboles>) et en vérifie la cohérence"""
    try:
        frame = pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"Panel introuvable : {path}")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError(f"{path}: panel illisible ({e})")

    if frame.columns[0] != "date":
        raise DataError(f"{path}: la première colonne doit être 'date'")
    dates = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        row = int(np.flatnonzero(dates.isna().to_numpy())[0])
        raise DataError(f"{path}: ligne {row + 2} : date invalide '{frame['date'].iloc[row]}'")
    frame = frame.drop(columns="date").set_index(pd.DatetimeIndex(dates, name="date"))

    if symbols:
        missing = [s for s in symbols if s not in frame.columns]
        if missing:
            raise DataError(f"{path}: symboles absents du panel : {', '.join(missing)}")
        frame = frame[list(symbols)]

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    if numeric.isna().to_numpy().any():
        row, col = np.argwhere(numeric.isna().to_numpy())[0]
        raise DataError(f"{path}: ligne {row + 2} : valeur manquante ou invalide pour {frame.columns[col]}")
    return VolatilityPanel(frame=numeric.astype(float), transform_tag=transform_tag)
