"""
Connectedness dans le domaine fréquentiel
Réponse en fréquence, GFEVD par fréquence, agrégation par bandes, mesures within et absolues

Convention jours <-> fréquence : une période de D jours correspond à ω = π/D
(la frontière π/5 sépare les mouvements de moins de 5 jours des plus longs).

Grille : points milieux ω_m = π(m - 1/2)/N, m = 1..N. Pour H_trunc < 2N la moyenne sur
la grille intègre exactement les polynômes trigonométriques de degré H_trunc, de sorte
que la table de la bande complète coïncide avec la GFEVD temporelle (H = H_trunc + 1).

Γ(d) est la somme des parts de la bande divisée par la somme des parts inconditionnelles ;
ce rapport vaut (1/k) Σ (θ̃_d)_ij uniquement parce que les lignes inconditionnelles somment à 1.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from volscope.config import ESTIMATION_CONFIG, FREQUENCY_CONFIG
from volscope.errors import ConfigError, DataError, NumericError, UnstableModelError
from volscope.timedomain import ConnectednessTable, DyMeasures, directional_measures, dy_measures, gfevd
from volscope.varcore import VarModel, WoldSequence, stability, wold

logger = logging.getLogger(__name__)

MIN_FREQUENCIES = 64
PARTITION_TOLERANCE = 1e-12
STANDARDIZATIONS = ("global", "per_frequency")


@dataclass(frozen=True)
class BandSpec:
    """Bande de fréquences (lower, upper] en radians"""

    lower: float
    upper: float
    label: str = ""

    def __post_init__(self):
        if not (0.0 <= self.lower < self.upper <= math.pi):
            raise ConfigError(f"Bande invalide ({self.lower}, {self.upper}] : il faut 0 <= a < b <= pi")
        if not self.label:
            object.__setattr__(self, "label", f"({self.lower:.4f}, {self.upper:.4f}]")

    def contains(self, frequencies: np.ndarray) -> np.ndarray:
        return (frequencies > self.lower) & (frequencies <= self.upper)


def days_to_band(short_days: float, long_days: float = math.inf) -> BandSpec:
    """Bande (π/long, π/short] pour des mouvements de short à long jours"""
    if short_days < 1:
        raise ConfigError(f"Période de {short_days} jour(s) au-delà de Nyquist pour des données journalières")
    if not short_days < long_days:
        raise ConfigError(f"Bande invalide : {short_days:g} jours >= {long_days:g} jours")
    lower = 0.0 if math.isinf(long_days) else math.pi / long_days
    label = f"{short_days:g}+ days" if math.isinf(long_days) else f"{short_days:g}–{long_days:g} days"
    return BandSpec(lower=lower, upper=math.pi / short_days, label=label)


def parse_band_string(text: str) -> List[BandSpec]:
    """Lit une liste 'court:long,...' en jours ('inf' accepté côté long)"""
    bands = []
    for item in str(text).split(","):
        item = item.strip()
        try:
            short_text, long_text = item.split(":")
            short_days, long_days = float(short_text), float(long_text)
        except ValueError:
            raise ConfigError(f"Bande invalide '{item}' (format attendu court:long en jours)")
        bands.append(days_to_band(short_days, long_days))
    if not bands:
        raise ConfigError("Aucune bande définie")
    return bands


def is_partition(bands: Sequence[BandSpec]) -> bool:
    """Vrai si les bandes forment une partition de (0, π] en intervalles disjoints"""
    ordered = sorted(bands, key=lambda b: b.lower)
    if not ordered or abs(ordered[0].lower) > PARTITION_TOLERANCE:
        return False
    if abs(ordered[-1].upper - math.pi) > PARTITION_TOLERANCE:
        return False
    return all(abs(a.upper - b.lower) <= PARTITION_TOLERANCE for a, b in zip(ordered, ordered[1:]))


def frequency_grid(n_freq: int) -> np.ndarray:
    """Points milieux π(m - 1/2)/N, m = 1..N"""
    return math.pi * (np.arange(1, n_freq + 1) - 0.5) / n_freq


def frequency_response(wold: WoldSequence, omega: float) -> np.ndarray:
    """Ψ(e^{-iω}) = Σ_h Ψh e^{-ihω}"""
    if not 0.0 <= omega <= math.pi:
        raise DataError(f"Fréquence {omega} hors de [0, pi]")
    phases = np.exp(-1j * omega * np.arange(wold.truncation + 1))
    return np.tensordot(phases, wold.psi, axes=(0, 0))


def spectral_density(wold: WoldSequence, sigma: np.ndarray, omega: float) -> np.ndarray:
    """S(ω) = Ψ(e^{-iω}) Σ Ψ(e^{-iω})*"""
    response = frequency_response(wold, omega)
    return response @ np.asarray(sigma, dtype=float) @ response.conj().T


def _clip_negative(values: np.ndarray, what: str) -> np.ndarray:
    tolerance = FREQUENCY_CONFIG["clip_tolerance"] * max(1.0, float(np.abs(values).max(initial=0.0)))
    if (values < -tolerance).any():
        raise NumericError(f"{what} négatif au-delà de la tolérance d'arrondi ({values.min():.3e})")
    return np.where(values < 0.0, 0.0, values)


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Numérateurs n_ij(ω) et dénominateurs d_i(ω) de la GFEVD sur la grille"""

    frequencies: np.ndarray
    numerator: np.ndarray
    denominator: np.ndarray
    h_trunc: int
    n_freq: int
    variable_names: List[str]

    @property
    def k(self) -> int:
        return self.numerator.shape[1]

    def integrated_variance(self) -> np.ndarray:
        """(1/π) ∫ (Ψ Σ Ψ*)_ii dω, approchée par la moyenne sur la grille"""
        return self.denominator.mean(axis=0)


def spectral_gfevd(model: VarModel, wold: WoldSequence, n_freq: int = FREQUENCY_CONFIG["nfreq"]) -> SpectralGrid:
    """GFEVD non normalisée à chaque fréquence de la grille (réponse calculée par FFT)"""
    if n_freq < MIN_FREQUENCIES:
        raise ConfigError(f"N_freq = {n_freq} < {MIN_FREQUENCIES}")
    if wold.truncation + 1 > 2 * n_freq:
        raise ConfigError(f"H_trunc + 1 = {wold.truncation + 1} dépasse 2 * N_freq = {2 * n_freq}")
    report = stability(model)
    if not report.stable:
        raise UnstableModelError(report.spectral_radius)

    sigma = model.sigma
    scale = np.diag(sigma)
    if (scale <= 0).any():
        raise NumericError("Variance résiduelle non positive")

    # Ψ(ω_m) = Σ_h [Ψh e^{iπh/2N}] e^{-2iπ h m / 2N}
    h = np.arange(wold.truncation + 1)
    modulated = wold.psi * np.exp(1j * math.pi * h / (2 * n_freq))[:, None, None]
    response = np.fft.fft(modulated, n=2 * n_freq, axis=0)[1:n_freq + 1]

    weighted = response @ sigma
    numerator = np.abs(weighted) ** 2 / scale[None, None, :]
    denominator = _clip_negative((weighted * response.conj()).sum(axis=2).real, "Dénominateur spectral")

    return SpectralGrid(
        frequencies=frequency_grid(n_freq),
        numerator=numerator,
        denominator=denominator,
        h_trunc=wold.truncation,
        n_freq=n_freq,
        variable_names=list(model.variable_names),
    )


@dataclass(frozen=True, eq=False)
class BandTable:
    """Table intégrée sur une bande : brute et standardisée (θ̃_d)"""

    band: BandSpec
    raw: np.ndarray
    theta: np.ndarray
    n_points: int


def _full_band_raw(grid: SpectralGrid) -> np.ndarray:
    return grid.numerator.mean(axis=0) / grid.integrated_variance()[:, None]


def band_table(grid: SpectralGrid, band: BandSpec, standardization: str = "global") -> BandTable:
    """∫_a^b θ(ω) dω par somme sur les points de la bande, puis standardisation

    "global" divise par les sommes de lignes de la table intégrée sur (0, π] : les
    tables d'une partition s'additionnent alors exactement à la table inconditionnelle.
    "per_frequency" normalise chaque θ(ω) avant intégration (diagnostic uniquement).
    """
    if standardization not in STANDARDIZATIONS:
        raise ConfigError(f"Standardisation inconnue : {standardization}")
    mask = band.contains(grid.frequencies)
    n_points = int(mask.sum())
    if n_points == 0:
        raise ConfigError(
            f"La bande {band.label} ne contient aucun point de la grille ; augmenter N_freq (actuel {grid.n_freq})"
        )

    variance = grid.integrated_variance()
    if (variance <= 0).any():
        raise NumericError("Variance de prévision intégrée nulle")
    raw = grid.numerator[mask].sum(axis=0) / grid.n_freq / variance[:, None]

    if standardization == "global":
        theta = raw / _full_band_raw(grid).sum(axis=1, keepdims=True)
    else:
        rows = grid.numerator[mask].sum(axis=2, keepdims=True)
        per_omega = np.divide(grid.numerator[mask], rows, out=np.zeros_like(grid.numerator[mask]), where=rows > 0)
        theta = per_omega.sum(axis=0) / grid.n_freq

    return BandTable(band=band, raw=raw, theta=theta, n_points=n_points)


def unconditional_table(grid: SpectralGrid) -> ConnectednessTable:
    """Table inconditionnelle (bande complète (0, π])"""
    raw = _full_band_raw(grid)
    return ConnectednessTable(
        theta=raw / raw.sum(axis=1, keepdims=True),
        horizon_tag="unconditional",
        variable_names=list(grid.variable_names),
        raw=raw,
    )


@dataclass(frozen=True, eq=False)
class BandMeasures:
    """Mesures within (C^d, from, to, net, pairwise), poids Γ(d) et mesures absolues C̃^d"""

    band: BandSpec
    within_table: np.ndarray
    normalized_table: np.ndarray
    within_total: float
    within_from: np.ndarray
    within_to: np.ndarray
    within_net: np.ndarray
    within_pairwise: np.ndarray
    gamma: float
    absolute_total: float
    absolute_from: np.ndarray
    absolute_to: np.ndarray
    absolute_net: np.ndarray
    absolute_pairwise: np.ndarray

    @property
    def defined(self) -> bool:
        return self.gamma > 0.0


def measures_from_band_table(table: BandTable) -> BandMeasures:
    """Mesures d'une bande à partir de sa table θ̃_d

    Les mesures within se lisent sur θ̃_d / Γ(d) (lignes de somme moyenne 1) ;
    les mesures absolues valent within · Γ(d).
    """
    theta_d = table.theta
    k = theta_d.shape[0]
    mass = float(theta_d.sum())

    if mass <= 0.0:
        undefined = np.full(k, np.nan)
        zeros = np.zeros(k)
        return BandMeasures(
            band=table.band,
            within_table=theta_d,
            normalized_table=np.full((k, k), np.nan),
            within_total=float("nan"),
            within_from=undefined,
            within_to=undefined.copy(),
            within_net=undefined.copy(),
            within_pairwise=np.full((k, k), np.nan),
            gamma=0.0,
            absolute_total=0.0,
            absolute_from=zeros,
            absolute_to=zeros.copy(),
            absolute_net=zeros.copy(),
            absolute_pairwise=np.zeros((k, k)),
        )

    gamma = min(mass / k, 1.0)
    normalized = theta_d * (k / mass)
    within_from, within_to, within_net, within_pairwise = directional_measures(normalized)
    within_total = float(1.0 - np.trace(theta_d) / mass)
    absolute_from = within_from * gamma
    absolute_to = within_to * gamma
    return BandMeasures(
        band=table.band,
        within_table=theta_d,
        normalized_table=normalized,
        within_total=within_total,
        within_from=within_from,
        within_to=within_to,
        within_net=within_net,
        within_pairwise=within_pairwise,
        gamma=gamma,
        absolute_total=within_total * gamma,
        absolute_from=absolute_from,
        absolute_to=absolute_to,
        absolute_net=absolute_to - absolute_from,
        absolute_pairwise=within_pairwise * gamma,
    )


def band_measures(grid: SpectralGrid, band: BandSpec, standardization: str = "global") -> BandMeasures:
    return measures_from_band_table(band_table(grid, band, standardization))


@dataclass(frozen=True, eq=False)
class FrequencyReport:
    """Résultat complet sur un échantillon : domaine temporel, bandes et réconciliation"""

    model: VarModel
    time_table: ConnectednessTable
    time_measures: DyMeasures
    bands: List[BandMeasures]
    reconciliation: Optional[float]
    tail_ratio: float


def frequency_connectedness(
    model: VarModel,
    bands: Sequence[BandSpec],
    h_trunc: int = ESTIMATION_CONFIG["htrunc"],
    n_freq: int = FREQUENCY_CONFIG["nfreq"],
    standardization: str = "global",
    check_tail: bool = True,
) -> FrequencyReport:
    """Mesures temporelles (tous les termes MA retenus) et fréquentielles d'un modèle

    reconciliation = |Σ_d C̃^d - C| lorsque les bandes forment une partition.
    """
    sequence = wold(model, h_trunc, check_tail=check_tail)
    time_table = gfevd(model, sequence, h_trunc + 1)
    time_measures = dy_measures(time_table)
    grid = spectral_gfevd(model, sequence, n_freq)
    results = [band_measures(grid, band, standardization) for band in bands]

    reconciliation = None
    if is_partition(bands):
        reconciliation = abs(sum(r.absolute_total for r in results) - time_measures.total)
    return FrequencyReport(
        model=model,
        time_table=time_table,
        time_measures=time_measures,
        bands=results,
        reconciliation=reconciliation,
        tail_ratio=sequence.tail_ratio,
    )
