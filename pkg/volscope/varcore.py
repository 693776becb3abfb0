"""
Estimation VAR(p) par moindres carrés, stabilité et représentation de Wold
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular

from volscope.config import ESTIMATION_CONFIG, FREQUENCY_CONFIG, log_event
from volscope.errors import DataError, RankDeficientError, UnstableModelError

logger = logging.getLogger(__name__)


def companion_matrix(phi: np.ndarray) -> np.ndarray:
    """Matrice compagnon kp x kp des coefficients Φ1..Φp"""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 2:
        phi = phi[None, :, :]
    p, k, _ = phi.shape
    companion = np.zeros((k * p, k * p))
    companion[:k, :] = np.hstack(list(phi))
    if p > 1:
        companion[k:, :-k] = np.eye(k * (p - 1))
    return companion


def spectral_radius(phi: np.ndarray) -> float:
    """Rayon spectral de la matrice compagnon"""
    return float(np.max(np.abs(np.linalg.eigvals(companion_matrix(phi)))))


def unconditional_mean(phi: np.ndarray, intercept: np.ndarray) -> np.ndarray:
    """Moyenne inconditionnelle (I - Σ Φj)^-1 c d'un VAR stable"""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 2:
        phi = phi[None, :, :]
    k = phi.shape[1]
    return np.linalg.solve(np.eye(k) - phi.sum(axis=0), np.asarray(intercept, dtype=float))


@dataclass(frozen=True, eq=False)
class VarModel:
    """VAR(p) estimé : constante, matrices Φ1..Φp, covariance Σ des résidus"""

    intercept: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray
    n_obs: int
    variable_names: List[str]
    include_intercept: bool = True
    residuals: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim == 2:
            phi = phi[None, :, :]
        sigma = np.asarray(self.sigma, dtype=float)
        k = phi.shape[1]
        if phi.shape[1:] != (k, k) or sigma.shape != (k, k):
            raise DataError(f"Dimensions incohérentes : phi {phi.shape}, sigma {sigma.shape}")
        if len(self.variable_names) != k:
            raise DataError(f"{len(self.variable_names)} noms pour {k} variables")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "sigma", 0.5 * (sigma + sigma.T))
        object.__setattr__(self, "intercept", np.asarray(self.intercept, dtype=float).reshape(k))
        object.__setattr__(self, "variable_names", [str(n) for n in self.variable_names])

    @property
    def k(self) -> int:
        return self.phi.shape[1]

    @property
    def p(self) -> int:
        return self.phi.shape[0]

    def companion(self) -> np.ndarray:
        return companion_matrix(self.phi)

    def to_document(self) -> Dict[str, Any]:
        """Document structuré (matrices en lignes) pour l'audit"""
        report = stability(self)
        return {
            "k": self.k,
            "p": self.p,
            "variable_names": list(self.variable_names),
            "include_intercept": self.include_intercept,
            "intercept": self.intercept.tolist(),
            "phi": [m.tolist() for m in self.phi],
            "sigma": self.sigma.tolist(),
            "n_obs": int(self.n_obs),
            "stability": {"stable": report.stable, "spectral_radius": report.spectral_radius},
        }

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> "VarModel":
        try:
            return cls(
                intercept=np.asarray(document["intercept"], dtype=float),
                phi=np.asarray(document["phi"], dtype=float),
                sigma=np.asarray(document["sigma"], dtype=float),
                n_obs=int(document.get("n_obs", 0)),
                variable_names=list(document["variable_names"]),
                include_intercept=bool(document.get("include_intercept", True)),
            )
        except KeyError as e:
            raise DataError(f"Document VAR incomplet : champ {e} manquant")


class StabilityReport(NamedTuple):
    stable: bool
    spectral_radius: float


@dataclass(frozen=True, eq=False)
class WoldSequence:
    """Coefficients Ψ0..ΨH de la représentation moyenne mobile tronquée"""

    psi: np.ndarray
    truncation: int

    def __post_init__(self):
        if self.psi.shape[0] != self.truncation + 1:
            raise DataError("La séquence de Wold doit contenir H_trunc + 1 matrices")
        if not np.array_equal(self.psi[0], np.eye(self.psi.shape[1])):
            raise DataError("Ψ0 doit être l'identité")

    @property
    def k(self) -> int:
        return self.psi.shape[1]

    @property
    def tail_ratio(self) -> float:
        """‖Ψ_H‖_F / ‖Ψ_0‖_F"""
        return float(np.linalg.norm(self.psi[-1]) / np.linalg.norm(self.psi[0]))


def _as_matrix(panel) -> Tuple[np.ndarray, List[str]]:
    if hasattr(panel, "frame"):
        panel = panel.frame
    if isinstance(panel, pd.DataFrame):
        return panel.to_numpy(dtype=float), [str(c) for c in panel.columns]
    values = np.asarray(panel, dtype=float)
    return values, [f"V{i + 1}" for i in range(values.shape[1])]


def fit_var(panel, p: int = ESTIMATION_CONFIG["lags"], include_intercept: bool = ESTIMATION_CONFIG["intercept"]) -> VarModel:
    """Estimation équation par équation par MCO (décomposition QR)

    Σ = E'E / (T - p) : diviseur de type maximum de vraisemblance, sans correction
    des degrés de liberté.
    """
    y, names = _as_matrix(panel)
    if y.ndim != 2:
        raise DataError("Le panel doit être une matrice T x k")
    T, k = y.shape
    if p < 1:
        raise DataError(f"Ordre de retard invalide : {p}")
    if T - p < k * p + 1:
        raise DataError(f"Échantillon insuffisant : T - p = {T - p} < k*p + 1 = {k * p + 1}")

    lags = [y[p - j - 1:T - j - 1] for j in range(p)]
    if include_intercept:
        lags.insert(0, np.ones((T - p, 1)))
    Z = np.hstack(lags)
    Y = y[p:]

    Q, R = np.linalg.qr(Z)
    diag = np.abs(np.diag(R))
    tolerance = max(Z.shape) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    if diag.size == 0 or diag.max() == 0.0 or (diag <= tolerance).any():
        raise RankDeficientError(
            f"Matrice des régresseurs de rang incomplet ({int((diag > tolerance).sum())} < {Z.shape[1]} colonnes)"
        )
    B = solve_triangular(R, Q.T @ Y)
    residuals = Y - Z @ B
    sigma = residuals.T @ residuals / (T - p)

    offset = 1 if include_intercept else 0
    intercept = B[0] if include_intercept else np.zeros(k)
    phi = np.stack([B[offset + j * k:offset + (j + 1) * k].T for j in range(p)])
    return VarModel(
        intercept=intercept,
        phi=phi,
        sigma=sigma,
        n_obs=T - p,
        variable_names=names,
        include_intercept=include_intercept,
        residuals=residuals,
    )


def stability(model: VarModel) -> StabilityReport:
    """Rayon spectral du compagnon et prédicat rayon < 1 - ε"""
    radius = spectral_radius(model.phi)
    return StabilityReport(radius < 1.0 - FREQUENCY_CONFIG["stability_margin"], radius)


def wold(model: VarModel, h_trunc: int = ESTIMATION_CONFIG["htrunc"], check_tail: bool = True) -> WoldSequence:
    """Ψ0 = I, Ψh = Σ_{j=1..min(h,p)} Φj Ψ_{h-j} ; la constante n'intervient pas"""
    report = stability(model)
    if not report.stable:
        raise UnstableModelError(report.spectral_radius)

    k, p = model.k, model.p
    psi = np.zeros((h_trunc + 1, k, k))
    psi[0] = np.eye(k)
    for h in range(1, h_trunc + 1):
        for j in range(1, min(h, p) + 1):
            psi[h] += model.phi[j - 1] @ psi[h - j]

    sequence = WoldSequence(psi=psi, truncation=h_trunc)
    if check_tail and sequence.tail_ratio >= FREQUENCY_CONFIG["tail_tolerance"]:
        log_event(
            logger, "wold_tail_not_negligible", logging.WARNING,
            h_trunc=h_trunc, tail_ratio=sequence.tail_ratio, spectral_radius=report.spectral_radius,
        )
    return sequence


def model_from_parameters(
    phi: Sequence, sigma: Sequence, intercept: Optional[Sequence] = None, names: Optional[Sequence[str]] = None
) -> VarModel:
    """VarModel à partir de paramètres connus (vérité d'une simulation)"""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 2:
        phi = phi[None, :, :]
    k = phi.shape[1]
    return VarModel(
        intercept=np.zeros(k) if intercept is None else np.asarray(intercept, dtype=float),
        phi=phi,
        sigma=np.asarray(sigma, dtype=float),
        n_obs=0,
        variable_names=list(names) if names else [f"V{i + 1}" for i in range(k)],
        include_intercept=intercept is not None,
    )
