"""
Connectedness dans le domaine temporel
Réponses impulsionnelles généralisées, GFEVD à l'horizon H et mesures DY
"""

from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from volscope.errors import DataError, NumericError
from volscope.varcore import VarModel, WoldSequence

ROW_SUM_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class ConnectednessTable:
    """Parts standardisées θ (ligne i = variable receveuse, colonne j = source du choc)"""

    theta: np.ndarray
    horizon_tag: Union[int, str]
    variable_names: List[str]
    raw: Optional[np.ndarray] = None

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        k = len(self.variable_names)
        if theta.shape != (k, k):
            raise DataError(f"Table de connectedness {theta.shape} incompatible avec {k} variables")
        if not np.allclose(theta.sum(axis=1), 1.0, rtol=0.0, atol=ROW_SUM_TOLERANCE):
            raise NumericError("Les lignes de la table de connectedness ne somment pas à 1")
        if (theta < 0).any() or (theta > 1.0 + ROW_SUM_TOLERANCE).any():
            raise NumericError("Parts de variance hors de [0, 1]")
        object.__setattr__(self, "theta", theta)

    @property
    def k(self) -> int:
        return self.theta.shape[0]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.theta, index=self.variable_names, columns=self.variable_names)


@dataclass(frozen=True, eq=False)
class DyMeasures:
    """Mesures total / from / to / net / pairwise sur une table standardisée"""

    total: float
    from_others: np.ndarray
    to_others: np.ndarray
    net: np.ndarray
    pairwise: np.ndarray


def girf(model: VarModel, wold: WoldSequence, j: int, h: int) -> np.ndarray:
    """Réponse à un choc généralisé d'un écart-type sur la variable j : σ_jj^-1/2 Ψh Σ e_j"""
    if not 0 <= j < model.k:
        raise DataError(f"Indice de variable invalide : {j}")
    if not 0 <= h <= wold.truncation:
        raise DataError(f"Horizon {h} hors de [0, {wold.truncation}]")
    sigma_jj = model.sigma[j, j]
    if sigma_jj <= 0:
        raise NumericError(f"Variance non positive pour la variable {model.variable_names[j]}")
    return wold.psi[h] @ model.sigma[:, j] / np.sqrt(sigma_jj)


def gfevd(model: VarModel, wold: WoldSequence, H: int) -> ConnectednessTable:
    """GFEVD à H périodes (termes h = 0..H-1), puis standardisation des lignes"""
    if not 1 <= H <= wold.truncation + 1:
        raise DataError(f"Horizon H={H} hors de [1, {wold.truncation + 1}]")
    sigma = model.sigma
    scale = np.diag(sigma)
    if (scale <= 0).any():
        raise NumericError("Variance résiduelle non positive")

    psi = wold.psi[:H]
    response = psi @ sigma
    numerator = (response ** 2).sum(axis=0) / scale[None, :]
    # (Ψh Σ Ψh')_ii
    denominator = (response * psi).sum(axis=(0, 2))
    if (denominator <= 0).any():
        raise NumericError("Variance de l'erreur de prévision nulle")

    raw = numerator / denominator[:, None]
    theta = raw / raw.sum(axis=1, keepdims=True)
    return ConnectednessTable(theta=theta, horizon_tag=H, variable_names=list(model.variable_names), raw=raw)


def directional_measures(theta: np.ndarray):
    """From / to / net / pairwise d'une table (sans normalisation)"""
    diagonal = np.diag(theta)
    from_others = theta.sum(axis=1) - diagonal
    to_others = theta.sum(axis=0) - diagonal
    # C_ij = θ_ji - θ_ij
    pairwise = theta.T - theta
    return from_others, to_others, to_others - from_others, pairwise


def dy_measures(table: ConnectednessTable) -> DyMeasures:
    """Mesures de connectedness temporelle : total = 1 - Σ θ_ii / k"""
    theta = table.theta
    from_others, to_others, net, pairwise = directional_measures(theta)
    return DyMeasures(
        total=float(1.0 - np.trace(theta) / table.k),
        from_others=from_others,
        to_others=to_others,
        net=net,
        pairwise=pairwise,
    )


def spillover_frame(table: ConnectednessTable, measures: Optional[DyMeasures] = None) -> pd.DataFrame:
    """Table de spillover avec marges TO / FROM / NET"""
    measures = measures or dy_measures(table)
    frame = table.to_frame()
    frame["FROM"] = measures.from_others
    frame.loc["TO"] = list(measures.to_others) + [measures.from_others.sum()]
    frame["NET"] = list(measures.net) + [measures.total]
    frame.index.name = "receiver"
    return frame
