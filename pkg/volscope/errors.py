"""
Exceptions de VolScope
Chaque classe porte le code de sortie utilisé par la ligne de commande
"""


class VolScopeError(Exception):
    """Erreur de base de VolScope"""

    exit_code = 2


class ConfigError(VolScopeError):
    """Configuration ou usage invalide (bandes, paramètres, options)"""

    exit_code = 1


class DataError(VolScopeError):
    """Données d'entrée invalides ou insuffisantes"""

    exit_code = 2


class NumericError(VolScopeError):
    """Échec numérique (instabilité, rang, dénominateur nul)"""

    exit_code = 3


class UnstableModelError(NumericError):
    """Modèle VAR instable : rayon spectral du compagnon trop proche de 1"""

    def __init__(self, spectral_radius: float, message: str = None):
        self.spectral_radius = spectral_radius
        super().__init__(
            message or f"Modèle VAR instable (rayon spectral {spectral_radius:.6f} >= 1 - 1e-8)"
        )


class RankDeficientError(NumericError):
    """Matrice des régresseurs de rang incomplet"""
