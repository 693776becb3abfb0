"""
VolScope - connectedness des volatilités dans les domaines temporel et fréquentiel
"""

__version__ = "1.0.0"
