"""
VolScope - point d'entrée en ligne de commande
"""
import sys

from volscope.cli import run

if __name__ == "__main__":
    sys.exit(run())
