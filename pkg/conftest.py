"""
Fixtures partagées des tests VolScope
"""

import numpy as np
import pytest

from volscope.varcore import model_from_parameters

PHI_2X2 = [[0.5, 0.2], [0.1, 0.5]]
SIGMA_CORRELATED = [[1.0, 0.5], [0.5, 1.0]]


def random_stable_model(rng: np.random.Generator, k: int, p: int, max_radius: float = 0.9):
    """VAR(p) aléatoire ramené à un rayon spectral <= max_radius"""
    from volscope.varcore import spectral_radius

    phi = rng.normal(scale=0.3, size=(p, k, k))
    radius = spectral_radius(phi)
    if radius > max_radius:
        # Φj -> c^j Φj multiplie les valeurs propres du compagnon par c
        c = max_radius / radius
        phi = np.stack([c ** (j + 1) * phi[j] for j in range(p)])
    a = rng.normal(size=(k, k))
    sigma = a @ a.T + 0.1 * np.eye(k)
    return model_from_parameters(phi, sigma)


@pytest.fixture
def two_var_model():
    return model_from_parameters([PHI_2X2], np.eye(2))


@pytest.fixture
def white_noise_model():
    return model_from_parameters(np.zeros((1, 2, 2)), SIGMA_CORRELATED)


@pytest.fixture
def diagonal_model():
    return model_from_parameters([np.diag([0.6, 0.3, -0.2])], np.diag([1.0, 2.0, 0.5]))


@pytest.fixture(scope="session")
def model_fleet():
    """200 VAR stables aléatoires (k dans {2, 3, 5}, p dans {1, 2})"""
    rng = np.random.default_rng(20240101)
    shapes = [(k, p) for k in (2, 3, 5) for p in (1, 2)]
    return [random_stable_model(rng, *shapes[i % len(shapes)]) for i in range(200)]


def _offdiag(k, value):
    return value * (np.ones((k, k)) - np.eye(k))


# (identifiant, [Φ1, ..., Φp], Σ) : petits VAR stables écrits à la main
HAND_MODELS = [
    ("white_noise_correlated", [np.zeros((2, 2))], SIGMA_CORRELATED),
    ("phi2x2_identity", [PHI_2X2], np.eye(2)),
    ("phi2x2_correlated", [PHI_2X2], SIGMA_CORRELATED),
    ("persistent_diagonal", [np.diag([0.9, 0.1])], np.eye(2)),
    ("triangular", [[[0.2, 0.6], [0.0, 0.3]]], [[2.0, 0.3], [0.3, 0.5]]),
    ("mixed_signs", [[[-0.5, 0.1], [0.2, 0.4]]], [[1.0, -0.4], [-0.4, 1.0]]),
    ("rotation", [[[0.7, -0.3], [0.3, 0.7]]], np.diag([1.0, 3.0])),
    ("diagonal_3", [np.diag([0.6, 0.3, -0.2])], np.diag([1.0, 2.0, 0.5])),
    ("chain_3", [[[0.5, 0.1, 0.0], [0.0, 0.4, 0.1], [0.1, 0.0, 0.3]]],
     [[1.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.0]]),
    ("symmetric_3", [0.3 * np.eye(3) + _offdiag(3, 0.2)], np.eye(3)),
    ("nilpotent_3", [[[0.0, 0.0, 0.0], [0.8, 0.0, 0.0], [0.0, 0.8, 0.0]]], np.eye(3)),
    ("white_noise_3", [np.zeros((3, 3))], [[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]]),
    ("var2_upper", [[[0.5, 0.1], [0.0, 0.4]], [[0.2, 0.0], [0.1, 0.1]]], np.eye(2)),
    ("var2_rotation", [[[0.3, -0.2], [0.2, 0.3]], [[-0.2, 0.0], [0.0, 0.3]]], SIGMA_CORRELATED),
    ("var2_second_lag_only", [np.zeros((2, 2)), np.diag([0.8, -0.5])], [[2.0, 1.0], [1.0, 2.0]]),
    ("var2_complex_roots", [np.diag([1.2, 0.5]), np.diag([-0.5, 0.1])], [[1.0, 0.2], [0.2, 0.5]]),
    ("var2_dense_3", [0.3 * np.eye(3) + _offdiag(3, 0.05), np.full((3, 3), 0.1)], np.eye(3) + _offdiag(3, 0.3)),
    ("var2_sparse_3", [[[0.4, 0.0, 0.1], [0.1, 0.2, 0.0], [0.0, 0.3, 0.1]],
                       [[0.0, 0.1, 0.0], [0.0, 0.0, 0.2], [0.1, 0.0, 0.0]]], np.diag([1.0, 0.5, 2.0])),
    ("band_4", [0.5 * np.eye(4) + 0.1 * np.eye(4, k=1)], np.eye(4) + _offdiag(4, 0.2)),
    ("var3", [[[0.3, 0.1], [0.0, 0.2]], [[0.1, 0.0], [0.1, 0.1]], [[0.1, 0.0], [0.0, 0.1]]],
     [[1.0, 0.3], [0.3, 2.0]]),
]
HAND_MODEL_IDS = [name for name, _, _ in HAND_MODELS]


def direct_gfevd(phi, sigma, H):
    """GFEVD standardisée par sommation directe

    Ψh est lu dans le bloc supérieur gauche de A^h (A matrice compagnon construite
    ici), puis les sommes sont faites terme à terme dans des boucles explicites.
    """
    phi = [np.asarray(m, dtype=float) for m in phi]
    sigma = np.asarray(sigma, dtype=float)
    k, p = len(sigma), len(phi)
    companion = np.zeros((k * p, k * p))
    for j, block in enumerate(phi):
        companion[:k, j * k:(j + 1) * k] = block
    for j in range(p - 1):
        companion[(j + 1) * k:(j + 2) * k, j * k:(j + 1) * k] = np.eye(k)

    psis = []
    power = np.eye(k * p)
    for _ in range(H):
        psis.append(power[:k, :k].copy())
        power = power @ companion

    table = np.zeros((k, k))
    for i in range(k):
        mse = 0.0
        for psi in psis:
            for a in range(k):
                for b in range(k):
                    mse += psi[i, a] * sigma[a, b] * psi[i, b]
        for j in range(k):
            acc = 0.0
            for psi in psis:
                acc += sum(psi[i, a] * sigma[a, j] for a in range(k)) ** 2
            table[i, j] = acc / sigma[j, j] / mse
    return table / table.sum(axis=1, keepdims=True)
