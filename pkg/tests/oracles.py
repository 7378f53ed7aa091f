"""Independent reference computations used by the test suite.

Everything here works from 4x4 matrices, explicit sampling or a generic LP
solver, never from the closed forms used inside the package.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def sigma(n):
    return n[0] * SX + n[1] * SY + n[2] * SZ


def singlet_matrix():
    psi = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)
    return np.outer(psi, psi.conj())


def werner_matrix(w):
    return w * singlet_matrix() + (1 - w) * np.eye(4) / 4


def steer_matrix(rho, m, outcome):
    """Born-rule steering by the projector on the second qubit; returns (p, bloch)."""
    proj = 0.5 * (I2 + outcome * sigma(m))
    op = np.kron(I2, proj)
    p = np.trace(op @ rho).real
    sub = (op @ rho).reshape(2, 2, 2, 2)
    rho_a = np.einsum("ijkj->ik", sub) / p
    return p, np.array([np.trace(rho_a @ s).real for s in (SX, SY, SZ)])


def random_directions(n, seed):
    v = np.random.default_rng(seed).normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def brute_force_steered(rho, n, seed):
    """Steered Bloch vectors for ``n`` random projective directions, both outcomes."""
    pts = []
    for m in random_directions(n, seed):
        for o in (1, -1):
            p, r = steer_matrix(rho, m, o)
            if p > 1e-9:
                pts.append(r)
    return np.array(pts)


STRATS = list(itertools.product((-1, 1), repeat=4))


def linprog_feasible(mean_a, mean_b, corr, p_m, p_mp):
    """LHV feasibility of a CHSH-scenario table via scipy's LP solver."""
    rows, rhs = [], []
    rows.append([1.0] * 16)
    rhs.append(1.0)
    rows.append([s[0] for s in STRATS])
    rhs.append(mean_a)
    rows.append([s[1] for s in STRATS])
    rhs.append(mean_b)
    rows.append([s[2] for s in STRATS])
    rhs.append(2 * p_m - 1)
    rows.append([s[3] for s in STRATS])
    rhs.append(2 * p_mp - 1)
    for k, (i, j) in enumerate(((0, 2), (1, 2), (0, 3), (1, 3))):
        rows.append([s[i] * s[j] for s in STRATS])
        rhs.append(corr[k])
    res = linprog(np.zeros(16), A_eq=np.array(rows, float), b_eq=np.array(rhs), bounds=[(0, None)] * 16, method="highs")
    return res.status == 0


def ellipse_grid_ell_max(adotb, n=200_001):
    """max over preparations of min of the four ℓ terms at c = a.b, sampling the Bloch circle in span(a, b)."""
    theta = np.arccos(adotb)
    a = np.array([1.0, 0.0])
    b = np.array([np.cos(theta), np.sin(theta)])
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    r = np.stack([np.cos(t), np.sin(t)], axis=1)
    A, B = r @ a, r @ b
    c = adotb
    t1 = np.max(A + B) - 1 - c
    t2 = np.max(-A - B) - 1 - c
    t3 = np.max(A - B) - 1 + c
    t4 = np.max(-A + B) - 1 + c
    return min(t1, t2, t3, t4)


def random_consistent_counts(rng, max_count=50):
    """Counts N(alpha, beta | E_x) for E+, E-, E'+, E'- satisfying locality bookkeeping."""
    whole = rng.integers(0, max_count, size=(2, 2))
    split = rng.integers(0, whole + 1)
    split_p = rng.integers(0, whole + 1)
    return split, whole - split, split_p, whole - split_p, whole
