"""Independent reference implementations used only by the tests.

Nothing here may import from wsnadapt's numeric kernels: these exist to
cross-check them.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np


def gauss_solve(a, b) -> np.ndarray:
    """Gaussian elimination with partial pivoting (dense, no factor reuse)."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = a.shape[0]
    aug = np.hstack([a, b.reshape(-1, 1)])
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[pivot, col] == 0.0:
            raise ZeroDivisionError("singular matrix")
        if pivot != col:
            aug[[col, pivot]] = aug[[pivot, col]]
        for row in range(col + 1, n):
            factor = aug[row, col] / aug[col, col]
            aug[row, col:] -= factor * aug[col, col:]
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (aug[row, n] - aug[row, row + 1 : n] @ x[row + 1 : n]) / aug[row, row]
    return x


def jacobi_eigenvalues(a, sweeps: int = 50, tol: float = 1e-14) -> np.ndarray:
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    m = np.array(a, dtype=float)
    n = m.shape[0]
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(m, -1) ** 2))
        if off < tol * max(1.0, np.max(np.abs(np.diag(m)))):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if m[p, q] == 0.0:
                    continue
                theta = 0.5 * np.arctan2(2.0 * m[p, q], m[q, q] - m[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                m = rot.T @ m @ rot
    return np.sort(np.diag(m))


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    yc = y - y.mean()
    return float((xc @ yc) / np.sqrt((xc @ xc) * (yc @ yc)))


def quadratic_error(ruu, rdu, sigma_d_sq, w) -> float:
    """Direct evaluation of the estimation error sigma^2 - 2 r.w + w.R.w."""
    w = np.asarray(w, dtype=float)
    return float(sigma_d_sq - 2.0 * (np.asarray(rdu) @ w) + w @ (np.asarray(ruu) @ w))


def best_accuracy_per_size(ruu, rdu, sigma_d_sq) -> dict[int, float]:
    """Exhaustive best-subset accuracy for every subset size (small m only)."""
    m = np.asarray(ruu).shape[0]
    best: dict[int, float] = {}
    for size in range(1, m + 1):
        top = -np.inf
        for subset in combinations(range(m), size):
            idx = list(subset)
            sub_r = np.asarray(ruu)[np.ix_(idx, idx)]
            sub_d = np.asarray(rdu)[idx]
            w = gauss_solve(sub_r, sub_d)
            acc = 1.0 - quadratic_error(sub_r, sub_d, sigma_d_sq, w) / sigma_d_sq
            top = max(top, acc)
        best[size] = top
    return best


def random_spd(rng: np.random.Generator, n: int, jitter: float = 1e-3) -> np.ndarray:
    m = rng.normal(size=(n, n))
    return m @ m.T + jitter * np.eye(n)


def random_layout(rng: np.random.Generator, m: int, side: float = 4.0, min_sep: float = 0.3):
    """Node positions with a minimum pairwise separation (keeps SPD healthy)."""
    points: list[tuple[float, float]] = []
    while len(points) < m + 1:  # last point doubles as the sink
        cand = tuple(rng.uniform(0.0, side, 2))
        if all(np.hypot(cand[0] - p[0], cand[1] - p[1]) >= min_sep for p in points):
            points.append(cand)
    return points[:m], points[m]
