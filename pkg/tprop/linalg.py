"""
Dense linear algebra helpers on float64 numpy arrays.

Matrices are 2-D arrays, vectors are 1-D arrays. Everything that draws random
numbers takes an ``Rng`` so that runs are reproducible from a seed alone.
"""

import logging
import zlib
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError, NumericalError, ParameterError

logger = logging.getLogger(__name__)

Shape = Union[int, Tuple[int, ...]]

JACOBI_MAX_SWEEPS = 80
POWER_MAX_ITER = 20000


class Rng:
    """
    Counter-based random stream.

    Backed by numpy's Philox bit generator. ``split(name)`` derives an
    independent child stream, so data shuffling, noise injection and unit
    sampling never share draws.
    """

    def __init__(self, seed: int, path: Sequence[int] = ()):
        if seed < 0:
            raise ParameterError(f"Seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.path: Tuple[int, ...] = tuple(int(p) for p in path)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def split(self, name: str) -> "Rng":
        """Return the child stream called ``name``."""
        return Rng(self.seed, self.path + (zlib.crc32(name.encode("utf-8")),))

    def standard_normal(self, shape: Shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def normal(self, shape: Shape, sigma: float) -> np.ndarray:
        return sigma * self._gen.standard_normal(shape)

    def uniform(self, shape: Shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def bernoulli(self, prob: np.ndarray) -> np.ndarray:
        """Sample 0/1 values, each one with the matching probability."""
        return (self._gen.random(np.shape(prob)) < prob).astype(np.float64)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, k: int) -> np.ndarray:
        """Choose ``k`` distinct indices from ``range(n)``."""
        return self._gen.choice(n, size=k, replace=False)

    def integers(self, low: int, high: int, shape: Shape) -> np.ndarray:
        return self._gen.integers(low, high, shape)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"


def _check_finite(name: str, a: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"{name} produced non-finite entries")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Checked matrix product ``a @ b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", a.shape, b.shape)
    return _check_finite("matmul", a @ b)


def orthogonal_init(rows: int, cols: int, gain: float, rng: Rng) -> np.ndarray:
    """
    Random matrix with orthonormal rows (rows <= cols) or columns (rows > cols).

    QR of a Gaussian matrix; the columns of Q are flipped so that R has a
    positive diagonal, which makes the result a deterministic function of the
    draws.
    """
    if rows < 1 or cols < 1:
        raise ParameterError(f"orthogonal_init needs positive sizes, got {rows}x{cols}")
    tall = (max(rows, cols), min(rows, cols))
    a = rng.standard_normal(tall)
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    if rows < cols:
        q = q.T
    return gain * np.ascontiguousarray(q)


def gaussian_noise(shape: Shape, sigma: float, rng: Rng) -> np.ndarray:
    """I.i.d. N(0, sigma^2) draws; sigma == 0 gives zeros without touching the stream."""
    if sigma < 0:
        raise ParameterError(f"Noise sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return np.zeros(shape)
    return rng.normal(shape, sigma)


def _round_robin(n: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Pairings of ``n`` (even) columns so every pair meets once per sweep."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        left = players[: n // 2]
        right = players[n // 2:][::-1]
        p = np.array([min(x, y) for x, y in zip(left, right)])
        q = np.array([max(x, y) for x, y in zip(left, right)])
        rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def svd_singular_values(a: np.ndarray) -> np.ndarray:
    """
    Singular values in nonincreasing order by one-sided Jacobi.

    Columns are orthogonalised pairwise with plane rotations; disjoint pairs
    of a round are rotated together.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise DimensionError("svd_singular_values", a.shape)
    work = a.T.copy() if a.shape[0] < a.shape[1] else a.copy()
    n = work.shape[1]
    if n == 1:
        return np.array([np.linalg.norm(work[:, 0])])
    padded = n % 2 == 1
    if padded:
        work = np.hstack([work, np.zeros((work.shape[0], 1))])
    rounds = _round_robin(work.shape[1])
    tol = np.finfo(np.float64).eps * work.shape[1]

    for sweep in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for p, q in rounds:
            ap, aq = work[:, p], work[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            scale = np.sqrt(alpha * beta)
            active = (gamma != 0) & (np.abs(gamma) > tol * scale)
            if not np.any(active):
                continue
            rotated = True
            zeta = np.where(active, (beta - alpha) / np.where(active, 2 * gamma, 1.0), 0.0)
            sign = np.where(zeta >= 0, 1.0, -1.0)
            t = np.where(active, sign / (np.abs(zeta) + np.sqrt(1 + zeta * zeta)), 0.0)
            c = 1.0 / np.sqrt(1 + t * t)
            s = c * t
            work[:, p] = c * ap - s * aq
            work[:, q] = s * ap + c * aq
        if not rotated:
            logger.debug("Jacobi SVD converged after %d sweeps", sweep + 1)
            break
    else:
        raise NumericalError(f"Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps")

    values = np.sqrt(np.einsum("ij,ij->j", work, work))
    if padded:
        values = values[:n]
    return np.sort(values)[::-1]


def jacobi_eigenvalues_sym(a: np.ndarray) -> np.ndarray:
    """All eigenvalues of a symmetric matrix (classical two-sided Jacobi), descending."""
    a = np.array(a, dtype=np.float64)
    _check_symmetric(a)
    n = a.shape[0]
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= np.finfo(np.float64).eps * max(np.linalg.norm(a), 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1))
                c = 1.0 / np.sqrt(t * t + 1)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    else:
        raise NumericalError("Jacobi eigensolver did not converge")
    return np.sort(np.diag(a))[::-1]


def _check_symmetric(a: np.ndarray, tol: float = 1e-10) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError("symmetric eigenproblem", a.shape)
    if a.size and np.max(np.abs(a - a.T)) > tol:
        raise ParameterError("Matrix is not symmetric within 1e-10")


def largest_eigenvalue_sym(a: np.ndarray, tol: float = 1e-14) -> float:
    """
    Dominant eigenvalue of a symmetric matrix by power iteration.

    The start vector is fixed (a ramp), so the result depends on ``a`` only.
    """
    a = np.asarray(a, dtype=np.float64)
    _check_symmetric(a)
    n = a.shape[0]
    v = 1.0 + np.arange(n) / max(n, 1)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(POWER_MAX_ITER):
        w = a @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        new_lam = float(v @ w)
        v = w / norm
        if abs(new_lam - lam) <= tol * max(1.0, abs(new_lam)):
            return new_lam
        lam = new_lam
    logger.warning("Power iteration stopped at the iteration cap; eigenvalue %.3e", lam)
    return lam


def condition_number(a: np.ndarray) -> float:
    """Ratio of largest to smallest singular value (inf if singular)."""
    values = svd_singular_values(a)
    if values[-1] == 0.0:
        return float("inf")
    return float(values[0] / values[-1])


def vec(a: np.ndarray) -> np.ndarray:
    """Row-major flattening."""
    return np.asarray(a, dtype=np.float64).reshape(-1)


def cosine(a: np.ndarray, b: np.ndarray, fallback: Optional[float] = None) -> float:
    """Cosine of the angle between two arrays viewed as vectors."""
    na, nb = np.linalg.norm(vec(a)), np.linalg.norm(vec(b))
    if na == 0.0 or nb == 0.0:
        if fallback is None:
            raise NumericalError("cosine of a zero vector is undefined")
        return fallback
    return float(vec(a) @ vec(b) / (na * nb))
