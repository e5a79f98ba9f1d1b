"""Symmetric-matrix helpers built on ``numpy.linalg.eigh``.

Every fractional or integer power goes through one eigendecomposition with
eigenvalues clamped at zero, so the results are deterministic and symmetric.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, PreconditionError


def sym(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def check_square(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def is_symmetric(m: np.ndarray, tol: float = 1e-12) -> bool:
    m = np.asarray(m, dtype=float)
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    return bool(np.max(np.abs(m - m.T), initial=0.0) <= tol * scale)


def is_psd(m: np.ndarray, tol: float = 1e-10) -> bool:
    m = check_square(m)
    if not is_symmetric(m, tol=1e-9):
        return False
    lam = np.linalg.eigvalsh(sym(m))
    scale = max(1.0, float(np.max(np.abs(lam))))
    return bool(lam[0] >= -tol * scale)


def require_psd(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = check_square(m, name)
    if not is_psd(m):
        raise PreconditionError(f"{name} must be symmetric positive semi-definite")
    return sym(m)


def sym_power(m: np.ndarray, p: float) -> np.ndarray:
    """``m**p`` for symmetric PSD ``m``; negative eigenvalues are clamped to 0.

    ``p = 0`` gives the identity (``0**0 == 1``).
    """
    lam, vec = np.linalg.eigh(sym(m))
    lam = np.clip(lam, 0.0, None)
    if p < 0 and lam[0] <= 0.0:
        raise PreconditionError("negative power of a singular matrix")
    return sym((vec * lam**p) @ vec.T)


def sqrtm_psd(m: np.ndarray) -> np.ndarray:
    return sym_power(m, 0.5)


def inv_sqrtm(m: np.ndarray) -> np.ndarray:
    return sym_power(m, -0.5)


def spec_norm(m: np.ndarray) -> float:
    """Spectral norm of a symmetric matrix."""
    lam = np.linalg.eigvalsh(sym(m))
    return float(max(abs(lam[0]), abs(lam[-1])))


def lambda_min(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(sym(m))[0])


def random_spd(d: int, rng: np.random.Generator, cond: float = 10.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues log-uniform in ``[1, cond]``."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = np.exp(rng.uniform(0.0, np.log(cond), size=d))
    return sym((q * lam) @ q.T)
