"""Closed-form isoperimetric lower bounds, the (alpha, beta) recursion and time constants.

All logarithms are natural.  The universal constants ``c`` and ``c_lv`` are
not pinned down numerically anywhere, so both are parameters (default 1) and
every table echoes them.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .linalg import is_symmetric
from .report import CheckRecord

LN2 = math.log(2.0)


@dataclass(frozen=True)
class BoundParams:
    alpha: float = 4.0
    beta: float = 0.5
    ell: int = 1
    q: int | None = None
    c: float = 1.0
    d: int = 1

    def __post_init__(self):
        if not 0 < self.beta <= 0.5:
            raise PreconditionError("beta must lie in (0, 1/2]")
        if self.alpha < 1:
            raise PreconditionError("alpha must be >= 1")
        if self.ell < 1 or self.d < 1 or self.c <= 0:
            raise PreconditionError("need ell >= 1, d >= 1 and c > 0")
        if self.q is None:
            object.__setattr__(self, "q", q_from_beta(self.beta))


@dataclass(frozen=True)
class BoundResult:
    name: str
    d: int
    value: float
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value > 0):
            raise ValueError(f"{self.name} produced a non-positive or non-finite value")


def q_from_beta(beta: float) -> int:
    # 1/beta is often an integer up to rounding (beta = 1/3 etc.)
    return math.ceil(1.0 / beta - 1e-12) + 1


def _spd_eigs(A) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1] or not is_symmetric(A, 1e-12):
        raise PreconditionError("A must be a symmetric square matrix")
    lam = np.linalg.eigvalsh(A)
    if lam[0] <= 0:
        raise PreconditionError("A must be positive definite")
    return lam


def kls_original_bound(A) -> float:
    """``log(2) / sqrt(tr A)``."""
    return LN2 / math.sqrt(float(np.sum(_spd_eigs(A))))


def lee_vempala_bound(A, c_lv: float = 1.0) -> float:
    """``c_lv / tr(A^2)^(1/4)``."""
    if c_lv <= 0:
        raise PreconditionError("c_lv must be positive")
    return c_lv / float(np.sum(_spd_eigs(A) ** 2)) ** 0.25


def main_theorem_log_bound(d: float, ell: int, c: float = 1.0, spec_norm: float = 1.0,
                           log_d: float | None = None) -> float:
    """Log of ``1 / ([c ell (log d + 1)]^(ell/2) d^(16/ell) sqrt(||A||))``.

    ``log_d`` may be passed directly for dimensions beyond float range.
    """
    if ell < 1 or c <= 0 or spec_norm <= 0:
        raise PreconditionError("need ell >= 1, c > 0 and spec_norm > 0")
    L = math.log(d) if log_d is None else float(log_d)
    if L < 0:
        raise PreconditionError("d must be >= 1")
    return -(ell / 2.0) * math.log(c * ell * (L + 1.0)) - (16.0 / ell) * L - 0.5 * math.log(spec_norm)


def main_theorem_bound(d: float, ell: int, c: float = 1.0, spec_norm: float = 1.0) -> float:
    return math.exp(main_theorem_log_bound(d, ell, c, spec_norm))


def ell_formula(log_d: float) -> int:
    """``ceil(sqrt(log d / log log d))``."""
    return math.ceil(math.sqrt(log_d / math.log(log_d)))


@dataclass(frozen=True)
class OptimalEll:
    ell_star: int
    exponent: float  # bound = d^(-exponent) at ell_star with ||A|| = 1
    scan_argmax: int
    scan_exponent: float


def optimal_ell(d: float | None = None, c: float = 1.0, log_d: float | None = None) -> OptimalEll:
    """The closed-form ``ell*`` plus a direct scan of the bound over ``[1, 10 ell*]``."""
    L = math.log(d) if log_d is None else float(log_d)
    if L < math.log(16.0) - 1e-12:
        raise PreconditionError("optimal_ell needs d >= 16 (log log d must be clearly positive)")
    ell = ell_formula(L)
    vals = [main_theorem_log_bound(0, k, c, 1.0, log_d=L) for k in range(1, 10 * ell + 1)]
    best = int(np.argmax(vals)) + 1
    return OptimalEll(ell, -vals[ell - 1] / L, best, -vals[best - 1] / L)


@dataclass
class RecursionResult:
    beta: np.ndarray  # beta[l-1] = beta_l
    log_alpha: np.ndarray
    c: float
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations

    def alpha(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_alpha)

    def record(self) -> CheckRecord:
        return CheckRecord(
            check="recursion_bounds", statistic=float(len(self.violations)), threshold=0.0,
            status="pass" if self.passed else "fail", violations=len(self.violations), hard=True,
            details={"ell_max": int(self.beta.size), "c": self.c,
                     "first_violations": self.violations[:10]},
        )


def recursion_sequences(ell_max: int, c: float = 1.0) -> RecursionResult:
    """``alpha_(l+1) = 2c alpha_l beta_l^(-1/2)``, ``beta_(l+1) = beta_l - beta_l^2/16``.

    Starts from ``alpha_1 = 4``, ``beta_1 = 1/2``; alpha is kept in log space.
    Every ``l`` is tested against ``1/(l+1) <= beta_l <= 16/l`` and
    ``log alpha_l <= (l/2) log(4 c^2 l)``; failures are listed, not raised.
    """
    if ell_max < 1 or c <= 0:
        raise PreconditionError("need ell_max >= 1 and c > 0")
    beta = np.empty(ell_max)
    la = np.empty(ell_max)
    beta[0], la[0] = 0.5, math.log(4.0)
    for k in range(1, ell_max):
        b = beta[k - 1]
        beta[k] = b - b * b / 16.0
        la[k] = la[k - 1] + math.log(2.0 * c) - 0.5 * math.log(b)
    viol = []
    for k in range(ell_max):
        ell = k + 1
        if not 1.0 / (ell + 1) <= beta[k]:
            viol.append((ell, "beta_lower"))
        if not beta[k] <= 16.0 / ell:
            viol.append((ell, "beta_upper"))
        if not la[k] <= 0.5 * ell * math.log(4.0 * c * c * ell):
            viol.append((ell, "alpha_upper"))
    return RecursionResult(beta, la, c, viol)


@dataclass(frozen=True)
class TimeConstants:
    q: int
    T1: float
    T2: float
    identity_residual: float  # T2 * 1310720 q a^2 log d d^(2b - b/(4q)) - 1
    in_regime: bool


def time_constants(d: int, alpha: float = 4.0, beta: float = 0.5) -> TimeConstants:
    """``T1 = 1/(32768 q a^2 log d d^(2b))`` and ``T2 = d^(b/(4q)) T1 / 40``."""
    if alpha < 1 or not 0 < beta <= 0.5:
        raise PreconditionError("need alpha >= 1 and beta in (0, 1/2]")
    if d < 2:
        raise PreconditionError("log(d) vanishes for d = 1")
    in_regime = d >= 3
    if not in_regime:
        warnings.warn("time constants are derived for d >= 3; small d is covered by the trace bound",
                      stacklevel=2)
    q = q_from_beta(beta)
    L = math.log(d)
    T1 = 1.0 / (32768.0 * q * alpha**2 * L * d ** (2 * beta))
    T2 = d ** (beta / (4 * q)) / 40.0 * T1
    closed = 1310720.0 * q * alpha**2 * L * d ** (2 * beta - beta / (4 * q))
    return TimeConstants(q, T1, T2, T2 * closed - 1.0, in_regime)


# ---------------------------------------------------------------------------
# comparison table
# ---------------------------------------------------------------------------


TABLE_HEADER = ("d", "kls_original", "lee_vempala", "main_thm", "ell_star", "exponent")


def _main_at_star(L: float, c: float) -> tuple[int, float]:
    ell = ell_formula(L) if L >= math.log(16.0) - 1e-12 else 1
    return ell, main_theorem_log_bound(0, ell, c, 1.0, log_d=L)


def crossover_log_d(c: float = 1.0, c_lv: float = 1.0, L_max: float = 1e7) -> float | None:
    """Smallest ``log d`` where the bound at ``ell*`` first beats ``c_lv d^(-1/4)``."""
    def gap(L):
        return _main_at_star(L, c)[1] - (math.log(c_lv) - 0.25 * L)

    lo = math.log(16.0)
    if gap(lo) > 0:
        return lo
    grid = np.unique(np.concatenate([np.arange(lo, min(L_max, 1e6), 1.0),
                                     np.geomspace(1e6, L_max, 64) if L_max > 1e6 else []]))
    prev = grid[0]
    for L in grid[1:]:
        if gap(L) > 0:
            # ell* is piecewise constant; bisect inside [prev, L]
            a, b = prev, L
            for _ in range(200):
                m = 0.5 * (a + b)
                if gap(m) > 0:
                    b = m
                else:
                    a = m
                if b - a <= 1e-9 * b:
                    break
            return b
        prev = L
    return None


@dataclass
class ComparisonTable:
    rows: list  # tuples in TABLE_HEADER order
    sidecar: dict


def comparison_table(d_list, c: float = 1.0, c_lv: float = 1.0) -> ComparisonTable:
    """Trace bound, Lee-Vempala bound and the main bound at ``ell*`` for ``A = I_d``."""
    d_list = list(d_list)
    if not d_list:
        raise PreconditionError("d_list must be nonempty")
    rows = []
    for d in d_list:
        if d < 1:
            raise PreconditionError("dimensions must be >= 1")
        L = math.log(d)
        ell, lv = _main_at_star(L, c)
        rows.append((
            d, LN2 / math.sqrt(d), c_lv * d ** -0.25, math.exp(lv), ell,
            -lv / L if L > 0 else math.nan,
        ))
    cross = crossover_log_d(c, c_lv)
    sidecar = {
        "constants": {"c": c, "c_lv": c_lv, "log": "natural", "spec_norm": 1.0},
        "crossover": {
            "log_d": cross,
            "log10_d": None if cross is None else cross / math.log(10.0),
            "ell_star": None if cross is None else _main_at_star(cross, c)[0],
        },
        "beats_lee_vempala": [bool(r[3] > r[2]) for r in rows],
    }
    return ComparisonTable(rows, sidecar)
