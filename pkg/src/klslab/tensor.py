"""Third-moment tensor ``T_p(A, B, C)`` and the inequalities built on it.

``T_p(A, B, C) = E[(X-mu)'A(Y-mu) * (X-mu)'B(Y-mu) * (X-mu)'C(Y-mu)]`` for
``X, Y`` independent draws from ``p``.  On an atomic measure this is an exact
double sum.  Two evaluation routes are provided:

* ``pairs``: the literal ``n x n`` sum (cost ``O(n^2 d)``, capped);
* ``factored``: eigendecompose ``C = sum_k lam_k u_k u_k'`` and use
  ``T = sum_k lam_k tr(D_k A D_k B)`` with ``D_k = E[(u_k'X) X X']``
  (cost ``O(n d^3)``).

Checks split in two groups.  Hard gates (the trace inequality and the slot
swap) hold for every centered atomic measure, so a violation is a bug.
Statistical checks (vector bound, isoperimetric and strong log-concavity
bounds, Delta-matrix traces) rely on log-concavity of the continuous law and
are flagged against a slack factor instead.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, PairSumCapError, PreconditionError
from .linalg import is_symmetric, require_psd, spec_norm, sqrtm_psd, sym, sym_power
from .measures import AtomicMeasure
from .report import CheckRecord

PAIR_SUM_CAP = 4000
DEFAULT_SLACK = 1.1


def _centered(measure: AtomicMeasure) -> np.ndarray:
    return measure.points - measure.mean()


def _check_args(d: int, *mats) -> list[np.ndarray]:
    out = []
    for m in mats:
        m = np.asarray(m, dtype=float)
        if m.shape != (d, d):
            raise DimensionError(f"tensor argument has shape {m.shape}, expected {(d, d)}")
        out.append(m)
    return out


def delta_stack(y: np.ndarray, w: np.ndarray, basis: np.ndarray | None = None) -> np.ndarray:
    """``D[k] = sum_i w_i (y_i @ u_k) y_i y_i'`` for the columns ``u_k`` of ``basis``.

    ``y`` must already be centered.  ``basis`` defaults to the identity.
    """
    n, d = y.shape
    proj = y if basis is None else y @ basis
    outer = (y[:, :, None] * y[:, None, :]).reshape(n, d * d)
    return ((proj * w[:, None]).T @ outer).reshape(-1, d, d)


def tensor_from_deltas(deltas: np.ndarray, lam: np.ndarray, A: np.ndarray, B: np.ndarray) -> float:
    # sum_k lam_k tr(D_k A D_k B)
    left = deltas @ A
    right = deltas @ B
    return float(np.einsum("k,kij,kji->", lam, left, right))


def three_tensor(measure: AtomicMeasure, A_arg, B_arg, C_arg, method: str = "factored",
                 pair_cap: int = PAIR_SUM_CAP) -> float:
    """Exact ``T_p(A, B, C)`` on a (re-centered) atomic measure."""
    d = measure.dim
    A, B, C = _check_args(d, A_arg, B_arg, C_arg)
    y = _centered(measure)
    w = measure.weights
    if method == "pairs":
        if measure.n > pair_cap:
            raise PairSumCapError(f"{measure.n} atoms exceed the pair-sum cap {pair_cap}")
        ga = y @ A @ y.T
        gb = y @ B @ y.T
        gc = y @ C @ y.T
        return float(w @ (ga * gb * gc) @ w)
    if method != "factored":
        raise ValueError(f"unknown method {method!r}")
    if is_symmetric(C, 1e-12):
        lam, vec = np.linalg.eigh(sym(C))
        return tensor_from_deltas(delta_stack(y, w, vec), lam, A, B.T)
    # nonsymmetric C: expand in the coordinate basis on both sides
    y_c = y @ C.T
    n = y.shape[0]
    outer = (y[:, :, None] * y[:, None, :]).reshape(n, d * d)
    left = ((y * w[:, None]).T @ outer).reshape(d, d, d)
    right = ((y_c * w[:, None]).T @ outer).reshape(d, d, d)
    # T = sum_k tr(L_k A R_k' B')
    return float(np.einsum("kij,jl,kml,mi->", left, A, right, B.T))


@dataclass(frozen=True)
class DeltaMatrix:
    delta: np.ndarray
    v: np.ndarray


def _isotropic_gap(measure: AtomicMeasure) -> float:
    return spec_norm(measure.covariance() - np.eye(measure.dim))


def delta_matrix(measure_whitened: AtomicMeasure, v, iso_tol: float = 0.05) -> DeltaMatrix:
    """``Delta = E[(X'v) X X']``; meant for isotropic measures, warns otherwise."""
    v = np.asarray(v, dtype=float)
    if v.shape != (measure_whitened.dim,):
        raise DimensionError("direction has the wrong dimension")
    gap = _isotropic_gap(measure_whitened)
    if gap > iso_tol:
        # still an exact weighted sum; only the trace bounds assume isotropy
        warnings.warn(f"measure is not isotropic (||cov - I|| = {gap:.3g})", stacklevel=2)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > 1e-12:
        warnings.warn(f"direction has norm {norm:.6g}; normalizing", stacklevel=2)
        v = v / norm
    x = measure_whitened.points
    w = measure_whitened.weights * (x @ v)
    return DeltaMatrix(sym((x * w[:, None]).T @ x), v)


# ---------------------------------------------------------------------------
# hard gates
# ---------------------------------------------------------------------------


@dataclass
class GateResult:
    passed: bool
    lhs: float
    rhs: float
    tol: float

    def record(self, name: str, **extra) -> CheckRecord:
        return CheckRecord(
            check=name, statistic=self.lhs - self.rhs, threshold=self.tol,
            status="pass" if self.passed else "fail", lhs=self.lhs, rhs=self.rhs,
            hard=True, **extra,
        )


def check_trace_inequality(G, F, delta: float) -> GateResult:
    """``tr(G^delta F G^(1-delta) F) <= tr(G F^2)`` for PSD ``G``, symmetric ``F``."""
    G = require_psd(G, "G")
    F = np.asarray(F, dtype=float)
    if F.shape != G.shape or not is_symmetric(F, 1e-9):
        raise PreconditionError("F must be symmetric with the shape of G")
    if not 0.0 <= delta <= 1.0:
        raise PreconditionError("delta must lie in [0, 1]")
    F = sym(F)
    lam, vec = np.linalg.eigh(G)
    lam = np.clip(lam, 0.0, None)
    Fd = vec.T @ F @ vec
    sq = Fd * Fd
    lhs = float(lam**delta @ sq @ lam ** (1.0 - delta))
    rhs = float(np.trace(G @ F @ F))
    tol = 1e-10 * (1.0 + abs(rhs))
    return GateResult(bool(lhs <= rhs + tol), lhs, rhs, tol)


def check_tensor_swap(measure: AtomicMeasure, A_arg, B_arg, C_arg, delta: float) -> GateResult:
    """``T(B^.5 A^d B^.5, B^.5 A^(1-d) B^.5, C) <= T(B^.5 A B^.5, B, C)``."""
    if not 0.0 <= delta <= 1.0:
        raise PreconditionError("delta must lie in [0, 1]")
    A = require_psd(A_arg, "A")
    B = require_psd(B_arg, "B")
    C = require_psd(C_arg, "C")
    Bh = sqrtm_psd(B)
    lhs = three_tensor(measure, Bh @ sym_power(A, delta) @ Bh, Bh @ sym_power(A, 1.0 - delta) @ Bh, C)
    rhs = three_tensor(measure, Bh @ A @ Bh, B, C)
    tol = 1e-9 * max(abs(lhs), abs(rhs))
    return GateResult(bool(lhs <= rhs + tol), lhs, rhs, tol)


# ---------------------------------------------------------------------------
# moment comparison
# ---------------------------------------------------------------------------


def centered_moment_norm(source, c: float, direction=None) -> tuple[float, str]:
    """``(E|X - mu|^c)^(1/c)`` by quadrature (1-d Density) or sample mean (array)."""
    from scipy import integrate

    from .measures import Density

    if isinstance(source, Density):
        if source.dim != 1 and direction is None:
            raise PreconditionError("quadrature mode needs a 1-d density or a direction")
        u = np.ones(1) if direction is None else np.asarray(direction, float)
        marg = source.marginal(u)
        if not marg.exact:
            raise PreconditionError("quadrature needs an exact marginal")
        mu = marg.mean
        f = lambda x: abs(x - mu) ** c * float(marg.pdf(np.array([x]))[0])
        lo, hi = _marginal_support(source, u)
        pieces = [p for p in (lo, mu, hi) if np.isfinite(p)]
        total = 0.0
        edges = [lo] + [p for p in pieces if lo < p < hi] + [hi]
        for a, b in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(f, a, b, limit=200, epsabs=1e-13, epsrel=1e-12)
            total += val
        return total ** (1.0 / c), "quadrature"
    x = np.asarray(source, dtype=float)
    if x.ndim == 2:
        if direction is None:
            raise PreconditionError("multivariate samples need a direction")
        x = x @ np.asarray(direction, float)
    return float(np.mean(np.abs(x - x.mean()) ** c)) ** (1.0 / c), "samples"


def _marginal_support(density, u) -> tuple[float, float]:
    p = density.params
    if density.family == "uniform-box":
        ends = np.stack([u * p["low"], u * p["high"]])
        return float(ends.min(axis=0).sum()), float(ends.max(axis=0).sum())
    if density.family == "uniform-ball":
        m = float(u @ density.mean)
        r = p["radius"] * float(np.linalg.norm(u))
        return m - r, m + r
    if density.family == "product-exponential" and np.count_nonzero(u) == 1:
        i = int(np.flatnonzero(u)[0])
        start = u[i] * p["loc"][i]
        return (start, math.inf) if u[i] > 0 else (-math.inf, start)
    return -math.inf, math.inf


@dataclass
class MomentResult:
    passed: bool
    lhs: float
    rhs: float
    mode: str
    a: float
    b: float


def check_moment_inequality(source, a: float, b: float, direction=None,
                            tol: float = 1e-6) -> MomentResult:
    """``L_a <= 2 (a / b) L_b`` with ``L_c = (E|X - mu|^c)^(1/c)`` for ``a >= b > 0``."""
    if not a >= b > 0:
        raise PreconditionError("need a >= b > 0")
    la, mode = centered_moment_norm(source, a, direction)
    lb, _ = centered_moment_norm(source, b, direction)
    rhs = 2.0 * (a / b) * lb
    return MomentResult(bool(la <= rhs + tol), la, rhs, mode, a, b)


# ---------------------------------------------------------------------------
# statistical checks (slack-flagged)
# ---------------------------------------------------------------------------


def _flag_record(name: str, lhs: float, rhs: float, slack: float, **extra) -> CheckRecord:
    ok = lhs <= slack * rhs
    margin = rhs / lhs if lhs > 0 else math.inf
    return CheckRecord(
        check=name, statistic=lhs, threshold=slack * rhs, status="pass" if ok else "flag",
        lhs=lhs, rhs=rhs, slack=slack, violations=0 if ok else 1,
        details={"margin": margin, **extra.pop("details", {})}, **extra,
    )


def check_tensor_vector_bound(measure: AtomicMeasure, B_arg, C_arg,
                              slack: float = DEFAULT_SLACK) -> CheckRecord:
    """``||E B^.5 (x-mu)(x-mu)'C(x-mu)|| <= 16 ||A^.5 B A^.5||^.5 tr(A^.5 C A^.5)``."""
    B = require_psd(B_arg, "B")
    C = require_psd(C_arg, "C")
    y = _centered(measure)
    w = measure.weights
    s = np.einsum("ij,jk,ik->i", y, C, y)
    lhs = float(np.linalg.norm(sqrtm_psd(B) @ ((w * s) @ y)))
    A = measure.covariance()
    Ah = sqrtm_psd(A)
    rhs = 16.0 * math.sqrt(spec_norm(Ah @ B @ Ah)) * float(np.trace(Ah @ C @ Ah))
    return _flag_record("tensor_vector_bound", lhs, rhs, slack)


def check_tensor_isoperimetric(measure: AtomicMeasure, q: float, alpha: float = 4.0,
                               beta: float = 0.5, slack: float = DEFAULT_SLACK) -> CheckRecord:
    """``T(A^(q-2), I, I) <= 128 a^2 log(d) d^(2b - 1/q) tr(A^q)^(1 + 1/q)``.

    The left side is evaluated through the whitened form
    ``T_rho(A^(q-1), A, A)`` and cross-checked against the direct sum.
    """
    if q < 1.0 / (2.0 * beta):
        raise PreconditionError(f"need q >= 1/(2 beta) = {1 / (2 * beta):.3g}")
    d = measure.dim
    if d < 2:
        raise PreconditionError("log(d) vanishes for d = 1")
    from .measures import moments_and_whiten

    _, A, white = moments_and_whiten(measure)
    lhs = three_tensor(white, sym_power(A, q - 1), A, A)
    direct = three_tensor(measure, sym_power(A, q - 2), np.eye(d), np.eye(d))
    lam = np.clip(np.linalg.eigvalsh(A), 0.0, None)
    trq = float(np.sum(lam**q))
    rhs = 128.0 * alpha**2 * math.log(d) * d ** (2 * beta - 1.0 / q) * trq ** (1 + 1.0 / q)
    return _flag_record("tensor_isoperimetric", lhs, rhs, slack,
                        details={"direct": direct, "q": q, "alpha": alpha, "beta": beta})


def check_tensor_strong_logconcave(measure: AtomicMeasure, tau: float, q: float,
                                   slack: float = DEFAULT_SLACK) -> CheckRecord:
    """``T(A^(q-2), I, I) <= (4 / tau) tr(A^q)`` for laws more log-concave than N(0, I/tau)."""
    if q < 3:
        raise PreconditionError("the strong log-concavity bound needs q >= 3")
    if tau <= 0:
        raise PreconditionError("tau must be positive")
    d = measure.dim
    A = measure.covariance()
    lhs = three_tensor(measure, sym_power(A, q - 2), np.eye(d), np.eye(d))
    lam = np.clip(np.linalg.eigvalsh(A), 0.0, None)
    rhs = 4.0 / tau * float(np.sum(lam**q))
    return _flag_record("tensor_strong_logconcave", lhs, rhs, slack,
                        details={"tau": tau, "q": q})


def psi_power_law(k: int, alpha: float = 4.0, beta: float = 0.5) -> float:
    """Hypothesised isoperimetric lower bound ``psi_k = 1 / (alpha k^beta)``."""
    return 1.0 / (alpha * k**beta)


def check_trace_delta_bounds(measure_whitened: AtomicMeasure, arg, mode: str = "projection",
                             v=None, alpha: float = 4.0, beta: float = 0.5, psi=None,
                             slack: float = DEFAULT_SLACK) -> CheckRecord:
    """Trace bounds on ``Delta = E (X'v) X X'`` for an isotropic measure.

    ``mode="projection"``: ``tr(D P D) <= 16 psi_{min(2r, d)}^-2`` with ``P`` an
    orthogonal projection of rank ``r``.  ``mode="psd"``:
    ``tr(D M D) <= 128 alpha^2 log(d) tr(M^(1/(2 beta)))^(2 beta)``.

    ``v=None`` scans the coordinate directions and reports the worst ratio.
    """
    d = measure_whitened.dim
    M = np.asarray(arg, dtype=float)
    if M.shape != (d, d):
        raise DimensionError("argument has the wrong shape")
    psi = psi or (lambda k: psi_power_law(k, alpha, beta))
    if mode == "projection":
        if not (is_symmetric(M, 1e-10) and np.max(np.abs(M @ M - M)) <= 1e-10):
            raise PreconditionError("argument is not an orthogonal projection")
        r = int(round(float(np.trace(M))))
        k = min(2 * r, d)
        rhs = 16.0 * psi(k) ** -2 if k > 0 else 0.0
    elif mode == "psd":
        M = require_psd(M, "arg")
        if d < 2:
            raise PreconditionError("log(d) vanishes for d = 1")
        lam = np.clip(np.linalg.eigvalsh(M), 0.0, None)
        rhs = 128.0 * alpha**2 * math.log(d) * float(np.sum(lam ** (1 / (2 * beta)))) ** (2 * beta)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    directions = np.eye(d) if v is None else np.atleast_2d(np.asarray(v, dtype=float))
    worst_lhs, worst_v = -math.inf, None
    for u in directions:
        D = delta_matrix(measure_whitened, u).delta
        val = float(np.trace(D @ M @ D))
        if val > worst_lhs:
            worst_lhs, worst_v = val, u
    return _flag_record(f"trace_delta_{mode}", worst_lhs, rhs, slack,
                        details={"direction": [float(x) for x in worst_v]})
