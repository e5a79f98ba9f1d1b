"""Log-concave densities, atomic measures, exponential tilts and whitening.

Analytic densities only seed atoms and serve as oracles.  Every quantity the
localization process needs is computed on an :class:`AtomicMeasure`, where it
is a finite weighted sum.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from scipy import special, stats

from .errors import (
    ConstructionError,
    DegenerateCovarianceError,
    DegenerateTiltError,
    DimensionError,
)
from .linalg import inv_sqrtm, is_psd, sym

FAMILIES = ("gaussian", "uniform-box", "uniform-ball", "product-exponential")

#: smallest admissible eigenvalue of an empirical covariance
COV_SINGULAR_TOL = 1e-12


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# one-dimensional marginals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Marginal:
    """Law of ``u @ X`` for a fixed direction ``u``."""

    pdf: Callable[[np.ndarray], np.ndarray]
    cdf: Callable[[np.ndarray], np.ndarray]
    mean: float
    std: float
    exact: bool


def _gaussian_marginal(m: float, s: float) -> Marginal:
    return Marginal(
        pdf=lambda x: stats.norm.pdf(x, loc=m, scale=s),
        cdf=lambda x: stats.norm.cdf(x, loc=m, scale=s),
        mean=m,
        std=s,
        exact=True,
    )


def _irwin_hall_marginal(offset: float, widths: np.ndarray) -> Marginal:
    # Y = offset + sum_i widths_i * V_i with V_i ~ U[0, 1]; inclusion-exclusion
    # over the 2^m box vertices.
    m = len(widths)
    subsets = np.array(
        [[(k >> i) & 1 for i in range(m)] for k in range(2**m)], dtype=float
    )
    shifts = subsets @ widths
    signs = (-1.0) ** subsets.sum(axis=1)
    prod_w = float(np.prod(widths))

    def _sum(x, power):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = x[:, None] - offset - shifts[None, :]
        pos = np.clip(y, 0.0, None)
        if power == 0:
            terms = (y > 0).astype(float)
        else:
            terms = pos**power
        return terms @ signs

    def cdf(x):
        out = _sum(x, m) / (math.factorial(m) * prod_w)
        return np.clip(out, 0.0, 1.0)

    def pdf(x):
        out = _sum(x, m - 1) / (math.factorial(m - 1) * prod_w)
        return np.clip(out, 0.0, None)

    mean = offset + 0.5 * float(widths.sum())
    std = math.sqrt(float(np.sum(widths**2)) / 12.0)
    return Marginal(pdf=pdf, cdf=cdf, mean=mean, std=std, exact=True)


def kde_marginal(samples: np.ndarray, weights: np.ndarray | None = None) -> Marginal:
    """Gaussian-kernel estimate with the normal-reference bandwidth."""
    y = np.asarray(samples, dtype=float).ravel()
    w = np.full(y.size, 1.0 / y.size) if weights is None else np.asarray(weights, float)
    mean = float(w @ y)
    std = math.sqrt(float(w @ (y - mean) ** 2))
    n_eff = 1.0 / float(np.sum(w**2))
    h = 1.06 * std * n_eff ** (-0.2)

    def _apply(x, kernel):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(x.size)
        for start in range(0, x.size, 64):
            blk = x[start : start + 64]
            out[start : start + 64] = kernel((blk[:, None] - y[None, :]) / h) @ w
        return out

    return Marginal(
        pdf=lambda x: _apply(x, lambda u: np.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)) / h,
        cdf=lambda x: _apply(x, special.ndtr),
        mean=mean,
        std=std,
        exact=False,
    )


# ---------------------------------------------------------------------------
# analytic densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Density:
    """Analytic log-concave density with closed-form mean and covariance.

    ``params`` holds the family-specific parameters (``low``/``high`` for the
    box, ``center``/``radius`` for the ball, ``loc``/``rates`` for the
    product exponential, ``mean``/``cov`` for the Gaussian).
    """

    family: str
    mean: np.ndarray
    cov: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def compact(self) -> bool:
        return self.family in ("uniform-box", "uniform-ball")

    def support_radius(self) -> float:
        """Largest distance from the mean to a support point (``inf`` if unbounded)."""
        if self.family == "uniform-ball":
            return float(self.params["radius"])
        if self.family == "uniform-box":
            half = 0.5 * (self.params["high"] - self.params["low"])
            return float(np.linalg.norm(half))
        return math.inf

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = self.params
        if self.family == "uniform-box":
            return np.all((x >= p["low"]) & (x <= p["high"]), axis=1)
        if self.family == "uniform-ball":
            return np.linalg.norm(x - p["center"], axis=1) <= p["radius"]
        if self.family == "product-exponential":
            return np.all(x >= p["loc"], axis=1)
        return np.ones(x.shape[0], dtype=bool)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise DimensionError(f"points have dimension {x.shape[1]}, density {self.dim}")
        p = self.params
        if self.family == "gaussian":
            prec = p["precision"]
            r = x - self.mean
            quad = np.einsum("ij,jk,ik->i", r, prec, r)
            return -0.5 * quad - 0.5 * p["logdet_2pi"]
        inside = self.contains(x)
        if self.family == "uniform-box":
            val = np.full(x.shape[0], -float(np.sum(np.log(p["high"] - p["low"]))))
        elif self.family == "uniform-ball":
            d = self.dim
            log_vol = (d / 2) * math.log(math.pi) - special.gammaln(d / 2 + 1) + d * math.log(p["radius"])
            val = np.full(x.shape[0], -log_vol)
        else:
            rates = p["rates"]
            val = float(np.sum(np.log(rates))) - (x - p["loc"]) @ rates
        return np.where(inside, val, -np.inf)

    def sample(self, n: int, rng=None) -> np.ndarray:
        rng = as_rng(rng)
        d = self.dim
        p = self.params
        if self.family == "gaussian":
            z = rng.standard_normal((n, d))
            return self.mean + z @ p["chol"].T
        if self.family == "uniform-box":
            return p["low"] + rng.random((n, d)) * (p["high"] - p["low"])
        if self.family == "uniform-ball":
            g = rng.standard_normal((n, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            r = p["radius"] * rng.random(n) ** (1.0 / d)
            return p["center"] + g * r[:, None]
        return p["loc"] + rng.standard_exponential((n, d)) / p["rates"]

    def marginal(self, u: np.ndarray, n_kde: int = 100_000, seed=0) -> Marginal:
        """Law of ``u @ X``: exact where a closed form exists, KDE otherwise."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise DimensionError("direction has the wrong dimension")
        m = float(u @ self.mean)
        s = math.sqrt(float(u @ self.cov @ u))
        p = self.params
        if self.family == "gaussian":
            return _gaussian_marginal(m, s)
        if self.family == "uniform-ball":
            d = self.dim
            a = 0.5 * (d + 1)
            scale = 2.0 * p["radius"] * float(np.linalg.norm(u))
            lo = m - 0.5 * scale
            return Marginal(
                pdf=lambda x: stats.beta.pdf(x, a, a, loc=lo, scale=scale),
                cdf=lambda x: stats.beta.cdf(x, a, a, loc=lo, scale=scale),
                mean=m,
                std=s,
                exact=True,
            )
        if self.family == "uniform-box":
            ends = np.stack([u * p["low"], u * p["high"]])
            widths = np.abs(ends[1] - ends[0])
            active = widths > 1e-8 * max(float(widths.max()), 1e-300)
            offset = float(ends.min(axis=0)[active].sum() + ends.mean(axis=0)[~active].sum())
            if 1 <= active.sum() <= 10:
                return _irwin_hall_marginal(offset, widths[active])
        if self.family == "product-exponential":
            nz = np.flatnonzero(np.abs(u) > 0)
            if nz.size == 1:
                i = int(nz[0])
                scale = abs(u[i]) / p["rates"][i]
                start = u[i] * p["loc"][i]
                if u[i] > 0:
                    return Marginal(
                        pdf=lambda x: stats.expon.pdf(x, loc=start, scale=scale),
                        cdf=lambda x: stats.expon.cdf(x, loc=start, scale=scale),
                        mean=m, std=s, exact=True,
                    )
                return Marginal(
                    pdf=lambda x: stats.expon.pdf(-x, loc=-start, scale=scale),
                    cdf=lambda x: stats.expon.sf(-x, loc=-start, scale=scale),
                    mean=m, std=s, exact=True,
                )
        return kde_marginal(self.sample(n_kde, seed) @ u)


def _vec(x, d: int | None, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a vector")
    if d is not None and arr.size == 1 and d > 1:
        arr = np.full(d, float(arr[0]))
    if d is not None and arr.size != d:
        raise DimensionError(f"{name} has length {arr.size}, expected {d}")
    return arr


def construct_density(family: str, params: dict | None = None, **kw) -> Density:
    """Build a :class:`Density`.

    Parameters by family::

        gaussian             mean, cov  (or d for the standard Gaussian)
        uniform-box          low, high  (scalars broadcast with d)
        uniform-ball         radius, center (or d)
        product-exponential  rates, loc (default 0; scalars broadcast with d)
    """
    p = dict(params or {})
    p.update(kw)
    d = p.get("d")
    if family == "gaussian":
        if "cov" in p:
            cov = np.atleast_2d(np.asarray(p["cov"], dtype=float))
            d = cov.shape[0] if d is None else d
        else:
            if d is None:
                raise ConstructionError("gaussian needs cov or d")
            cov = np.eye(d)
        if cov.shape != (d, d):
            raise DimensionError(f"cov has shape {cov.shape}, expected {(d, d)}")
        mean = _vec(p.get("mean", np.zeros(d)), d, "mean")
        if not np.allclose(cov, cov.T, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ConstructionError("covariance is not symmetric")
        cov = sym(cov)
        lam = np.linalg.eigvalsh(cov)
        if lam[0] <= 1e-10:
            raise ConstructionError(f"covariance is not positive definite (min eig {lam[0]:.3g})")
        extra = {
            "precision": np.linalg.inv(cov),
            "chol": np.linalg.cholesky(cov),
            "logdet_2pi": float(d * math.log(2 * math.pi) + np.sum(np.log(lam))),
        }
        return Density("gaussian", mean, cov, {"mean": mean, "cov": cov, **extra})
    if family == "uniform-box":
        if "low" not in p or "high" not in p:
            raise ConstructionError("uniform-box needs low and high")
        low = np.atleast_1d(np.asarray(p["low"], dtype=float))
        high = np.atleast_1d(np.asarray(p["high"], dtype=float))
        d = d if d is not None else max(low.size, high.size)
        low, high = _vec(low, d, "low"), _vec(high, d, "high")
        if np.any(high <= low):
            raise ConstructionError("uniform-box needs high > low in every coordinate")
        cov = np.diag((high - low) ** 2 / 12.0)
        return Density("uniform-box", 0.5 * (low + high), cov, {"low": low, "high": high})
    if family == "uniform-ball":
        radius = float(p.get("radius", 1.0))
        if not radius > 0:
            raise ConstructionError("uniform-ball needs a positive radius")
        if "center" in p:
            center = _vec(p["center"], d, "center")
        elif d is not None:
            center = np.zeros(d)
        else:
            raise ConstructionError("uniform-ball needs center or d")
        d = center.size
        cov = np.eye(d) * radius**2 / (d + 2)
        return Density("uniform-ball", center, cov, {"center": center, "radius": radius})
    if family == "product-exponential":
        if "rates" not in p and d is None:
            raise ConstructionError("product-exponential needs rates or d")
        rates = np.atleast_1d(np.asarray(p.get("rates", 1.0), dtype=float))
        d = d if d is not None else rates.size
        rates = _vec(rates, d, "rates")
        loc = _vec(p.get("loc", 0.0), d, "loc")
        if np.any(rates <= 0):
            raise ConstructionError("product-exponential needs positive rates")
        return Density(
            "product-exponential", loc + 1.0 / rates, np.diag(1.0 / rates**2),
            {"rates": rates, "loc": loc},
        )
    raise ConstructionError(f"unknown family {family!r}; expected one of {FAMILIES}")


@dataclass
class LogConcavityReport:
    passed: bool
    worst_violation: float
    n_checked: int
    worst_pair: tuple | None = None


def check_logconcavity(density, n_pairs: int = 1000, lam_grid: Iterable[float] | None = None,
                       seed=0, tol: float = 1e-9) -> LogConcavityReport:
    """Midpoint-type test of ``log p(l x + (1-l) y) >= l log p(x) + (1-l) log p(y)``.

    ``density`` only needs ``sample(n, rng)`` and ``log_density(x)``, so test
    fixtures that are not log-concave can be passed as well.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    lam = np.linspace(0.0, 1.0, 11) if lam_grid is None else np.asarray(list(lam_grid), float)
    if np.any((lam < 0) | (lam > 1)):
        raise ValueError("lambda grid must lie in [0, 1]")
    rng = as_rng(seed)
    pts = np.asarray(density.sample(2 * n_pairs, rng), dtype=float)
    x, y = pts[:n_pairs], pts[n_pairs:]
    lx, ly = density.log_density(x), density.log_density(y)
    worst, worst_pair, count = -math.inf, None, 0
    for l in lam:
        z = l * x + (1 - l) * y
        lz = density.log_density(z)
        with np.errstate(invalid="ignore"):
            viol = l * lx + (1 - l) * ly - lz
        viol = np.where(np.isnan(viol), -np.inf, viol)
        k = int(np.argmax(viol))
        count += n_pairs
        if viol[k] > worst:
            worst, worst_pair = float(viol[k]), (x[k].copy(), y[k].copy(), float(l))
    return LogConcavityReport(bool(worst <= tol), worst, count, worst_pair)


# ---------------------------------------------------------------------------
# atomic measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Weighted point cloud; ``points`` is ``(n, d)``, ``weights`` sums to one."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.ndim != 2 or pts.shape[0] != w.size:
            raise DimensionError(f"{pts.shape[0]} points but {w.size} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> "AtomicMeasure":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @classmethod
    def from_log_weights(cls, points, log_w) -> "AtomicMeasure":
        return cls(points, _normalize_log_weights(np.asarray(log_w, dtype=float)))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def covariance(self) -> np.ndarray:
        r = self.points - self.mean()
        return sym((r * self.weights[:, None]).T @ r)

    def ess(self) -> float:
        """Kish effective sample size."""
        return 1.0 / float(np.sum(self.weights**2))

    def subset(self, mask) -> "AtomicMeasure":
        mask = np.asarray(mask, dtype=bool)
        w = self.weights[mask]
        return AtomicMeasure(self.points[mask], w / w.sum())

    def to_csv(self, target=None) -> str:
        """Serialize as ``w,x1,...,xd`` rows with 17 significant digits."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["w"] + [f"x{i + 1}" for i in range(self.dim)])
        for w, x in zip(self.weights, self.points):
            writer.writerow([f"{w:.17g}"] + [f"{v:.17g}" for v in x])
        text = buf.getvalue()
        if target is not None:
            Path(target).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "AtomicMeasure":
        text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if header[0] != "w" or header[1:] != [f"x{i + 1}" for i in range(len(header) - 1)]:
            raise ValueError(f"bad atomic-measure header {header}")
        arr = np.array(body, dtype=float)
        return cls(arr[:, 1:], arr[:, 0])


def _sobol_points(density: Density, n: int, seed) -> np.ndarray:
    # inverse-transform a scrambled Sobol' design; the ball needs one extra
    # coordinate for the radius
    from scipy.stats import qmc

    d = density.dim
    p = density.params
    extra = 1 if density.family == "uniform-ball" else 0
    m = max(0, math.ceil(math.log2(n)))
    u = qmc.Sobol(d + extra, scramble=True, seed=as_rng(seed)).random_base2(m)[:n]
    u = np.clip(u, 1e-16, 1 - 1e-16)
    if density.family == "gaussian":
        return density.mean + stats.norm.ppf(u) @ p["chol"].T
    if density.family == "uniform-box":
        return p["low"] + u * (p["high"] - p["low"])
    if density.family == "uniform-ball":
        g = stats.norm.ppf(u[:, :d])
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = p["radius"] * u[:, d] ** (1.0 / d)
        return p["center"] + g * r[:, None]
    return p["loc"] - np.log1p(-u) / p["rates"]


def sample_atomic(density: Density, n: int, seed=None, method: str = "iid") -> AtomicMeasure:
    """``n`` equal-weight atoms; deterministic for a fixed seed.

    ``method="iid"`` draws independent samples.  ``method="sobol"`` maps a
    scrambled Sobol' sequence through the inverse CDF, which lowers the
    integration error of smooth tilts.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if method == "iid":
        return AtomicMeasure.uniform(density.sample(n, as_rng(seed)))
    if method == "sobol":
        return AtomicMeasure.uniform(_sobol_points(density, n, seed))
    raise ValueError(f"unknown sampling method {method!r}")


@dataclass(frozen=True, eq=False)
class TiltParams:
    """Tilt ``exp(c @ x - x @ B @ x / 2)``; ``t`` is the localization time if any."""

    c: np.ndarray
    B: np.ndarray
    t: float | None = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.shape != (c.size, c.size):
            raise DimensionError(f"B has shape {B.shape}, c has length {c.size}")
        if not is_psd(B):
            raise ValueError("B must be symmetric positive semi-definite")
        if self.t is not None:
            if self.t < 0:
                raise ValueError("time must be nonnegative")
            if self.t == 0 and (np.any(c != 0) or np.any(B != 0)):
                raise ValueError("at t = 0 the tilt must be the identity")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "B", B)

    @classmethod
    def identity(cls, d: int) -> "TiltParams":
        return cls(np.zeros(d), np.zeros((d, d)), 0.0)

    def compose(self, other: "TiltParams") -> "TiltParams":
        t = None if self.t is None or other.t is None else self.t + other.t
        return TiltParams(self.c + other.c, self.B + other.B, t)


def _normalize_log_weights(logits: np.ndarray) -> np.ndarray:
    if np.any(np.isnan(logits)) or np.any(np.isposinf(logits)):
        raise DegenerateTiltError("tilt produced non-finite log-weights")
    top = np.max(logits)
    if not np.isfinite(top):
        raise DegenerateTiltError("every tilted weight underflowed to zero")
    w = np.exp(logits - special.logsumexp(logits))
    return w / w.sum()


def tilt_log_weights(measure: AtomicMeasure, c: np.ndarray, B: np.ndarray) -> np.ndarray:
    x = measure.points
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        log_w = np.log(measure.weights)
        return log_w + x @ c - 0.5 * np.einsum("ij,jk,ik->i", x, B, x)


def tilt_atomic(measure: AtomicMeasure, tilt: TiltParams) -> AtomicMeasure:
    """Reweight atoms by ``exp(c @ x - x @ B @ x / 2)`` and renormalize (log space)."""
    if tilt.c.size != measure.dim:
        raise DimensionError(f"tilt has dimension {tilt.c.size}, measure {measure.dim}")
    logits = tilt_log_weights(measure, tilt.c, tilt.B)
    return AtomicMeasure(measure.points, _normalize_log_weights(logits))


def closed_form_gaussian_tilt(gaussian: Density, tilt: TiltParams) -> Density:
    """Conjugate update: precision ``A^-1 + B``, mean ``(A^-1 + B)^-1 (A^-1 m + c)``."""
    if gaussian.family != "gaussian":
        raise ValueError("closed-form tilt needs a Gaussian base")
    prec0 = gaussian.params["precision"]
    prec = sym(prec0 + tilt.B)
    cov = sym(np.linalg.inv(prec))
    mean = cov @ (prec0 @ gaussian.mean + tilt.c)
    return construct_density("gaussian", mean=mean, cov=cov)


def moments_and_whiten(measure: AtomicMeasure):
    """Return ``(mu, A, whitened)`` with ``whitened`` atoms ``A^-1/2 (x - mu)``."""
    mu = measure.mean()
    A = measure.covariance()
    lam = np.linalg.eigvalsh(A)
    if lam[0] <= COV_SINGULAR_TOL:
        raise DegenerateCovarianceError(
            f"empirical covariance is singular (min eigenvalue {lam[0]:.3g}); "
            "restrict to the affine hull of the atoms"
        )
    z = (measure.points - mu) @ inv_sqrtm(A)
    return mu, A, AtomicMeasure(z, measure.weights)
