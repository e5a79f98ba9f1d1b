"""Estimators that bracket the isoperimetric coefficient.

The exact coefficient is not computable, so three different numbers are
reported: an upper estimate from half-spaces, an empirical sweep-cut proxy on
a k-NN graph, and lower bounds built from a Gaussian factor of the localized
measure.  A truncation step reduces unbounded laws to a ball.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .errors import DimensionError, DisconnectedGraphError, PreconditionError, VacuousScanError
from .measures import AtomicMeasure, Density, as_rng, sample_atomic
from .parallel import ordered_map

KINDS = ("upper-via-halfspace", "lower-via-gaussian-component", "conductance-proxy")
DEFAULT_K_GRID = np.linspace(-2.0, 2.0, 41)


@dataclass(frozen=True, eq=False)
class Halfspace:
    """``{x : u @ x <= s}``."""

    u: np.ndarray
    s: float

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=float))
        if abs(float(np.linalg.norm(u)) - 1.0) > 1e-12:
            raise PreconditionError("half-space direction must be a unit vector")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "s", float(self.s))

    def contains(self, x) -> np.ndarray:
        return np.atleast_2d(x) @ self.u <= self.s


@dataclass(frozen=True, eq=False)
class IsoperimetryEstimate:
    value: float
    kind: str
    witness: object = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimate kind {self.kind!r}")
        if not (math.isfinite(self.value) and self.value >= 0):
            raise ValueError("estimate must be finite and nonnegative")

    def csv_row(self, d: int) -> list:
        if isinstance(self.witness, Halfspace):
            return [self.kind, self.value, *self.witness.u.tolist(), self.witness.s]
        return [self.kind, self.value, *([math.nan] * d), math.nan]


def csv_header(d: int) -> list:
    return ["kind", "value", *[f"direction_{i + 1}" for i in range(d)], "threshold"]


# ---------------------------------------------------------------------------
# boundary measure
# ---------------------------------------------------------------------------


def boundary_measure_shell(source, subset, eps: float, limit: bool | None = None) -> float:
    """``(p(S_eps) - p(S)) / eps`` with ``S_eps`` the ``eps``-neighbourhood of ``S``.

    ``source`` is a :class:`Density` or an :class:`AtomicMeasure`.  ``subset``
    is a :class:`Halfspace` or, for atoms, a boolean membership mask (the
    distance oracle is a k-d tree on the members).  For a half-space on an
    exact marginal ``limit`` (default on) returns the marginal density at the
    cut, which is the ``eps -> 0`` value.
    """
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    if isinstance(source, Density):
        if not isinstance(subset, Halfspace):
            raise PreconditionError("a density needs a half-space subset")
        marg = source.marginal(subset.u)
        p_s = float(marg.cdf(np.array([subset.s]))[0])
        if p_s >= 1.0:
            return 0.0
        p_eps = float(marg.cdf(np.array([subset.s + eps]))[0])
        _warn_vacuous(p_s, p_eps)
        if limit is None:
            limit = marg.exact
        if limit:
            return float(marg.pdf(np.array([subset.s]))[0])
        return (p_eps - p_s) / eps
    if not isinstance(source, AtomicMeasure):
        raise TypeError("source must be a Density or an AtomicMeasure")
    x, w = source.points, source.weights
    if isinstance(subset, Halfspace):
        proj = x @ subset.u
        inside = proj <= subset.s
        shell = (~inside) & (proj <= subset.s + eps)
    else:
        inside = np.asarray(subset, dtype=bool)
        if inside.shape != w.shape:
            raise DimensionError("mask must have one entry per atom")
        if inside.all():
            return 0.0
        if not inside.any():
            return 0.0
        dist, _ = cKDTree(x[inside]).query(x[~inside], k=1)
        shell = np.zeros_like(inside)
        shell[~inside] = dist <= eps
    p_s = float(w[inside].sum())
    if p_s >= 1.0:
        return 0.0
    p_shell = float(w[shell].sum())
    _warn_vacuous(p_s, p_s + p_shell)
    return p_shell / eps


def _warn_vacuous(p_s: float, p_eps: float) -> None:
    if p_eps >= 1.0 - 1e-15 and p_s < 1.0:
        warnings.warn("eps-neighbourhood covers the whole support; shell estimate is vacuous",
                      stacklevel=3)


# ---------------------------------------------------------------------------
# half-space scan
# ---------------------------------------------------------------------------


def scan_directions(density: Density, direction_count: int, seed=0) -> np.ndarray:
    """Covariance eigenvectors (top first) followed by uniform sphere directions."""
    if direction_count < 1:
        raise VacuousScanError("direction_count must be >= 1")
    lam, vec = np.linalg.eigh(density.cov)
    eig = vec[:, ::-1].T
    g = as_rng(seed).standard_normal((direction_count, density.dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.vstack([eig, g])


def halfspace_isoperimetry(density: Density, direction_count: int = 16, threshold_grid=None,
                           seed=0, n_kde: int = 100_000) -> IsoperimetryEstimate:
    """Minimize ``f_u(s) / min(F_u(s), 1 - F_u(s))`` over directions and thresholds.

    Thresholds are ``mean + k * std`` of each marginal for ``k`` in
    ``threshold_grid`` (default ``linspace(-2, 2, 41)``).  The minimum of a
    family of cuts is an upper bound on the infimum over all sets.
    """
    dirs = scan_directions(density, direction_count, seed)
    ks = DEFAULT_K_GRID if threshold_grid is None else np.asarray(threshold_grid, dtype=float)
    if ks.size == 0:
        raise VacuousScanError("empty threshold grid")

    def scan(i):
        u = dirs[i]
        marg = density.marginal(u, n_kde=n_kde, seed=(seed, i) if isinstance(seed, int) else seed)
        s = marg.mean + ks * marg.std
        F = marg.cdf(s)
        f = marg.pdf(s)
        small = np.minimum(F, 1.0 - F)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(small > 1e-12, f / small, np.inf)
        j = int(np.argmin(ratio))
        return float(ratio[j]), float(s[j]), marg.exact

    results = ordered_map(scan, range(dirs.shape[0]))
    best = int(np.argmin([r[0] for r in results]))
    value, s, exact = results[best]
    if not math.isfinite(value):
        raise VacuousScanError("no threshold split the mass")
    return IsoperimetryEstimate(
        value, "upper-via-halfspace", Halfspace(dirs[best], s),
        {"directions": int(dirs.shape[0]), "thresholds": int(ks.size), "exact_marginal": exact,
         "direction_index": best},
    )


# ---------------------------------------------------------------------------
# graph sweep
# ---------------------------------------------------------------------------


def _knn_graph(x: np.ndarray, k: int):
    """Union-symmetrized k-NN graph with edge lengths as data."""
    dist, idx = cKDTree(x).query(x, k=k + 1)
    n = x.shape[0]
    rows = np.repeat(np.arange(n), k)
    cols = idx[:, 1:].ravel()
    # coincident atoms still need an edge: store a tiny positive length
    data = np.maximum(dist[:, 1:].ravel(), 1e-300)
    G = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    return G.maximum(G.T).tocsr(), dist[:, 1:]


def conductance_proxy(measure: AtomicMeasure, k_neighbors: int = 10,
                      sweep_count: int = 21) -> IsoperimetryEstimate:
    """Sweep cuts along the Fiedler vector of a k-NN graph.

    Edges carry Gaussian weights ``exp(-r^2 / (2 eps^2))`` with ``eps`` the
    mean k-NN distance at the requested ``k``.  Each sweep cut ``S`` with mass
    in ``[1/4, 3/4]`` is scored by ``p(S_eps \\ S) / (eps * min(p(S), p(S^c)))``
    and the minimum is returned.  A disconnected graph is retried once with
    ``2k`` neighbours.
    """
    n = measure.n
    if n < 100:
        raise PreconditionError("conductance proxy needs at least 100 atoms")
    if k_neighbors < 3:
        raise PreconditionError("k_neighbors must be >= 3")
    if sweep_count < 1:
        raise VacuousScanError("sweep_count must be >= 1")
    x, w = measure.points, measure.weights
    k = min(k_neighbors, n - 1)
    eps = None
    for attempt in range(2):
        G, dist = _knn_graph(x, k)
        if eps is None:
            # scale of the requested neighbourhood, not of the retry
            eps = float(dist.mean())
        n_comp, _ = csgraph.connected_components(G, directed=False)
        if n_comp == 1:
            break
        if attempt == 0 and k < n - 1:
            k = min(2 * k, n - 1)
            continue
        raise DisconnectedGraphError(f"k-NN graph has {n_comp} components with k = {k}")
    W = G.copy()
    W.data = np.exp(-0.5 * (W.data / eps) ** 2)
    lap, deg = csgraph.laplacian(W, normed=True, return_diag=True)
    if n <= 3000:
        _, vec = np.linalg.eigh(lap.toarray())
    else:
        _, vec = sparse.linalg.eigsh(lap, k=2, sigma=-1e-6, which="LM")
    # back from the normalized basis to a vertex embedding
    fiedler = vec[:, 1] / deg
    # fix the sign so the result does not depend on the eigensolver
    pivot = int(np.argmax(np.abs(fiedler)))
    if fiedler[pivot] < 0:
        fiedler = -fiedler
    order = np.argsort(fiedler, kind="stable")
    cum = np.cumsum(w[order])
    best, best_frac = math.inf, None
    vacuous = 0
    for frac in np.linspace(0.25, 0.75, sweep_count):
        cut = int(np.searchsorted(cum, frac - 1e-12)) + 1
        cut = min(max(cut, 1), n - 1)
        inside = np.zeros(n, dtype=bool)
        inside[order[:cut]] = True
        p_s = float(w[inside].sum())
        small = min(p_s, 1.0 - p_s)
        if small <= 0:
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            score = boundary_measure_shell(measure, inside, eps) / small
        vacuous += bool(caught)
        if score < best:
            best, best_frac = score, p_s
    if not math.isfinite(best):
        raise VacuousScanError("no balanced cut found")
    return IsoperimetryEstimate(best, "conductance-proxy", f"fiedler-sweep@{best_frac:.6g}",
                                {"k": k, "eps": eps, "mass": best_frac, "vacuous_cuts": vacuous})


# ---------------------------------------------------------------------------
# truncation and the Gaussian-factor lower bound
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Truncation:
    measure: AtomicMeasure
    radius: float
    tail: float
    center: np.ndarray
    metadata: dict


def truncate_to_ball(source, mass_target: float = 0.2, n_samples: int = 100_000,
                     seed=0) -> Truncation:
    """Smallest sampled radius ``R`` with ``p(B(mu, R)^c) <= mass_target``.

    Compact densities use their support radius (tail 0).  Otherwise atoms are
    drawn (or taken as given) and ``R`` is read off the weighted radial CDF by
    bisection.  The metadata records the factor ``1 - 2 tau`` that the
    truncation costs in the isoperimetric chain; it is at least ``1/2`` when
    ``tau <= 1/4``.
    """
    if not 0.0 < mass_target < 1.0:
        raise PreconditionError("mass_target must lie in (0, 1)")
    if isinstance(source, Density):
        center = source.mean
        atoms = sample_atomic(source, n_samples, seed)
        if source.compact:
            R = source.support_radius()
            meta = _chain_meta(0.0, mass_target)
            return Truncation(atoms, R, 0.0, center, meta)
    elif isinstance(source, AtomicMeasure):
        atoms = source
        center = source.mean()
    else:
        raise TypeError("source must be a Density or an AtomicMeasure")
    r = np.linalg.norm(atoms.points - center, axis=1)
    order = np.argsort(r, kind="stable")
    rs, ws = r[order], atoms.weights[order]
    # tail(i) = mass strictly outside rs[i]; find the first index with tail <= target
    tail_after = 1.0 - np.cumsum(ws)
    lo, hi = 0, rs.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if tail_after[mid] <= mass_target:
            hi = mid
        else:
            lo = mid + 1
    # ties: include every atom at the chosen radius
    R = float(rs[lo])
    inside = r <= R
    tail = float(atoms.weights[~inside].sum())
    trunc = atoms.subset(inside)
    return Truncation(trunc, R, tail, center, _chain_meta(tail, mass_target))


def _chain_meta(tail: float, target: float) -> dict:
    return {
        "mass_target": target,
        "tail": tail,
        "factor": 1.0 - 2.0 * tail,
        "factor_floor": 0.5,
        "chain": "p(dE) >= (1 - 2 tail) psi(truncated) min(p(E), p(E^c))",
        "floor_holds": bool(tail <= 0.25),
    }


def gaussian_component_lower_bound(B, stability_prob: float) -> float:
    """``||B^-1||^(-1/2) * stability_prob / 4``.

    With ``B = t A^-1`` this is ``sqrt(t) ||A||^(-1/2) stability_prob / 4``.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != B.shape[1] or not np.allclose(B, B.T, atol=1e-12 * max(1.0, np.abs(B).max())):
        raise PreconditionError("B must be symmetric")
    if not 0.0 <= stability_prob <= 1.0:
        raise PreconditionError("stability_prob must lie in [0, 1]")
    lam_min = float(np.linalg.eigvalsh(B)[0])
    if lam_min <= 1e-14 * max(1.0, float(np.abs(B).max())):
        raise PreconditionError("B is singular")
    return 0.25 * math.sqrt(lam_min) * stability_prob


def stability_probability(paths, subset: int = 0) -> float:
    """Fraction of paths with ``1/4 <= g_T <= 3/4``."""
    if not paths:
        raise PreconditionError("need at least one path")
    g = np.array([p.g[-1, subset] for p in paths])
    return float(np.mean((g >= 0.25) & (g <= 0.75)))
