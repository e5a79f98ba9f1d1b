"""Stochastic localization on an atomic measure.

The tilt ``exp(c'x - x'Bx/2)`` evolves by Euler-Maruyama steps of

    dc = A^-1/2 dW + A^-1 mu_t dt,    dB = A^-1 dt

with ``A`` the covariance of the base measure, so ``B_t = t A^-1`` exactly.
Internally everything runs in base-whitened coordinates ``z = A^-1/2 x``
where the tilt reads ``exp(z'c_w - t|z|^2/2)`` with ``c_w = A^1/2 c`` and the
update is ``dc_w = dW + E_t[z] dt``.  The relative covariance
``Q_t = A^-1/2 A_t A^-1/2`` is then just the weighted covariance of ``z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCovarianceError, DimensionError, PairSumCapError, PreconditionError
from .linalg import spec_norm, sym, sym_power
from .measures import (
    COV_SINGULAR_TOL,
    AtomicMeasure,
    TiltParams,
    _normalize_log_weights,
)
from .parallel import child_seed, ordered_map
from .report import CheckRecord
from .tensor import DEFAULT_SLACK, PAIR_SUM_CAP, delta_stack, tensor_from_deltas

Z_BAND = 4.0


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BaseGeometry:
    """Quantities of the base measure that never change along a path."""

    base: AtomicMeasure
    A: np.ndarray
    A_half: np.ndarray
    A_inv_half: np.ndarray
    z: np.ndarray  # A^-1/2 x, uncentered
    z_sq: np.ndarray  # |z|^2
    log_w0: np.ndarray

    @classmethod
    def from_measure(cls, base: AtomicMeasure) -> "BaseGeometry":
        A = base.covariance()
        lam, vec = np.linalg.eigh(A)
        if lam[0] <= COV_SINGULAR_TOL * max(1.0, lam[-1]):
            raise DegenerateCovarianceError(
                f"base covariance is singular (min eigenvalue {lam[0]:.3g})"
            )
        A_half = sym((vec * np.sqrt(lam)) @ vec.T)
        A_inv_half = sym((vec / np.sqrt(lam)) @ vec.T)
        z = base.points @ A_inv_half
        with np.errstate(divide="ignore"):
            log_w0 = np.log(base.weights)
        return cls(base, A, A_half, A_inv_half, z, np.einsum("ij,ij->i", z, z), log_w0)

    @property
    def dim(self) -> int:
        return self.base.dim

    def weights(self, c_white: np.ndarray, t: float) -> np.ndarray:
        return _normalize_log_weights(self.log_w0 + self.z @ c_white - 0.5 * t * self.z_sq)


@dataclass(frozen=True, eq=False)
class LocalizationState:
    t: float
    tilt: TiltParams
    geometry: BaseGeometry
    c_white: np.ndarray
    weights: np.ndarray
    mu: np.ndarray
    A_t: np.ndarray
    Q: np.ndarray
    gamma: float
    q: int

    @property
    def base(self) -> AtomicMeasure:
        return self.geometry.base

    @property
    def dim(self) -> int:
        return self.geometry.dim

    @property
    def current(self) -> AtomicMeasure:
        return AtomicMeasure(self.geometry.base.points, self.weights)

    def whitened(self) -> np.ndarray:
        """``y_i = A^-1/2 (x_i - mu_t)`` with the base ``A``."""
        return self.geometry.z - self.weights @ self.geometry.z

    @property
    def spec_Q(self) -> float:
        return float(np.linalg.eigvalsh(self.Q)[-1])


def _build_state(geom: BaseGeometry, c_white: np.ndarray, t: float, q: int) -> LocalizationState:
    w = geom.weights(c_white, t)
    m = w @ geom.z
    y = geom.z - m
    Q = sym((y * w[:, None]).T @ y)
    lam = np.clip(np.linalg.eigvalsh(Q), 0.0, None)
    gamma = float(np.sum(lam**q))
    A_t = sym(geom.A_half @ Q @ geom.A_half)
    mu = geom.A_half @ m
    c = geom.A_inv_half @ c_white
    tilt = TiltParams(c, t * sym(geom.A_inv_half @ geom.A_inv_half), t) if t > 0 else TiltParams.identity(geom.dim)
    return LocalizationState(t, tilt, geom, c_white, w, mu, A_t, Q, gamma, q)


def init_state(base_measure, q: int = 3) -> LocalizationState:
    """Start at ``t = 0`` with the identity tilt; ``Q_0 = I`` and ``Gamma_0 = d``."""
    if int(q) != q or q < 2:
        raise PreconditionError("q must be an integer >= 2")
    geom = base_measure if isinstance(base_measure, BaseGeometry) else BaseGeometry.from_measure(base_measure)
    d = geom.dim
    w = geom.base.weights
    mu = w @ geom.base.points
    return LocalizationState(
        0.0, TiltParams.identity(d), geom, np.zeros(d), w.copy(), mu, geom.A.copy(),
        np.eye(d), float(d), int(q),
    )


def _advance(state: LocalizationState, dW: np.ndarray, dt: float) -> LocalizationState:
    geom = state.geometry
    m = state.weights @ geom.z
    return _build_state(geom, state.c_white + dW + m * dt, state.t + dt, state.q)


def euler_step(state: LocalizationState, dW, dt: float) -> LocalizationState:
    """One Euler-Maruyama step of the tilt SDE; all moments are recomputed from atoms."""
    if not dt > 0:
        raise PreconditionError("dt must be positive")
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (state.dim,):
        raise DimensionError(f"noise increment has shape {dW.shape}, expected ({state.dim},)")
    return _advance(state, dW, dt)


# ---------------------------------------------------------------------------
# noise and subsets
# ---------------------------------------------------------------------------


def step_sizes(T: float, dt: float) -> np.ndarray:
    """``ceil(T/dt)`` steps of ``dt``; the last one is truncated to land on ``T``."""
    if T < 0:
        raise PreconditionError("T must be nonnegative")
    if not dt > 0:
        raise PreconditionError("dt must be positive")
    if T == 0:
        return np.zeros(0)
    if dt > T:
        raise PreconditionError("dt must not exceed T")
    k = max(1, math.ceil(T / dt - 1e-9))
    steps = np.full(k, dt)
    steps[-1] = T - dt * (k - 1)
    return steps


@dataclass(frozen=True, eq=False)
class NoisePath:
    dt: float
    increments: np.ndarray  # (k, d)
    steps: np.ndarray  # (k,)
    seed: object = None

    @classmethod
    def generate(cls, d: int, T: float, dt: float, seed=None) -> "NoisePath":
        steps = step_sizes(T, dt)
        rng = np.random.default_rng(seed)
        inc = rng.standard_normal((steps.size, d)) * np.sqrt(steps)[:, None]
        return cls(dt, inc, steps, seed)

    @property
    def T(self) -> float:
        return float(self.steps.sum())

    def coarsen(self, factor: int) -> "NoisePath":
        """Sum consecutive blocks of ``factor`` increments (same Brownian path)."""
        k = self.steps.size
        if factor < 1 or k % factor:
            raise PreconditionError(f"{k} steps do not split into blocks of {factor}")
        d = self.increments.shape[1]
        inc = self.increments.reshape(k // factor, factor, d).sum(axis=1)
        steps = self.steps.reshape(k // factor, factor).sum(axis=1)
        return NoisePath(self.dt * factor, inc, steps, self.seed)

    def energy_check(self, n_se: float = 5.0) -> tuple[bool, float]:
        """``sum |dW|^2`` against its mean ``d T``; returns (ok, z)."""
        k, d = self.increments.shape
        if k == 0:
            return True, 0.0
        sq = np.sum(self.increments**2, axis=1)
        # each |dW_k|^2 has mean d h_k and variance 2 d h_k^2
        mean = d * float(self.steps.sum())
        sd = math.sqrt(2.0 * d * float(np.sum(self.steps**2)))
        z = (float(sq.sum()) - mean) / sd
        return bool(abs(z) <= n_se), z


@dataclass
class SubsetTracker:
    """A subset ``E`` frozen as atom membership at ``t = 0``."""

    mask: np.ndarray
    g: float = 0.0
    qv: float = 0.0
    name: str = "E"

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)

    def update(self, state: LocalizationState, dt: float) -> float:
        g, rate = subset_process(state, self.mask)
        self.g = g
        self.qv += rate * dt
        return rate


def subset_process(state: LocalizationState, E) -> tuple[float, float]:
    """``(g_t, d[g]_t/dt)`` for ``E`` given as atom membership."""
    mask = np.asarray(E, dtype=bool)
    if mask.shape != state.weights.shape:
        raise DimensionError("subset mask must have one entry per atom")
    w = np.where(mask, state.weights, 0.0)
    g = float(w.sum())
    if not mask.any() or mask.all():
        return float(mask.all()), 0.0
    s = w @ state.whitened()
    rate = float(s @ s)
    bound = state.spec_Q
    if rate > bound + 1e-9:
        raise AssertionError(f"quadratic-variation rate {rate} exceeds ||Q_t|| = {bound}")
    return min(max(g, 0.0), 1.0), rate


def median_split(base: AtomicMeasure) -> np.ndarray:
    """Atoms below the median projection on the top covariance eigenvector."""
    _, vec = np.linalg.eigh(base.covariance())
    proj = (base.points - base.mean()) @ vec[:, -1]
    order = np.argsort(proj, kind="stable")
    mask = np.zeros(base.n, dtype=bool)
    mask[order[: base.n // 2]] = True
    return mask


# ---------------------------------------------------------------------------
# Ito terms of Gamma
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftDiffusion:
    v: np.ndarray
    delta: float

    @property
    def v_norm(self) -> float:
        return float(np.linalg.norm(self.v))


def _systematic_subsample(weights: np.ndarray, k: int) -> np.ndarray:
    # deterministic: midpoints of k equal slices of the weight CDF
    cdf = np.cumsum(weights)
    u = (np.arange(k) + 0.5) / k
    return np.minimum(np.searchsorted(cdf, u * cdf[-1]), weights.size - 1)


def gamma_drift_terms(state: LocalizationState, method: str = "factored",
                      pair_cap: int = PAIR_SUM_CAP, subsample: bool = False) -> DriftDiffusion:
    """``d Gamma_t = v'dW + delta dt`` at the given state.

    ``v = q sum_i w_i (y_i' Q^(q-1) y_i) y_i`` and
    ``delta = -q tr(Q^(q+1)) + (q/2) sum_a T(Q^a, Q^(q-2-a), I)``, with
    ``y_i = A^-1/2 (x_i - mu_t)``.  The tensor sum is exact; ``method="pairs"``
    uses the literal double sum and is capped at ``pair_cap`` atoms unless
    ``subsample`` picks a deterministic systematic subsample.
    """
    q = state.q
    y = state.whitened()
    w = state.weights
    Q = state.Q
    Qq1 = sym_power(Q, q - 1)
    s = np.einsum("ij,jk,ik->i", y, Qq1, y)
    v = q * ((w * s) @ y)
    powers = [sym_power(Q, a) for a in range(q - 1)]
    if method == "factored":
        deltas = delta_stack(y, w)
        ones = np.ones(state.dim)
        tsum = sum(tensor_from_deltas(deltas, ones, powers[a], powers[q - 2 - a]) for a in range(q - 1))
    elif method == "pairs":
        if state.base.n > pair_cap:
            if not subsample:
                raise PairSumCapError(
                    f"{state.base.n} atoms exceed the pair-sum cap {pair_cap}; pass subsample=True"
                )
            idx = _systematic_subsample(w, pair_cap)
            ys = y[idx] - y[idx].mean(axis=0)
            ws = np.full(pair_cap, 1.0 / pair_cap)
        else:
            ys, ws = y, w
        gram = ys @ ys.T
        tsum = 0.0
        for a in range(q - 1):
            ga = ys @ powers[a] @ ys.T
            gb = ys @ powers[q - 2 - a] @ ys.T
            tsum += float(ws @ (ga * gb * gram) @ ws)
    else:
        raise ValueError(f"unknown method {method!r}")
    trq1 = float(np.sum(np.clip(np.linalg.eigvalsh(Q), 0.0, None) ** (q + 1)))
    return DriftDiffusion(v, -q * trq1 + 0.5 * q * float(tsum))


def cubature_increment(state: LocalizationState, dt: float):
    """Expected one-step increments of ``Gamma`` and ``A_t`` by a degree-3 rule.

    The nodes ``+-sqrt(d dt) e_k`` with equal weights integrate every
    polynomial of degree <= 3 in ``dW`` exactly against ``N(0, dt I)``, so the
    result divided by ``dt`` matches the Ito drift up to ``O(dt)``.
    """
    d = state.dim
    r = math.sqrt(d * dt)
    d_gamma = 0.0
    d_A = np.zeros((d, d))
    for k in range(d):
        for sign in (1.0, -1.0):
            dW = np.zeros(d)
            dW[k] = sign * r
            nxt = _advance(state, dW, dt)
            d_gamma += (nxt.gamma - state.gamma) / (2 * d)
            d_A += (nxt.A_t - state.A_t) / (2 * d)
    return d_gamma, d_A


def finite_difference_v(state: LocalizationState, eps: float = 1e-5) -> np.ndarray:
    """Central difference of ``Gamma`` along pure noise steps; estimates ``v``."""
    d = state.dim
    out = np.empty(d)
    for k in range(d):
        e = np.zeros(d)
        e[k] = eps
        out[k] = (_advance(state, e, 0.0).gamma - _advance(state, -e, 0.0).gamma) / (2 * eps)
    return out


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Path:
    """Per-step diagnostics of one simulated path (index 0 is ``t = 0``)."""

    times: np.ndarray
    gamma: np.ndarray
    spec_Q: np.ndarray
    mu: np.ndarray
    A: np.ndarray
    c: np.ndarray
    g: np.ndarray  # (steps + 1, n_subsets)
    qv_rate: np.ndarray  # (steps + 1, n_subsets)
    qv: np.ndarray
    int_spec_Q: np.ndarray
    v_norm: np.ndarray | None
    delta: np.ndarray | None
    states: list
    final: LocalizationState
    noise: NoisePath
    subsets: list

    @property
    def steps(self) -> int:
        return self.times.size - 1

    def state_at(self, t: float) -> LocalizationState:
        for s in self.states:
            if abs(s.t - t) <= 1e-9 * max(1.0, abs(t)):
                return s
        raise KeyError(f"no state recorded at t = {t}")

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"t = {t} is not on the step grid")
        return i

    def csv_rows(self, subset: int = 0):
        """Rows for ``t,gamma,spec_Q,g_E,qv_rate,v_norm,delta``."""
        for i, t in enumerate(self.times):
            g = self.g[i, subset] if self.g.shape[1] else math.nan
            rate = self.qv_rate[i, subset] if self.qv_rate.shape[1] else math.nan
            vn = self.v_norm[i] if self.v_norm is not None else math.nan
            de = self.delta[i] if self.delta is not None else math.nan
            yield (t, self.gamma[i], self.spec_Q[i], g, rate, vn, de)


def simulate_path(base, q: int = 3, T: float = 1.0, dt: float | None = None, seed=None,
                  subsets=None, record_times=None, diagnostics: bool = False,
                  noise: NoisePath | None = None, keep_all_states: bool = False) -> Path:
    """Run ``ceil(T/dt)`` Euler steps from ``init_state(base, q)``.

    ``subsets`` is a list of atom masks frozen at ``t = 0`` (default: the
    median split along the top eigenvector).  Full states are kept at the
    start, at the end and at ``record_times``.
    """
    if T < 0:
        raise PreconditionError("T must be nonnegative")
    if dt is None:
        dt = 1e-3 * min(1.0, T) if T > 0 else 1e-3
    state = init_state(base, q)
    d = state.dim
    if noise is None:
        noise = NoisePath.generate(d, T, dt, seed)
    elif abs(noise.T - T) > 1e-9 * max(1.0, T):
        raise PreconditionError("noise path does not span [0, T]")
    if subsets is None:
        subsets = [median_split(state.base)]
    trackers = [m if isinstance(m, SubsetTracker) else SubsetTracker(m, name=f"E{i}")
                for i, m in enumerate(subsets)]
    wanted = sorted(float(t) for t in (record_times or []))
    k = noise.steps.size
    times = np.zeros(k + 1)
    gamma = np.zeros(k + 1)
    specq = np.zeros(k + 1)
    mu = np.zeros((k + 1, d))
    A = np.zeros((k + 1, d, d))
    c = np.zeros((k + 1, d))
    ns = len(trackers)
    g = np.zeros((k + 1, ns))
    rate = np.zeros((k + 1, ns))
    qv = np.zeros((k + 1, ns))
    int_q = np.zeros(k + 1)
    vn = np.zeros(k + 1) if diagnostics else None
    dl = np.zeros(k + 1) if diagnostics else None
    states = [state]

    def record(i, st):
        times[i] = st.t
        gamma[i] = st.gamma
        specq[i] = st.spec_Q
        mu[i] = st.mu
        A[i] = st.A_t
        c[i] = st.tilt.c
        for j, tr in enumerate(trackers):
            g[i, j], rate[i, j] = subset_process(st, tr.mask)
            tr.g = g[i, j]
        if diagnostics:
            dd = gamma_drift_terms(st)
            vn[i] = dd.v_norm
            dl[i] = dd.delta

    record(0, state)
    for i in range(k):
        h = noise.steps[i]
        nxt = euler_step(state, noise.increments[i], h)
        # left-point accumulation of [g] and of int ||Q||
        for j, tr in enumerate(trackers):
            tr.qv += rate[i, j] * h
            qv[i + 1, j] = tr.qv
        int_q[i + 1] = int_q[i] + specq[i] * h
        state = nxt
        record(i + 1, state)
        if keep_all_states or any(abs(state.t - t) <= 1e-9 * max(1.0, t) for t in wanted):
            states.append(state)
    if states[-1] is not state:
        states.append(state)
    return Path(times, gamma, specq, mu, A, c, g, rate, qv, int_q, vn, dl, states, state,
                noise, trackers)


def run_ensemble(base, n_paths: int, master_seed: int = 0, **kwargs) -> list[Path]:
    """Independent paths with noise streams ``SeedSequence([master, i])``.

    ``base`` may be a fixed measure or a callable ``rng -> AtomicMeasure``
    drawn from a separate stream so atoms differ per path.
    """
    geom = None if callable(base) else BaseGeometry.from_measure(base)

    def one(i):
        seq = child_seed(master_seed, i)
        noise_seq, atom_seq = seq.spawn(2)
        b = geom if geom is not None else BaseGeometry.from_measure(base(np.random.default_rng(atom_seq)))
        return simulate_path(b, seed=noise_seq, **kwargs)

    return ordered_map(one, range(n_paths))


# ---------------------------------------------------------------------------
# statistical checks
# ---------------------------------------------------------------------------


def _z(values: np.ndarray, target: float) -> tuple[float, float, float]:
    m = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    if se == 0.0:
        return m, 0.0, 0.0 if abs(m - target) <= 1e-12 * max(1.0, abs(target)) else math.inf
    return m, se, (m - target) / se


def check_martingale(paths: list[Path], atoms=None, subset: int | None = None,
                     band: float = Z_BAND) -> list[CheckRecord]:
    """Ensemble mean of terminal ``g`` and atom weights against their start values."""
    if not paths:
        raise PreconditionError("need at least one path")
    out = []
    n_sub = paths[0].g.shape[1]
    subs = range(n_sub) if subset is None else [subset]
    for j in subs:
        vals = np.array([p.g[-1, j] for p in paths])
        init = float(paths[0].g[0, j])
        m, se, z = _z(vals, init)
        out.append(CheckRecord(
            check=f"martingale_subset_{j}", statistic=abs(z), threshold=band,
            status="pass" if abs(z) <= band else "flag", lhs=m, rhs=init, z=z,
            seeds=len(paths), violations=int(abs(z) > band), details={"se": se},
        ))
    if atoms is not None:
        atoms = np.asarray(atoms, dtype=int)
        w0 = paths[0].states[0].weights[atoms]
        wT = np.array([p.final.weights[atoms] for p in paths])
        zs = []
        for k, a in enumerate(atoms):
            zs.append(_z(wT[:, k], float(w0[k]))[2])
        zs = np.array(zs)
        worst = int(np.argmax(np.abs(zs)))
        bad = int(np.sum(np.abs(zs) > band))
        out.append(CheckRecord(
            check="martingale_atoms", statistic=float(abs(zs[worst])), threshold=band,
            status="pass" if bad == 0 else "flag", z=float(zs[worst]), seeds=len(paths),
            violations=bad, details={"atoms": atoms, "z": zs, "worst_atom": int(atoms[worst])},
        ))
    return out


def check_cov_drift_and_domination(paths, band: float = Z_BAND, t_min: float = 0.0,
                                   t_max: float | None = None) -> list[CheckRecord]:
    """Drift of ``A_t`` against ``-A_t A^-1 A_t`` and the domination ``A_t <= A/t``.

    The drift residual ``(A_(k+1) - A_k)/h + A_k A^-1 A_k`` is a martingale
    increment plus ``O(h)``; its mean over all steps in ``[t_min, t_max]`` of
    all paths is tested entrywise with a z-score.
    """
    if isinstance(paths, Path):
        paths = [paths]
    residuals = []
    worst_dom = math.inf
    worst_t = None
    for p in paths:
        A0 = p.states[0].geometry.A
        A_inv = np.linalg.inv(A0)
        norm = spec_norm(A0)
        hi = p.times[-1] if t_max is None else t_max
        for i in range(p.steps):
            t, h = p.times[i], p.times[i + 1] - p.times[i]
            if t_min <= t and p.times[i + 1] <= hi + 1e-12:
                Ak = p.A[i]
                residuals.append((p.A[i + 1] - Ak) / h + Ak @ A_inv @ Ak)
        for i in range(1, p.steps + 1):
            t = p.times[i]
            if not (t_min <= t <= hi + 1e-12):
                continue
            lam = float(np.linalg.eigvalsh(A0 / t - p.A[i])[0])
            scaled = lam / (1e-6 * norm / t)
            if scaled < worst_dom:
                worst_dom, worst_t = scaled, t
    out = []
    if residuals:
        R = np.array(residuals)
        mean = R.mean(axis=0)
        se = R.std(axis=0, ddof=1) / math.sqrt(R.shape[0]) if R.shape[0] > 1 else np.zeros_like(mean)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, mean / se, np.where(np.abs(mean) <= 1e-12, 0.0, np.inf))
        zmax = float(np.max(np.abs(z)))
        out.append(CheckRecord(
            check="cov_drift", statistic=zmax, threshold=band,
            status="pass" if zmax <= band else "flag", z=zmax, seeds=len(paths),
            violations=int(np.sum(np.abs(z) > band)),
            details={"steps": R.shape[0], "mean_residual_norm": float(np.linalg.norm(mean))},
        ))
    if worst_t is not None:
        # lambda_min(A/t - A_t) >= -tol with tol = 1e-6 ||A|| / t; statistic in units of tol
        out.append(CheckRecord(
            check="cov_domination", statistic=-worst_dom, threshold=1.0,
            status="pass" if worst_dom >= -1.0 else "flag", seeds=len(paths),
            violations=int(worst_dom < -1.0), details={"worst_t": worst_t},
        ))
    return out


def check_drift_bounds(state: LocalizationState, alpha: float = 4.0, beta: float = 0.5,
                       slack: float = DEFAULT_SLACK, drift: DriftDiffusion | None = None) -> list[CheckRecord]:
    """``||v|| <= 16 q G^(1+1/2q)`` and
    ``delta <= min(64 q^2 a^2 log d d^(2b-1/q) G^(1+1/q), 2 q^2 G / t)``."""
    d, q, G = state.dim, state.q, state.gamma
    if d < 2:
        raise PreconditionError("log(d) vanishes for d = 1")
    dd = drift or gamma_drift_terms(state)
    v_rhs = 16.0 * q * G ** (1.0 + 1.0 / (2 * q))
    arm1 = 64.0 * q * q * alpha**2 * math.log(d) * d ** (2 * beta - 1.0 / q) * G ** (1.0 + 1.0 / q)
    arm2 = 2.0 * q * q * G / state.t if state.t > 0 else math.inf
    d_rhs = min(arm1, arm2)
    recs = []
    for name, lhs, rhs, extra in (
        ("drift_v_bound", dd.v_norm, v_rhs, {}),
        ("drift_delta_bound", dd.delta, d_rhs, {"arm": "log-d" if arm1 <= arm2 else "1/t"}),
    ):
        ok = lhs <= slack * rhs
        recs.append(CheckRecord(
            check=name, statistic=lhs, threshold=slack * rhs, status="pass" if ok else "flag",
            lhs=lhs, rhs=rhs, slack=slack, violations=int(not ok),
            details={"margin": rhs / lhs if lhs > 0 else math.inf, "t": state.t, **extra},
        ))
    return recs


def check_potential_lemmas(paths: list[Path], q: int | None = None, alpha: float = 4.0,
                           beta: float = 0.5, T1: float | None = None, grid=None,
                           ceiling: float = 0.3, band: float = Z_BAND) -> list[CheckRecord]:
    """h-excursion frequency up to ``T1`` and growth of ``E Gamma^(1/q)``.

    The excursion event is ``max_(t <= T1) -(Gamma_t + 1)^(-1/q) >= -(d+1)^(-1/q)/2``.
    The growth check is ``E f(G_t2) <= E f(G_t1) (t2/t1)^(2q)`` on paired
    differences for every ``t1 <= t2`` on ``grid``.
    """
    if not paths:
        raise PreconditionError("need at least one path")
    d = paths[0].final.dim
    q = q or paths[0].final.q
    if T1 is None:
        from .bounds import time_constants

        T1 = time_constants(d, alpha, beta).T1
    level = -0.5 * (d + 1) ** (-1.0 / q)
    hits = 0
    for p in paths:
        sel = p.times <= T1 * (1 + 1e-12)
        h = -((p.gamma[sel] + 1.0) ** (-1.0 / q))
        hits += int(np.max(h) >= level)
    frac = hits / len(paths)
    recs = [CheckRecord(
        check="potential_h_excursion", statistic=frac, threshold=ceiling,
        status="pass" if frac <= ceiling else "flag", seeds=len(paths), violations=hits,
        details={"T1": T1, "level": level, "reached_T1": bool(paths[0].times[-1] >= T1 * (1 - 1e-9))},
    )]
    if grid is None:
        pos = paths[0].times[paths[0].times > 0]
        grid = pos[np.linspace(0, pos.size - 1, min(5, pos.size)).astype(int)] if pos.size else []
    grid = sorted(float(t) for t in grid)
    worst, worst_pair, bad = -math.inf, None, 0
    for a, t1 in enumerate(grid):
        for t2 in grid[a:]:
            r = (t2 / t1) ** (2 * q)
            D = np.array([p.gamma[p.index_of(t2)] ** (1.0 / q) - r * p.gamma[p.index_of(t1)] ** (1.0 / q)
                          for p in paths])
            m = float(D.mean())
            se = float(D.std(ddof=1) / math.sqrt(D.size)) if D.size > 1 else 0.0
            z = m / se if se > 0 else (0.0 if m <= 1e-12 else math.inf)
            if z > band:
                bad += 1
            if z > worst:
                worst, worst_pair = z, (t1, t2)
    if grid:
        recs.append(CheckRecord(
            check="potential_f_growth", statistic=worst, threshold=band,
            status="pass" if bad == 0 else "flag", z=worst, seeds=len(paths), violations=bad,
            details={"worst_pair": worst_pair, "grid": grid},
        ))
    return recs


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    dts: list
    errors: list  # mean terminal ||c - c_ref|| per dt
    orders: list  # log2 of successive error ratios
    seeds: int
    details: dict = field(default_factory=dict)

    @property
    def observed_order(self) -> float:
        return float(np.mean(self.orders))


def convergence_report(base, q: int = 3, T: float = 1.0, dt: float = 1e-2, n_seeds: int = 20,
                       master_seed: int = 0) -> ConvergenceReport:
    """Strong error of the terminal ``c`` at ``dt, dt/2, dt/4`` against ``dt/8``.

    All four runs share one Brownian path (the fine increments, summed).
    The noise is additive in the whitened tilt, so Euler-Maruyama is strong
    order one and each halving of ``dt`` should roughly halve the error.
    """
    if n_seeds < 1:
        raise PreconditionError("need at least one seed")
    ratio = T / dt
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise PreconditionError("T must be a whole number of steps")
    geom = base if isinstance(base, BaseGeometry) else BaseGeometry.from_measure(base)
    d = geom.dim
    errs = np.zeros((n_seeds, 3))
    for s in range(n_seeds):
        fine = NoisePath.generate(d, T, dt / 8, child_seed(master_seed, s))
        ref = simulate_path(geom, q, T, dt / 8, noise=fine, subsets=[]).final.tilt.c
        for j, f in enumerate((8, 4, 2)):
            run = simulate_path(geom, q, T, dt * f / 8, noise=fine.coarsen(f), subsets=[])
            errs[s, j] = np.linalg.norm(run.final.tilt.c - ref)
    mean = errs.mean(axis=0)
    orders = [math.log2(mean[j] / mean[j + 1]) for j in range(2)] if np.all(mean > 0) else [math.inf] * 2
    return ConvergenceReport([dt, dt / 2, dt / 4], mean.tolist(), orders, n_seeds,
                             {"reference_dt": dt / 8, "T": T})
