"""Verification suites: randomized hard gates and seeded statistical ensembles.

Every suite takes an :class:`ExperimentConfig` and returns a list of
:class:`CheckRecord`.  Case ``i`` of a suite draws from
``SeedSequence([master_seed, i])``.  Checks are looked up through their
modules at call time so a test can swap one out.
"""
from __future__ import annotations

import math

import numpy as np

from . import bounds, localization, tensor
from .config import ExperimentConfig
from .linalg import random_spd, sym
from .measures import AtomicMeasure, construct_density, moments_and_whiten, sample_atomic
from .parallel import child_rng, ordered_map
from .report import CheckRecord, aggregate

LEMMA_FAMILIES = ("gaussian", "uniform-box", "uniform-ball", "product-exponential")


def make_density(cfg: ExperimentConfig, family: str | None = None, d: int | None = None):
    family = family or cfg.family
    d = d or cfg.d
    if family == "gaussian":
        if cfg.cov == "random":
            cov = random_spd(d, np.random.default_rng([cfg.master_seed, 7919]), cfg.cond)
        else:
            cov = np.eye(d)
        return construct_density("gaussian", mean=cfg.mean if cfg.mean else np.zeros(d), cov=cov)
    if family == "uniform-box":
        return construct_density("uniform-box", low=cfg.low or [-1.0], high=cfg.high or [1.0], d=d)
    if family == "uniform-ball":
        return construct_density("uniform-ball", radius=cfg.radius,
                                 center=cfg.center if cfg.center else np.zeros(d), d=d)
    return construct_density("product-exponential", rates=cfg.rates or [1.0], loc=cfg.loc or [0.0], d=d)


def base_atoms(cfg: ExperimentConfig, family: str | None = None, d: int | None = None,
               stream: int = 0) -> AtomicMeasure:
    """Shared base cloud; drawn from ``SeedSequence([master, 2**31 + stream])``."""
    seed = np.random.SeedSequence([cfg.master_seed, 2**31 + stream])
    return sample_atomic(make_density(cfg, family, d), cfg.n_atoms, seed, method=cfg.sampling)


def _random_psd(rng, d, full_rank=False):
    r = d if full_rank else int(rng.integers(1, d + 1))
    X = rng.standard_normal((d, r)) * np.exp(rng.uniform(-1, 1))
    return sym(X @ X.T)


# ---------------------------------------------------------------------------
# hard gates
# ---------------------------------------------------------------------------


def suite_trace(cfg: ExperimentConfig) -> list[CheckRecord]:
    def case(i):
        rng = child_rng(cfg.master_seed, i)
        d = int(rng.integers(1, cfg.d_max + 1))
        G = _random_psd(rng, d)
        F = sym(rng.standard_normal((d, d)))
        delta = float(rng.uniform(0.0, 1.0))
        return tensor.check_trace_inequality(G, F, delta).record("trace_inequality")

    recs = ordered_map(case, range(cfg.cases))
    return [aggregate("trace_inequality", recs, hard=True, cases=cfg.cases, d_max=cfg.d_max)]


def suite_swap(cfg: ExperimentConfig) -> list[CheckRecord]:
    d_max = min(cfg.d_max, 5)

    def case(i):
        rng = child_rng(cfg.master_seed, i)
        d = int(rng.integers(1, d_max + 1))
        n = int(rng.integers(3, 41))
        pts = rng.standard_normal((n, d)) * np.exp(rng.uniform(-1, 1, d))
        w = rng.dirichlet(np.ones(n))
        pts = pts - w @ pts
        m = AtomicMeasure(pts, w / w.sum())
        A, B, C = (_random_psd(rng, d) for _ in range(3))
        delta = float(rng.uniform(0.0, 1.0))
        return tensor.check_tensor_swap(m, A, B, C, delta).record("tensor_swap")

    recs = ordered_map(case, range(cfg.cases))
    return [aggregate("tensor_swap", recs, hard=True, cases=cfg.cases, d_max=d_max)]


def suite_recursion(cfg: ExperimentConfig, ell_max: int = 10_000) -> list[CheckRecord]:
    return [bounds.recursion_sequences(ell_max, cfg.c).record()]


def suite_time_identity(cfg: ExperimentConfig, count: int = 20) -> list[CheckRecord]:
    worst = 0.0
    for i in range(count):
        rng = child_rng(cfg.master_seed, i)
        d = int(rng.integers(3, 10**6))
        tc = bounds.time_constants(d, float(rng.uniform(1, 10)), float(rng.uniform(0.01, 0.5)))
        worst = max(worst, abs(tc.identity_residual))
    ok = worst <= 1e-12
    return [CheckRecord(check="time_constant_identity", statistic=worst, threshold=1e-12,
                        status="pass" if ok else "fail", hard=True, seeds=count,
                        violations=int(not ok))]


# ---------------------------------------------------------------------------
# statistical suites
# ---------------------------------------------------------------------------


MOMENT_CASES = (
    ("gaussian", {"d": 1}),
    ("product-exponential", {"rates": [1.0]}),
    ("uniform-box", {"low": [-1.0], "high": [1.0]}),
)
MOMENT_PAIRS = ((4, 2), (3, 1), (6, 2))


def suite_moments(cfg: ExperimentConfig) -> list[CheckRecord]:
    out = []
    for family, params in MOMENT_CASES:
        dens = construct_density(family, **params)
        for a, b in MOMENT_PAIRS:
            res = tensor.check_moment_inequality(dens, a, b)
            out.append(CheckRecord(
                check=f"moment_{family}_{a}_{b}", statistic=res.lhs, threshold=res.rhs + 1e-6,
                status="pass" if res.passed else "flag", lhs=res.lhs, rhs=res.rhs,
                details={"mode": res.mode, "margin": res.rhs / res.lhs},
            ))
    return out


def _lemma_records(cfg: ExperimentConfig, family: str, seed: int) -> list[CheckRecord]:
    rng = child_rng(cfg.master_seed, seed)
    d = cfg.d
    dens = make_density(cfg, family, d)
    atoms = sample_atomic(dens, cfg.n_atoms, rng, method=cfg.sampling)
    B, C = _random_psd(rng, d), _random_psd(rng, d)
    recs = [tensor.check_tensor_vector_bound(atoms, B, C, cfg.slack)]
    if d >= 2:
        recs.append(tensor.check_tensor_isoperimetric(atoms, cfg.q, cfg.alpha, cfg.beta, cfg.slack))
    # a Gaussian factor N(0, I/tau) makes any of these laws "more log-concave than" it
    if family == "gaussian":
        tau = 1.0 / float(np.linalg.eigvalsh(dens.cov)[-1])
        tilted = atoms
    else:
        tau = 1.0
        x = atoms.points - dens.mean
        tilted = AtomicMeasure.from_log_weights(atoms.points, -0.5 * tau * np.sum(x * x, axis=1))
    if cfg.q >= 3:
        recs.append(tensor.check_tensor_strong_logconcave(tilted, tau, cfg.q, cfg.slack))
    _, _, white = moments_and_whiten(atoms)
    r = int(rng.integers(1, d + 1))
    basis, _ = np.linalg.qr(rng.standard_normal((d, r)))
    P = sym(basis @ basis.T)
    recs.append(tensor.check_trace_delta_bounds(white, P, "projection", alpha=cfg.alpha,
                                                beta=cfg.beta, slack=cfg.slack))
    if d >= 2:
        recs.append(tensor.check_trace_delta_bounds(white, _random_psd(rng, d), "psd",
                                                    alpha=cfg.alpha, beta=cfg.beta, slack=cfg.slack))
    return recs


def suite_tensor_lemmas(cfg: ExperimentConfig, families=LEMMA_FAMILIES) -> list[CheckRecord]:
    out = []
    for fam in families:
        per_seed = ordered_map(lambda s: _lemma_records(cfg, fam, s), range(cfg.paths))
        names = [r.check for r in per_seed[0]]
        for k, name in enumerate(names):
            out.append(aggregate(f"{name}[{fam}]", [recs[k] for recs in per_seed],
                                 family=fam, d=cfg.d, n_atoms=cfg.n_atoms))
    return out


def _dt(cfg: ExperimentConfig, T: float) -> float:
    return cfg.dt if cfg.dt is not None else 1e-3 * min(1.0, T)


def suite_drift(cfg: ExperimentConfig, times=(0.2, 0.5, 1.0)) -> list[CheckRecord]:
    """Drift/diffusion bounds at fixed times plus covariance drift and domination."""
    T = max(cfg.T, max(times))
    dt = _dt(cfg, T)

    def one(s):
        rng_seq = np.random.SeedSequence([cfg.master_seed, s])
        atom_seq, noise_seq = rng_seq.spawn(2)
        atoms = sample_atomic(make_density(cfg), cfg.n_atoms, atom_seq, method=cfg.sampling)
        path = localization.simulate_path(atoms, cfg.q, T, dt, seed=noise_seq, record_times=times,
                                          subsets=[])
        recs = []
        for t in times:
            recs.append(localization.check_drift_bounds(path.state_at(t), cfg.alpha, cfg.beta,
                                                        cfg.slack))
        return path, recs

    results = ordered_map(one, range(cfg.paths))
    out = []
    for k, name in enumerate(("drift_v_bound", "drift_delta_bound")):
        recs = [r[k] for _, per_t in results for r in per_t]
        out.append(aggregate(name, recs, family=cfg.family, times=list(times)))
    paths = [p for p, _ in results]
    out.extend(localization.check_cov_drift_and_domination(paths))
    return out


def ensemble(cfg: ExperimentConfig, T: float | None = None, dt: float | None = None,
             record_times=None, diagnostics: bool = False):
    base = base_atoms(cfg)
    T = cfg.T if T is None else T
    dt = dt if dt is not None else (_dt(cfg, T) if T > 0 else 1e-3)
    return base, localization.run_ensemble(
        base, cfg.paths, cfg.master_seed, q=cfg.q, T=T, dt=dt,
        record_times=record_times if record_times is not None else cfg.record_times,
        diagnostics=diagnostics,
    )


def martingale_atoms(base: AtomicMeasure, count: int) -> np.ndarray:
    """Evenly spaced atom indices (deterministic)."""
    count = min(count, base.n)
    return np.unique(np.linspace(0, base.n - 1, count).round().astype(int)) if count else None


def suite_martingale(cfg: ExperimentConfig) -> list[CheckRecord]:
    base, paths = ensemble(cfg)
    return localization.check_martingale(paths, atoms=martingale_atoms(base, cfg.atom_sample))


def suite_potential(cfg: ExperimentConfig) -> list[CheckRecord]:
    tc = bounds.time_constants(max(cfg.d, 2), cfg.alpha, cfg.beta)
    # excursion window [0, T1] resolved with 50 steps
    _, short = ensemble(cfg, T=tc.T1, dt=tc.T1 / 50, record_times=[])
    recs = [r for r in localization.check_potential_lemmas(short, cfg.q, cfg.alpha, cfg.beta, T1=tc.T1,
                                                           grid=[])]
    _, long = ensemble(cfg)
    times = long[0].times[1:]
    grid = times[np.linspace(0, times.size - 1, min(5, times.size)).astype(int)] if times.size else []
    growth = localization.check_potential_lemmas(long, cfg.q, cfg.alpha, cfg.beta, T1=tc.T1, grid=grid)
    recs.extend(r for r in growth if r.check == "potential_f_growth")
    return recs


SUITE_FUNCS = {
    "trace": [suite_trace],
    "swap": [suite_swap],
    "moments": [suite_moments],
    "tensor-lemmas": [suite_tensor_lemmas],
    "drift": [suite_drift],
    "martingale": [suite_martingale],
    "potential": [suite_potential],
}


def run_suite(cfg: ExperimentConfig, name: str | None = None) -> list[CheckRecord]:
    name = name or cfg.suite
    if name == "all":
        order = ["trace", "swap", "moments", "tensor-lemmas", "drift", "martingale", "potential"]
        out = []
        for key in order:
            out.extend(run_suite(cfg, key))
        out.extend(suite_time_identity(cfg))
        return out
    if name not in SUITE_FUNCS:
        raise KeyError(name)
    out = []
    for fn in SUITE_FUNCS[name]:
        out.extend(fn(cfg))
    return out
