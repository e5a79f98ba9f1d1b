"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``[acceptance N] PASS|FAIL`` line; the lines are
repeated in the terminal summary.  Criteria that split into an independent
part that holds and one that does not are separate tests.
"""
import json
import math

import numpy as np
import pytest

from klslab import bounds, cli, isoperimetry, localization, suites, tensor
from klslab.config import ExperimentConfig
from klslab.linalg import random_spd, spec_norm
from klslab.measures import construct_density, sample_atomic
from klslab.parallel import child_rng

pytestmark = pytest.mark.acceptance


# ---------------------------------------------------------------------------
# 1. Gaussian conjugacy oracle
# ---------------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.parametrize("d", [2, 4, 8])
def test_gaussian_conjugacy(d, verdict):
    A = random_spd(d, np.random.default_rng([2024, d]), cond=10.0)
    dens = construct_density("gaussian", mean=np.zeros(d), cov=A)
    base = sample_atomic(dens, 10_000, seed=np.random.SeedSequence([2024, d, 1]), method="sobol")
    times = (0.25, 0.5, 1.0)
    paths = localization.run_ensemble(base, 50, master_seed=d, q=3, T=1.0, dt=1e-3,
                                      record_times=list(times), subsets=[])
    worst_cov, worst_gamma = 0.0, 0.0
    target_gamma = d / 2.0**3
    for p in paths:
        for t in times:
            target = A / (1 + t)
            err = spec_norm(p.A[p.index_of(t)] - target) / spec_norm(target)
            worst_cov = max(worst_cov, err)
        worst_gamma = max(worst_gamma, abs(p.gamma[-1] - target_gamma) / target_gamma)
    ok = worst_cov <= 0.05 and worst_gamma <= 0.05
    verdict(1, f"Gaussian conjugacy d={d}", ok,
            f"max rel spectral error {worst_cov:.4f}, max Gamma_T rel error {worst_gamma:.4f} "
            f"(tolerance 0.05, 50 paths, n=1e4)")


# ---------------------------------------------------------------------------
# 2. martingale suite
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_martingale_suite(verdict):
    cfg = ExperimentConfig(d=3, n_atoms=2000, paths=1000, T=1.0, dt=1e-2, atom_sample=50,
                           master_seed=0)
    base, paths = suites.ensemble(cfg, record_times=[])
    recs = {r.check: r for r in localization.check_martingale(
        paths, atoms=suites.martingale_atoms(base, cfg.atom_sample))}
    sub, atoms = recs["martingale_subset_0"], recs["martingale_atoms"]
    ok = abs(sub.rhs - 0.5) < 1e-12 and abs(sub.z) <= 4 and atoms.violations == 0
    verdict(2, "martingale suite", ok,
            f"g_0={sub.rhs:.4f}, mean g_T={sub.lhs:.4f}, z={sub.z:.3f}; "
            f"{len(atoms.details['atoms'])} atoms, worst z={atoms.z:.3f}")


# ---------------------------------------------------------------------------
# 3-5. exact gates and the moment inequality
# ---------------------------------------------------------------------------


def test_trace_gate(verdict):
    rec = suites.suite_trace(ExperimentConfig(cases=10_000, d_max=8))[0]
    verdict(3, "trace inequality gate", rec.status == "pass" and rec.violations == 0,
            f"{rec.seeds} cases, {rec.violations} violations")


def test_swap_gate(verdict):
    rec = suites.suite_swap(ExperimentConfig(cases=500, d_max=5))[0]
    verdict(4, "tensor swap gate", rec.status == "pass" and rec.violations == 0,
            f"{rec.seeds} cases, {rec.violations} violations")


def test_moment_inequality(verdict):
    recs = suites.suite_moments(ExperimentConfig())
    g = tensor.check_moment_inequality(construct_density("gaussian", mean=[0.0], cov=[[1.0]]), 4, 2)
    ok = (len(recs) == 9 and all(r.status == "pass" for r in recs)
          and all(r.details["mode"] == "quadrature" for r in recs)
          and abs(g.lhs - 3**0.25) <= 1e-6 and abs(g.rhs - 4.0) <= 1e-6)
    verdict(5, "moment inequality", ok,
            f"{sum(r.status == 'pass' for r in recs)}/9 pass; Gaussian (4,2): {g.lhs:.6f} <= {g.rhs:.6f}")


# ---------------------------------------------------------------------------
# 6. statistical lemma suites
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_statistical_lemmas(verdict):
    cfg = ExperimentConfig(d=5, n_atoms=5000, paths=50, slack=1.1, dt=1e-2)
    recs = suites.suite_tensor_lemmas(cfg)
    for fam in suites.LEMMA_FAMILIES:
        fcfg = ExperimentConfig(family=fam, d=5, n_atoms=5000, paths=50, slack=1.1, dt=1e-2,
                                low=[-1.0], high=[1.0])
        for r in suites.suite_drift(fcfg):
            if r.check.startswith("drift_"):
                r.check = f"{r.check}[{fam}]"
                recs.append(r)
    flagged = [r.check for r in recs if r.status != "pass"]
    margins = {r.check: r.details.get("min_margin") for r in recs}
    tightest = min(margins, key=lambda k: margins[k])
    verdict(6, "statistical lemma suites", not flagged,
            f"{len(recs)} aggregated checks over 50 seeds; flagged={flagged}; "
            f"tightest margin {margins[tightest]:.3g} ({tightest})")


# ---------------------------------------------------------------------------
# 7. recursion
# ---------------------------------------------------------------------------


def test_recursion_beta(verdict):
    r = bounds.recursion_sequences(10_000, c=1.0)
    beta_bad = [v for v in r.violations if v[1].startswith("beta")]
    ok = not beta_bad and r.beta[1] == 31 / 64
    verdict("7a", "recursion beta band and beta_2 = 31/64", ok,
            f"beta_2={float(r.beta[1])!r}, beta violations={beta_bad[:5]}")


def test_recursion_alpha(verdict):
    r = bounds.recursion_sequences(10_000, c=1.0)
    alpha_bad = [v for v in r.violations if v[1] == "alpha_upper"]
    detail = (f"alpha violations at ell={[v[0] for v in alpha_bad]}: "
              f"log alpha_1={r.log_alpha[0]:.4f} vs 0.5 log 4={0.5 * math.log(4):.4f}")
    verdict("7b", "recursion alpha bound, c = 1", not alpha_bad, detail)


# ---------------------------------------------------------------------------
# 8. half-space isoperimetry
# ---------------------------------------------------------------------------


def test_halfspace_isoperimetry(verdict):
    target = math.sqrt(2 / math.pi)
    parts, ok = [], True
    for d in range(1, 6):
        dens = construct_density("gaussian", mean=np.zeros(d), cov=np.eye(d))
        est = isoperimetry.halfspace_isoperimetry(dens, 16, seed=0)
        lower = bounds.kls_original_bound(np.eye(d))
        good = abs(est.value / target - 1) <= 0.02 and est.value >= lower
        ok &= good
        parts.append(f"d={d}: {est.value:.6f} >= {lower:.4f}")
    verdict(8, "half-space isoperimetry and sandwich", ok, "; ".join(parts))


# ---------------------------------------------------------------------------
# 9. bound shape
# ---------------------------------------------------------------------------


def test_optimal_ell_scan(verdict):
    pairs = [(bounds.optimal_ell(10.0**k).ell_star, bounds.optimal_ell(10.0**k).scan_argmax)
             for k in range(3, 13)]
    ok = all(abs(a - b) <= 1 for a, b in pairs)
    verdict("9a", "scan argmax within 1 of the formula ell*", ok,
            "(formula, scan) for d=1e3..1e12: " + ", ".join(f"({a},{b})" for a, b in pairs))


def test_exponent_monotone(verdict):
    exps = [bounds.optimal_ell(10.0**k).exponent for k in range(3, 13)]
    ok = all(a > b > 0 for a, b in zip(exps, exps[1:]))
    verdict("9b", "exponent decreases along d=1e3..1e12", ok,
            ", ".join(f"{e:.4f}" for e in exps))


def test_time_constant_identity(verdict):
    rec = suites.suite_time_identity(ExperimentConfig(), count=20)[0]
    verdict("9c", "time-constant identity", rec.status == "pass",
            f"max |residual| over 20 cases = {rec.statistic:.2e}")


# ---------------------------------------------------------------------------
# 10. determinism
# ---------------------------------------------------------------------------


CONFIGS = {
    "simulate": "d = 3\nn_atoms = 500\npaths = 4\nT = 0.2\ndt = 0.01\n",
    "verify": "suite = all\nd = 3\nn_atoms = 400\npaths = 3\nT = 0.2\ndt = 0.02\ncases = 50\n",
    "bounds": "d_list = logspace:3:12:10\n",
    "report": "family = product-exponential\nd = 2\nn_atoms = 400\npaths = 4\nT = 0.1\n"
              "dt = 0.01\ndirections = 3\n",
}


def test_determinism(tmp_path, verdict):
    same = {}
    for cmd, text in CONFIGS.items():
        cfg = tmp_path / f"{cmd}.cfg"
        cfg.write_text(text)
        trees = []
        for rep in ("a", "b"):
            out = tmp_path / cmd / rep
            cli.main([cmd, "--config", str(cfg), "--seed", "3", "--out", str(out)])
            trees.append({str(p.relative_to(out)): p.read_bytes()
                          for p in sorted(out.rglob("*")) if p.is_file()})
        same[cmd] = bool(trees[0]) and trees[0] == trees[1]
    verdict(10, "byte-identical outputs", all(same.values()), str(same))
