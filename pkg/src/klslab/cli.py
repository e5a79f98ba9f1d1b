"""``klslab simulate|verify|bounds|report --config FILE [--seed N] [--out DIR]``.

Exit codes: 0 when every check passes or only flags, 1 when a hard gate
fails, 2 for usage and configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, ConfigError, ExperimentConfig, load_config, validate
from .errors import KLSLabError
from .report import CheckRecord, VerificationReport, dumps

PATH_HEADER = ("t", "gamma", "spec_Q", "g_E", "qv_rate", "v_norm", "delta")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([r if isinstance(r, str) else _fmt(r) for r in row])
    return buf.getvalue()


def _environment(cfg: ExperimentConfig, **extra) -> dict:
    return {
        "klslab": __version__,
        "command": cfg.command,
        "master_seed": cfg.master_seed,
        "seed_rule": "SeedSequence([master_seed, index])",
        "constants": {"c": cfg.c, "c_lv": cfg.c_lv, "alpha": cfg.alpha, "beta": cfg.beta,
                      "log": "natural"},
        "tolerances": {"slack": cfg.slack, "z_band": 4.0, "trace_rel": 1e-10, "swap_rel": 1e-9},
        "config": cfg.echo(),
        **extra,
    }


class _Output:
    """Writes named files under ``out``; without ``out`` sends the primary stream to stdout."""

    def __init__(self, out: str | None):
        self.root = Path(out) if out else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str, primary: bool = False) -> None:
        if self.root is not None:
            target = self.root / name
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text)
        elif primary:
            sys.stdout.write(text)
        else:
            sys.stderr.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def run_simulate(cfg: ExperimentConfig, out: _Output) -> int:
    from . import localization, suites

    base, paths = suites.ensemble(cfg, diagnostics=cfg.diagnostics)
    width = len(str(len(paths) - 1))
    summary_paths = []
    for i, p in enumerate(paths):
        if out.root is not None:
            out.write(f"paths/path_{i:0{width}d}.csv", _csv(PATH_HEADER, p.csv_rows()))
        summary_paths.append({
            "index": i, "steps": p.steps, "gamma_T": p.gamma[-1], "spec_Q_T": p.spec_Q[-1],
            "g_T": p.g[-1, 0] if p.g.shape[1] else None, "qv_T": p.qv[-1, 0] if p.qv.shape[1] else None,
            "noise_energy_z": p.noise.energy_check()[1],
        })
    checks = []
    if paths[0].steps > 0:
        checks.extend(localization.check_martingale(paths, atoms=suites.martingale_atoms(base, cfg.atom_sample)))
        checks.extend(localization.check_cov_drift_and_domination(paths))
    report = VerificationReport(checks, _environment(cfg, n_paths=len(paths)))
    doc = report.to_dict()
    doc["paths"] = summary_paths
    out.write("summary.json", dumps(doc), primary=True)
    return report.exit_code()


def run_verify(cfg: ExperimentConfig, out: _Output) -> int:
    from . import suites

    records = suites.run_suite(cfg)
    report = VerificationReport(records, _environment(cfg, suite=cfg.suite))
    out.write("report.json", report.to_json(), primary=True)
    return report.exit_code()


def run_bounds(cfg: ExperimentConfig, out: _Output) -> int:
    from . import bounds

    if not cfg.d_list:
        raise cfg.error("d_list", "must be nonempty")
    table = bounds.comparison_table(cfg.d_list, cfg.c, cfg.c_lv)
    gate = bounds.recursion_sequences(10_000, cfg.c).record()
    sidecar = dict(table.sidecar)
    sidecar["recursion_gate"] = gate.to_dict()
    sidecar["environment"] = _environment(cfg)
    out.write("bounds.csv", _csv(bounds.TABLE_HEADER, table.rows), primary=True)
    out.write("bounds.json", dumps(sidecar))
    return 1 if gate.status == "fail" else 0


def run_report(cfg: ExperimentConfig, out: _Output) -> int:
    """Isoperimetry bracket for the configured law: half-space, graph proxy, lower bounds."""
    from . import bounds, isoperimetry, suites

    dens = suites.make_density(cfg)
    seed = np.random.SeedSequence([cfg.master_seed, 2**31 + 1])
    upper = isoperimetry.halfspace_isoperimetry(dens, cfg.directions, seed=np.random.default_rng(seed))
    base = suites.base_atoms(cfg)
    estimates = [upper]
    proxy = None
    if base.n >= 100:
        proxy = isoperimetry.conductance_proxy(base, cfg.k_neighbors)
        estimates.append(proxy)
    trunc = isoperimetry.truncate_to_ball(base, cfg.mass_target)
    lower = {"kls_original": bounds.kls_original_bound(dens.cov),
             "lee_vempala": bounds.lee_vempala_bound(dens.cov, cfg.c_lv)}
    if cfg.T > 0:
        _, paths = suites.ensemble(cfg, record_times=[])
        stab = isoperimetry.stability_probability(paths)
        A = paths[0].states[0].geometry.A
        gc = isoperimetry.gaussian_component_lower_bound(cfg.T * np.linalg.inv(A), stab)
        lower["gaussian_component"] = gc
        estimates.append(isoperimetry.IsoperimetryEstimate(gc, "lower-via-gaussian-component",
                                                           f"T={cfg.T!r}", {"stability": stab}))
    d = dens.dim
    sandwich_ok = upper.value >= lower["kls_original"]
    check = CheckRecord(
        check="isoperimetry_sandwich", statistic=upper.value, threshold=lower["kls_original"],
        status="pass" if sandwich_ok else "flag", lhs=lower["kls_original"], rhs=upper.value,
        details={"lower_bounds": lower, "proxy": None if proxy is None else proxy.value},
    )
    report = VerificationReport([check], _environment(cfg))
    doc = report.to_dict()
    doc["truncation"] = {"radius": trunc.radius, **trunc.metadata}
    out.write("isoperimetry.csv", _csv(isoperimetry.csv_header(d), [e.csv_row(d) for e in estimates]),
              primary=True)
    out.write("isoperimetry.json", dumps(doc))
    return report.exit_code()


RUNNERS = {"simulate": run_simulate, "verify": run_verify, "bounds": run_bounds, "report": run_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="klslab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="key = value experiment file")
    ap.add_argument("--seed", type=int, default=None, help="override master_seed")
    ap.add_argument("--out", default=None, help="output directory (default: standard output)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.command is not None and cfg.command != args.command:
            raise cfg.error("command", f"config is for {cfg.command!r}, not {args.command!r}")
        cfg.command = args.command
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0", None, "argv")
            cfg.master_seed = args.seed
            validate(cfg)
        code = RUNNERS[args.command](cfg, _Output(args.out))
    except ConfigError as exc:
        print(f"klslab: {exc}", file=sys.stderr)
        return 2
    except (KLSLabError, ValueError) as exc:
        print(f"klslab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
