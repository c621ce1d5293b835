"""Command-line entry point: ``statqm evolve|spectrum|verify-symbolic|maxent``.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 verification failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import config as config_mod
from .dynamics import energy_balance_residual, evolve
from .errors import ConfigError, StatQMError
from .fields import SampledField, to_wavefunction, write_columns
from .maxent import (EnergyLandscape, canonical_distribution, entropy, extremum_check, functional_K,
                     lambda1_of, log_partition, mean_energy, solve_lambda)
from .momentum import fourier_forward, h_diagnostic, kinetic_expectation, quantum_momentum_density
from .observables import ObservableRecord, ehrenfest_residuals, fisher_information, with_ehrenfest
from .symbolic import run_suite

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


class VerificationFailed(Exception):
    pass


def _clean(v):
    """JSON-safe value: numpy scalars to Python, non-finite floats to None."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _prepare_out(out: Path, cfg: config_mod.ScenarioConfig) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfg.dump())
    return out


# --- evolve ------------------------------------------------------------------

def _max_abs(a) -> float | None:
    a = np.asarray(a, dtype=float)
    a = a[np.isfinite(a)]
    return float(np.max(np.abs(a))) if a.size else None


def run_evolve(cfg: config_mod.ScenarioConfig, out: Path) -> dict:
    state = cfg.initial_state()
    ecfg = cfg.evolution()
    traj = evolve(state, ecfg)
    records = traj.records
    summary = {"scheme": ecfg.scheme, "coupling": cfg.data["coupling"], "snapshots": len(records),
               "seed": cfg.seed}
    try:
        res = ehrenfest_residuals(records, ecfg.mass)
        records = with_ehrenfest(records, res)
        summary["ehrenfest_rel1"] = res.rel1
        summary["ehrenfest_rel2"] = res.rel2
    except ValueError as err:
        summary["ehrenfest_note"] = str(err)
    e = np.array([r.E_mean for r in records])
    e0 = e[0]
    # relative to |E(0)| unless that is round-off next to the energies involved
    magnitude = max(np.max(np.abs([r.T_mean for r in records])), np.max(np.abs([r.V_mean for r in records])))
    scale = abs(e0) if abs(e0) > 1e-12 * magnitude else (magnitude or 1.0)
    summary["energy_scale"] = scale
    summary["energy_drift_abs"] = abs(e[-1] - e0)
    summary["energy_drift_rel"] = abs(e[-1] - e0) / scale
    summary["energy_drift_rel_max"] = float(np.max(np.abs(e - e0))) / scale
    norms = []
    for i, st in enumerate(traj.states):
        if traj.waves:
            norms.append(traj.waves[i].norm)
        elif st is not None:
            norms.append(st.norm)
    summary["norm_drift_max"] = _max_abs(np.array(norms) - 1.0)
    summary["p_mean_change"] = records[-1].p_mean - records[0].p_mean
    if len(traj) >= 3 and ecfg.scheme != "lagrangian":
        r = energy_balance_residual(traj, ecfg)
        summary["energy_balance_max"] = _max_abs(r)
    summary["initial"] = records[0].as_dict()
    summary["final"] = records[-1].as_dict()

    _prepare_out(out, cfg)
    cols = ObservableRecord.columns()
    write_columns(out / "trajectory.csv", {c: [getattr(r, c) for r in records] for c in cols})
    if cfg.data["output"]["dumps"]:
        dump_dir = out / "fields"
        dump_dir.mkdir(exist_ok=True)
        for i, st in enumerate(traj.states):
            if st is not None:
                st.to_csv(dump_dir / f"state_{i:05d}.csv")
    write_json(out / "summary.json", summary)
    return summary


# --- spectrum ----------------------------------------------------------------

def run_spectrum(cfg: config_mod.ScenarioConfig, out: Path) -> dict:
    sp = cfg.data.get("spectrum", {"bins": None, "at": "initial"})
    s = cfg.data["evolution"]["s_const"]
    mass = cfg.data["evolution"]["mass"]
    state = cfg.initial_state()
    if sp["at"] == "final":
        if "dt" not in cfg.data["evolution"]:
            raise ConfigError("spectrum.at = final needs an evolution section")
        traj = evolve(state, cfg.evolution())
        state = traj.states[-1]
        if state is None:
            raise StatQMError("final snapshot has no (rho, S) view")
    diag = h_diagnostic(state, s, sp["bins"])
    psi = to_wavefunction(state, s)
    quantum = quantum_momentum_density(fourier_forward(psi))
    fisher = fisher_information(SampledField(state.grid, state.rho))
    kin = kinetic_expectation(psi, mass)
    summary = {"t": state.t, "moments": diag.as_dict(), "fisher_I": fisher,
               "m2_expected": -(s**2) / 4 * fisher, "quantum_norm": quantum.norm(),
               "hybrid_norm": diag.hybrid.norm(), "quantum_mean": quantum.mean(),
               "kinetic": {"total": kin.total, "phase_term": kin.phase_term, "fisher_term": kin.fisher_term},
               "seed": cfg.seed}
    _prepare_out(out, cfg)
    write_columns(out / "momentum_quantum.csv", {"p": quantum.p, "w": quantum.w})
    write_columns(out / "momentum_hybrid.csv", {"p": diag.hybrid.p, "w": diag.hybrid.w})
    write_columns(out / "h.csv", {"p": diag.p, "h": diag.h})
    write_json(out / "spectrum.json", summary)
    return summary


# --- maxent ------------------------------------------------------------------

def _landscape(cfg: config_mod.ScenarioConfig) -> EnergyLandscape:
    mx = cfg.data["maxent"]
    if mx["energies"] is not None:
        return EnergyLandscape.discrete(mx["energies"])
    try:
        return EnergyLandscape.from_csv(cfg.resolve_path(mx["landscape"]))
    except (OSError, ValueError) as err:
        raise ConfigError(f"maxent.landscape: {err}") from err


def run_maxent(cfg: config_mod.ScenarioConfig, out: Path) -> dict:
    mx = cfg.data["maxent"]
    land = _landscape(cfg)
    lam2 = solve_lambda(land, mx["target"])
    rho = canonical_distribution(land, lam2)
    lam1 = lambda1_of(land, lam2)
    report = extremum_check(land, rho, mx["trials"], mx["delta"], lam2, seed=cfg.seed)
    spread = float(land.E.max() - land.E.min())
    summary = {"lambda2": lam2, "lambda1": lam1, "log_Z": log_partition(land, lam2),
               "mean_energy": mean_energy(land, lam2), "target": mx["target"],
               "residual_rel": abs(mean_energy(land, lam2) - mx["target"]) / spread,
               "entropy": entropy(land, rho), "K": functional_K(land, rho, lam1, lam2),
               "extremum": {"trials": mx["trials"], "delta": mx["delta"],
                            "all_non_increasing": report.all_non_increasing,
                            "max_change": report.max_change,
                            "energy_preserving": report.energy_preserving},
               "seed": cfg.seed}
    _prepare_out(out, cfg)
    if land.is_discrete:
        write_columns(out / "rho.csv", {"i": np.arange(land.E.size), "rho": rho})
    else:
        write_columns(out / "rho.csv", {"x": land.grid.x, "rho": rho})
    write_json(out / "maxent.json", summary)
    if not report.all_non_increasing:
        raise VerificationFailed(f"extremum check: K increased by {report.max_change:.3g}")
    return summary


# --- verify-symbolic ---------------------------------------------------------

def run_verify_symbolic(window, out: Path | None, stream=None) -> bool:
    stream = sys.stdout if stream is None else stream
    checks = run_suite(tuple(window))
    lines = []
    for c in checks:
        line = f"{'PASS' if c.passed else 'FAIL'}  {c.name}"
        if not c.passed and c.witness:
            line += f"\n      witness: {c.witness}"
        lines.append(line)
    ok = all(c.passed for c in checks)
    lines.append(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed")
    text = "\n".join(lines) + "\n"
    stream.write(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "symbolic_report.txt").write_text(text)
        write_json(out / "symbolic_report.json",
                   {"window": list(window),
                    "checks": [{"name": c.name, "passed": c.passed, "witness": c.witness} for c in checks]})
    return ok


# --- dispatch ----------------------------------------------------------------

NEEDS = {"evolve": ("grid", "evolution"), "spectrum": ("grid",), "maxent": ("maxent",)}
RUNNERS = {"evolve": run_evolve, "spectrum": run_spectrum, "maxent": run_maxent}


def run_command(command: str, config_path, out, seed=None, overrides=None) -> int:
    """Run one scenario; returns the exit code and reports errors on stderr."""
    try:
        cfg = config_mod.load(config_path, NEEDS[command]).with_seed(seed)
        if overrides:
            data = dict(cfg.data)
            data["maxent"] = {**data["maxent"], **overrides}
            cfg = config_mod.ScenarioConfig(data, cfg.source)
            config_mod.check_files(cfg)
        RUNNERS[command](cfg, Path(out))
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except VerificationFailed as err:
        print(f"verification failed: {err}", file=sys.stderr)
        return EXIT_VERIFY
    except (StatQMError, FloatingPointError, ValueError) as err:
        print(f"numeric failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _batch_entries(path: Path, command: str, out: Path):
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read batch file {path}: {err}") from err
    items = raw.get("scenarios") if isinstance(raw, dict) else raw
    if not isinstance(items, list) or not items:
        raise ConfigError(f"{path}: expected a non-empty list of scenarios")
    entries = []
    for i, item in enumerate(items):
        if isinstance(item, str):
            item = {"config": item}
        if not isinstance(item, dict) or "config" not in item or set(item) - {"config", "name"}:
            raise ConfigError(f"{path}: scenario {i}: expected a path or {{config, name}}")
        cfg_path = Path(item["config"])
        cfg_path = cfg_path if cfg_path.is_absolute() else path.parent / cfg_path
        name = str(item.get("name", cfg_path.stem))
        entries.append((command, cfg_path, out / name))
    names = [e[2] for e in entries]
    if len(set(names)) != len(names):
        raise ConfigError(f"{path}: scenario names must be unique")
    return entries


def _run_entry(entry, seed):
    command, cfg_path, out = entry
    return run_command(command, cfg_path, out, seed)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="statqm", description="Run (rho, S) field-theory scenarios and checks")
    ap.add_argument("command", choices=["evolve", "spectrum", "verify-symbolic", "maxent"])
    ap.add_argument("--config", type=Path, help="scenario YAML file")
    ap.add_argument("--out", type=Path, default=None, help="output directory (default ./run)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--batch", type=Path, help="YAML list of scenario configs, run in parallel")
    ap.add_argument("--jobs", type=int, default=None, help="worker processes for --batch")
    ap.add_argument("--window", type=int, nargs=2, default=(-6, 6), metavar=("LO", "HI"),
                    help="coefficient window for verify-symbolic")
    ap.add_argument("--landscape", type=str, help="maxent: CSV with x,E or i,E (overrides config)")
    ap.add_argument("--target", type=float, help="maxent: target mean energy (overrides config)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify-symbolic":
        lo, hi = args.window
        if lo >= hi:
            print("config error: --window needs LO < HI", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK if run_verify_symbolic((lo, hi), args.out) else EXIT_VERIFY
    if args.out is None:
        args.out = Path("run")

    if args.batch is not None:
        try:
            entries = _batch_entries(args.batch, args.command, args.out)
        except ConfigError as err:
            print(f"config error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        jobs = args.jobs or min(len(entries), os.cpu_count() or 1)
        if jobs <= 1:
            codes = [_run_entry(e, args.seed) for e in entries]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                codes = list(pool.map(_run_entry, entries, [args.seed] * len(entries)))
        for (_, cfg_path, out), code in zip(entries, codes):
            print(f"{cfg_path} -> {out}: exit {code}")
        return max(codes)

    overrides = {}
    if args.command == "maxent":
        if args.landscape is not None:
            overrides.update(landscape=str(Path(args.landscape).resolve()), energies=None)
        if args.target is not None:
            overrides["target"] = args.target
    if args.config is None:
        if args.command == "maxent" and args.landscape is not None and args.target is not None:
            return _maxent_from_flags(args, overrides)
        print("config error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    return run_command(args.command, args.config, args.out, args.seed, overrides)


def _maxent_from_flags(args, overrides) -> int:
    try:
        data = config_mod.validate({"maxent": {"landscape": overrides["landscape"], "target": overrides["target"]},
                                    "seed": args.seed or 0}, "<flags>", needs=("maxent",))
        cfg = config_mod.ScenarioConfig(data)
        config_mod.check_files(cfg)
        run_maxent(cfg, args.out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except VerificationFailed as err:
        print(f"verification failed: {err}", file=sys.stderr)
        return EXIT_VERIFY
    except (StatQMError, ValueError) as err:
        print(f"numeric failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
