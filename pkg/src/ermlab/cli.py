"""Command-line interface: config ingestion, subcommand dispatch, reproducible
seeding and artifact emission.

Configs are versioned JSON (``"schema": 1``); unknown fields are rejected
fail-closed. All outputs derive from a single master seed, so identical
configs reproduce identical result files byte for byte at any --jobs count
(the manifest records wall-clock timestamps and is compared modulo those).

Exit codes: 0 success, 1 config error, 2 success with solver-flagged records.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classes import (
    Marginal,
    descriptor_from_json,
    entropy_envelope,
    make_class,
    sample_member,
    scale_handle,
)
from .complexity import complexity_curve, critical_radius_empirical, critical_radius_envelope
from .errors import ConfigError, ErmLabError, NoRecordsFound
from .estimators import ESTIMATORS
from .harness import (
    PREDICTED_REGRET_SLOPES,
    SweepConfig,
    fit_rate,
    histogram_union_experiment,
    make_transfer_design,
    records_to_csv,
    run_sweep,
    run_transfer_experiment,
    standard_scenarios,
    transfer_reports_to_csv,
    _sweep_task,
)
from .oracle import RegretRecord, Scenario
from .nuisance import LogisticPropensity

SUBCOMMANDS = ("complexity", "critical-radius", "erm-run", "rate-sweep",
               "nuisance-sweep", "histogram", "report")

DEFAULT_SLOPE_TOL = 0.15


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------
def canonical_config(text: str) -> str:
    """Canonical form: parsed JSON re-serialized with sorted keys."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(text: str) -> str:
    return hashlib.sha256(canonical_config(text).encode("utf-8")).hexdigest()


def _check_keys(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown field(s) {sorted(unknown)} in {where}")


def load_config(path: str, expected_kind: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse error at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema") != 1:
        raise ConfigError("config must declare \"schema\": 1")
    if cfg.get("kind") != expected_kind:
        raise ConfigError(
            f"config kind {cfg.get('kind')!r} does not match subcommand "
            f"{expected_kind!r}")
    cfg["_text"] = text
    return cfg


_SCENARIO_KEYS = {"preset", "scenario_id", "class", "f0", "noise_sigma",
                  "marginal", "propensity"}
_F0_KEYS = {"sample_seed", "scale"}


def scenario_from_config(obj: dict) -> tuple[Scenario, str, dict]:
    """Build (scenario, estimator_id, estimator_kwargs) from config JSON."""
    _check_keys(obj, _SCENARIO_KEYS | {"estimator", "estimator_kwargs"},
                "scenario")
    if "preset" in obj:
        catalogue = standard_scenarios()
        if obj["preset"] not in catalogue:
            raise ConfigError(
                f"unknown preset {obj['preset']!r}; have {sorted(catalogue)}")
        scenario, est_id, est_kwargs = catalogue[obj["preset"]]
    else:
        for req in ("scenario_id", "class", "f0"):
            if req not in obj:
                raise ConfigError(f"scenario config needs '{req}'")
        try:
            desc = make_class(descriptor_from_json(obj["class"]))
        except ErmLabError as exc:
            raise ConfigError(f"invalid class spec: {exc}") from None
        f0_spec = obj["f0"]
        _check_keys(f0_spec, _F0_KEYS, "f0")
        handle = sample_member(desc, int(f0_spec.get("sample_seed", 0)))
        handle = scale_handle(handle, float(f0_spec.get("scale", 1.0)))
        marg = Marginal(**obj.get("marginal", {"kind": "UniformCube"}))
        prop = None
        if "propensity" in obj:
            _check_keys(obj["propensity"], {"intercept", "slope"}, "propensity")
            prop = LogisticPropensity(**obj["propensity"])
        scenario = Scenario(obj["scenario_id"], desc, handle,
                            noise_sigma=float(obj.get("noise_sigma", 0.0)),
                            marginal=marg, propensity=prop)
        est_id, est_kwargs = None, {}
    est_id = obj.get("estimator", est_id)
    est_kwargs = obj.get("estimator_kwargs", est_kwargs)
    if est_id is None or est_id not in ESTIMATORS:
        raise ConfigError(f"estimator must be one of {sorted(ESTIMATORS)}")
    return scenario, est_id, est_kwargs


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------
class Emitter:
    """Writes result files under --out and collects the manifest."""

    def __init__(self, out_dir: str, cfg_text: str, master_seed: int):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.cfg_hash = config_hash(cfg_text)
        self.master_seed = master_seed
        self.files: list[str] = []

    def write(self, name: str, content: str) -> Path:
        path = self.out / name
        path.write_text(content)
        self.files.append(name)
        return path

    def finish(self) -> None:
        manifest = {
            "config_hash": self.cfg_hash,
            "master_seed": self.master_seed,
            "tool_version": __version__,
            "started_at": self.started,
            "finished_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "outputs": sorted(self.files),
        }
        (self.out / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------
def _cmd_complexity(cfg, args, emitter) -> int:
    _check_keys(cfg, {"schema", "kind", "class", "n", "delta_grid", "norm_mode",
                      "_text"}, "complexity config")
    desc = make_class(descriptor_from_json(cfg["class"]))
    n = int(cfg.get("n", 256))
    rng = np.random.default_rng(args.seed)
    points = Marginal().sample(desc, rng, n)
    grid = cfg.get("delta_grid")
    curve = complexity_curve(
        desc, points, delta_grid=None if grid is None else np.asarray(grid),
        reps=args.mc_reps, seed=args.seed,
        norm_mode=cfg.get("norm_mode", "PopulationL2"))
    emitter.write("complexity_curve.csv", curve.to_csv())
    try:
        radius = critical_radius_empirical(curve)
        print(f"empirical critical radius: {radius.value:.6g} (n={n})")
    except ErmLabError as exc:
        print(f"no empirical crossing: {exc}")
    return 0


def _cmd_critical_radius(cfg, args, emitter) -> int:
    _check_keys(cfg, {"schema", "kind", "class", "n_grid", "norm_mode", "_text"},
                "critical-radius config")
    desc = make_class(descriptor_from_json(cfg["class"]))
    env = entropy_envelope(desc, cfg.get("norm_mode", "UniformL2"))
    n_grid = [int(n) for n in cfg.get("n_grid", [2**k for k in range(7, 14)])]
    lines = ["n,delta_n,method"]
    print(f"critical radii for {desc.kind} (envelope gamma="
          f"{env.exponent_gamma:g}):")
    for n in n_grid:
        cr = critical_radius_envelope(env, n)
        lines.append(f"{n},{cr.value!r},{cr.method}")
        print(f"  n={n:>8d}  delta_n={cr.value:.6g}  [{cr.method}]")
    emitter.write("critical_radius.csv", "\n".join(lines) + "\n")
    return 0


def _cmd_erm_run(cfg, args, emitter) -> int:
    _check_keys(cfg, {"schema", "kind", "scenario", "n", "_text"},
                "erm-run config")
    scenario, est_id, est_kwargs = scenario_from_config(cfg["scenario"])
    n = int(cfg.get("n", 256))
    record = _sweep_task(scenario, est_id, est_kwargs, n, 0, args.seed)
    emitter.write("records.csv", records_to_csv([record]))
    print(record.csv_row())
    return 2 if ("error" in record.flags or "nonconverged" in record.flags) else 0


def _cmd_rate_sweep(cfg, args, emitter) -> int:
    _check_keys(cfg, {"schema", "kind", "scenario", "n_grid", "seeds_per_n",
                      "eta", "slope_tol", "predicted_exponent", "_text"},
                "rate-sweep config")
    scenario, est_id, est_kwargs = scenario_from_config(cfg["scenario"])
    sweep = SweepConfig(
        scenario=scenario, estimator_id=est_id, estimator_kwargs=est_kwargs,
        n_grid=tuple(int(n) for n in cfg.get("n_grid", (128, 256, 512, 1024,
                                                        2048, 4096, 8192))),
        seeds_per_n=int(cfg.get("seeds_per_n", 32)),
        master_seed=args.seed, eta=float(cfg.get("eta", 0.1)), jobs=args.jobs)
    records = run_sweep(sweep)
    emitter.write("records.csv", records_to_csv(records))
    rate = fit_rate(records, "Regret")
    rate_l2 = fit_rate(records, "L2Error")
    predicted = cfg.get("predicted_exponent",
                        PREDICTED_REGRET_SLOPES.get(scenario.scenario_id))
    tol = float(cfg.get("slope_tol", DEFAULT_SLOPE_TOL))
    row = {
        "scenario": scenario.scenario_id,
        "predicted_exponent": predicted,
        "fitted_slope": rate.slope,
        "stderr": rate.slope_stderr,
        "pass": (predicted is None or abs(rate.slope - predicted) <= tol),
        "fitted_l2_slope": rate_l2.slope,
    }
    emitter.write("summary.json", _json_dumps([row]))
    print(f"{scenario.scenario_id}: regret slope {rate.slope:+.3f} "
          f"(predicted {predicted}), L2 slope {rate_l2.slope:+.3f}")
    flagged = any("error" in r.flags or "nonconverged" in r.flags
                  for r in records)
    return 2 if flagged else 0


def _cmd_nuisance_sweep(cfg, args, emitter) -> int:
    _check_keys(cfg, {"schema", "kind", "n", "chi2_grid", "seeds_per_level",
                      "_text"}, "nuisance-sweep config")
    design = make_transfer_design()
    reports = run_transfer_experiment(
        design, n=int(cfg.get("n", 4096)),
        chi2_values=[float(c) for c in cfg.get("chi2_grid",
                                               (1e-3, 3.16e-3, 1e-2, 3.16e-2, 1e-1))],
        seeds_per_level=int(cfg.get("seeds_per_level", 40)),
        master_seed=args.seed)
    emitter.write("transfer.csv", transfer_reports_to_csv(reports))
    frac = float(np.mean([r.holds for r in reports if r.chi2_in_range]))
    print(f"transfer bound held on {frac:.1%} of in-range runs")
    return 0


def _cmd_histogram(cfg, args, emitter) -> int:
    _check_keys(cfg, {"schema", "kind", "n_grid", "seeds", "k_rule", "eta",
                      "noise_sigma", "_text"}, "histogram config")
    rule_spec = cfg.get("k_rule", "sqrt")
    if rule_spec == "sqrt":
        k_rule = lambda n: max(1, int(round(n**0.5)))
    elif rule_spec == "one":
        k_rule = lambda n: 1
    elif isinstance(rule_spec, (int, float)):
        k_rule = lambda n: int(rule_spec)
    else:
        raise ConfigError("k_rule must be 'sqrt', 'one', or an integer")
    records = histogram_union_experiment(
        k_rule, [int(n) for n in cfg.get("n_grid", (256, 1024, 4096))],
        seeds=int(cfg.get("seeds", 200)), master_seed=args.seed,
        eta=float(cfg.get("eta", 0.1)),
        noise_sigma=float(cfg.get("noise_sigma", 0.5)))
    from .harness import HistogramRecord

    lines = [HistogramRecord.CSV_HEADER]
    lines.extend(r.csv_row() for r in records)
    emitter.write("histogram.csv", "\n".join(lines) + "\n")
    cover = float(np.mean([r.simultaneous for r in records]))
    print(f"simultaneous per-bin coverage: {cover:.1%}")
    return 0


def _read_records_csv(path: Path) -> list[RegretRecord]:
    records = []
    lines = path.read_text().strip().splitlines()
    if not lines or lines[0] != RegretRecord.CSV_HEADER:
        return []
    for line in lines[1:]:
        parts = line.split(",")
        records.append(RegretRecord(
            n=int(parts[0]), seed=int(parts[1]), scenario_id=parts[2],
            emp_risk=float(parts[3]), pop_risk=float(parts[4]),
            regret=float(parts[5]), l2_error=float(parts[6]),
            fluctuation=float(parts[7]), flags=parts[8] if len(parts) > 8 else ""))
    return records


def _cmd_report(cfg, args, emitter) -> int:
    records_dir = Path(args.out)
    records = []
    for path in sorted(records_dir.glob("**/records*.csv")):
        records.extend(_read_records_csv(path))
    if not records:
        raise NoRecordsFound(f"no records CSVs under {records_dir}")
    by_scenario: dict[str, list[RegretRecord]] = {}
    for r in records:
        by_scenario.setdefault(r.scenario_id, []).append(r)
    tol = DEFAULT_SLOPE_TOL
    rows = []
    md = ["| scenario | predicted | fitted slope | stderr | pass |",
          "|---|---|---|---|---|"]
    for scenario_id in sorted(by_scenario):
        rate = fit_rate(by_scenario[scenario_id], "Regret")
        predicted = PREDICTED_REGRET_SLOPES.get(scenario_id)
        ok = predicted is None or abs(rate.slope - predicted) <= tol
        rows.append({
            "scenario": scenario_id, "predicted_exponent": predicted,
            "fitted_slope": rate.slope, "stderr": rate.slope_stderr,
            "pass": bool(ok),
        })
        md.append(f"| {scenario_id} | {predicted} | {rate.slope:+.3f} | "
                  f"{rate.slope_stderr:.3f} | {'yes' if ok else 'NO'} |")
    emitter.write("summary.json", _json_dumps(rows))
    emitter.write("summary.md", "\n".join(md) + "\n")
    print("\n".join(md))
    return 0


_HANDLERS = {
    "complexity": ("complexity", _cmd_complexity, True),
    "critical-radius": ("critical-radius", _cmd_critical_radius, True),
    "erm-run": ("erm-run", _cmd_erm_run, True),
    "rate-sweep": ("rate-sweep", _cmd_rate_sweep, True),
    "nuisance-sweep": ("nuisance-sweep", _cmd_nuisance_sweep, True),
    "histogram": ("histogram", _cmd_histogram, True),
    "report": ("report", _cmd_report, False),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ermlab",
        description="ERM rate laboratory: complexity curves, critical radii, "
                    "regret sweeps and nuisance experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        if name != "report":
            p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=0, help="master seed (u64)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker count")
        p.add_argument("--mc-reps", type=int, default=512, dest="mc_reps",
                       help="Monte Carlo replications")
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    kind, handler, needs_config = _HANDLERS[args.command]
    try:
        if needs_config:
            cfg = load_config(args.config, kind)
            cfg_text = cfg["_text"]
        else:
            cfg, cfg_text = {}, "{}"
        emitter = Emitter(args.out, cfg_text, args.seed)
        status = handler(cfg, args, emitter)
        emitter.finish()
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NoRecordsFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ErmLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
