"""Command-line entry point: ``design``, ``rate``, ``sweep`` and ``budget``.

Exit codes: 0 success (a zero key is a result, not a failure), 2 invalid
configuration or observables, 3 I/O failure or infeasible optimization
setup, 4 bound inapplicable.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import json
import logging
import sys
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from . import __version__, optimize, records
from .config import SCHEMA_VERSION, RunConfig, load_raw, resolve
from .core import RateResult, SecurityBudget
from .errors import (
    BoundInapplicable,
    ConfigError,
    ContractError,
    DomainError,
    EstimationError,
    InfeasibleDesign,
)

log = logging.getLogger("finitekey")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INAPPLICABLE = 0, 2, 3, 4

CSV_SCHEMA = 1
CSV_HEADER = ("variant", "N", "t", "K", "pX", "mu_or_y", "muI", "qEmpty", "qII",
              "eps_bar", "eps_PE", "eps_PA", "flags")

MODEL_NOTES = ("weak-coherent-pulse expected rates neglect double clicks",
               "decoy-3 rows use the approximate (fluctuation-after-solve) bound")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _budget_dict(b: SecurityBudget) -> dict[str, float]:
    return {"eps_total": b.eps_total, **b.components(), "n_PE": b.n_PE}


def _result_dict(res: RateResult) -> dict[str, Any]:
    return {"K": res.K, "r": res.r, "R": res.R, "bracket": res.bracket, "s_xi": res.s_xi,
            "delta": res.delta, "leak": res.leak, "n": res.n, "flags": list(res.flags),
            "details": dict(res.details), "budget": _budget_dict(res.budget)}


def _print_result(res: RateResult, out) -> None:
    b = res.budget
    print(f"epsilons    eps_EC={_fmt(b.eps_EC)} eps_bar={_fmt(b.eps_bar)} "
          f"eps_PE={_fmt(b.eps_PE)} (x{b.n_PE}) eps_PA={_fmt(b.eps_PA)}", file=out)
    print(f"K           {_fmt(res.K)}  per sent signal", file=out)
    print(f"r           {_fmt(res.r)}  per detected signal", file=out)
    if res.flags:
        print(f"flags       {';'.join(res.flags)}", file=out)
    if res.no_key:
        print("no key      the bound certifies no secret bits for these inputs", file=out)


def _write_json(path: str, payload: Mapping[str, Any]) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def design_record(cfg: RunConfig, report: optimize.OptimizationReport) -> dict[str, Any]:
    problem = optimize.make_problem(cfg.variant, cfg.channel, cfg.N, cfg.targets, **cfg.options)
    values = dict(report.design.values)
    obs = problem.observables(values)
    ints = problem.intensities(values) if isinstance(problem, optimize.DecoyProblem) else None
    return {
        "tool": "finitekey", "version": __version__, "command": "design",
        "variant": cfg.variant, "N": cfg.N,
        "channel": dataclasses.asdict(cfg.channel),
        "security": dataclasses.asdict(cfg.targets),
        "design": values,
        "observables": records.mapping_from_observables(cfg.variant, obs, ints),
        "result": _result_dict(report.result),
        "evaluations": report.evaluations,
        "converged": report.converged,
    }


def cmd_design(cfg: RunConfig, args, out) -> int:
    report = optimize.optimize_design(cfg.variant, cfg.channel, cfg.N, cfg.targets, **cfg.options)
    record = design_record(cfg, report)
    if args.json:
        print(json.dumps(record, indent=2, sort_keys=True), file=out)
    else:
        print(f"variant     {cfg.variant}", file=out)
        print(f"N           {_fmt(cfg.N)}   t = {_fmt(cfg.channel.t)}", file=out)
        print("design      " + "  ".join(f"{k}={_fmt(v)}" for k, v in record["design"].items()), file=out)
        _print_result(report.result, out)
        flat = records.flatten(record["observables"])
        print("expected    " + "  ".join(f"{k}={_fmt(v)}" for k, v in flat.items()
                                         if not isinstance(v, bool)), file=out)
    path = args.record or cfg.record_path
    if path:
        _write_json(path, record)
    return EXIT_OK


def _measured(cfg: RunConfig) -> records.Measured:
    return records.measured_from_mapping(cfg.variant, cfg.observables)


def cmd_rate(cfg: RunConfig, args, out) -> int:
    measured = _measured(cfg)
    rate_fn = measured.rate_fn(cfg.targets.ec)
    res = optimize.reoptimize_epsilons(cfg.targets, optimize.N_PE[cfg.variant], rate_fn)
    ell = res.key_length(measured.N)
    payload = {"tool": "finitekey", "version": __version__, "command": "rate",
               "variant": cfg.variant, "N": measured.N, "key_length": ell, "result": _result_dict(res)}
    if args.apriori:
        try:
            expected = json.loads(Path(args.apriori).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--apriori: not a JSON design record: {exc}") from None
        diffs = records.differences(cfg.observables, expected.get("observables", {}), args.tolerance)
        payload["differs_from_apriori"] = {k: {"measured": a, "expected": b} for k, (a, b) in diffs.items()}
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True), file=out)
    else:
        print(f"variant     {cfg.variant}", file=out)
        print(f"N           {_fmt(measured.N)}", file=out)
        _print_result(res, out)
        print(f"key length  {ell} bits after privacy amplification", file=out)
        for key, d in payload.get("differs_from_apriori", {}).items():
            print(f"differs     {key}: measured {_fmt(d['measured'])}, expected {_fmt(d['expected'])}",
                  file=out)
    return EXIT_OK


def sweep_rows(rows: Sequence[optimize.SweepRow]) -> list[list[str]]:
    """CSV cells; inapplicable columns stay empty, numbers use ``repr``."""
    table = []
    for row in rows:
        cells = dict.fromkeys(CSV_HEADER, "")
        cells.update(variant=row.variant, N=repr(row.N), t=repr(row.t))
        if row.report is None:
            cells["flags"] = f"error:{row.error.split(':', 1)[0]}"
        else:
            rep = row.report
            v = rep.design.values
            cells.update(K=repr(rep.K), pX=repr(v["p_X"]), eps_bar=repr(rep.budget.eps_bar),
                         eps_PE=repr(rep.budget.eps_PE), eps_PA=repr(rep.budget.eps_PA),
                         flags=";".join(rep.result.flags))
            if row.variant == "no-decoy":
                cells["mu_or_y"] = repr(v["mu"])
            elif row.variant == "decoy-3":
                cells.update(mu_or_y=repr(v["mu_II"]), muI=repr(v["mu_I"]),
                             qEmpty=repr(v["q_empty"]), qII=repr(v["q_II"]))
            else:
                cells["mu_or_y"] = repr(v["y"])
        table.append([cells[c] for c in CSV_HEADER])
    return table


def cmd_sweep(cfg: RunConfig, args, out) -> int:
    path = args.output or cfg.output_path
    if not path:
        raise ConfigError("output.path: required for sweep (or pass --output)")
    workers = args.workers or cfg.workers
    # fail on an unwritable destination before spending time on the sweep
    with open(path, "w", newline="") as fh:
        rows = optimize.sweep_transmittivity(cfg.variant, cfg.channel, cfg.grid_N, cfg.grid_t,
                                             cfg.targets, workers=workers, **cfg.options)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(sweep_rows(rows))
    meta = {
        "tool": "finitekey", "version": __version__, "csv_schema": CSV_SCHEMA,
        "config_schema": SCHEMA_VERSION, "header": ",".join(CSV_HEADER),
        "config_sha256": cfg.digest(), "config": cfg.raw, "notes": list(MODEL_NOTES),
        # informational only, not part of the hash above
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    Path(path + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    n_err = sum(r.report is None for r in rows)
    print(f"wrote {len(rows)} rows to {path}" + (f" ({n_err} failed points)" if n_err else ""), file=out)
    return EXIT_OK


def _budget_target(cfg: RunConfig):
    """Bound evaluator for the budget table and a label describing it."""
    if cfg.observables is not None:
        measured = _measured(cfg)
        return measured.rate_fn(cfg.targets.ec), "measured observables"
    problem = optimize.make_problem(cfg.variant, cfg.channel, cfg.N, cfg.targets, **cfg.options)
    if cfg.point is not None:
        values = dict(cfg.point)
        label = "design point from config"
    else:
        values = dict(optimize.optimize_design(cfg.variant, cfg.channel, cfg.N, cfg.targets,
                                               **cfg.options).design.values)
        label = "optimized design"
    return (lambda b: problem.evaluate(values, b)), label


def sensitivity(rate_fn, budget: SecurityBudget) -> dict[str, tuple[float | None, float | None]]:
    """K with one component moved a decade down / up and the others held.

    The total epsilon changes accordingly; this shows what each component
    is worth, not an admissible split.
    """
    out = {}
    for name in ("eps_bar", "eps_PE", "eps_PA"):
        pair = []
        for factor in (0.1, 10.0):
            comps = budget.components()
            comps[name] *= factor
            total = comps["eps_EC"] + comps["eps_bar"] + budget.n_PE * comps["eps_PE"] + comps["eps_PA"]
            if not (comps[name] < 1.0 and total < 1.0):
                pair.append(None)
                continue
            b = SecurityBudget(total, comps["eps_EC"], comps["eps_bar"], comps["eps_PE"],
                               comps["eps_PA"], budget.n_PE)
            try:
                pair.append(rate_fn(b).K)
            except BoundInapplicable:
                pair.append(None)
        out[name] = (pair[0], pair[1])
    return out


def _cell(k: float | None) -> str:
    return f"{'n/a':>12}" if k is None else f"{k:>12.4e}"


def cmd_budget(cfg: RunConfig, args, out) -> int:
    rate_fn, label = _budget_target(cfg)
    n_PE = optimize.N_PE[cfg.variant]
    res = optimize.reoptimize_epsilons(cfg.targets, n_PE, rate_fn)
    b = res.budget
    total = b.eps_EC + b.eps_bar + n_PE * b.eps_PE + b.eps_PA
    sens = sensitivity(rate_fn, b)
    if args.json:
        print(json.dumps({"variant": cfg.variant, "source": label, "budget": _budget_dict(b),
                          "sum": total, "K": res.K,
                          "sensitivity": {k: {"down": d, "up": u} for k, (d, u) in sens.items()}},
                         indent=2, sort_keys=True), file=out)
        return EXIT_OK
    free = b.eps_total - b.eps_EC
    print(f"variant {cfg.variant} ({label}), K = {_fmt(res.K)}", file=out)
    print(f"{'component':<10} {'count':>5} {'value':>12} {'share':>8}", file=out)
    print(f"{'eps_EC':<10} {1:>5} {b.eps_EC:>12.4e} {'fixed':>8}", file=out)
    for name, count in (("eps_bar", 1), ("eps_PE", n_PE), ("eps_PA", 1)):
        value = getattr(b, name)
        print(f"{name:<10} {count:>5} {value:>12.4e} {count * value / free:>8.3f}", file=out)
    print(f"sum {total!r} vs eps_total {b.eps_total!r} (difference {abs(total - b.eps_total):.1e})", file=out)
    print(f"\n{'component':<10} {'K(x0.1)':>12} {'K':>12} {'K(x10)':>12}", file=out)
    for name, (down, up) in sens.items():
        print(f"{name:<10} {_cell(down)} {res.K:>12.4e} {_cell(up)}", file=out)
    return EXIT_OK


COMMANDS = {"design": cmd_design, "rate": cmd_rate, "sweep": cmd_sweep, "budget": cmd_budget}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finitekey",
                                     description="Finite-key BB84 key rates and experiment design.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML run configuration (default: built-in profile)")
    common.add_argument("-p", "--param", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. channel.t=0.1 (repeatable)")
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common], help="optimize the design against a channel model")
    p.add_argument("--record", help="write the design record (JSON) here")

    p = sub.add_parser("rate", parents=[common], help="key rate and key length from measured data")
    p.add_argument("--observables", help="YAML/JSON observables, or a design record")
    p.add_argument("--apriori", help="design record to compare the observables against")
    p.add_argument("--tolerance", type=float, default=0.05,
                   help="relative difference to report against --apriori (default 0.05)")

    p = sub.add_parser("sweep", parents=[common], help="optimize over an (N, t) grid, write CSV")
    p.add_argument("-o", "--output", help="CSV destination (overrides output.path)")
    p.add_argument("-j", "--workers", type=int, help="worker processes")

    sub.add_parser("budget", parents=[common], help="epsilon split and its sensitivity")
    return parser


def _load(args) -> RunConfig:
    raw = load_raw(args.config, args.param)
    if args.command == "rate" and args.observables:
        try:
            loaded = yaml.safe_load(Path(args.observables).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"--observables: not valid YAML/JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("--observables: expected a mapping")
        if "observables" in loaded:
            raw["variant"] = loaded.get("variant", raw.get("variant"))
            loaded = loaded["observables"]
        raw["observables"] = loaded
    return resolve(raw, args.command)


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args, out)
    except BoundInapplicable as exc:
        print(f"error: bound inapplicable; use the squashing variant ({exc})", file=sys.stderr)
        return EXIT_INAPPLICABLE
    except InfeasibleDesign as exc:
        print(f"error: infeasible optimization setup: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DomainError, ContractError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
