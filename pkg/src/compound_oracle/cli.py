"""Command-line front end: ``gap``, ``check`` and ``validate``.

Exit codes: 0 ok, 1 property failure, 2 config/contract error, 3 capacity error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

from . import validate as validate_mod
from .config import ExperimentConfig, load_config
from .errors import CapacityError, ContractError
from .risklab import check_B1, check_G1, check_G2, check_two_valued_condition, mc_gap
from .oracles import two_valued_spec

EXIT_OK, EXIT_PROPERTY, EXIT_CONFIG, EXIT_CAPACITY = 0, 1, 2, 3

RECORD_FIELDS = [
    "config_hash",
    "n",
    "engine",
    "reps",
    "seed",
    "gap_sq",
    "gap_sq_stderr",
    "risk_s",
    "risk_s_stderr",
    "risk_pi",
    "risk_pi_stderr",
    "risk_diff",
    "risk_diff_stderr",
    "pythagoras_residual",
    "pythagoras_stderr",
]


def _num(x):
    # repr is the shortest string that round-trips
    return repr(float(x)) if isinstance(x, float) else str(x)


def result_record(cfg: ExperimentConfig, report, wall_time: float | None = None) -> dict:
    rec = {
        "config_hash": cfg.config_hash,
        "n": report.n,
        "engine": report.engine,
        "reps": report.gap_sq.reps,
        "seed": cfg.seed,
        "gap_sq": report.gap_sq.mean,
        "gap_sq_stderr": report.gap_sq.stderr,
        "risk_s": report.risk_s.mean,
        "risk_s_stderr": report.risk_s.stderr,
        "risk_pi": report.risk_pi.mean,
        "risk_pi_stderr": report.risk_pi.stderr,
        "risk_diff": report.risk_diff.mean,
        "risk_diff_stderr": report.risk_diff.stderr,
        "pythagoras_residual": report.pythagoras_residual,
        "pythagoras_stderr": report.pythagoras_stderr,
    }
    if wall_time is not None:
        rec["wall_time"] = wall_time
    return rec


def format_records(records: list[dict], fmt: str) -> str:
    if fmt == "jsonl":
        return "".join(json.dumps(r) + "\n" for r in records)
    buf = io.StringIO()
    fields = list(records[0]) if records else RECORD_FIELDS
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(fields)
    for r in records:
        w.writerow([_num(r[f]) for f in fields])
    return buf.getvalue()


def read_records(path: str | Path) -> list[dict]:
    """Parse a file written by ``gap`` back into typed records."""
    with open(path, newline="") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    rows = list(csv.DictReader(io.StringIO(text, newline="")))
    out = []
    for row in rows:
        rec = {}
        for k, v in row.items():
            if k in ("config_hash", "engine"):
                rec[k] = v
            elif k in ("n", "reps", "seed"):
                rec[k] = int(v)
            else:
                rec[k] = float(v)
        out.append(rec)
    return out


def _default_out(cfg: ExperimentConfig, suffix: str, ext: str) -> Path:
    stem = Path(cfg.source).stem if cfg.source else "experiment"
    return Path(f"{stem}-{suffix}.{ext}")


def cmd_gap(args) -> int:
    cfg = load_config(args.config, "gap", seed=args.seed)
    fmt = args.format or cfg.output_format
    out = Path(args.out or cfg.output_path or _default_out(cfg, "gap", fmt))
    records = []
    for n in cfg.n_grid:
        t0 = time.perf_counter()
        report = mc_gap(cfg.family, cfg.generator.make(n), cfg.engine, cfg.reps, cfg.seed, workers=args.workers)
        wall = time.perf_counter() - t0
        records.append(result_record(cfg, report, wall if args.timing else None))
        print(
            f"n={n} gap_sq={report.gap_sq.mean:.6g}±{report.gap_sq.stderr:.2g} "
            f"risk_diff={report.risk_diff.mean:.6g}±{report.risk_diff.stderr:.2g} "
            f"risk_s={report.risk_s.mean:.6g} risk_pi={report.risk_pi.mean:.6g} "
            f"pythagoras={report.pythagoras_residual:.3g}±{report.pythagoras_stderr:.2g} ({wall:.1f}s)",
            flush=True,
        )
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        fh.write(format_records(records, fmt))
    return EXIT_OK


def run_checks(cfg: ExperimentConfig) -> dict:
    n = cfg.n_grid[0]
    mus = cfg.generator.make(n)
    report = {"config_hash": cfg.config_hash, "n": n, "reps": cfg.reps, "seed": cfg.seed, "family": cfg.family.to_dict()}
    for name in cfg.checks:
        if name == "G1":
            rep = check_G1(cfg.family, mus, gamma=cfg.gamma, reps=cfg.reps, seed=cfg.seed)
        elif name == "G2":
            rep = check_G2(cfg.family, mus, reps=cfg.reps, seed=cfg.seed)
        elif name == "B1":
            if n < 2:
                raise ContractError("B1 needs n >= 2")
            rep = check_B1(cfg.family, mus, reps=cfg.reps, seed=cfg.seed)
        else:
            if cfg.two_valued is not None:
                mu0, mu1 = cfg.two_valued
            else:
                spec = two_valued_spec(mus)
                mu0, mu1 = spec.mu0, spec.mu1
            rep = check_two_valued_condition(cfg.family, mu0, mu1, reps=cfg.reps, seed=cfg.seed)
        report[name] = rep.to_dict()
    return report


def cmd_check(args) -> int:
    cfg = load_config(args.config, "check", seed=args.seed)
    out = Path(args.out or cfg.output_path or _default_out(cfg, "check", "json"))
    report = run_checks(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2) + "\n")
    for name in cfg.checks:
        block = report[name]
        shown = ", ".join(f"{k}={v:.6g}" for k, v in block["values"].items() if isinstance(v, float))
        flags = [k for k, v in block["flags"].items() if v]
        print(f"{name}: {shown}" + (f" FLAGS: {', '.join(flags)}" if flags else ""))
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.trials < 1:
        raise ContractError("trials must be at least 1")
    if not 2 <= args.max_n <= validate_mod.MAX_VALIDATE_N:
        raise ContractError(f"max-n must be in [2, {validate_mod.MAX_VALIDATE_N}]")
    results = validate_mod.run(max_n=args.max_n, trials=args.trials, seed=args.seed or 0, fault=args.inject_fault)
    failed = None
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} trials={r.trials} worst={r.worst:.3g}")
        if not r.passed and failed is None:
            failed = r
    if failed is None:
        return EXIT_OK
    out = Path(args.out or "validate-failure.json")
    out.write_text(json.dumps(failed.failure, indent=2) + "\n")
    print(f"replay instance written to {out}")
    return EXIT_PROPERTY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="compound-oracle", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="experiment YAML file")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--workers", type=int, default=1, help="worker threads; never changes output")
        sp.add_argument("--out", help="output path")

    g = sub.add_parser("gap", help="paired MC estimates of both oracle risks over an n grid")
    common(g)
    g.add_argument("--format", choices=("csv", "jsonl"))
    g.add_argument("--timing", action="store_true", help="add a wall_time column (output no longer byte-stable)")
    g.set_defaults(func=cmd_gap)

    c = sub.add_parser("check", help="evaluate assumptions G1, G2, B1 and the two-valued variance condition")
    common(c)
    c.add_argument("--format", choices=("csv", "jsonl"), help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("validate", help="cross-engine property suite on random instances")
    common(v, config=False)
    v.add_argument("--max-n", type=int, default=validate_mod.MAX_VALIDATE_N)
    v.add_argument("--trials", type=int, default=20)
    v.add_argument("--inject-fault", type=float, default=0.0, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
