"""``perc-bk`` command line.

Every command reads its parameters from a JSON manifest (or the built-in
defaults), applies ``--seed`` / ``--set`` overrides, and writes versioned
CSV tables named after the command into ``--out``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments as X
from .errors import CapacityError, PreconditionError
from .output import make_manifest, read_csv, read_manifest, write_csv, write_manifest, write_xy

EXIT_OK = 0
EXIT_FAILED = 2
EXIT_PRECONDITION = 3

COMMANDS = {
    "verify-exact": (X.EXACT_DEFAULTS, lambda p, t: X.run_verify_exact(p)),
    "verify-sigma": (X.SIGMA_DEFAULTS, lambda p, t: X.run_verify_sigma(p)),
    "verify-cone": (X.CONE_DEFAULTS, lambda p, t: X.run_verify_cone(p)),
    "trifurcation": (X.TRIF_DEFAULTS, X.run_trifurcation),
    "fourarm": (X.FOURARM_DEFAULTS, X.run_fourarm),
    "crossings": (X.CROSSINGS_DEFAULTS, X.run_crossings),
}


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="perc-bk", description="Verify and estimate percolation inequalities.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["report"]:
        sp = sub.add_parser(name)
        sp.add_argument("--manifest", type=Path, help="JSON manifest with the run parameters")
        sp.add_argument("--seed", type=int, help="override the manifest seed")
        sp.add_argument("--threads", type=int, help="worker threads (default: $PERC_BK_THREADS or CPU count)")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--manifest-out", nargs="?", const="", default=None, metavar="FILE",
                        help="write the resolved manifest (default: OUT/COMMAND.manifest.json)")
        sp.add_argument("--set", action="append", metavar="KEY=JSON", help="override one manifest parameter")
        if name == "report":
            sp.add_argument("inputs", nargs="*", type=Path, help="CSV files or directories")
    return ap


def resolve_manifest(command: str, args) -> dict:
    defaults = COMMANDS[command][0] if command in COMMANDS else {"inputs": []}
    params = dict(defaults)
    if args.manifest is not None:
        m = read_manifest(args.manifest)
        if m["command"] != command:
            raise SystemExit(f"manifest is for {m['command']!r}, not {command!r}")
        params.update(m["params"])
    params.update(_parse_set(args.set))
    if args.seed is not None:
        params["seed"] = args.seed
    if command == "report" and args.inputs:
        params["inputs"] = [str(p) for p in args.inputs]
    return make_manifest(command, params)


def _write_tables(command: str, tables: X.Tables, out: Path, h: str) -> list[Path]:
    paths = []
    for name, cols in tables.columns.items():
        stem = command if name == "main" else f"{command}_{name}"
        paths.append(write_csv(out / f"{stem}.csv", cols, tables.rows[name], h))
    return paths


# ---------------------------------------------------------------------------
# report


def _collect(inputs) -> list[Path]:
    files = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            files.extend(sorted(q for q in p.glob("*.csv")))
        elif p.exists():
            files.append(p)
        else:
            raise FileNotFoundError(p)
    return files


def run_report(params: dict, out: Path) -> tuple[str, int]:
    """Markdown pass/fail matrix; returns ``(markdown, failure count)``."""
    files = _collect(params.get("inputs", []))
    lines = []
    failures = []
    if files:
        lines += ["| table | rows | pass | fail | skipped |", "|---|---|---|---|---|"]
    for f in files:
        cols, rows = read_csv(f)
        verdicts = [r.get("holds", "") for r in rows]
        n_pass = verdicts.count("true")
        n_fail = verdicts.count("false")
        n_skip = verdicts.count("skipped")
        mark = "FAIL" if n_fail else "ok"
        lines.append(f"| {f.name} ({mark}) | {len(rows)} | {n_pass} | {n_fail} | {n_skip} |")
        for r in rows:
            if r.get("holds") == "false":
                label = ", ".join(f"{k}={v}" for k, v in r.items() if k not in ("holds", "manifest_hash") and v != "")
                failures.append(f"- `{f.name}` [{r.get('manifest_hash', '')}]: {label}")
        _plot_data(f, cols, rows, out)
    if failures:
        lines += ["", "## Failures", ""] + failures
    md = "\n".join(lines) + ("\n" if lines else "")
    return md, len(failures)


def _plot_data(f: Path, cols, rows, out: Path):
    """Two-column series for tables that carry a size axis."""
    data_dir = out / "plot-data"
    if {"size", "scaled"} <= set(cols):
        xs = [float(r["size"]) for r in rows]
        write_xy(data_dir / f"{f.stem}_scaled.dat", xs, [float(r["scaled"]) for r in rows], "size scaled-estimate")
        write_xy(data_dir / f"{f.stem}_estimate.dat", xs, [float(r["estimate"]) for r in rows], "size estimate")
    if {"m", "observable", "mean"} <= set(cols):
        for obs in sorted({r["observable"] for r in rows}):
            sel = [r for r in rows if r["observable"] == obs]
            safe = "".join(ch if ch.isalnum() else "_" for ch in obs)
            write_xy(data_dir / f"{f.stem}_{safe}.dat", [float(r["m"]) for r in sel], [float(r["mean"]) for r in sel], f"m {obs}")


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    manifest = resolve_manifest(command, args)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.manifest_out is not None:
        write_manifest(Path(args.manifest_out) if args.manifest_out else out / f"{command}.manifest.json", manifest)
    try:
        if command == "report":
            md, n_fail = run_report(manifest["params"], out)
            (out / "report.md").write_text(md)
            sys.stdout.write(md)
            return EXIT_FAILED if n_fail else EXIT_OK
        tables = COMMANDS[command][1](manifest["params"], args.threads)
    except (PreconditionError, CapacityError) as err:
        print(f"perc-bk {command}: {err}", file=sys.stderr)
        return EXIT_PRECONDITION
    paths = _write_tables(command, tables, out, manifest["hash"])
    total = sum(len(r) for r in tables.rows.values())
    print(f"{command}: {total} rows, {tables.failures} failed, {tables.skipped} skipped -> "
          + ", ".join(str(p) for p in paths))
    if tables.failures:
        return EXIT_FAILED
    if tables.skipped:
        return EXIT_PRECONDITION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
