"""``qcbound`` command line: run scenarios, export profiles, solve graph moduli, diff reports.

Exit codes: 0 ok, 1 a criterion raised (or reports differ), 2 usage or schema error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import dismod
from .errors import QCBoundError
from .scenario import ScenarioError, bundled_scenarios, load_scenario, run_profile, run_scenario, to_jsonable

EXIT_OK, EXIT_CRITERION, EXIT_USAGE = 0, 1, 2


def dumps(obj) -> str:
    """Canonical JSON text (sorted keys, fixed indent, trailing newline)."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rows_to_csv(rows) -> str:
    """CSV text for a list of flat dicts; column order follows the first row."""
    buf = io.StringIO()
    if not rows:
        return ""
    cols = list(rows[0].keys())
    for r in rows[1:]:
        cols += [k for k in r if k not in cols]
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for r in rows:
        wr.writerow(["" if r.get(c) is None else _cell(r.get(c)) for c in cols])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def _run_task(task):
    """Run one scenario; returns ``(name, exit_code, messages)``.  Top level for process pools."""
    spec, out, seed, depth, strict = task
    try:
        sc = load_scenario(spec, seed, depth)
    except ScenarioError as exc:
        return str(spec), EXIT_USAGE, [f"{spec}: schema error: {p}" for p in exc.problems]
    t0 = time.perf_counter()
    report, tables = run_scenario(sc, strict)
    elapsed = time.perf_counter() - t0
    target = Path(out) / sc.name
    write_atomic(target / "report.json", dumps(report))
    for name, rows in sorted(tables.items()):
        write_atomic(target / f"{name}.csv", rows_to_csv([to_jsonable(r) for r in rows]))
    write_atomic(target / "timing.json", dumps({"scenario": sc.name, "wall_clock_seconds": elapsed}))
    msgs = [f"{sc.name}: {k} -> {v}" for k, v in sorted(report["summary"].items())]
    msgs += [f"{sc.name}: ERROR in {k}: {v}" for k, v in sorted(report["errors"].items())]
    msgs.append(f"{sc.name}: report written to {target / 'report.json'}")
    return sc.name, EXIT_CRITERION if report["errors"] else EXIT_OK, msgs


def cmd_run(args) -> int:
    specs = args.scenario or ([] if not args.all else list(bundled_scenarios()))
    if not specs:
        print("error: give --scenario (repeatable) or --all", file=sys.stderr)
        return EXIT_USAGE
    tasks = [(s, args.out, args.seed, args.ladder_depth, args.tolerance_profile == "strict") for s in specs]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    code = EXIT_OK
    for _, c, msgs in results:
        stream = sys.stderr if c == EXIT_USAGE else sys.stdout
        for m in msgs:
            print(m, file=stream)
        code = max(code, c)
    return code


def cmd_profile(args) -> int:
    try:
        sc = load_scenario(args.scenario, args.seed, args.ladder_depth)
        rows = run_profile(sc, args.tolerance_profile == "strict")
    except ScenarioError as exc:
        for p in exc.problems:
            print(f"schema error: {p}", file=sys.stderr)
        return EXIT_USAGE
    except QCBoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CRITERION
    text = rows_to_csv(rows)
    if args.out:
        path = Path(args.out) / sc.name / "profile.csv"
        write_atomic(path, text)
        print(f"profile written to {path}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _ids(text):
    return [int(t) for t in text.split(",") if t.strip()]


def cmd_modulus(args) -> int:
    try:
        g = dismod.WeightedGraph.from_text(Path(args.graph).read_text())
    except (OSError, QCBoundError) as exc:
        print(f"error: cannot read graph: {exc}", file=sys.stderr)
        return EXIT_USAGE
    E = _ids(args.E) if args.E else list(g.sources)
    F = _ids(args.F) if args.F else list(g.targets)
    try:
        rep = dismod.duality_check(g, E, F, args.p, max_free_nodes=args.max_free_nodes)
        sol = dismod.discrete_modulus_p(g, None, args.p, E, F)
    except QCBoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CRITERION if not isinstance(exc, ValueError) else EXIT_USAGE
    rep["path_modulus_solution"] = sol.to_dict()
    text = dumps(rep)
    if args.out:
        out = Path(args.out)
        write_atomic(out / "modulus.json", text)
        write_atomic(out / "density.csv", sol.to_csv(g))
        print(f"modulus report written to {out / 'modulus.json'}")
    else:
        sys.stdout.write(text)
    return EXIT_CRITERION if rep["notes"] else EXIT_OK


def diff_documents(a, b, rtol: float, atol: float, path: str = ""):
    """Paths where two JSON documents differ beyond ``atol + rtol * |b|``."""
    out = []
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            p = f"{path}/{k}"
            if k not in a or k not in b:
                out.append(f"{p}: present only in {'second' if k not in a else 'first'}")
            else:
                out += diff_documents(a[k], b[k], rtol, atol, p)
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            out.append(f"{path}: length {len(a)} != {len(b)}")
        for i, (x, y) in enumerate(zip(a, b)):
            out += diff_documents(x, y, rtol, atol, f"{path}/{i}")
    elif isinstance(a, (int, float)) and isinstance(b, (int, float)) and not isinstance(a, bool) and not isinstance(b, bool):
        if abs(a - b) > atol + rtol * abs(b):
            out.append(f"{path}: {a!r} != {b!r}")
    elif a != b:
        out.append(f"{path}: {a!r} != {b!r}")
    return out


def cmd_report_diff(args) -> int:
    try:
        a = json.loads(Path(args.first).read_text())
        b = json.loads(Path(args.second).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rtol = args.rtol if args.rtol is not None else (1e-12 if args.tolerance_profile == "strict" else 1e-9)
    diffs = diff_documents(a, b, rtol, args.atol)
    for d in diffs:
        print(d)
    print(f"{len(diffs)} difference(s) at rtol={rtol:g}, atol={args.atol:g}")
    return EXIT_CRITERION if diffs else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qcbound", description="Modulus and extension-criteria toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scenario_multi=False):
        if scenario_multi:
            p.add_argument("--scenario", action="append", help="scenario file or bundled name (repeatable)")
        else:
            p.add_argument("--scenario", required=True, help="scenario file or bundled name")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the Monte Carlo seed")
        p.add_argument("--ladder-depth", type=int, default=None, help="override the dyadic ladder depth")
        p.add_argument("--tolerance-profile", choices=["strict", "default"], default="default")

    r = sub.add_parser("run", help="run scenarios and write reports")
    common(r, scenario_multi=True)
    r.add_argument("--all", action="store_true", help="run every bundled scenario")
    r.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel")
    r.set_defaults(func=cmd_run)

    pr = sub.add_parser("profile", help="write the radial profile CSV (r, q, ls_norm)")
    common(pr)
    pr.set_defaults(func=cmd_profile)

    m = sub.add_parser("modulus", help="duality check and path modulus on an edge-list graph")
    m.add_argument("--graph", required=True, help="edge-list text file")
    m.add_argument("--p", type=float, default=2.0, help="capacity exponent p > 1 (default 2)")
    m.add_argument("--E", default=None, help="comma-separated source ids (default: file sources)")
    m.add_argument("--F", default=None, help="comma-separated target ids (default: file targets)")
    m.add_argument("--max-free-nodes", type=int, default=16, help="cut enumeration limit (default 16)")
    m.add_argument("--out", default=None, help="directory for modulus.json and density.csv (default: stdout)")
    m.set_defaults(func=cmd_modulus)

    d = sub.add_parser("report-diff", help="compare two reports numerically")
    d.add_argument("first")
    d.add_argument("second")
    d.add_argument("--rtol", type=float, default=None)
    d.add_argument("--atol", type=float, default=0.0)
    d.add_argument("--tolerance-profile", choices=["strict", "default"], default="default")
    d.set_defaults(func=cmd_report_diff)

    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.set_defaults(func=lambda a: (print("\n".join(bundled_scenarios())), EXIT_OK)[1])
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "command", None) == "run" and args.out is None:
        args.out = "qcbound-out"
    if getattr(args, "ladder_depth", None) is not None and args.ladder_depth < 4:
        print("error: --ladder-depth must be at least 4", file=sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
