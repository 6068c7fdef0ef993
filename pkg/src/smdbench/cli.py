"""Command-line entry point.

Subcommands
-----------
run      solve a campaign and write the records
table    summarize a records file, optionally beside the published values
psi      print the optimal lower-level response for an upper block
grid     write F and f on a two-axis grid as CSV
catalog  write the problem catalog as JSON

Settings can come from an INI file given with ``--config``. Its ``[run]``
section accepts ``problems``, ``dims``, ``runs``, ``seed``, ``pop`` and
``out``; its ``[ga]`` section accepts any solver setting, for example
``alpha_stop_upper = 1e-5``. Command-line flags win over the file.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys

import numpy as np

from .bench import (RunSpec, export, import_records, import_table, published_reference,
                    run_suite, summarize)
from .smd import ProblemId, contour_grid, dump_catalog, instantiate, psi_reference
from .solver import GAConfig
from .core import Dims

_GA_TYPES = {f.name: f.type for f in dataclasses.fields(GAConfig)}


def _parse_ga(section) -> dict:
    out = {}
    for key, text in section.items():
        if key not in _GA_TYPES:
            raise SystemExit(f"unknown solver setting {key!r} in [ga]")
        kind = _GA_TYPES[key]
        out[key] = int(float(text)) if kind in (int, "int") else (
            float(text) if kind in (float, "float") else text.strip())
    return out


def _problems(text):
    if text.strip().lower() == "all":
        return tuple(ProblemId)
    return tuple(ProblemId.parse(tok) for tok in text.split(",") if tok.strip())


def _dims_arg(text):
    text = str(text).strip()
    return text if "," in text else int(text)


def _floats(text):
    return np.array([float(tok) for tok in text.replace(" ", "").split(",") if tok])


def cmd_run(args) -> int:
    cfg = configparser.ConfigParser()
    if args.config:
        if not cfg.read(args.config):
            raise SystemExit(f"cannot read config file {args.config}")
    run = cfg["run"] if cfg.has_section("run") else {}
    overrides = _parse_ga(cfg["ga"]) if cfg.has_section("ga") else {}
    pop = args.pop if args.pop is not None else (int(run["pop"]) if "pop" in run else None)
    spec = RunSpec(
        problems=_problems(args.problems or run.get("problems", "all")),
        dims=_dims_arg(args.dims or run.get("dims", "5")),
        runs=args.runs if args.runs is not None else int(run.get("runs", 11)),
        base_seed=args.seed if args.seed is not None else int(run.get("seed", 1)),
        overrides=overrides, population=pop, audit=args.audit,
    )
    out = args.out or run.get("out", "results.json")

    def progress(rec):
        if not args.quiet:
            status = "solved" if rec.solved else ("feasible" if rec.feasible else "infeasible")
            print(f"{rec.problem:6} seed {rec.seed:<5} F={rec.F_best:.6g} gap={rec.ul_accuracy:.3g} "
                  f"ll_fe={rec.ll_fe} {status}" + (f" error: {rec.error}" if rec.error else ""),
                  flush=True)

    records = run_suite(spec, progress=progress, trace_dir=args.trace)
    export(records, out, meta={"spec": spec.to_dict(), "config": spec.config().to_dict()})
    if not args.quiet:
        print(summarize(records, spec.solved_threshold).format())
        print(f"wrote {len(records)} records to {out}")
    return 0


def cmd_table(args) -> int:
    path = args.input
    try:
        records = import_records(path)
        table = summarize(records)
        preset = _preset_of(records)
    except (TypeError, ValueError, KeyError):
        table = import_table(path)
        preset = None
    reference = None
    if args.compare:
        if preset is None:
            raise SystemExit("--compare needs a records file from a 5, 10 or 20 variable preset")
        reference = published_reference(preset)
    if args.out:
        export(table, args.out, args.format)
    if args.format == "json" and not args.out:
        rows = [dataclasses.asdict(r) for r in table.rows]
        if reference:
            for row in rows:
                row["published"] = reference.get(row["problem"], {})
        json.dump({"rows": rows, "legend": table.legend}, sys.stdout, indent=1)
        print()
    elif not args.out:
        print(table.format(reference))
    return 0


def _preset_of(records):
    from .bench import PRESETS, preset_dims
    for preset in PRESETS:
        if all(preset_dims(r.problem, preset).as_tuple() == (r.p, r.q, r.r, r.s)
               for r in records):
            return preset
    return None


def _instance(args):
    dims = Dims.parse(args.dims) if args.dims else None
    pid = ProblemId.parse(args.problem)
    if dims is None:
        from .bench import preset_dims
        dims = preset_dims(pid, 5)
    return instantiate(pid, dims)


def cmd_psi(args) -> int:
    inst = _instance(args)
    ref = psi_reference(inst, _floats(args.xu))
    print(json.dumps({"problem": inst.name, "xu": _floats(args.xu).tolist(),
                      "xl_star": ref.xl_star.tolist(), "f_star": ref.f_star,
                      "unique": ref.is_unique, "description": ref.description}, indent=1))
    return 0


def cmd_grid(args) -> int:
    inst = _instance(args)
    axes = tuple(a.strip() for a in args.axes.split(","))
    grid = contour_grid(inst, axes, args.res,
                        xu=None if args.xu is None else _floats(args.xu),
                        xl=None if args.xl is None else _floats(args.xl))
    grid.to_csv(args.out)
    print(f"wrote {args.res * args.res} rows to {args.out}")
    return 0


def cmd_catalog(args) -> int:
    dump_catalog(args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smdbench", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="solve a campaign")
    p.add_argument("--problems", help="comma list such as SMD1,SMD2, or 'all'")
    p.add_argument("--dims", help="5, 10, 20 or p,q,r[,s]")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int, help="base seed; run k uses seed + k")
    p.add_argument("--pop", type=int, help="population size at both levels")
    p.add_argument("--out", help="records file (.json or .csv)")
    p.add_argument("--trace", help="directory for per-run convergence traces")
    p.add_argument("--config", help="INI file with [run] and [ga] sections")
    p.add_argument("--audit", action="store_true", help="count evaluations independently")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("table", help="summarize records")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=("csv", "json", "text"), default="text")
    p.add_argument("--out", help="write the summary to a file instead of stdout")
    p.add_argument("--compare", choices=("published",),
                   help="show the published values beside the measured ones")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("psi", help="optimal lower-level response")
    p.add_argument("--problem", required=True)
    p.add_argument("--xu", required=True, help="comma-separated upper block")
    p.add_argument("--dims", help="p,q,r[,s]; default is the 5-variable preset")
    p.set_defaults(func=cmd_psi)

    p = sub.add_parser("grid", help="objective values on a grid")
    p.add_argument("--problem", required=True)
    p.add_argument("--axes", required=True, help="two axis names, for example xu1,xu2")
    p.add_argument("--res", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--dims", help="p,q,r[,s]; default is the 5-variable preset")
    p.add_argument("--xu", help="fixed upper values; default is the known optimum")
    p.add_argument("--xl", help="fixed lower values; default is the known optimum")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("catalog", help="write the problem catalog")
    p.add_argument("--out", default="catalog.json")
    p.set_defaults(func=cmd_catalog)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "format", None) == "text" and getattr(args, "out", None):
        args.format = None
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
