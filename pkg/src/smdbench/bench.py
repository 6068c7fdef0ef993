"""Multi-run campaigns, summary statistics and result files.

A campaign solves every problem of a :class:`RunSpec` ``runs`` times with
seeds ``base_seed + k`` and returns one :class:`RunRecord` per run.
:func:`summarize` condenses the records into per-problem order statistics.
Records and tables round-trip through CSV or JSON with a schema version.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numba import objmode

from ._types import dynamic_parts_kernel
from .core import Dims
from .smd import OptimumRecord, ProblemId, ProblemInstance, check_dims, instantiate
from .solver import GAConfig, SolveResult, solve

__all__ = [
    "SCHEMA_VERSION",
    "RECORD_COLUMNS",
    "SUMMARY_COLUMNS",
    "SchemaVersionError",
    "RunSpec",
    "RunRecord",
    "SummaryRow",
    "SummaryTable",
    "preset_dims",
    "accuracy",
    "run_suite",
    "summarize",
    "export",
    "import_records",
    "import_table",
    "published_reference",
    "with_eval_counter",
]

SCHEMA_VERSION = 1

PRESETS = {
    5: ((1, 2, 1, 0), (1, 0, 1, 2), 30),
    10: ((3, 3, 2, 0), (3, 1, 2, 2), 50),
    20: ((6, 6, 4, 0), (6, 2, 4, 4), 100),
}

LEGEND = {
    "marker": "'-' when no run reached a feasible pair; 'x' when the median upper gap "
              "is >= the solved threshold; empty otherwise. The two never co-occur.",
    "worst_marker": "'x' when the worst run's upper gap is >= the solved threshold.",
    "median": "lower median for even run counts",
    "order statistics": "best/median/worst are taken per column independently",
    "ratio": "median ll_fe / median ll_calls",
}


class SchemaVersionError(ValueError):
    """A results file was written with an unknown schema version."""


def preset_dims(problem, preset) -> Dims:
    """Partition sizes of ``problem`` under a 5/10/20-variable preset or explicit dims."""
    pid = ProblemId.parse(problem)
    if isinstance(preset, Dims):
        return preset
    if isinstance(preset, str) and "," in preset:
        return Dims.parse(preset)
    preset = int(preset)
    if preset not in PRESETS:
        raise ValueError(f"unknown dimension preset {preset}; expected 5, 10, 20 or p,q,r[,s]")
    regular, smd6, _ = PRESETS[preset]
    return Dims(*(smd6 if pid == ProblemId.SMD6 else regular))


@dataclass(frozen=True)
class RunSpec:
    """A campaign: problems x runs at one dimension preset.

    Parameters
    ----------
    problems : sequence
        Problem ids or names.
    dims : {5, 10, 20}, str or Dims
        Preset size or explicit partition (``"p,q,r[,s]"``).
    runs : int
    base_seed : int
        Run ``k`` uses seed ``base_seed + k``.
    overrides : dict
        :class:`GAConfig` fields to change.
    population : int, optional
        Both population sizes; defaults to the preset's (30 for explicit dims).
    solved_threshold : float
    audit : bool
        Count evaluations with independent counters wrapped around the
        problem functions and store them in the records.
    """

    problems: tuple = tuple(ProblemId)
    dims: object = 5
    runs: int = 11
    base_seed: int = 1
    overrides: dict = field(default_factory=dict)
    population: Optional[int] = None
    solved_threshold: float = 0.1
    audit: bool = False

    def __post_init__(self):
        object.__setattr__(self, "problems", tuple(ProblemId.parse(p) for p in self.problems))
        if not self.problems:
            raise ValueError("at least one problem is required")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.solved_threshold > 0:
            raise ValueError("solved_threshold must be > 0")
        for p in self.problems:
            check_dims(p, preset_dims(p, self.dims))
        self.config()

    def config(self) -> GAConfig:
        pop = self.population
        if pop is None:
            pop = PRESETS[int(self.dims)][2] if _is_preset(self.dims) else 30
        return GAConfig(**{"N_p": pop, "n_p": pop, **self.overrides})

    def to_dict(self) -> dict:
        dims = self.dims
        if isinstance(dims, Dims):
            dims = ",".join(str(v) for v in dims.as_tuple())
        return {"problems": [p.name for p in self.problems], "dims": dims, "runs": self.runs,
                "base_seed": self.base_seed, "overrides": dict(self.overrides),
                "population": self.population, "solved_threshold": self.solved_threshold,
                "audit": self.audit}


def _is_preset(dims) -> bool:
    try:
        return int(dims) in PRESETS
    except (TypeError, ValueError):
        return False


@dataclass(frozen=True)
class RunRecord:
    """Accounting and outcome of one run.

    ``audit_ul_fe``/``audit_ll_fe`` hold the independent counts when the
    campaign was audited, else -1.
    """

    problem: str
    p: int
    q: int
    r: int
    s: int
    seed: int
    ll_fe: int
    ul_fe: int
    ll_calls: int
    F_best: float
    f_best: float
    ul_accuracy: float
    ll_accuracy: float
    feasible: bool
    solved: bool
    wall_time: float
    generations: int = 0
    terminated_by: str = ""
    audit_ul_fe: int = -1
    audit_ll_fe: int = -1
    error: str = ""

    @property
    def key(self):
        return (ProblemId.parse(self.problem).value, self.seed)

    def same_outcome(self, other: "RunRecord") -> bool:
        """Field-wise equality ignoring wall time (NaN equals NaN)."""
        for f in dataclasses.fields(self):
            if f.name == "wall_time":
                continue
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
                continue
            if a != b:
                return False
        return True


RECORD_COLUMNS = ("schema_version",) + tuple(f.name for f in dataclasses.fields(RunRecord))


def accuracy(result: SolveResult, opt: OptimumRecord):
    """Absolute objective gaps ``(|F - F*|, |f - f*|)`` of the best pair."""
    if result.best is None:
        return math.inf, math.inf
    return abs(result.best.F - opt.F_star), abs(result.best.f - opt.f_star)


# -- evaluation counters ----------------------------------------------------------------

_COUNTS: list = []


def _bump(slot, level):
    _COUNTS[slot][level] += 1


def _counting_kernel(fn, slot, level):
    @dynamic_parts_kernel
    def counted(xu, xl, dims, theta):
        with objmode():
            _bump(slot, level)
        return fn(xu, xl, dims, theta)
    return counted


def with_eval_counter(inst: ProblemInstance):
    """Copy of ``inst`` whose objective calls are tallied outside the solver.

    Returns
    -------
    inst : ProblemInstance
    counts : ndarray
        ``[upper evaluations, lower evaluations]``, updated in place.
    """
    counts = np.zeros(2, dtype=np.int64)
    _COUNTS.append(counts)
    slot = len(_COUNTS) - 1
    up, lo, ucons, lcons = inst.kernels
    kernels = (_counting_kernel(up, slot, 0), _counting_kernel(lo, slot, 1), ucons, lcons)
    return dataclasses.replace(inst, kernels=kernels), counts


# -- campaigns --------------------------------------------------------------------------

def _run_one(inst, cfg, seed, threshold, counted=None):
    t0 = time.perf_counter()
    target = inst if counted is None else counted[0]
    if counted is not None:
        counted[1][:] = 0
    res = solve(target, cfg, seed)
    wall = time.perf_counter() - t0
    ul_acc, ll_acc = accuracy(res, inst.optimum)
    best = res.best
    feasible = res.feasible
    return dict(
        ll_fe=res.ll_fe, ul_fe=res.ul_fe, ll_calls=res.ll_calls,
        F_best=math.nan if best is None else best.F, f_best=math.nan if best is None else best.f,
        ul_accuracy=ul_acc, ll_accuracy=ll_acc, feasible=feasible,
        solved=bool(feasible and ul_acc <= threshold), wall_time=wall,
        generations=res.generations, terminated_by=res.terminated_by,
        audit_ul_fe=-1 if counted is None else int(counted[1][0]),
        audit_ll_fe=-1 if counted is None else int(counted[1][1]),
    ), res


def run_suite(spec: RunSpec, progress=None, trace_dir=None) -> list:
    """Solve every problem of ``spec`` ``spec.runs`` times.

    A run that raises is kept as an infeasible record carrying the error
    text. Records are sorted by ``(problem, seed)``.

    Parameters
    ----------
    progress : callable, optional
        Called with each finished record.
    trace_dir : path, optional
        Writes ``<problem>_seed<seed>.csv`` convergence traces there.
    """
    cfg = spec.config()
    records = []
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    for pid in spec.problems:
        dims = preset_dims(pid, spec.dims)
        inst = instantiate(pid, dims)
        counted = with_eval_counter(inst) if spec.audit else None
        for k in range(spec.runs):
            seed = spec.base_seed + k
            base = dict(problem=pid.name, p=dims.p, q=dims.q, r=dims.r, s=dims.s, seed=seed)
            try:
                out, res = _run_one(inst, cfg, seed, spec.solved_threshold, counted)
                if trace_dir is not None:
                    res.write_trace(Path(trace_dir) / f"{pid.name}_seed{seed}.csv")
                rec = RunRecord(**base, **out)
            except Exception as exc:  # recorded, the campaign goes on
                rec = RunRecord(**base, ll_fe=0, ul_fe=0, ll_calls=0, F_best=math.nan,
                                f_best=math.nan, ul_accuracy=math.inf, ll_accuracy=math.inf,
                                feasible=False, solved=False, wall_time=0.0,
                                error=f"{type(exc).__name__}: {exc}")
            records.append(rec)
            if progress is not None:
                progress(rec)
    records.sort(key=lambda r: r.key)
    return records


# -- summaries --------------------------------------------------------------------------

def _lower_median(values):
    v = sorted(values)
    return v[(len(v) - 1) // 2]


@dataclass(frozen=True)
class SummaryRow:
    problem: str
    n_runs: int
    best_ll_fe: int
    best_ul_fe: int
    median_ll_fe: int
    median_ul_fe: int
    worst_ll_fe: int
    worst_ul_fe: int
    median_ul_accuracy: float
    median_ll_accuracy: float
    median_ll_calls: int
    ll_evals_per_call: float
    success_rate: float
    marker: str
    worst_marker: str


SUMMARY_COLUMNS = ("schema_version",) + tuple(f.name for f in dataclasses.fields(SummaryRow))


@dataclass(frozen=True)
class SummaryTable:
    rows: tuple
    solved_threshold: float = 0.1
    legend: dict = field(default_factory=lambda: dict(LEGEND))

    def row(self, problem) -> SummaryRow:
        name = ProblemId.parse(problem).name
        for r in self.rows:
            if r.problem == name:
                return r
        raise KeyError(name)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def format(self, reference: Optional[dict] = None) -> str:
        """Plain-text rendering; ``reference`` adds the published medians."""
        head = (f"{'problem':8} {'med LL FE':>10} {'med UL FE':>9} {'UL acc':>9} {'LL acc':>9} "
                f"{'LL calls':>8} {'FE/call':>8} {'solved':>6} {'mk':>2}")
        if reference:
            head += f" | {'pub LL FE':>10} {'pub UL acc':>10}"
        lines = [head]
        for r in self.rows:
            line = (f"{r.problem:8} {r.median_ll_fe:>10} {r.median_ul_fe:>9} "
                    f"{r.median_ul_accuracy:>9.2e} {r.median_ll_accuracy:>9.2e} "
                    f"{r.median_ll_calls:>8} {r.ll_evals_per_call:>8.1f} "
                    f"{r.success_rate:>6.0%} {(r.marker or r.worst_marker):>2}")
            if reference:
                ref = reference.get(r.problem, {})
                line += (f" | {_fmt(ref.get('median_ll_fe')):>10} "
                         f"{_fmt(ref.get('median_ul_accuracy')):>10}")
            lines.append(line)
        return "\n".join(lines)


def _fmt(cell):
    if cell is None:
        return ""
    if cell["value"] is None:
        return cell["marker"] or ""
    out = f"{cell['value']:g}" if isinstance(cell["value"], float) else str(cell["value"])
    return out + (f" ({cell['marker']})" if cell["marker"] else "")


def summarize(records: Sequence[RunRecord], solved_threshold: float = 0.1) -> SummaryTable:
    """Per-problem order statistics over completed runs.

    Raises
    ------
    ValueError
        If ``records`` is empty or a problem has no completed run.
    """
    if not records:
        raise ValueError("no records to summarize")
    groups = {}
    for rec in records:
        groups.setdefault(ProblemId.parse(rec.problem), []).append(rec)
    rows = []
    for pid in sorted(groups):
        recs = [r for r in groups[pid] if not r.error]
        if not recs:
            raise ValueError(f"{pid.name} has no completed run")
        ll = [r.ll_fe for r in recs]
        ul = [r.ul_fe for r in recs]
        med_calls = _lower_median([r.ll_calls for r in recs])
        med_ul_acc = _lower_median([r.ul_accuracy for r in recs])
        any_feasible = any(r.feasible for r in recs)
        marker = "-" if not any_feasible else ("x" if med_ul_acc >= solved_threshold else "")
        worst_gap = max(r.ul_accuracy for r in recs)
        rows.append(SummaryRow(
            problem=pid.name, n_runs=len(recs),
            best_ll_fe=min(ll), best_ul_fe=min(ul),
            median_ll_fe=_lower_median(ll), median_ul_fe=_lower_median(ul),
            worst_ll_fe=max(ll), worst_ul_fe=max(ul),
            median_ul_accuracy=med_ul_acc,
            median_ll_accuracy=_lower_median([r.ll_accuracy for r in recs]),
            median_ll_calls=med_calls,
            ll_evals_per_call=_lower_median(ll) / med_calls if med_calls else math.nan,
            success_rate=sum(r.solved for r in recs) / len(recs),
            marker=marker,
            worst_marker="x" if any_feasible and worst_gap >= solved_threshold else "",
        ))
    return SummaryTable(tuple(rows), solved_threshold)


# -- files --------------------------------------------------------------------------------

def _cells(obj):
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


def _csv_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(ftype, text):
    if ftype in (bool, "bool"):
        if text not in ("true", "false"):
            raise ValueError(f"expected true/false, got {text!r}")
        return text == "true"
    if ftype in (int, "int"):
        return int(text)
    if ftype in (float, "float"):
        return float(text)
    return text


def export(obj, path, format: Optional[str] = None, meta: Optional[dict] = None):
    """Write a record list or a :class:`SummaryTable` as CSV or JSON.

    The format defaults to the file extension. CSV columns are
    :data:`RECORD_COLUMNS` or :data:`SUMMARY_COLUMNS`, in that order.
    ``meta`` is stored under ``"meta"`` in JSON output and ignored for CSV.
    """
    path = Path(path)
    format = (format or path.suffix.lstrip(".")).lower()
    if format not in ("csv", "json"):
        raise ValueError(f"unknown format {format!r}; expected csv or json")
    if isinstance(obj, SummaryTable):
        kind, rows, columns = "summary", list(obj.rows), SUMMARY_COLUMNS
        extra = {"solved_threshold": obj.solved_threshold, "legend": obj.legend}
    else:
        kind, rows, columns = "records", sorted(obj, key=lambda r: r.key), RECORD_COLUMNS
        extra = {}
    if meta:
        extra["meta"] = meta
    if format == "json":
        payload = {"schema_version": SCHEMA_VERSION, "kind": kind, **extra,
                   "rows": [_cells(r) for r in rows]}
        path.write_text(json.dumps(payload, indent=1, allow_nan=True))
        return path
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            cells = _cells(r)
            w.writerow([SCHEMA_VERSION] + [_csv_value(cells[c]) for c in columns[1:]])
    return path


def _load(path, cls, columns):
    path = Path(path)
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    if path.suffix.lower() == ".json":
        payload = json.loads(path.read_text())
        version = payload.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(f"unsupported schema version {version!r}")
        return payload, [cls(**row) for row in payload["rows"]]
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != columns:
        raise ValueError(f"{path} does not have the expected header")
    out = []
    for row in rows[1:]:
        if row[0] != str(SCHEMA_VERSION):
            raise SchemaVersionError(f"unsupported schema version {row[0]!r}")
        out.append(cls(**{c: _parse_value(types[c], v) for c, v in zip(columns[1:], row[1:])}))
    return {}, out


def import_records(path) -> list:
    """Read records written by :func:`export`."""
    return _load(path, RunRecord, RECORD_COLUMNS)[1]


def import_table(path) -> SummaryTable:
    """Read a summary written by :func:`export`."""
    meta, rows = _load(path, SummaryRow, SUMMARY_COLUMNS)
    return SummaryTable(tuple(rows), meta.get("solved_threshold", 0.1),
                        meta.get("legend", dict(LEGEND)))


def published_reference(preset: int) -> dict:
    """Published per-problem values for a 5/10/20-variable preset.

    Returns ``{problem: {column: {"value", "marker", "source"}}}`` merging the
    evaluation-count and accuracy tables available for that preset.
    """
    text = resources.files("smdbench").joinpath("data/published_tables.json").read_text()
    data = json.loads(text)
    out = {}
    for table in data["tables"].values():
        if table["dims_preset"] != int(preset):
            continue
        for problem, cells in table["rows"].items():
            out.setdefault(problem, {}).update(cells)
    if not out:
        raise ValueError(f"no published values for preset {preset}")
    return out
