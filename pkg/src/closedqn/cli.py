"""Command-line front end: ``closedqn {solve,uja,bounds,study,fesc} ...``.

Exit codes: 0 success, 1 usage or model error, 2 numeric failure (series
divergence with ``--no-fallback``), 3 a certified bound missed the exact value.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import bounds as bnd
from .aggregate import aggregate_balanced, aggregate_delay, is_balanced, replace_subnetwork
from .errors import ModelError, SeriesDivergenceError
from .exact import (
    convolution_two_class,
    mva,
    mva_multichain,
    solve_convolution,
    solve_oracle,
    two_class_throughputs,
)
from .model import ClosedModel, MultichainModel, Station, analyze_open
from .modelfile import ModelDocument, document_for, dump_model, load_model
from .study import StudyConfig, StudyError, run_study
from .uja import moments, t_series, uja_characteristic
from .uja2 import balanced_two_class, uja2_first_order

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VIOLATION = 0, 1, 2, 3

SOLVERS: dict[str, Callable] = {
    "oracle": solve_oracle,
    "convolution": solve_convolution,
    "mva": mva,
    "mva-multichain": mva_multichain,
}
METHOD_CHOICES = ("oracle", "convolution", "mva", "mva-multichain", "two-class", "open")


class UsageError(Exception):
    pass


@dataclass
class Table:
    headers: list[str]
    rows: list[list] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @staticmethod
    def _cell(v, digits: int | None) -> str:
        if isinstance(v, bool):
            return "yes" if v else "NO"
        if isinstance(v, (float, np.floating)):
            if math.isnan(v):
                return "-"
            return f"{v:.4f}" if digits is None else f"{v:.{digits}g}"
        return str(v)

    def render(self) -> str:
        cells = [[self._cell(v, None) for v in row] for row in self.rows]
        widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(self.headers)]
        fmt = lambda r: "  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
        lines = [fmt(self.headers), fmt(["-" * w for w in widths])]
        lines += [fmt(r) for r in cells]
        lines += self.notes
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.headers)
            for row in self.rows:
                w.writerow([self._cell(v, 10) for v in row])


def _emit(tables: Sequence[Table], args, out) -> None:
    for i, t in enumerate(tables):
        if i:
            out.write("\n")
        out.write(t.render())
    if getattr(args, "csv", None):
        # extra tables go to PATH-2.csv, PATH-3.csv, ...
        root, ext = os.path.splitext(args.csv)
        for i, t in enumerate(tables):
            t.write_csv(args.csv if i == 0 else f"{root}-{i + 1}{ext or '.csv'}")


# ---------------------------------------------------------------- solve

def cmd_solve(args, out, solvers) -> int:
    doc = load_model(args.model)
    method = args.method
    if method == "open":
        if doc.routing is None or not doc.routing.is_open:
            raise ModelError("method 'open' needs a routing block with external_rates")
        res = analyze_open(doc.routing)
        t = Table(["station", "arrival_rate", "utilization", "residence_time"])
        for i, sid in enumerate(res.ids):
            t.rows.append([sid, res.arrival_rates[i], res.utilizations[i], res.residence_times[i]])
        _emit([t], args, out)
        return EXIT_OK
    if doc.model is None:
        raise ModelError("open network: use --method open")
    if method == "mva-multichain":
        m = doc.model
        if isinstance(m, ClosedModel):
            m = MultichainModel(m.stations, (m.population,), (m.think_time,))
        res = solvers["mva-multichain"](m)
        return _emit_multichain(doc, res, args, out)
    if method == "two-class":
        return _solve_two_class(doc, args, out)
    if not isinstance(doc.model, ClosedModel):
        raise ModelError(f"method {method!r} needs a single-class model; try mva-multichain or two-class")
    model = doc.model
    K = model.population if args.kmax is None else args.kmax
    solver = solvers[method]
    ids = model.station_ids
    t = Table(["k", "throughput"] + [f"U:{s}" for s in ids] + [f"Q:{s}" for s in ids])
    for k in range(1, K + 1):
        r = solver(model.with_population(k))
        t.rows.append([k, float(r.system_throughput)] + list(map(float, r.utilization))
                      + list(map(float, r.queue_length)))
    _emit([t], args, out)
    return EXIT_OK


def _emit_multichain(doc: ModelDocument, res, args, out) -> int:
    classes = doc.classes
    t1 = Table(["class", "throughput"], [[c, float(x)] for c, x in zip(classes, res.throughput)])
    t2 = Table(["station"] + [f"U:{c}" for c in classes] + [f"Q:{c}" for c in classes])
    for i, sid in enumerate(res.station_ids):
        t2.rows.append([sid] + list(map(float, res.utilization[i])) + list(map(float, res.queue_length[i])))
    _emit([t1, t2], args, out)
    return EXIT_OK


def _solve_two_class(doc: ModelDocument, args, out) -> int:
    m = doc.model
    if not isinstance(m, MultichainModel) or m.chains != 2:
        raise ModelError("method 'two-class' needs a model with exactly two classes")
    K, L = m.populations
    table = convolution_two_class(m.stations, K, L, tuple(m.think_times))
    tk, tl = two_class_throughputs(table, K, L)
    t = Table(["class", "population", "throughput"],
              [[doc.classes[0], K, tk], [doc.classes[1], L, tl]])
    _emit([t], args, out)
    return EXIT_OK


# ---------------------------------------------------------------- uja

def _uja_demands(model) -> list[Station]:
    bad = [s.id for s in model.stations if not s.is_fixed]
    if bad or any(model.think_times if isinstance(model, MultichainModel) else [model.think_time]):
        raise ModelError(
            "UJA approximates a subnetwork of fixed-rate stations; remove delay, "
            f"load-dependent stations and think time ({', '.join(bad) or 'think_time'})"
        )
    return list(model.stations)


def cmd_uja(args, out, solvers) -> int:
    doc = load_model(args.model)
    if doc.model is None:
        raise ModelError("UJA needs a closed model")
    if isinstance(doc.model, MultichainModel):
        return _uja_two_class(doc, args, out)
    model = doc.model
    stations = _uja_demands(model)
    X = np.array([s.demand for s in stations])
    K = model.population if args.kmax is None else args.kmax
    order = args.order
    mom = moments(X, max(8, order + 1))
    exact = solvers["convolution"](model.with_population(K)).throughput
    cols = [f"T{j}" for j in range(order + 1)]
    t = Table(["k"] + cols + ["exact"] + [f"err{c}%" for c in cols])
    fell_back = False
    for k in range(1, K + 1):
        vals = []
        for j in range(order + 1):
            try:
                vals.append(t_series(mom, k, j))
            except SeriesDivergenceError as exc:
                if args.no_fallback:
                    raise
                # highest lower order that still converges
                fb = next(vals[i] for i in range(len(vals) - 1, -1, -1) if isinstance(vals[i], float))
                vals.append(f"{fb:.4f}*")
                fell_back = True
                out_note = str(exc)
        errs = [
            (v - exact[k]) / exact[k] * 100 if isinstance(v, float) else float("nan") for v in vals
        ]
        t.rows.append([k] + vals + [float(exact[k])] + errs)
    if fell_back:
        t.notes.append(f"* fallback to a lower order ({out_note})")
    _emit([t], args, out)
    return EXIT_OK


def _uja_two_class(doc: ModelDocument, args, out) -> int:
    m = doc.model
    if m.chains != 2:
        raise ModelError("two-class UJA needs exactly two classes")
    stations = _uja_demands(m)
    X = np.array([s.demands[0] for s in stations])
    Y = np.array([s.demands[1] for s in stations])
    K, L = m.populations
    t0 = balanced_two_class(len(X), X.mean(), Y.mean(), K, L)
    try:
        t1 = uja2_first_order(X, Y, K, L)
        marker = ""
    except SeriesDivergenceError:
        if args.no_fallback:
            raise
        t1, marker = t0, "*"
    ex = two_class_throughputs(convolution_two_class(stations, K, L), K, L)
    t = Table(["class", "population", "T0", "T1", "exact", "errT0%", "errT1%"])
    for i, (c, n) in enumerate(zip(doc.classes, (K, L))):
        e = ex[i]
        err = (lambda v: (v - e) / e * 100 if e > 0 else float("nan"))
        t1_cell = f"{t1[i]:.4f}*" if marker else t1[i]
        t.rows.append([c, n, t0[i], t1_cell, e, err(t0[i]), err(t1[i])])
    if marker:
        t.notes.append("* first-order series diverged; balanced value shown")
    _emit([t], args, out)
    return EXIT_OK


# ---------------------------------------------------------------- bounds

def cmd_bounds(args, out, solvers) -> int:
    doc = load_model(args.model)
    if doc.model is None:
        raise ModelError("bounds need a closed model")
    model = doc.closed()
    methods = [m.strip().upper() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in bnd.METHODS]
    if unknown:
        raise UsageError(f"unknown bound method(s): {', '.join(unknown)}")
    K = model.population if args.kmax is None else args.kmax
    exact = solvers["convolution"](model.with_population(K)).throughput
    base = bnd.BoundModelView.from_model(model)
    t = Table(["method", "N", "lower", "upper", "exact", "contains", "error%"])
    violated = []
    for n in range(1, K + 1):
        view = base.with_population(n)
        for iv in bnd.all_bounds(view, methods, pbh_levels=args.levels,
                                 kriz_iterations=max(args.levels, 1)):
            ok = iv.contains(float(exact[n]))
            err = bnd.pbh_error_measure(iv) if iv.upper > 0 else math.nan
            t.rows.append([iv.label, n, iv.lower, iv.upper, float(exact[n]), ok, err])
            # the AE cap is asymptotic, so a miss there is reported but not fatal
            if not ok and iv.method != bnd.AE:
                violated.append(f"{iv.label} at N={n}")
    if violated:
        t.notes.append("containment violated: " + ", ".join(violated))
    _emit([t], args, out)
    return EXIT_VIOLATION if violated else EXIT_OK


# ---------------------------------------------------------------- study

def cmd_study(args, out, solvers) -> int:
    cfg = StudyConfig.load(args.config) if args.config else StudyConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    text = run_study(cfg).to_text()
    out.write(text)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- fesc

def cmd_fesc(args, out, solvers) -> int:
    doc = load_model(args.model)
    model = doc.closed()
    wanted = [s.strip() for s in args.stations.split(",") if s.strip()]
    if not wanted:
        raise UsageError("--stations must name at least one station")
    by_id = {s.id: s for s in model.stations}
    missing = [s for s in wanted if s not in by_id]
    if missing:
        raise ModelError(f"unknown stations: {', '.join(missing)}")
    subset = [by_id[s] for s in wanted]
    if any(s.is_load_dependent for s in subset):
        raise ModelError("cannot aggregate load-dependent stations into a FESC")
    kmax = max(model.population, 1) if args.kmax is None else args.kmax
    meta = dict(doc.metadata)
    if all(s.is_delay for s in subset):
        z = aggregate_delay(subset)
        stations = []
        placed = False
        for st in model.stations:
            if st.id in wanted:
                if not placed:
                    stations.append(Station.delay(args.id, z))
                    placed = True
            else:
                stations.append(st)
        reduced = ClosedModel(tuple(stations), model.population, model.think_time)
        source = "delay-exact"
    elif all(s.is_fixed for s in subset):
        X = [s.demand for s in subset]
        if is_balanced(X):
            tc = aggregate_balanced(len(X), X[0], kmax)
        else:
            tc = uja_characteristic(X, args.order, kmax)
        reduced = replace_subnetwork(model, wanted, tc, args.id)
        source = tc.source
    else:
        raise ModelError("a FESC subset must be all fixed-rate or all delay stations")
    meta["fesc"] = {"id": args.id, "stations": wanted, "source": source, "order": args.order}
    text = dump_model(document_for(reduced, doc.classes, meta))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="closedqn", description="Closed queueing network solvers, UJA and bounds.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="exact solution of a model file")
    s.add_argument("model")
    s.add_argument("--method", choices=METHOD_CHOICES, default="convolution")
    s.add_argument("--kmax", type=int)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_solve)

    u = sub.add_parser("uja", help="UJA approximations against exact throughput")
    u.add_argument("model")
    u.add_argument("--order", type=int, default=2)
    u.add_argument("--kmax", type=int)
    u.add_argument("--no-fallback", action="store_true",
                   help="fail with exit code 2 instead of falling back to a lower order")
    u.add_argument("--csv")
    u.set_defaults(func=cmd_uja)

    b = sub.add_parser("bounds", help="throughput bounds for N = 1..K")
    b.add_argument("model")
    b.add_argument("--methods", default=",".join(bnd.METHODS))
    b.add_argument("--levels", type=int, default=3)
    b.add_argument("--kmax", type=int)
    b.add_argument("--csv")
    b.set_defaults(func=cmd_bounds)

    st = sub.add_parser("study", help="randomised UJA accuracy study")
    st.add_argument("config", nargs="?")
    st.add_argument("--seed", type=int)
    st.add_argument("-o", "--output")
    st.set_defaults(func=cmd_study)

    f = sub.add_parser("fesc", help="replace a station subset by a flow-equivalent center")
    f.add_argument("model")
    f.add_argument("--stations", required=True)
    f.add_argument("--order", type=int, default=2)
    f.add_argument("--kmax", type=int)
    f.add_argument("--id", default="fesc")
    f.add_argument("-o", "--output")
    f.set_defaults(func=cmd_fesc)
    return p


def main(argv: Sequence[str] | None = None, out=None, err=None, solvers=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    registry = dict(SOLVERS)
    registry.update(solvers or {})
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "order", 0) < 0 or getattr(args, "levels", 0) < 0:
            raise UsageError("--order and --levels must be >= 0")
        if getattr(args, "kmax", None) is not None and args.kmax < 0:
            raise UsageError("--kmax must be >= 0")
        return args.func(args, out, registry)
    except UsageError as exc:
        err.write(f"closedqn: usage error: {exc}\n")
        return EXIT_USAGE
    except SeriesDivergenceError as exc:
        err.write(f"closedqn: {exc}\n")
        return EXIT_NUMERIC
    except (ModelError, StudyError, OSError) as exc:
        err.write(f"closedqn: error: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


def run() -> None:
    sys.exit(main())
