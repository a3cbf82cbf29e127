"""YAML model files.

One document per model::

    classes: [batch, interactive]      # optional, default one class
    population: {batch: 3, interactive: 2}   # or a scalar for one class
    think_time: 0.0                    # scalar or per-class map
    stations:
      - id: cpu
        kind: fixed                    # fixed | delay | load_dependent
        demand: {batch: 0.2, interactive: 0.05}
      - id: disk
        kind: load_dependent
        demand: 0.3
        rates: [1, 2]
    metadata: {...}                    # free-form, kept verbatim

Instead of ``stations`` a ``routing`` block may give ``P``, ``service_times``
and optionally ``external_rates``, ``servers`` (``.inf`` for delay),
``ids`` and ``reference``.  JSON is valid YAML, so JSON files load too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import yaml

from .errors import ModelError
from .model import (
    ClosedModel,
    MultichainModel,
    RoutingSpec,
    Station,
    StationKind,
    multiserver,
    validate,
    visit_ratios,
)

TOP_FIELDS = {"classes", "population", "think_time", "stations", "routing", "metadata"}
STATION_FIELDS = {"id", "kind", "demand", "rates"}
ROUTING_FIELDS = {"P", "service_times", "external_rates", "servers", "ids", "reference"}


class ModelFileError(ModelError):
    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path:
            where.append(path)
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


@dataclass
class ModelDocument:
    """A parsed model file.

    ``model`` is a :class:`ClosedModel` for one class, a
    :class:`MultichainModel` for several, and ``None`` for an open routing
    network.  ``routing`` keeps the routing block when one was given.
    """

    classes: tuple[str, ...]
    model: ClosedModel | MultichainModel | None
    routing: RoutingSpec | None = None
    reference: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def is_multiclass(self) -> bool:
        return len(self.classes) > 1

    def closed(self) -> ClosedModel:
        if not isinstance(self.model, ClosedModel):
            raise ModelError("this command needs a single-class closed model")
        return self.model


def _line_index(text: str) -> dict[tuple, int]:
    """Map YAML paths (tuples of keys/indices) to 1-based line numbers."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return {}
    out: dict[tuple, int] = {}

    def walk(node, path):
        out[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                out[path + (k.value,)] = k.start_mark.line + 1
                walk(v, path + (k.value,))
                out[path + (k.value,)] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return out


class _Reader:
    def __init__(self, lines: dict[tuple, int]):
        self.lines = lines

    def fail(self, path: tuple, message: str):
        raise ModelFileError(message, _fmt(path), self.lines.get(path))

    def number(self, value, path, minimum=0.0) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        if math.isnan(value):
            self.fail(path, "not a number")
        if value < minimum:
            self.fail(path, f"must be >= {minimum:g}")
        return float(value)

    def integer(self, value, path) -> int:
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            self.fail(path, f"expected a non-negative integer, got {value!r}")
        return int(value)

    def keys(self, obj, allowed, path):
        if not isinstance(obj, Mapping):
            self.fail(path, "expected a mapping")
        extra = sorted(set(obj) - allowed, key=str)
        if extra:
            self.fail(path + (extra[0],), f"unknown field {extra[0]!r}")

    def per_class(self, value, classes, path, integer=False) -> tuple:
        conv = self.integer if integer else self.number
        if isinstance(value, Mapping):
            extra = set(value) - set(classes)
            if extra:
                name = sorted(extra, key=str)[0]
                self.fail(path + (name,), f"unknown class {name!r}")
            missing = [c for c in classes if c not in value]
            if missing:
                self.fail(path, f"missing value for class {missing[0]!r}")
            return tuple(conv(value[c], path + (c,)) for c in classes)
        if isinstance(value, list):
            if len(value) != len(classes):
                self.fail(path, f"expected {len(classes)} values, got {len(value)}")
            return tuple(conv(v, path + (i,)) for i, v in enumerate(value))
        if len(classes) != 1:
            self.fail(path, "a scalar is only allowed for single-class models")
        return (conv(value, path),)


def _fmt(path: tuple) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def parse_model(text: str) -> ModelDocument:
    """Parse a model document, raising :class:`ModelFileError` with line/field info."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ModelFileError(
            f"syntax error: {getattr(exc, 'problem', exc)}", "", mark.line + 1 if mark else None
        ) from None
    r = _Reader(_line_index(text))
    if not isinstance(data, Mapping):
        r.fail((), "model file must be a mapping")
    r.keys(data, TOP_FIELDS, ())

    classes = data.get("classes", ["c1"])
    if not isinstance(classes, list) or not classes or not all(isinstance(c, str) for c in classes):
        r.fail(("classes",), "expected a non-empty list of class names")
    if len(set(classes)) != len(classes):
        r.fail(("classes",), "duplicate class names")
    classes = tuple(classes)
    metadata = data.get("metadata", {}) or {}
    if not isinstance(metadata, Mapping):
        r.fail(("metadata",), "expected a mapping")

    has_st, has_rt = "stations" in data, "routing" in data
    if has_st == has_rt:
        r.fail((), "give exactly one of 'stations' or 'routing'")

    routing, reference = None, 0
    if has_rt:
        routing, reference = _read_routing(r, data["routing"])
        if routing.is_open:
            if "population" in data:
                r.fail(("population",), "an open network has no population")
            doc = ModelDocument(classes, None, routing, reference, dict(metadata))
            _check(r, routing)
            return doc
        if len(classes) != 1:
            r.fail(("classes",), "routing-derived models are single-class")
        _check(r, routing)
        stations = _stations_from_routing(routing, reference)
    else:
        raw = data["stations"]
        if not isinstance(raw, list) or not raw:
            r.fail(("stations",), "expected a non-empty list")
        stations = [_read_station(r, s, ("stations", i), classes) for i, s in enumerate(raw)]

    if "population" not in data:
        r.fail((), "missing field 'population'")
    pops = r.per_class(data["population"], classes, ("population",), integer=True)
    think = (r.per_class(data["think_time"], classes, ("think_time",))
             if "think_time" in data else (0.0,) * len(classes))

    if len(classes) == 1:
        model = ClosedModel(tuple(stations), pops[0], think[0], dict(metadata))
    else:
        model = MultichainModel(tuple(stations), pops, think, dict(metadata))
    _check(r, model)
    return ModelDocument(classes, model, routing, reference, dict(metadata))


def _check(r: _Reader, model) -> None:
    diags = validate(model)
    if diags:
        r.fail((), "; ".join(diags))


def _read_station(r: _Reader, raw, path, classes) -> Station:
    r.keys(raw, STATION_FIELDS, path)
    if "id" not in raw or not isinstance(raw["id"], (str, int)):
        r.fail(path, "station needs an 'id'")
    kind = raw.get("kind", "fixed")
    try:
        kind = StationKind(kind)
    except ValueError:
        r.fail(path + ("kind",), f"unknown kind {kind!r}; expected fixed, delay or load_dependent")
    if "demand" not in raw:
        r.fail(path, "station needs a 'demand'")
    demands = r.per_class(raw["demand"], classes, path + ("demand",))
    rates = raw.get("rates", [])
    if rates and kind is not StationKind.LOAD_DEPENDENT:
        r.fail(path + ("rates",), "rates are only allowed on load_dependent stations")
    if not isinstance(rates, list):
        r.fail(path + ("rates",), "expected a list")
    rates = tuple(r.number(v, path + ("rates", i)) for i, v in enumerate(rates))
    return Station(str(raw["id"]), kind, demands, rates)


def _read_routing(r: _Reader, raw) -> tuple[RoutingSpec, int]:
    path = ("routing",)
    r.keys(raw, ROUTING_FIELDS, path)
    for need in ("P", "service_times"):
        if need not in raw:
            r.fail(path, f"routing block needs {need!r}")
    P = raw["P"]
    if not isinstance(P, list) or not all(isinstance(row, list) for row in P):
        r.fail(path + ("P",), "expected a list of rows")
    P = [[r.number(v, path + ("P", i, j)) for j, v in enumerate(row)] for i, row in enumerate(P)]
    xs = [r.number(v, path + ("service_times", i)) for i, v in enumerate(raw["service_times"])]
    ext = raw.get("external_rates")
    if ext is not None:
        ext = [r.number(v, path + ("external_rates", i)) for i, v in enumerate(ext)]
    servers = raw.get("servers")
    if servers is not None:
        servers = tuple(r.number(v, path + ("servers", i), 1.0) for i, v in enumerate(servers))
    ids = raw.get("ids")
    if ids is not None:
        ids = tuple(str(i) for i in ids)
    reference = r.integer(raw.get("reference", 0), path + ("reference",))
    if reference >= len(xs):
        r.fail(path + ("reference",), "reference station out of range")
    spec = RoutingSpec(np.array(P, dtype=float), np.array(xs), None if ext is None else np.array(ext), servers, ids)
    return spec, reference


def _stations_from_routing(spec: RoutingSpec, reference: int) -> list[Station]:
    L = visit_ratios(spec, reference) * spec.service_times
    out = []
    for sid, x, m in zip(spec.ids, L, spec.servers):
        if math.isinf(m):
            out.append(Station.delay(sid, float(x)))
        elif m == 1:
            out.append(Station.fixed(sid, float(x)))
        else:
            out.append(multiserver(sid, float(x), int(m)))
    return out


def load_model(path) -> ModelDocument:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def _scalar_or_map(values, classes):
    if len(classes) == 1:
        return values[0]
    return {c: v for c, v in zip(classes, values)}


def document_to_dict(doc: ModelDocument) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if doc.classes != ("c1",):
        out["classes"] = list(doc.classes)
    m = doc.model
    if m is not None:
        if isinstance(m, ClosedModel):
            pops, think = (m.population,), (m.think_time,)
        else:
            pops, think = m.populations, m.think_times
        out["population"] = _scalar_or_map(list(pops), doc.classes)
        if any(think):
            out["think_time"] = _scalar_or_map(list(think), doc.classes)
    if doc.routing is not None:
        rt = doc.routing
        block: dict[str, Any] = {
            "P": rt.P.tolist(),
            "service_times": rt.service_times.tolist(),
        }
        if rt.external_rates is not None:
            block["external_rates"] = rt.external_rates.tolist()
        if any(s != 1 for s in rt.servers):
            block["servers"] = list(rt.servers)
        block["ids"] = list(rt.ids)
        if doc.reference:
            block["reference"] = doc.reference
        out["routing"] = block
    else:
        stations = []
        for st in m.stations:
            entry: dict[str, Any] = {"id": st.id, "kind": st.kind.value,
                                     "demand": _scalar_or_map(list(st.demands), doc.classes)}
            if st.rates:
                entry["rates"] = list(st.rates)
            stations.append(entry)
        out["stations"] = stations
    if doc.metadata:
        out["metadata"] = dict(doc.metadata)
    return out


def dump_model(doc: ModelDocument) -> str:
    return yaml.safe_dump(document_to_dict(doc), sort_keys=False, default_flow_style=None)


def document_for(model, classes=None, metadata=None) -> ModelDocument:
    """Wrap a model built in code so it can be written to a file."""
    if isinstance(model, ClosedModel):
        classes = tuple(classes or ("c1",))
    else:
        classes = tuple(classes or (f"c{i + 1}" for i in range(model.chains)))
    meta = dict(model.metadata) if metadata is None else dict(metadata)
    return ModelDocument(classes, model, None, 0, meta)
