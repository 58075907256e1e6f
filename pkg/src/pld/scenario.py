"""Scenario files and CSV result tables.

A scenario file is flat ``key = value`` text with dotted keys and ``#``
comments::

    link.z_bob_db = 0
    link.z_eve_db = -10
    link.power_mw = 5
    sweep.axis1 = link.z_eve_db:-20:-2:1

Unset keys take the defaults in :data:`SCHEMA`; the link gains and the
transmit power have no default.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .metrics import CodeAllocation, LinkConfig, Thresholds
from .solver import SolverConfig


class UsageError(ValueError):
    """Invalid or incomplete scenario; the message names the field."""


FLOAT, INT, STR = float, int, str

# key -> (type, default); None marks a required key.
SCHEMA = {
    "link.z_bob_db": (FLOAT, None),
    "link.z_eve_db": (FLOAT, None),
    "link.power_mw": (FLOAT, None),
    "link.noise_mw": (FLOAT, 1.0),
    "payload.d_m": (INT, 16),
    "payload.d_k": (INT, 16),
    "alloc.n_m": (FLOAT, None),
    "alloc.n_k": (FLOAT, None),
    "thresholds.eps_bob_m": (FLOAT, 0.5),
    "thresholds.eps_eve_m": (FLOAT, 0.5),
    "thresholds.eps_bob_k": (FLOAT, 0.5),
    "thresholds.eps_eve_k": (FLOAT, 0.5),
    "thresholds.throughput_min": (FLOAT, 0.1),
    "solver.tol_mm": (FLOAT, 2e-16),
    "solver.tol_bcd": (FLOAT, 2e-16),
    "solver.tol_fp": (FLOAT, 2e-16),
    "solver.max_mm": (INT, 100),
    "solver.max_bcd": (INT, 100),
    "solver.max_fp": (INT, 100),
    "solver.n_min": (INT, 16),
    "solver.n_max": (INT, 128),
    "solver.init_strategy": (STR, "coarse_grid"),
    "solver.rounding": (STR, "climb"),
    "solver.gss_tol": (FLOAT, 1e-6),
    "sweep.axis": (STR, ""),  # alias of sweep.axis1
    "sweep.axis1": (STR, ""),
    "sweep.axis2": (STR, ""),
    "sim.trials": (INT, 1_000_000),
    "seed": (INT, 0),
    "codebook.d": (INT, 16),
    "codebook.key_bits": (INT, 2),
    "codebook.repetition": (INT, 3),
    "codebook.d_max": (INT, -1),  # -1: use the code's correction radius
    "codebook.litter_count": (INT, 4),
    "codebook.extra_litter": (STR, ""),
}

SWEEPABLE = (
    "link.z_bob_db", "link.z_eve_db", "link.power_mw", "link.noise_mw",
    "payload.d_m", "payload.d_k", "thresholds.throughput_min",
    "thresholds.eps_bob_m", "thresholds.eps_eve_m", "thresholds.eps_bob_k", "thresholds.eps_eve_k",
)

LINK_KEYS = ("link.z_bob_db", "link.z_eve_db", "link.power_mw", "link.noise_mw")
THRESHOLD_KEYS = (
    "thresholds.eps_bob_m", "thresholds.eps_eve_m", "thresholds.eps_bob_k",
    "thresholds.eps_eve_k", "thresholds.throughput_min",
)


def _convert(key, raw):
    kind = SCHEMA[key][0]
    try:
        if kind is INT:
            value = float(raw)
            if not value.is_integer():
                raise ValueError
            return int(value)
        if kind is FLOAT:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError
            return value
        return str(raw).strip()
    except (TypeError, ValueError):
        raise UsageError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


@dataclass(frozen=True)
class Axis:
    name: str
    start: float
    stop: float
    step: float

    def values(self):
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        vals = [round(self.start + i * self.step, 12) for i in range(count)]
        if SCHEMA[self.name][0] is INT:
            return [int(round(v)) for v in vals]
        return vals


def parse_axis(text):
    parts = text.split(":")
    if len(parts) != 4:
        raise UsageError(f"sweep axis {text!r} must be name:start:stop:step")
    name = parts[0].strip()
    if name not in SWEEPABLE:
        raise UsageError(f"sweep axis names unknown parameter {name!r}")
    try:
        start, stop, step = (float(p) for p in parts[1:])
    except ValueError:
        raise UsageError(f"sweep axis {text!r} has a non-numeric bound") from None
    if not step > 0:
        raise UsageError(f"sweep axis {name}: step must be > 0")
    if stop < start:
        raise UsageError(f"sweep axis {name}: stop < start")
    return Axis(name, start, stop, step)


@dataclass
class ScenarioSpec:
    values: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, text):
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"line {lineno}: expected key = value")
            key, raw = (s.strip() for s in line.split("=", 1))
            values[key] = raw
        return cls().updated(values)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    def updated(self, raw_values):
        values = dict(self.values)
        for key, raw in raw_values.items():
            if key not in SCHEMA:
                raise UsageError(f"unknown key {key!r}")
            values[key] = _convert(key, raw)
        return ScenarioSpec(values)

    def with_overrides(self, pairs):
        raw = {}
        for pair in pairs:
            if "=" not in pair:
                raise UsageError(f"override {pair!r} must be key=value")
            key, value = pair.split("=", 1)
            raw[key.strip()] = value.strip()
        return self.updated(raw)

    def get(self, key):
        if key in self.values:
            return self.values[key]
        default = SCHEMA[key][1]
        if default is None:
            raise UsageError(f"missing required field {key!r}")
        return default

    def resolved(self, keys):
        return {k: self.get(k) for k in keys}

    def link(self):
        v = self.resolved(LINK_KEYS)
        try:
            return LinkConfig.from_db(v["link.z_bob_db"], v["link.z_eve_db"],
                                      v["link.power_mw"], v["link.noise_mw"])
        except ValueError as exc:
            raise UsageError(f"link: {exc}") from None

    def thresholds(self):
        v = self.resolved(THRESHOLD_KEYS)
        try:
            return Thresholds(v["thresholds.eps_bob_m"], v["thresholds.eps_eve_m"],
                              v["thresholds.eps_bob_k"], v["thresholds.eps_eve_k"],
                              v["thresholds.throughput_min"])
        except ValueError as exc:
            raise UsageError(f"thresholds: {exc}") from None

    def allocation(self):
        d_m, d_k = self.get("payload.d_m"), self.get("payload.d_k")
        n_m = self.get("alloc.n_m")
        n_k = 0.0 if d_k == 0 else self.get("alloc.n_k")
        try:
            return CodeAllocation(d_m, d_k, n_m, n_k)
        except ValueError as exc:
            raise UsageError(f"alloc: {exc}") from None

    def solver_config(self):
        try:
            return SolverConfig(
                tol_mm=self.get("solver.tol_mm"), tol_bcd=self.get("solver.tol_bcd"),
                tol_fp=self.get("solver.tol_fp"), max_mm=self.get("solver.max_mm"),
                max_bcd=self.get("solver.max_bcd"), max_fp=self.get("solver.max_fp"),
                n_min=self.get("solver.n_min"), n_max=self.get("solver.n_max"),
                init_strategy=self.get("solver.init_strategy"),
                rounding=self.get("solver.rounding"), gss_tol=self.get("solver.gss_tol"),
            )
        except ValueError as exc:
            raise UsageError(f"solver: {exc}") from None

    def axes(self):
        first = self.get("sweep.axis1") or self.get("sweep.axis")
        axes = [parse_axis(t) for t in (first, self.get("sweep.axis2")) if t]
        if not axes:
            raise UsageError("missing required field 'sweep.axis1'")
        return axes

    def canonical(self):
        return "\n".join(f"{k} = {_fmt(self.values[k])}" for k in sorted(self.values))

    def config_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _fmt(value):
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class ResultTable:
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, row):
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise KeyError(f"row lacks columns {missing}")
        self.rows.append(row)

    def column(self, name):
        return [r[name] for r in self.rows]

    def data_text(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in self.columns])
        return buf.getvalue()

    def to_text(self):
        header = {"tool": f"pld {__version__}", **self.meta, "timestamp": _timestamp()}
        lines = [f"# {k}: {v}" for k, v in header.items()]
        return "\n".join(lines) + "\n" + self.data_text()

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_text())


def read_table(path_or_text):
    """Parse a written table into ``(meta, rows)``; rows hold raw strings."""
    if "\n" in path_or_text or not os.path.exists(path_or_text):
        text = path_or_text
    else:
        with open(path_or_text) as fh:
            text = fh.read()
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif line:
            body.append(line)
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    return meta, rows


def spec_from_row(row, base=None):
    """Point scenario from the dotted input columns of an emitted row."""
    base = base or ScenarioSpec()
    return base.updated({k: v for k, v in row.items() if k in SCHEMA and v != ""})
