"""PQR and configuration readers, CSV writer."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .model import BemError, DielectricModel, Solute
from .nlbc import NlbcParams
from .operators import KPRIME_DIAGONALS
from .solve import SolverConfig


class InputError(BemError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, path, line, message):
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


# --------------------------------------------------------------------------
# PQR
# --------------------------------------------------------------------------


def parse_pqr_line(line: str, path="<string>", lineno: int = 0):
    """``(name, x, y, z, q, r)`` from one ATOM/HETATM record (last five fields numeric)."""
    parts = line.split()
    if len(parts) < 6:
        raise InputError(path, lineno, f"expected at least 6 fields, found {len(parts)}")
    try:
        x, y, z, q, r = (float(v) for v in parts[-5:])
    except ValueError as exc:
        raise InputError(path, lineno, f"malformed numeric field ({exc})") from None
    if not all(math.isfinite(v) for v in (x, y, z, q, r)):
        raise InputError(path, lineno, "non-finite numeric field")
    if r < 0:
        raise InputError(path, lineno, f"negative radius {r}")
    name = ":".join(parts[2:4][::-1]) if len(parts) >= 10 else parts[1]
    return name, x, y, z, q, r


def load_pqr(path) -> Solute:
    """Point charges from the ATOM/HETATM records of a PQR file."""
    names, pos, q, rad = [], [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            record = line.split(maxsplit=1)[0] if line.strip() else ""
            if record not in ("ATOM", "HETATM"):
                continue
            name, x, y, z, qi, ri = parse_pqr_line(line, path, lineno)
            names.append(name)
            pos.append((x, y, z))
            q.append(qi)
            rad.append(ri)
    if not q:
        raise InputError(path, None, "no ATOM/HETATM records (zero atoms)")
    return Solute(np.array(pos), np.array(q), np.array(rad), names=tuple(names))


def save_pqr(solute: Solute, path):
    with open(path, "w", newline="\n") as fh:
        for k, (p, qi, ri) in enumerate(zip(solute.positions, solute.charges, solute.radii), 1):
            values = " ".join(repr(float(v)) for v in (*p, qi, ri))
            fh.write(f"ATOM {k} X RES {k} {values}\n")


# --------------------------------------------------------------------------
# run configuration
# --------------------------------------------------------------------------

NLBC_KEYS = ("alpha", "beta", "gamma", "mu")


@dataclass(frozen=True)
class MeshSource:
    """Either a mesh file or an inline sphere ``(radius, subdivisions, center)``."""

    path: str | None = None
    format: str | None = None
    sphere: tuple | None = None

    def __post_init__(self):
        if (self.path is None) == (self.sphere is None) and (self.path or self.sphere):
            raise ValueError("give either a mesh file or a sphere, not both")

    @property
    def given(self) -> bool:
        return self.path is not None or self.sphere is not None

    def build(self):
        from .mesh import icosphere, load_mesh

        if self.sphere is not None:
            radius, subdivisions, center = self.sphere
            return icosphere(radius, subdivisions, center)
        if self.path is None:
            raise ValueError("no mesh source configured")
        return load_mesh(self.path, self.format)


def parse_sphere(text: str) -> tuple:
    """``"a,subdiv,cx,cy,cz"`` (center optional) -> ``(a, subdiv, (cx, cy, cz))``."""
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) not in (2, 5):
        raise ValueError(f"sphere spec needs 'a,subdiv' or 'a,subdiv,cx,cy,cz', got {text!r}")
    radius = float(parts[0])
    sub = float(parts[1])
    if sub != int(sub):
        raise ValueError(f"subdivisions must be an integer, got {parts[1]!r}")
    center = tuple(float(c) for c in parts[2:]) if len(parts) == 5 else (0.0, 0.0, 0.0)
    if not (radius > 0 and math.isfinite(radius)):
        raise ValueError(f"sphere radius must be positive, got {radius}")
    return radius, int(sub), center


@dataclass(frozen=True)
class RunConfig:
    dielectrics: DielectricModel = field(default_factory=DielectricModel)
    solver: SolverConfig = field(default_factory=SolverConfig)
    nlbc_values: dict = field(default_factory=dict)
    en_jump_term: bool = False
    rule: int = 3
    kprime_diagonal: str = "gauss-law"
    storage: str = "auto"
    mesh: MeshSource = field(default_factory=MeshSource)
    out: str | None = None
    surface_out: str | None = None
    trace: str | None = None

    def nlbc_params(self) -> NlbcParams:
        """The closure parameters; every one of alpha, beta, gamma, mu must be set."""
        missing = [k for k in NLBC_KEYS if k not in self.nlbc_values]
        if missing:
            raise InputError("config", None, "NLBC needs " + ", ".join(f"nlbc.{k}" for k in missing)
                             + " (there are no defaults)")
        return NlbcParams(**{k: self.nlbc_values[k] for k in NLBC_KEYS}, en_jump_term=self.en_jump_term)

    def replace(self, **changes) -> "RunConfig":
        return replace(self, **changes)


def _positive_float(v):
    v = float(v)
    if not (v > 0 and math.isfinite(v)):
        raise ValueError("must be a positive number")
    return v


def _positive_int(v):
    f = float(v)
    if f != int(f) or f < 1:
        raise ValueError("must be a positive integer")
    return int(f)


def _finite_float(v):
    v = float(v)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _boolean(v):
    text = str(v).strip().lower()
    if text in ("true", "yes", "1", "on"):
        return True
    if text in ("false", "no", "0", "off"):
        return False
    raise ValueError("must be true or false")


def _choice(*options):
    def convert(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v

    return convert


def _rule(v):
    v = _positive_int(v)
    if v not in (1, 3, 7):
        raise ValueError("must be 1, 3 or 7")
    return v


def _text(v):
    if not v:
        raise ValueError("must not be empty")
    return str(v)


# key -> (converter, destination)
_SCHEMA = {
    "dielectric.eps_p": (_finite_float, ("dielectrics", "eps_p")),
    "dielectric.eps_w": (_finite_float, ("dielectrics", "eps_w")),
    "dielectric.eps_inf": (_finite_float, ("dielectrics", "eps_inf")),
    "dielectric.lambda_w": (_finite_float, ("dielectrics", "lambda_w")),
    "solver.tol": (_positive_float, ("solver", "rel_tolerance")),
    "solver.max_iter": (_positive_int, ("solver", "max_iterations")),
    "solver.restart": (_positive_int, ("solver", "restart")),
    "solver.picard_damping": (_positive_float, ("solver", "picard_damping")),
    "solver.picard_tol": (_positive_float, ("solver", "picard_tolerance")),
    "solver.picard_max_outer": (_positive_int, ("solver", "picard_max_outer")),
    "nlbc.alpha": (_finite_float, ("nlbc", "alpha")),
    "nlbc.beta": (_finite_float, ("nlbc", "beta")),
    "nlbc.gamma": (_finite_float, ("nlbc", "gamma")),
    "nlbc.mu": (_finite_float, ("nlbc", "mu")),
    "nlbc.en_jump_term": (_boolean, ("top", "en_jump_term")),
    "quadrature.rule": (_rule, ("top", "rule")),
    "quadrature.kprime_diagonal": (_choice(*KPRIME_DIAGONALS), ("top", "kprime_diagonal")),
    "quadrature.storage": (_choice("auto", "dense", "matrix-free"), ("top", "storage")),
    "mesh.file": (_text, ("mesh", "path")),
    "mesh.format": (_choice("off", "flat-tri"), ("mesh", "format")),
    "mesh.sphere": (_text, ("mesh", "sphere")),
    "output.out": (_text, ("top", "out")),
    "output.surface_out": (_text, ("top", "surface_out")),
    "output.trace": (_text, ("top", "trace")),
}

CONFIG_KEYS = tuple(_SCHEMA)


def _config_lines(text: str):
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        key, sep, value = line.partition("=")
        if not sep:
            yield lineno, None, line
            continue
        key = key.strip()
        if section and "." not in key:
            key = f"{section}.{key}"
        yield lineno, key, value.strip()


def parse_config(text: str, path="<config>", check_files: bool = True) -> RunConfig:
    """Build a :class:`RunConfig` from ``key = value`` text.

    Keys are dotted (``solver.tol``) or grouped under ``[section]`` headers.
    Unknown or repeated keys, type mismatches and out-of-range values raise
    :class:`InputError` with the offending line.
    """
    seen: dict[str, int] = {}
    groups: dict[str, dict] = {"dielectrics": {}, "solver": {}, "nlbc": {}, "top": {}, "mesh": {}}
    for lineno, key, value in _config_lines(text):
        if key is None:
            raise InputError(path, lineno, f"expected 'key = value', got {value!r}")
        if key not in _SCHEMA:
            raise InputError(path, lineno, f"unknown key {key!r}")
        if key in seen:
            raise InputError(path, lineno, f"duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        convert, (group, name) = _SCHEMA[key]
        try:
            groups[group][name] = convert(value)
        except ValueError as exc:
            raise InputError(path, lineno, f"{key}: {exc} (got {value!r})") from None

    def build(factory, values, keys):
        try:
            return factory(**values)
        except ValueError as exc:
            line = min(seen[k] for k in keys) if keys else None
            raise InputError(path, line, str(exc)) from None

    def keys_of(group):
        return [k for k in seen if _SCHEMA[k][1][0] == group]

    dielectrics = build(DielectricModel, groups["dielectrics"], keys_of("dielectrics"))
    solver = build(SolverConfig, groups["solver"], keys_of("solver"))
    mesh_values = dict(groups["mesh"])
    if "sphere" in mesh_values:
        try:
            mesh_values["sphere"] = parse_sphere(mesh_values["sphere"])
        except ValueError as exc:
            raise InputError(path, seen["mesh.sphere"], str(exc)) from None
    mesh = build(MeshSource, mesh_values, keys_of("mesh"))
    if check_files and mesh.path is not None and not os.path.exists(mesh.path):
        raise InputError(path, seen["mesh.file"], f"mesh file {mesh.path!r} does not exist")
    if "alpha" in groups["nlbc"] and groups["nlbc"]["alpha"] < 0:
        raise InputError(path, seen["nlbc.alpha"], "nlbc.alpha must be >= 0")
    return RunConfig(dielectrics=dielectrics, solver=solver, nlbc_values=dict(groups["nlbc"]), mesh=mesh,
                     **groups["top"])


def load_config(path, check_files: bool = True) -> RunConfig:
    return parse_config(Path(path).read_text(), str(path), check_files)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    """Text that :func:`parse_config` maps back to ``cfg``."""
    d, s = cfg.dielectrics, cfg.solver
    lines = [
        f"dielectric.eps_p = {d.eps_p!r}",
        f"dielectric.eps_w = {d.eps_w!r}",
        f"dielectric.eps_inf = {d.eps_inf!r}",
        f"dielectric.lambda_w = {d.lambda_w!r}",
        f"solver.tol = {s.rel_tolerance!r}",
        f"solver.max_iter = {s.max_iterations}",
        f"solver.restart = {s.restart}",
        f"solver.picard_damping = {s.picard_damping!r}",
        f"solver.picard_tol = {s.picard_tolerance!r}",
        f"solver.picard_max_outer = {s.picard_max_outer}",
    ]
    lines += [f"nlbc.{k} = {cfg.nlbc_values[k]!r}" for k in NLBC_KEYS if k in cfg.nlbc_values]
    lines += [
        f"nlbc.en_jump_term = {_format_value(cfg.en_jump_term)}",
        f"quadrature.rule = {cfg.rule}",
        f"quadrature.kprime_diagonal = {cfg.kprime_diagonal}",
        f"quadrature.storage = {cfg.storage}",
    ]
    m = cfg.mesh
    if m.path is not None:
        lines.append(f"mesh.file = {m.path}")
    if m.format is not None:
        lines.append(f"mesh.format = {m.format}")
    if m.sphere is not None:
        a, sub, c = m.sphere
        lines.append(f"mesh.sphere = {a!r},{sub},{c[0]!r},{c[1]!r},{c[2]!r}")
    for name in ("out", "surface_out", "trace"):
        if getattr(cfg, name) is not None:
            lines.append(f"output.{name} = {getattr(cfg, name)}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise ValueError(f"refusing to write non-finite value {v}")
        return "%.17g" % v
    if v is None:
        return ""
    return str(v)


def _cells(rows, schema):
    cells = []
    for row in rows:
        values = [row.get(k) for k in schema] if isinstance(row, dict) else list(row)
        if len(values) != len(schema):
            raise ValueError(f"row has {len(values)} values for {len(schema)} columns")
        cells.append([_cell(v) for v in values])
    return cells


def format_csv(rows, schema) -> str:
    """CSV text for ``rows`` under the header ``schema``."""
    schema = list(schema)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(schema)
    writer.writerows(_cells(rows, schema))
    return buf.getvalue()


def write_csv(rows, schema, path):
    """Write ``rows`` (sequences or mappings) under the header ``schema``.

    Floats use 17 significant digits; lines end in LF.  Every row is checked
    before the file is opened, so a refused row leaves no partial file.
    """
    text = format_csv(rows, schema)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def read_csv(path):
    """``(header, rows)`` with every cell as a string."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def append_csv_row(row, schema, path):
    """Append one row, writing the header first when the file is new or empty."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    (line,) = _cells([row], list(schema))
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(list(schema))
        writer.writerow(line)
