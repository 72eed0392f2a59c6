"""Run configuration: ``[section]`` / ``key = value`` files.

Numeric values may be plain arithmetic over numbers and keys defined
earlier in the same section (``c1 = E/6``); branch sections can also refer
to the material keys (``mu = c1``, ``eta = 0.1*mu``).

Example::

    [mesh]
    kind = box
    lengths = 0.05, 0.05, 0.05
    divisions = 2, 2, 2

    [material]
    rho0 = 1000
    E = 625.72e3
    c1 = E/6
    c2 = E/6

    [branch.1]
    kind = HS
    mu = 536.224e3
    eta = 0.5*mu

    [loads]
    traction.zmax = sin(6.895e3, 0.1) * (1, 0, 0)
    dirichlet.zmin = xyz
    dirichlet.zmax = yz

    [solver]
    scheme = 2
    dt = 0.01
    T = 100

    [output]
    csv = history.csv
    probes = 0.025 0.025 0.05

Parsing collects every problem it finds and raises a single
:class:`~visco_emc.errors.ConfigError` listing all of them.
"""

from __future__ import annotations

import ast
import configparser
import operator
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError, MeshError
from .fem.loads import LoadSpec, VectorLoad
from .fem.mesh import HexMesh, LBlockDims, generate_box_mesh, generate_lblock_mesh, read_mesh
from .integrators import SchemeKind, Z_CUT
from .materials import BRANCH_KINDS, EquilibriumModel, MaterialParams, ViscoBranch
from .solver import SolverConfig

BUNDLED = ("shear_test", "lblock", "unit_cube")

_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def eval_expr(text: str, names: dict | None = None) -> float:
    """Evaluate an arithmetic expression over numbers and ``names``."""
    names = names or {}

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in names:
                raise ValueError(f"unknown name {node.id!r}")
            return float(names[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError("only numbers, names and + - * / ** are allowed")

    try:
        return ev(ast.parse(text.strip(), mode="eval"))
    except SyntaxError:
        raise ValueError(f"cannot parse {text!r}") from None
    except ZeroDivisionError:
        raise ValueError(f"division by zero in {text!r}") from None


@dataclass(frozen=True)
class MeshSpec:
    """``kind`` is ``box``, ``lblock`` or ``file``."""

    kind: str
    lengths: tuple = (1.0, 1.0, 1.0)
    divisions: tuple = (1, 1, 1)
    origin: tuple = (0.0, 0.0, 0.0)
    lblock: LBlockDims = LBlockDims()
    path: str | None = None

    def build(self) -> HexMesh:
        if self.kind == "box":
            return generate_box_mesh(self.lengths, self.divisions, self.origin)
        if self.kind == "lblock":
            return generate_lblock_mesh(self.lblock, self.divisions)
        return read_mesh(self.path)


@dataclass(frozen=True)
class OutputSpec:
    csv: str = "history.csv"
    snapshots: tuple = ()
    probes: tuple = ()  # tuple of (x, y, z)
    restart_every: int = 0


@dataclass(frozen=True)
class RunConfig:
    mesh: MeshSpec
    material: MaterialParams
    loads: LoadSpec
    solver: SolverConfig
    initial_velocity: tuple = (0.0, 0.0, 0.0)
    initial_angular_velocity: tuple = (0.0, 0.0, 0.0)
    output: OutputSpec = field(default_factory=OutputSpec)
    young: float | None = None  # informational ``E`` of the material section


_SECTIONS = {
    "mesh": {"kind", "lengths", "divisions", "origin", "a", "Lx", "Ly", "t", "path"},
    "material": {"rho0", "E", "c1", "c2"},
    "branch": {"kind", "mu", "eta", "beta_inf", "S_hat0"},
    "loads": {"body"},  # plus traction.<set> and dirichlet.<set>
    "initial": {"velocity", "angular_velocity"},
    "solver": {"scheme", "dt", "T", "tol_R", "tol_A", "l_max", "min_corrections", "gamma", "z_cut"},
    "output": {"csv", "snapshots", "probes", "restart_every"},
}
_REQUIRED = {
    "mesh": ["kind"],
    "material": ["rho0", "c1", "c2"],
    "branch": ["kind", "mu", "eta"],
    "solver": ["dt", "T"],
}
_COMPONENTS = {"x": 0, "y": 1, "z": 2}


def resolve_config_path(name) -> Path:
    """A file path, or the name of a bundled configuration (``lblock``, ``shear_test``, ``unit_cube``)."""
    p = Path(name)
    if p.exists():
        return p
    stem = p.name[:-4] if p.name.endswith(".cfg") else p.name
    if stem in BUNDLED and p.parent == Path("."):
        return Path(str(resources.files("visco_emc") / "configs" / f"{stem}.cfg"))
    return p


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def num(self, sec, key, names, cast=float, positive=False, nonneg=False):
        raw = sec[key]
        try:
            v = eval_expr(raw, names)
        except ValueError as exc:
            self.errors.append(f"[{sec.name}] {key}: {exc}")
            return None
        if cast is int:
            if v != int(v):
                self.errors.append(f"[{sec.name}] {key}: expected an integer, got {raw!r}")
                return None
            v = int(v)
        if positive and not v > 0:
            self.errors.append(f"[{sec.name}] {key}: must be > 0 (got {v})")
            return None
        if nonneg and not v >= 0:
            self.errors.append(f"[{sec.name}] {key}: must be >= 0 (got {v})")
            return None
        return v

    def vec(self, sec, key, n=None, cast=float, sep=","):
        parts = [p for p in sec[key].replace(";", sep).split(sep) if p.strip()]
        try:
            vals = [eval_expr(p) for p in parts]
        except ValueError as exc:
            self.errors.append(f"[{sec.name}] {key}: {exc}")
            return None
        if n is not None and len(vals) != n:
            self.errors.append(f"[{sec.name}] {key}: expected {n} values, got {len(vals)}")
            return None
        if cast is int:
            if any(v != int(v) for v in vals):
                self.errors.append(f"[{sec.name}] {key}: expected integers")
                return None
            vals = [int(v) for v in vals]
        return tuple(vals)


def _section_kind(name: str) -> str:
    return "branch" if name.startswith("branch") else name


def parse_config_text(text: str, base_dir: Path | None = None, check_sets: bool = True) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    errs = _Collector()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax error: {exc}"]) from None
    for name in cp.sections():
        kind = _section_kind(name)
        if kind not in _SECTIONS:
            errs.errors.append(f"unknown section [{name}]")
            continue
        for key in cp[name]:
            if kind == "loads" and (key.startswith("traction.") or key.startswith("dirichlet.")):
                continue
            if key not in _SECTIONS[kind]:
                errs.errors.append(f"[{name}] unknown key {key!r}")
    for sec in ("mesh", "material", "solver"):
        if not cp.has_section(sec):
            errs.errors.append(f"missing section [{sec}] (required keys: {', '.join(_REQUIRED[sec])})")
    for name in cp.sections():
        kind = _section_kind(name)
        for key in _REQUIRED.get(kind, []):
            if key not in cp[name]:
                errs.errors.append(f"[{name}] missing required key {key!r}")

    mesh = _parse_mesh(cp, errs, base_dir)
    material, young = _parse_material(cp, errs)
    loads = _parse_loads(cp, errs)
    solver = _parse_solver(cp, errs)
    v0 = w0 = (0.0, 0.0, 0.0)
    if cp.has_section("initial"):
        s = cp["initial"]
        if "velocity" in s:
            v0 = errs.vec(s, "velocity", 3) or v0
        if "angular_velocity" in s:
            w0 = errs.vec(s, "angular_velocity", 3) or w0
    output = _parse_output(cp, errs)

    if check_sets and mesh is not None and loads is not None and not errs.errors:
        try:
            built = mesh.build()
        except (MeshError, OSError) as exc:
            errs.errors.append(f"[mesh] {exc}")
        else:
            known = set(built.face_sets)
            for kind_, names in (("traction", loads.tractions), ("dirichlet", loads.dirichlet)):
                for n in names:
                    if n not in known:
                        errs.errors.append(f"[loads] {kind_}.{n}: unknown surface set (mesh has {sorted(known)})")
    if errs.errors:
        raise ConfigError(errs.errors)
    return RunConfig(mesh, material, loads, solver, tuple(v0), tuple(w0), output, young)


def parse_config(path) -> RunConfig:
    """Parse and validate a configuration file (or bundled configuration name)."""
    p = resolve_config_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror or exc}"]) from None
    return parse_config_text(text, p.parent)


def _parse_mesh(cp, errs, base_dir):
    if not cp.has_section("mesh") or "kind" not in cp["mesh"]:
        return None
    s = cp["mesh"]
    kind = s["kind"].strip().lower()
    if kind == "box":
        lengths = errs.vec(s, "lengths", 3) if "lengths" in s else (1.0, 1.0, 1.0)
        divs = errs.vec(s, "divisions", 3, int) if "divisions" in s else (1, 1, 1)
        origin = errs.vec(s, "origin", 3) if "origin" in s else (0.0, 0.0, 0.0)
        if lengths and any(v <= 0 for v in lengths):
            errs.errors.append("[mesh] lengths: must be > 0")
        if divs and any(v <= 0 for v in divs):
            errs.errors.append("[mesh] divisions: must be > 0")
        if None in (lengths, divs, origin):
            return None
        return MeshSpec("box", tuple(lengths), tuple(divs), tuple(origin))
    if kind == "lblock":
        d = LBlockDims()
        vals = {}
        for key in ("a", "Lx", "Ly", "t"):
            vals[key] = errs.num(s, key, {}, positive=True) if key in s else getattr(d, key)
        divs = errs.vec(s, "divisions", 4, int) if "divisions" in s else (3, 3, 6, 11)
        if divs and any(v <= 0 for v in divs):
            errs.errors.append("[mesh] divisions: must be > 0")
            return None
        if None in vals.values() or divs is None:
            return None
        if not (vals["Lx"] > vals["a"] and vals["Ly"] > vals["a"]):
            errs.errors.append("[mesh] L-block arms need Lx > a and Ly > a")
            return None
        return MeshSpec("lblock", divisions=tuple(divs), lblock=LBlockDims(**vals))
    if kind == "file":
        if "path" not in s:
            errs.errors.append("[mesh] kind = file needs a 'path'")
            return None
        p = Path(s["path"].strip())
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        if not p.exists():
            errs.errors.append(f"[mesh] path: {p} does not exist")
            return None
        return MeshSpec("file", path=str(p))
    errs.errors.append(f"[mesh] kind: expected box, lblock or file (got {kind!r})")
    return None


def _parse_material(cp, errs):
    if not cp.has_section("material"):
        return None, None
    s = cp["material"]
    names: dict = {}
    for key in ("E", "rho0", "c1", "c2"):
        if key in s:
            v = errs.num(s, key, names, positive=(key in ("rho0", "E")), nonneg=(key in ("c1", "c2")))
            if v is not None:
                names[key] = v
    branches = []
    for name in sorted(n for n in cp.sections() if n.startswith("branch")):
        b = cp[name]
        local = dict(names)
        vals = {}
        for key in ("mu", "eta", "beta_inf"):
            if key in b:
                v = errs.num(b, key, local, positive=True)
                if v is not None:
                    local[key] = vals[key] = v
        kind = b.get("kind", "").strip().upper()
        if "kind" in b and kind not in BRANCH_KINDS:
            errs.errors.append(f"[{name}] kind: expected one of {BRANCH_KINDS} (got {b['kind']!r})")
            continue
        S0 = errs.vec(b, "S_hat0", 6) if "S_hat0" in b else None
        if "kind" not in b or "mu" not in vals or "eta" not in vals:
            continue
        branches.append(ViscoBranch(kind, vals["mu"], vals["eta"], vals.get("beta_inf", 1.0), S0))
    if not all(k in names for k in ("rho0", "c1", "c2")):
        return None, names.get("E")
    try:
        mat = MaterialParams(names["rho0"], EquilibriumModel(names["c1"], names["c2"]), tuple(branches))
    except ValueError as exc:
        errs.errors.append(f"[material] {exc}")
        return None, names.get("E")
    return mat, names.get("E")


def _parse_dirichlet(text: str):
    t = text.strip().lower()
    if t in ("all", "clamp", "clamped"):
        t = "xyz"
    if t in ("none", ""):
        return (False, False, False)
    if not set(t) <= set("xyz"):
        raise ValueError(f"expected a subset of 'xyz' (got {text!r})")
    return tuple(c in t for c in "xyz")


def _parse_loads(cp, errs):
    if not cp.has_section("loads"):
        return LoadSpec()
    s = cp["loads"]
    body, tr, dr = None, {}, {}
    ok = True
    for key in s:
        try:
            if key == "body":
                body = VectorLoad.parse(s[key])
            elif key.startswith("traction."):
                tr[key.split(".", 1)[1]] = VectorLoad.parse(s[key])
            elif key.startswith("dirichlet."):
                dr[key.split(".", 1)[1]] = _parse_dirichlet(s[key])
        except ValueError as exc:
            errs.errors.append(f"[loads] {key}: {exc}")
            ok = False
    return LoadSpec(body, tr, dr) if ok else None


def _parse_solver(cp, errs):
    if not cp.has_section("solver"):
        return None
    s = cp["solver"]
    kw = {}
    for key, cast, pos, nonneg in (
        ("dt", float, True, False),
        ("T", float, False, True),
        ("tol_R", float, True, False),
        ("tol_A", float, True, False),
        ("l_max", int, True, False),
        ("min_corrections", int, False, True),
        ("gamma", float, False, True),
        ("z_cut", float, False, True),
    ):
        if key in s:
            v = errs.num(s, key, {}, cast, positive=pos, nonneg=nonneg)
            if v is not None:
                kw[key] = v
    if "scheme" in s:
        try:
            kw["scheme"] = SchemeKind.parse(s["scheme"].strip())
        except ValueError as exc:
            errs.errors.append(f"[solver] scheme: {exc}")
    if "dt" not in kw or "T" not in kw:
        return None
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        errs.errors.append(f"[solver] {exc}")
        return None


def _parse_output(cp, errs):
    if not cp.has_section("output"):
        return OutputSpec()
    s = cp["output"]
    kw = {}
    if "csv" in s:
        kw["csv"] = s["csv"].strip()
    if "snapshots" in s:
        v = errs.vec(s, "snapshots")
        if v is not None:
            kw["snapshots"] = tuple(v)
    if "probes" in s:
        probes = []
        for chunk in s["probes"].split(";"):
            if not chunk.strip():
                continue
            try:
                pt = tuple(eval_expr(x) for x in chunk.replace(",", " ").split())
            except ValueError as exc:
                errs.errors.append(f"[output] probes: {exc}")
                continue
            if len(pt) != 3:
                errs.errors.append(f"[output] probes: each probe needs 3 coordinates (got {chunk.strip()!r})")
                continue
            probes.append(pt)
        kw["probes"] = tuple(probes)
    if "restart_every" in s:
        v = errs.num(s, "restart_every", {}, int, nonneg=True)
        if v is not None:
            kw["restart_every"] = v
    return OutputSpec(**kw)


def _fmt(x) -> str:
    return repr(float(x))


def _vec(v) -> str:
    return ", ".join(_fmt(x) for x in v)


def serialize_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config_text` (values are written fully resolved)."""
    out = ["[mesh]", f"kind = {cfg.mesh.kind}"]
    m = cfg.mesh
    if m.kind == "box":
        out += [f"lengths = {_vec(m.lengths)}", f"divisions = {', '.join(str(d) for d in m.divisions)}", f"origin = {_vec(m.origin)}"]
    elif m.kind == "lblock":
        d = m.lblock
        out += [f"a = {_fmt(d.a)}", f"Lx = {_fmt(d.Lx)}", f"Ly = {_fmt(d.Ly)}", f"t = {_fmt(d.t)}"]
        out += [f"divisions = {', '.join(str(x) for x in m.divisions)}"]
    else:
        out += [f"path = {m.path}"]
    mat = cfg.material
    out += ["", "[material]", f"rho0 = {_fmt(mat.rho0)}"]
    if cfg.young is not None:
        out.append(f"E = {_fmt(cfg.young)}")
    out += [f"c1 = {_fmt(mat.equilibrium.c1)}", f"c2 = {_fmt(mat.equilibrium.c2)}"]
    for i, b in enumerate(mat.branches, start=1):
        out += ["", f"[branch.{i}]", f"kind = {b.kind}", f"mu = {_fmt(b.mu)}", f"eta = {_fmt(b.eta)}", f"beta_inf = {_fmt(b.beta_inf)}"]
        if b.S_hat0 is not None:
            out.append(f"S_hat0 = {_vec(b.S_hat0)}")
    out += ["", "[loads]"]
    if cfg.loads.body is not None:
        out.append(f"body = {cfg.loads.body}")
    for n, l in cfg.loads.tractions.items():
        out.append(f"traction.{n} = {l}")
    for n, comps in cfg.loads.dirichlet.items():
        out.append(f"dirichlet.{n} = {''.join(c for c, on in zip('xyz', comps) if on) or 'none'}")
    out += ["", "[initial]", f"velocity = {_vec(cfg.initial_velocity)}", f"angular_velocity = {_vec(cfg.initial_angular_velocity)}"]
    s = cfg.solver
    out += [
        "",
        "[solver]",
        f"scheme = {s.scheme.value}",
        f"dt = {_fmt(s.dt)}",
        f"T = {_fmt(s.T)}",
        f"tol_R = {_fmt(s.tol_R)}",
        f"tol_A = {_fmt(s.tol_A)}",
        f"l_max = {s.l_max}",
        f"min_corrections = {s.min_corrections}",
        f"gamma = {_fmt(s.gamma)}",
        f"z_cut = {_fmt(s.z_cut)}",
    ]
    o = cfg.output
    out += ["", "[output]", f"csv = {o.csv}", f"restart_every = {o.restart_every}"]
    if o.snapshots:
        out.append(f"snapshots = {_vec(o.snapshots)}")
    if o.probes:
        out.append("probes = " + "; ".join(" ".join(_fmt(c) for c in p) for p in o.probes))
    return "\n".join(out) + "\n"


__all__ = [
    "BUNDLED",
    "MeshSpec",
    "OutputSpec",
    "RunConfig",
    "Z_CUT",
    "eval_expr",
    "parse_config",
    "parse_config_text",
    "resolve_config_path",
    "serialize_config",
]
