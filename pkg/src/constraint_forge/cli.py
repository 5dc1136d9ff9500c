"""System files, the ``constraint-forge`` command and report rendering.

System file format (sections in any order, ``#`` or ``;`` start a comment)::

    [system]
    kind = symplectic        # or contact
    n = 4

    [lagrangian]
    (1/2)*((q1+v2+v3)^2 + (v4-v2)^2 - 2*q2*q4)

    [options]
    engine = both            # algebraic | geometric | both
    ambient = primary        # primary | current (geometric orthogonals)
    multiplier.lam1 = 0
    init.q4 = 1
    t_end = 1
    dt = 0.001
    max_stages = 20

The ``[lagrangian]`` body is one expression over ``q1..qn``, ``v1..vn``
(and ``z`` for contact systems); it may span several lines.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace

from . import __version__
from .constraints import (
    InconsistentConstraints,
    UnsolvableConstraint,
    classify,
    coisotropy_check,
    default_stage_cap,
    stabilize_dirac_bergmann,
    stabilize_geometric,
)
from .dynamics import drift_report, equations_of_motion, integrate, total_hamiltonian
from .mechanics import LagrangianSystem, PhaseSpace, cartan_forms, contact_class, legendre_analyze
from .symexpr import ParseError

__all__ = [
    "SystemFile",
    "SystemFileError",
    "SystemReport",
    "parse_system_file",
    "load_system_file",
    "run",
    "render_text",
    "main",
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_INCONSISTENT",
    "EXIT_EXCEEDED",
]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INCONSISTENT = 2
EXIT_EXCEEDED = 3

ENGINES = ("algebraic", "geometric", "both")
COMMANDS = ("analyze", "eom", "integrate")
MAX_STAGES_ENV = "CONSTRAINT_FORGE_MAX_STAGES"
REPORT_VERSION = 1


class SystemFileError(ValueError):
    """Invalid system file; ``line`` is 1-based (``None`` when not tied to a line)."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.message = message
        self.line = line


class UsageError(ValueError):
    pass


@dataclass
class SystemFile:
    kind: str
    n: int
    lagrangian: str
    options: dict = field(default_factory=dict)
    lagrangian_line: int = 0

    def system(self):
        space = PhaseSpace(self.n, self.kind)
        try:
            L = space.parse(self.lagrangian)
        except ParseError as exc:
            raise SystemFileError(f"lagrangian: {exc.message} at offset {exc.position}", self.lagrangian_line) from exc
        try:
            return LagrangianSystem(L, space)
        except ValueError as exc:
            raise SystemFileError(f"lagrangian: {exc}", self.lagrangian_line) from exc


_SECTIONS = ("system", "lagrangian", "options")
_OPTION_KEYS = ("engine", "ambient", "t_end", "dt", "max_stages")


def parse_system_file(text):
    section = None
    seen = {}
    system = {}
    lag_lines = []
    options = {"multipliers": {}, "init": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise SystemFileError(f"malformed section header {line!r}", lineno)
            name = line[1:-1].strip().lower()
            if name not in _SECTIONS:
                raise SystemFileError(f"unknown section [{name}]", lineno)
            if name in seen:
                raise SystemFileError(f"duplicate section [{name}]", lineno)
            seen[name] = lineno
            section = name
            continue
        if section is None:
            raise SystemFileError("content before the first section", lineno)
        if section == "lagrangian":
            body = line.split("#", 1)[0].strip()
            if body:
                lag_lines.append((lineno, body))
            continue
        if "=" not in line:
            raise SystemFileError(f"expected key = value, got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        value = value.split("#", 1)[0].strip()
        key_l = key.lower()
        if section == "system":
            if key_l not in ("kind", "n"):
                raise SystemFileError(f"unknown key {key!r} in [system]", lineno)
            if key_l in system:
                raise SystemFileError(f"duplicate key {key!r}", lineno)
            system[key_l] = (value, lineno)
        else:
            _option(options, key, value, lineno)
    if "system" not in seen:
        raise SystemFileError("missing [system] section")
    if "lagrangian" not in seen or not lag_lines:
        raise SystemFileError("missing or empty [lagrangian] section", seen.get("lagrangian"))
    kind, kline = system.get("kind", ("symplectic", seen["system"]))
    if kind not in ("symplectic", "contact"):
        raise SystemFileError(f"kind must be symplectic or contact, got {kind!r}", kline)
    if "n" not in system:
        raise SystemFileError("missing key n in [system]", seen["system"])
    nval, nline = system["n"]
    try:
        n = int(nval)
    except ValueError:
        raise SystemFileError(f"n must be an integer, got {nval!r}", nline) from None
    if n < 1:
        raise SystemFileError("n must be >= 1", nline)
    lag = " ".join(body for _, body in lag_lines)
    sf = SystemFile(kind, n, lag, options, lag_lines[0][0])
    space = PhaseSpace(n, kind)
    try:
        space.parse(lag)
    except ParseError as exc:
        offset = exc.position
        line = lag_lines[-1][0]
        for ln, body in lag_lines:
            if offset <= len(body):
                line = ln
                break
            offset -= len(body) + 1
        raise SystemFileError(f"lagrangian: {exc.message} at column {offset + 1}", line) from exc
    sf.system()
    for name, (value, line) in options["multipliers"].items():
        if name not in space.multipliers:
            raise SystemFileError(f"{name} is not a multiplier name ({space.multipliers[0]}, ...)", line)
        try:
            space.parse(value)
        except ParseError as exc:
            raise SystemFileError(f"multiplier.{name}: {exc}", line) from exc
    for name, (_, line) in options["init"].items():
        if name not in space.coords:
            raise SystemFileError(f"{name} is not a phase-space variable", line)
    return sf


def _option(options, key, value, lineno):
    key_l = key.lower()
    if key_l.startswith("multiplier."):
        options["multipliers"][key[len("multiplier."):]] = (value, lineno)
        return
    if key_l.startswith("init."):
        try:
            options["init"][key[len("init."):]] = (float(value), lineno)
        except ValueError:
            raise SystemFileError(f"{key} must be a number", lineno) from None
        return
    if key_l not in _OPTION_KEYS:
        raise SystemFileError(f"unknown key {key!r} in [options]", lineno)
    if key_l == "engine" and value not in ENGINES:
        raise SystemFileError(f"engine must be one of {', '.join(ENGINES)}", lineno)
    if key_l == "ambient" and value not in ("primary", "current"):
        raise SystemFileError("ambient must be primary or current", lineno)
    if key_l in ("t_end", "dt"):
        try:
            value = float(value)
        except ValueError:
            raise SystemFileError(f"{key} must be a number", lineno) from None
    if key_l == "max_stages":
        try:
            value = int(value)
        except ValueError:
            raise SystemFileError("max_stages must be an integer", lineno) from None
    options[key_l] = value


def load_system_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_system_file(fh.read())


# ---------------------------------------------------------------------------
# report


@dataclass
class SystemReport:
    """Plain-data analysis result; every field is JSON-serialisable."""

    command: str
    system: dict
    legendre: dict
    cartan: dict
    engines: dict
    engines_agree: bool | None
    status: str
    exit_code: int
    classification: dict | None = None
    coisotropic: dict | None = None
    total_hamiltonian: dict | None = None
    eom: list | None = None
    tangency: dict | None = None
    integration: dict | None = None
    errors: list = field(default_factory=list)
    version: int = REPORT_VERSION

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown report fields: {sorted(unknown)}")
        return cls(**data)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _m(M):
    return None if M is None else M.tolist()


def _ledger_dict(led):
    return {
        "status": led.status,
        "stages_run": led.stages_run,
        "frozen": led.frozen,
        "constraints": [
            {"expr": str(c.expr), "stage": c.stage, "origin": c.origin, "classification": c.classification}
            for c in led.constraints
        ],
        "multiplier_fixings": {k: str(v) for k, v in led.multiplier_fixings.items()},
        "residual": None if led.residual is None else str(led.residual),
        "diagnostics": list(led.diagnostics),
    }


def _stage_cap(sf, space):
    if "max_stages" in sf.options:
        return sf.options["max_stages"]
    env = os.environ.get(MAX_STAGES_ENV)
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise UsageError(f"{MAX_STAGES_ENV} must be an integer, got {env!r}") from None
        if cap < 1:
            raise UsageError(f"{MAX_STAGES_ENV} must be >= 1")
        return cap
    return default_stage_cap(space)


def run(command, sf, engine=None, multipliers=None, init=None, t_end=None, dt=None, out=None):
    """Run ``command`` on a parsed system file and return a :class:`SystemReport`."""
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}")
    engine = engine or sf.options.get("engine", "both")
    if engine not in ENGINES:
        raise UsageError(f"engine must be one of {', '.join(ENGINES)}")
    ambient = sf.options.get("ambient", "primary")
    system = sf.system()
    space = system.space
    cap = _stage_cap(sf, space)

    leg = legendre_analyze(system)
    cf = cartan_forms(system)
    cartan = {
        "theta": str(cf.theta),
        "omega": str(cf.omega),
        "energy": str(cf.energy),
        "eta": None if cf.eta is None else str(cf.eta),
        "eta_class": None if cf.eta is None else contact_class(cf.eta),
    }
    legendre = {
        "momenta": [str(m) for m in leg.momenta],
        "hessian": leg.hessian.tolist(),
        "rank": leg.rank,
        "primaries": [str(c) for c in leg.primaries],
        "H0": str(leg.H0),
        "velocity_solution": {k: str(v) for k, v in leg.velocity_solution.items()},
    }

    ledgers = {}
    if engine in ("algebraic", "both"):
        ledgers["algebraic"] = stabilize_dirac_bergmann(leg.H0, leg.primaries, space, max_stages=cap)
    if engine in ("geometric", "both"):
        ledgers["geometric"] = stabilize_geometric(leg.H0, leg.primaries, space, max_stages=cap, ambient=ambient)
    statuses = [led.status for led in ledgers.values()]
    if "inconsistent" in statuses:
        status, code = "inconsistent", EXIT_INCONSISTENT
    elif "exceeded-iterations" in statuses:
        status, code = "exceeded-iterations", EXIT_EXCEEDED
    else:
        status, code = "stabilized", EXIT_OK
    agree = None
    if len(ledgers) == 2 and status == "stabilized":
        agree = ledgers["algebraic"].generates_same_ideal(ledgers["geometric"])
    errors = []
    for name, led in ledgers.items():
        if led.status == "inconsistent":
            errors.append(f"{name}: inconsistent system, residual {led.residual}; " + "; ".join(led.diagnostics))
        elif led.status == "exceeded-iterations":
            errors.append(f"{name}: " + "; ".join(led.diagnostics))

    report = SystemReport(
        command=command,
        system={"kind": sf.kind, "n": sf.n, "lagrangian": sf.lagrangian, "engine": engine, "ambient": ambient},
        legendre=legendre,
        cartan=cartan,
        engines={},
        engines_agree=agree,
        status=status,
        exit_code=code,
        errors=errors,
    )
    if status != "stabilized":
        report.engines = {k: _ledger_dict(v) for k, v in ledgers.items()}
        return report

    main_ledger = ledgers["geometric" if "geometric" in ledgers else "algebraic"]
    cl = classify(main_ledger, space)
    for name in ledgers:
        if ledgers[name] is main_ledger:
            ledgers[name] = _with_labels(main_ledger, cl)
    report.engines = {k: _ledger_dict(v) for k, v in ledgers.items()}
    report.classification = {
        "source": "geometric" if "geometric" in ledgers else "algebraic",
        "constraints": [str(c) for c in main_ledger.exprs()],
        "labels": cl.labels,
        "bracket_matrix": cl.Jmatrix.tolist(),
        "bracket_rank": cl.Jmatrix.rank(),
        "first": [str(e) for e in cl.first],
        "second": [str(e) for e in cl.second],
        "C": _m(cl.Cmatrix),
        "Cinverse": _m(cl.Cinverse),
        "kernel_vectors": [[str(e) for e in v] for v in cl.kernel_vectors],
    }
    if not space.contact:
        res = coisotropy_check(cl.first, cl.second, space)
        report.coisotropic = {
            "ok": res.ok,
            "witness": None if res.witness is None else [str(w) for w in res.witness],
            "reason": res.reason,
        }
    if command == "analyze":
        return report

    ht = total_hamiltonian(leg.H0, cl, space)
    eom = equations_of_motion(ht, cl, space)
    report.total_hamiltonian = {
        "base": str(ht.base),
        "terms": [{"multiplier": lam, "constraint": str(om)} for lam, om in ht.terms],
        "expr": str(ht.expr),
    }
    report.eom = [
        {"var": x, "rhs": str(eom.rhs[x]), "field": str(eom.field[x]), "eliminated": x in eom.pivots}
        for x in space.coords
    ]
    report.tangency = {k: str(v) for k, v in eom.tangency_residuals().items()}
    if command == "eom":
        return report

    opts = sf.options
    binds = {k: v for k, (v, _) in opts.get("multipliers", {}).items()}
    binds.update(multipliers or {})
    state = {k: v for k, (v, _) in opts.get("init", {}).items()}
    state.update(init or {})
    t_end = t_end if t_end is not None else opts.get("t_end")
    dt = dt if dt is not None else opts.get("dt")
    if t_end is None or dt is None:
        raise UsageError("integrate needs t_end and dt (options or --t-end/--dt)")
    if not state:
        raise UsageError("integrate needs an initial state (init.VAR options or --init)")
    traj = integrate(eom, state, binds, t_end, dt)
    drift = drift_report(traj, eom.constraints)
    if out:
        traj.to_csv(out)
    report.integration = {
        "t_end": float(t_end),
        "dt": float(dt),
        "samples": len(traj.times),
        "multipliers": dict(traj.multipliers),
        "initial_state": traj.point(0),
        "final_state": traj.point(len(traj.times) - 1),
        "drift": drift.to_dict(),
        "csv": out,
    }
    return report


def _with_labels(ledger, cl):
    return replace(ledger, constraints=list(cl.constraints))


# ---------------------------------------------------------------------------
# text rendering


def _matrix_lines(rows, indent="    "):
    if not rows:
        return [indent + "[]"]
    width = max(len(e) for r in rows for e in r)
    return [indent + "[ " + "  ".join(e.rjust(width) for e in r) + " ]" for r in rows]


def render_text(data):
    """Human-readable report built from ``SystemReport.to_dict()``."""
    if isinstance(data, SystemReport):
        data = data.to_dict()
    out = []
    sy = data["system"]
    out.append(f"system: {sy['kind']}, n = {sy['n']}, engine = {sy['engine']}")
    out.append(f"L = {sy['lagrangian']}")
    lg = data["legendre"]
    out.append("")
    out.append("Legendre transform")
    for i, m in enumerate(lg["momenta"], 1):
        out.append(f"  p{i} = {m}")
    out.append(f"  Hessian (rank {lg['rank']}):")
    out += _matrix_lines(lg["hessian"])
    out.append("  primaries: " + (", ".join(lg["primaries"]) or "none"))
    out.append(f"  H0 = {lg['H0']}")
    ca = data["cartan"]
    if ca.get("eta"):
        out.append(f"  eta_L = {ca['eta']}  (class {ca['eta_class']})")
    for name, led in data["engines"].items():
        out.append("")
        out.append(f"{name} engine: {led['status']} after {led['stages_run']} stage(s)" + (" [frozen]" if led["frozen"] else ""))
        for c in led["constraints"]:
            tag = "" if c["classification"] == "unclassified" else f", {c['classification']}-class"
            out.append(f"  stage {c['stage']}: {c['expr']}  ({c['origin']}{tag})")
        for k, v in led["multiplier_fixings"].items():
            out.append(f"  fixed {k} = {v}")
        if led["residual"] is not None:
            out.append(f"  inconsistent: condition reduces to {led['residual']}")
    if data["engines_agree"] is not None:
        out.append("")
        out.append("engines agree: " + ("yes" if data["engines_agree"] else "NO"))
    cl = data.get("classification")
    if cl:
        out.append("")
        out.append(f"classification (bracket matrix rank {cl['bracket_rank']}):")
        out += _matrix_lines(cl["bracket_matrix"])
        out.append("  first-class: " + (", ".join(cl["first"]) or "none"))
        out.append("  second-class: " + (", ".join(cl["second"]) or "none"))
        if cl["C"]:
            out.append("  C:")
            out += _matrix_lines(cl["C"])
            out.append("  C^-1:")
            out += _matrix_lines(cl["Cinverse"])
    co = data.get("coisotropic")
    if co:
        out.append("  first-class set involutive: " + ("yes" if co["ok"] else f"no ({co['reason']})"))
    ht = data.get("total_hamiltonian")
    if ht:
        out.append("")
        out.append(f"H_T = {ht['expr']}")
    if data.get("eom"):
        out.append("")
        out.append("equations of motion (on the final surface):")
        for row in data["eom"]:
            mark = "  [eliminated]" if row["eliminated"] else ""
            out.append(f"  d{row['var']}/dt = {row['rhs']}{mark}")
    tg = data.get("tangency")
    if tg:
        bad = {k: v for k, v in tg.items() if v != "0"}
        out.append("  constraints preserved: " + ("yes" if not bad else "NO: " + "; ".join(f"d({k})/dt = {v}" for k, v in bad.items())))
    it = data.get("integration")
    if it:
        out.append("")
        out.append(f"integration: t_end = {it['t_end']}, dt = {it['dt']}, {it['samples']} samples")
        out.append("  final state: " + ", ".join(f"{k} = {v:.12g}" for k, v in it["final_state"].items()))
        out.append(f"  max constraint drift: {it['drift']['overall']:.3e}")
        if it["csv"]:
            out.append(f"  trajectory written to {it['csv']}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# entry point


def _binding(text, flag):
    if "=" not in text:
        raise UsageError(f"{flag} expects NAME=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser():
    ap = argparse.ArgumentParser(prog="constraint-forge", description="Constraint analysis of singular Lagrangians.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("file")
    ap.add_argument("--engine", choices=ENGINES)
    ap.add_argument("--format", choices=("text", "json"), default="text")
    ap.add_argument("--multiplier", action="append", default=[], metavar="NAME=EXPR")
    ap.add_argument("--init", action="append", default=[], metavar="VAR=FLOAT")
    ap.add_argument("--t-end", type=float)
    ap.add_argument("--dt", type=float)
    ap.add_argument("--out", metavar="PATH")
    return ap


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        mults = dict(_binding(t, "--multiplier") for t in args.multiplier)
        init = {}
        for t in args.init:
            k, v = _binding(t, "--init")
            try:
                init[k] = float(v)
            except ValueError:
                raise UsageError(f"--init {k} needs a number, got {v!r}") from None
        sf = load_system_file(args.file)
        space = PhaseSpace(sf.n, sf.kind)
        for k, v in mults.items():
            if k not in space.multipliers:
                raise UsageError(f"--multiplier: {k} is not a multiplier name")
            try:
                space.parse(v)
            except ParseError as exc:
                raise UsageError(f"--multiplier {k}: {exc}") from exc
        report = run(args.command, sf, args.engine, mults, init, args.t_end, args.dt, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    except SystemFileError as exc:
        print(f"error: {args.file}: {exc}", file=stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    except (UnsolvableConstraint, InconsistentConstraints) as exc:
        print(f"error (constraint): {exc}", file=stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    if args.format == "json":
        stdout.write(report.to_json())
    else:
        stdout.write(render_text(report))
    for e in report.errors:
        print("error: " + e, file=stderr)
    return report.exit_code


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
