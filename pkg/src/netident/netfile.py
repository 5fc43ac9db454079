"""Reader and writer for the line-oriented network file format.

Grammar (one statement per line, ``#`` starts a comment)::

    nodes N
    edge TAIL HEAD basis=TOKEN[,TOKEN...] [coeff=FLOAT[,FLOAT...]]
    measured I[,J...]
    class F_Z | F_ZNL
    plan KEY=VALUE [KEY=VALUE...]

``nodes`` must come before any ``edge``. Basis tokens are ``mono:p``,
``sin:w``, ``tanh:a`` and ``logi:a``. Plan keys (all optional) are ``K``,
``h``, ``samples``, ``sigma``, ``seed``, ``ic`` (``lo,hi``), ``u`` (one
value per node), ``window``, ``degree`` and ``substeps``.
"""

from __future__ import annotations

from pathlib import Path

from .basis import parse_basis_list
from .errors import SpecParseError
from .graph import F_Z, F_ZNL, Edge, NetworkSpec

PLAN_KEYS = {
    "K": int, "h": float, "samples": int, "sigma": float, "seed": int,
    "window": int, "degree": int, "substeps": int,
    "ic": lambda s: tuple(float(v) for v in s.split(",")),
    "u": lambda s: tuple(float(v) for v in s.split(",")),
}


def _floats(text, line):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise SpecParseError(f"bad number list {text!r}", line) from None


def _ints(text, line):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise SpecParseError(f"bad node list {text!r}", line) from None


def _keyvals(tokens, line, allowed):
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not value:
            raise SpecParseError(f"expected key=value, got {tok!r}", line)
        if key not in allowed:
            raise SpecParseError(f"unknown key {key!r}", line)
        if key in out:
            raise SpecParseError(f"key {key!r} given twice", line)
        out[key] = value
    return out


def parse_network(text: str):
    """Parse network file text into ``(NetworkSpec, plan_overrides)``."""
    node_count = None
    edges, measured, fclass, plan = [], set(), F_Z, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, *rest = line.split()
        if keyword == "nodes":
            if len(rest) != 1:
                raise SpecParseError("expected 'nodes N'", lineno)
            try:
                node_count = int(rest[0])
            except ValueError:
                raise SpecParseError(f"bad node count {rest[0]!r}", lineno) from None
            if node_count < 1:
                raise SpecParseError("node count must be positive", lineno)
        elif keyword == "edge":
            if node_count is None:
                raise SpecParseError("'edge' before 'nodes'", lineno)
            if len(rest) < 3:
                raise SpecParseError("expected 'edge TAIL HEAD basis=...'", lineno)
            tail, head = _ints(rest[0], lineno) + _ints(rest[1], lineno)
            for v in (tail, head):
                if not 1 <= v <= node_count:
                    raise SpecParseError(f"node {v} out of range 1..{node_count}", lineno)
            kv = _keyvals(rest[2:], lineno, {"basis", "coeff"})
            if "basis" not in kv:
                raise SpecParseError("edge without basis=", lineno)
            try:
                basis = parse_basis_list(kv["basis"])
            except ValueError as exc:
                raise SpecParseError(str(exc), lineno) from None
            coeffs = _floats(kv["coeff"], lineno) if "coeff" in kv else None
            if coeffs is not None and len(coeffs) != len(basis):
                raise SpecParseError(
                    f"{len(basis)} basis functions but {len(coeffs)} coefficients", lineno)
            edges.append(Edge(tail, head, basis, coeffs))
        elif keyword == "measured":
            measured.update(_ints(",".join(rest), lineno))
        elif keyword == "class":
            if rest not in ([F_Z], [F_ZNL]):
                raise SpecParseError(f"class must be {F_Z} or {F_ZNL}", lineno)
            fclass = rest[0]
        elif keyword == "plan":
            for key, value in _keyvals(rest, lineno, PLAN_KEYS).items():
                try:
                    plan[key] = PLAN_KEYS[key](value)
                except ValueError:
                    raise SpecParseError(f"bad value for {key}: {value!r}", lineno) from None
        else:
            raise SpecParseError(f"unknown statement {keyword!r}", lineno)
    if node_count is None:
        raise SpecParseError("missing 'nodes' statement")
    return NetworkSpec(node_count, edges, measured, fclass), plan


def load_network(path):
    return parse_network(Path(path).read_text(encoding="utf-8"))


def format_network(spec: NetworkSpec, plan=None) -> str:
    lines = [f"nodes {spec.node_count}"]
    for e in spec.edges:
        line = f"edge {e.tail} {e.head} basis={','.join(b.token for b in e.basis)}"
        if e.coefficients is not None:
            line += " coeff=" + ",".join(repr(c) for c in e.coefficients)
        lines.append(line)
    if spec.measured:
        lines.append("measured " + ",".join(str(m) for m in sorted(spec.measured)))
    lines.append(f"class {spec.function_class}")
    if plan:
        parts = []
        for key, value in plan.items():
            if isinstance(value, tuple):
                value = ",".join(repr(v) for v in value)
            parts.append(f"{key}={value}")
        lines.append("plan " + " ".join(parts))
    return "\n".join(lines) + "\n"


SHIPPED = Path(__file__).parent / "nets"


def resolve_spec_path(name) -> Path:
    """Accept a filesystem path or the stem of a shipped network (``path3``)."""
    p = Path(name)
    if p.exists():
        return p
    shipped = SHIPPED / (p.name if p.suffix == ".net" else p.name + ".net")
    if shipped.exists():
        return shipped
    raise FileNotFoundError(f"no network file {name!r}")
