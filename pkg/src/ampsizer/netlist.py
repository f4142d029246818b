"""Parser and data model for a small SPICE-flavoured netlist dialect.

The dialect covers exactly what the sizing tools need:

* two-terminal elements  ``Rname n1 n2 value``  (also C, V, I),
* MOS transistors        ``Mname nd ng ns W=... L=... TYPE=nmos|pmos``,
* search-space directives ``.param name min max linear|log``,
* a signal-path ordering  ``.order name1 name2 ...``,
* an optional ``.end`` terminator, ``*`` comment lines, and blank lines.

Values accept SI magnitude suffixes (``f p n u m k meg g``, case-insensitive)
and any value slot may instead hold a ``{param}`` placeholder that is filled
in later by :func:`resolve`.

Node names are declared implicitly by use; ``0`` is ground.  Parameters are
ordered as declared, which fixes the meaning of every parameter vector handed
to :func:`resolve`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "ParseError",
    "Placeholder",
    "ParamDef",
    "Element",
    "Netlist",
    "ResolvedCircuit",
    "parse_si",
    "format_si",
    "parse_netlist",
    "serialize_netlist",
    "resolve",
]


class ParseError(ValueError):
    """Netlist rejection with a 1-based source location.

    Attributes
    ----------
    line, column:
        1-based position of the offending token.
    reason:
        Message without the location prefix.
    """

    def __init__(self, line: int, column: int, reason: str):
        self.line = line
        self.column = column
        self.reason = reason
        super().__init__(f"line {line}, column {column}: {reason}")


@dataclass(frozen=True)
class Placeholder:
    """A ``{name}`` reference to a declared search parameter."""

    param: str


Value = Union[float, Placeholder]


@dataclass(frozen=True)
class ParamDef:
    """One search dimension: a bounded, positive scalar.

    ``scale`` is ``"linear"`` or ``"log"`` and controls how normalized
    actions map into ``[pmin, pmax]`` (see :func:`ampsizer.env.scale_action`).
    """

    name: str
    pmin: float
    pmax: float
    scale: str


@dataclass(frozen=True)
class Element:
    """A circuit element with possibly-unresolved values.

    ``kind`` is one of ``resistor capacitor vsource isource nmos pmos``.
    ``values`` holds one entry for two-terminal elements (the component
    value in SI units) and two entries ``(W, L)`` in metres for MOS devices.
    """

    kind: str
    name: str
    terminals: tuple[str, ...]
    values: tuple[Value, ...]

    def placeholders(self) -> tuple[str, ...]:
        return tuple(v.param for v in self.values if isinstance(v, Placeholder))

    def is_mos(self) -> bool:
        return self.kind in ("nmos", "pmos")


@dataclass(frozen=True)
class Netlist:
    """Parsed netlist: elements, implicit node set, and search directives."""

    elements: tuple[Element, ...]
    nodes: tuple[str, ...]
    params: tuple[ParamDef, ...]
    signal_order: tuple[str, ...]

    def element(self, name: str) -> Element:
        for el in self.elements:
            if el.name == name:
                return el
        raise KeyError(name)

    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower/upper bound arrays in declaration order."""
        lo = np.array([p.pmin for p in self.params], dtype=float)
        hi = np.array([p.pmax for p in self.params], dtype=float)
        return lo, hi


@dataclass(frozen=True)
class ResolvedCircuit:
    """A netlist with every placeholder replaced by a concrete value."""

    elements: tuple[Element, ...]
    nodes: tuple[str, ...]
    signal_order: tuple[str, ...]


_SI_SUFFIXES = {
    "f": 1e-15,
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "m": 1e-3,
    "k": 1e3,
    "meg": 1e6,
    "g": 1e9,
}

# number, then optional suffix; 'meg' must win over 'm' so it is listed first
_VALUE_RE = re.compile(
    r"^(?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<suffix>meg|[fpnumkg])?$",
    re.IGNORECASE,
)

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_NODE_RE = re.compile(r"^[A-Za-z0-9_]+$")


def parse_si(token: str) -> float:
    """Parse a numeric literal with an optional SI magnitude suffix.

    >>> parse_si("4.7k")
    4700.0
    >>> parse_si("2meg")
    2000000.0

    Raises ``ValueError`` for malformed input.
    """
    m = _VALUE_RE.match(token.strip())
    if m is None:
        raise ValueError(f"malformed value {token!r}")
    value = float(m.group("num"))
    suffix = m.group("suffix")
    if suffix:
        value *= _SI_SUFFIXES[suffix.lower()]
    return value


def format_si(value: float) -> str:
    """Format a value for serialization.

    Uses plain ``repr`` so that parsing the result returns the identical
    float; readability suffixes are deliberately not reintroduced.
    """
    return repr(float(value))


_TWO_TERMINAL_KINDS = {"R": "resistor", "C": "capacitor", "V": "vsource", "I": "isource"}


def _tokens(line: str) -> list[tuple[str, int]]:
    """Split a line into (token, 1-based column) pairs."""
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]


def _parse_value(token: str, line_no: int, col: int) -> Value:
    if token.startswith("{") and token.endswith("}") and len(token) > 2:
        name = token[1:-1]
        if not _NAME_RE.match(name):
            raise ParseError(line_no, col, f"invalid parameter reference {token!r}")
        return Placeholder(name)
    try:
        return parse_si(token)
    except ValueError as exc:
        raise ParseError(line_no, col, str(exc)) from None


def _parse_node(token: str, line_no: int, col: int) -> str:
    if not _NODE_RE.match(token):
        raise ParseError(line_no, col, f"invalid node name {token!r}")
    return token


def parse_netlist(text: str) -> Netlist:
    """Parse netlist source text.

    Raises :class:`ParseError` (with line/column) on syntax errors, duplicate
    element or parameter names, placeholders without a matching ``.param``,
    or an ``.order`` directive that is inconsistent with the element list.
    """
    elements: list[Element] = []
    element_lines: dict[str, tuple[int, int]] = {}
    params: list[ParamDef] = []
    order: list[str] | None = None
    order_loc = (0, 0)
    ended = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        if ended:
            break
        stripped = raw.strip()
        if not stripped or stripped.startswith("*"):
            continue
        toks = _tokens(raw)
        head, head_col = toks[0]
        upper = head.upper()

        if upper.startswith("."):
            directive = upper
            if directive == ".END":
                ended = True
            elif directive == ".PARAM":
                params.append(_parse_param(toks, line_no))
            elif directive == ".ORDER":
                if order is not None:
                    raise ParseError(line_no, head_col, "duplicate .order directive")
                order = [t for t, _ in toks[1:]]
                order_loc = (line_no, head_col)
                if not order:
                    raise ParseError(line_no, head_col, ".order lists no elements")
            else:
                raise ParseError(line_no, head_col, f"unknown directive {head!r}")
            continue

        kind_letter = upper[0]
        if kind_letter == "M":
            el = _parse_mos(toks, line_no)
        elif kind_letter in _TWO_TERMINAL_KINDS:
            el = _parse_two_terminal(_TWO_TERMINAL_KINDS[kind_letter], toks, line_no)
        else:
            raise ParseError(line_no, head_col, f"unrecognized element or directive {head!r}")

        if el.name in element_lines:
            raise ParseError(line_no, head_col, f"duplicate element name {el.name!r}")
        element_lines[el.name] = (line_no, head_col)
        elements.append(el)

    _check_params(params)
    param_names = {p.name for p in params}
    for el in elements:
        for ref in el.placeholders():
            if ref not in param_names:
                line, col = element_lines[el.name]
                raise ParseError(line, col, f"placeholder {{{ref}}} has no matching .param")

    nodes = _collect_nodes(elements)
    signal_order = _check_order(order, order_loc, elements)

    return Netlist(
        elements=tuple(elements),
        nodes=nodes,
        params=tuple(params),
        signal_order=signal_order,
    )


def _parse_two_terminal(kind: str, toks: list[tuple[str, int]], line_no: int) -> Element:
    if len(toks) != 4:
        tok, col = toks[min(len(toks), 4) - 1]
        raise ParseError(line_no, col, f"{kind} element needs: name node node value")
    name = toks[0][0]
    if not _NAME_RE.match(name):
        raise ParseError(line_no, toks[0][1], f"invalid element name {name!r}")
    n1 = _parse_node(toks[1][0], line_no, toks[1][1])
    n2 = _parse_node(toks[2][0], line_no, toks[2][1])
    value = _parse_value(toks[3][0], line_no, toks[3][1])
    return Element(kind=kind, name=name, terminals=(n1, n2), values=(value,))


def _parse_mos(toks: list[tuple[str, int]], line_no: int) -> Element:
    if len(toks) != 7:
        tok, col = toks[min(len(toks), 7) - 1]
        raise ParseError(
            line_no, col, "MOS element needs: name drain gate source W=... L=... TYPE=..."
        )
    name = toks[0][0]
    if not _NAME_RE.match(name):
        raise ParseError(line_no, toks[0][1], f"invalid element name {name!r}")
    nd = _parse_node(toks[1][0], line_no, toks[1][1])
    ng = _parse_node(toks[2][0], line_no, toks[2][1])
    ns = _parse_node(toks[3][0], line_no, toks[3][1])

    fields: dict[str, tuple[str, int]] = {}
    for tok, col in toks[4:]:
        if "=" not in tok:
            raise ParseError(line_no, col, f"expected KEY=value, got {tok!r}")
        key, _, val = tok.partition("=")
        key = key.upper()
        if key not in ("W", "L", "TYPE"):
            raise ParseError(line_no, col, f"unknown MOS field {key!r}")
        if key in fields:
            raise ParseError(line_no, col, f"duplicate MOS field {key!r}")
        fields[key] = (val, col + len(key) + 1)
    for key in ("W", "L", "TYPE"):
        if key not in fields:
            raise ParseError(line_no, toks[4][1], f"MOS element missing {key}= field")

    w_tok, w_col = fields["W"]
    w = _parse_value(w_tok, line_no, w_col)
    l_tok, l_col = fields["L"]
    length = _parse_value(l_tok, line_no, l_col)
    type_tok, type_col = fields["TYPE"]
    mos_type = type_tok.lower()
    if mos_type not in ("nmos", "pmos"):
        raise ParseError(line_no, type_col, f"TYPE must be nmos or pmos, got {type_tok!r}")

    return Element(kind=mos_type, name=name, terminals=(nd, ng, ns), values=(w, length))


def _parse_param(toks: list[tuple[str, int]], line_no: int) -> ParamDef:
    if len(toks) != 5:
        tok, col = toks[min(len(toks), 5) - 1]
        raise ParseError(line_no, col, ".param needs: name min max linear|log")
    name, name_col = toks[1]
    if not _NAME_RE.match(name):
        raise ParseError(line_no, name_col, f"invalid parameter name {name!r}")
    try:
        pmin = parse_si(toks[2][0])
    except ValueError as exc:
        raise ParseError(line_no, toks[2][1], str(exc)) from None
    try:
        pmax = parse_si(toks[3][0])
    except ValueError as exc:
        raise ParseError(line_no, toks[3][1], str(exc)) from None
    scale, scale_col = toks[4]
    scale = scale.lower()
    if scale not in ("linear", "log"):
        raise ParseError(line_no, scale_col, f"scale must be linear or log, got {toks[4][0]!r}")
    if not (0.0 < pmin < pmax):
        raise ParseError(line_no, toks[2][1], f"bounds must satisfy 0 < min < max for {name!r}")
    return ParamDef(name=name, pmin=pmin, pmax=pmax, scale=scale)


def _check_params(params: Sequence[ParamDef]) -> None:
    seen: set[str] = set()
    for p in params:
        if p.name in seen:
            # location was consumed during parsing; report without position
            raise ParseError(0, 0, f"duplicate parameter name {p.name!r}")
        seen.add(p.name)


def _collect_nodes(elements: Iterable[Element]) -> tuple[str, ...]:
    nodes: list[str] = []
    seen: set[str] = set()
    for el in elements:
        for t in el.terminals:
            if t != "0" and t not in seen:
                seen.add(t)
                nodes.append(t)
    return tuple(nodes)


def _check_order(
    order: list[str] | None, loc: tuple[int, int], elements: Sequence[Element]
) -> tuple[str, ...]:
    by_name = {el.name: el for el in elements}
    parameterized = [el.name for el in elements if el.placeholders()]
    if order is None:
        if parameterized:
            raise ParseError(
                0, 0, "netlist declares parameters but no .order directive covers them"
            )
        return tuple(el.name for el in elements)
    line, col = loc
    seen: set[str] = set()
    for name in order:
        if name not in by_name:
            raise ParseError(line, col, f".order references unknown element {name!r}")
        if name in seen:
            raise ParseError(line, col, f".order repeats element {name!r}")
        seen.add(name)
    for name in parameterized:
        if name not in seen:
            raise ParseError(line, col, f".order must include parameterized element {name!r}")
    return tuple(order)


def serialize_netlist(netlist: Netlist) -> str:
    """Render a netlist back to source text.

    The output parses back to a structurally identical :class:`Netlist`
    (values round-trip exactly; comments and formatting are not preserved).
    """
    lines: list[str] = []
    for p in netlist.params:
        lines.append(f".param {p.name} {format_si(p.pmin)} {format_si(p.pmax)} {p.scale}")
    for el in netlist.elements:
        lines.append(_serialize_element(el))
    if netlist.signal_order:
        lines.append(".order " + " ".join(netlist.signal_order))
    lines.append(".end")
    return "\n".join(lines) + "\n"


def _fmt_value(v: Value) -> str:
    if isinstance(v, Placeholder):
        return "{%s}" % v.param
    return format_si(v)


def _serialize_element(el: Element) -> str:
    if el.is_mos():
        w, length = el.values
        nd, ng, ns = el.terminals
        return (
            f"{el.name} {nd} {ng} {ns} "
            f"W={_fmt_value(w)} L={_fmt_value(length)} TYPE={el.kind}"
        )
    (value,) = el.values
    n1, n2 = el.terminals
    return f"{el.name} {n1} {n2} {_fmt_value(value)}"


def resolve(netlist: Netlist, x: Union[Sequence[float], np.ndarray]) -> ResolvedCircuit:
    """Substitute the parameter vector ``x`` into every placeholder.

    ``x`` follows the ``.param`` declaration order.  Raises ``ValueError``
    if the length does not match or any component falls outside its
    ``[pmin, pmax]`` box (bounds included).  The input netlist is not
    modified.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (len(netlist.params),):
        raise ValueError(
            f"parameter vector has shape {x.shape}, expected ({len(netlist.params)},)"
        )
    values: dict[str, float] = {}
    for p, xi in zip(netlist.params, x):
        if not np.isfinite(xi) or xi < p.pmin or xi > p.pmax:
            raise ValueError(
                f"parameter {p.name!r} = {xi!r} outside bounds [{p.pmin!r}, {p.pmax!r}]"
            )
        values[p.name] = float(xi)

    def fill(v: Value) -> float:
        if isinstance(v, Placeholder):
            return values[v.param]
        return v

    resolved = tuple(
        Element(
            kind=el.kind,
            name=el.name,
            terminals=el.terminals,
            values=tuple(fill(v) for v in el.values),
        )
        for el in netlist.elements
    )
    return ResolvedCircuit(
        elements=resolved, nodes=netlist.nodes, signal_order=netlist.signal_order
    )


def substitution_map(netlist: Netlist, x: Union[Sequence[float], np.ndarray]) -> Mapping[str, float]:
    """Map parameter names to the values a resolve with ``x`` would use."""
    x = np.asarray(x, dtype=float)
    if x.shape != (len(netlist.params),):
        raise ValueError(
            f"parameter vector has shape {x.shape}, expected ({len(netlist.params)},)"
        )
    return {p.name: float(v) for p, v in zip(netlist.params, x)}
